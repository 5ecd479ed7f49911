"""Reading osqueryd filesystem-logger result files into an indexed store.

Each line of ``osqueryd.results.log`` is one JSON object::

    {"name": "win_file_events", "hostIdentifier": "DESKTOP-3DD3GTB",
     "unixTime": 1752503629, "action": "added", "columns": {...}}

Column values are strings. Unknown envelope keys are ignored.
"""

from __future__ import annotations

import io
import json
import time as _clock
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Optional, Tuple

from .events import (
    TABLE_KINDS,
    Event,
    EventKind,
    ValidationError,
    to_columns,
    validate_event,
)


class ParseError(ValueError):
    pass


class MalformedLine(ParseError):
    def __init__(self, reason: str):
        super().__init__(f"malformed line: {reason}")
        self.reason = reason


class UnknownTable(ParseError):
    def __init__(self, name):
        super().__init__(f"unsupported table {name!r}")
        self.name = name


class IoFailure(OSError):
    """Reading the source failed; ingestion aborts."""


def parse_event_line(line: str) -> Optional[Tuple[str, str, Dict[str, str]]]:
    """Split one log record into ``(table_name, host, columns)``.

    Returns ``None`` for lines that carry nothing to store: blank lines and
    differential ``removed`` records.
    """
    if not line.strip():
        return None
    try:
        record = json.loads(line)
    except (json.JSONDecodeError, RecursionError) as exc:
        raise MalformedLine(str(exc)) from None
    if not isinstance(record, dict):
        raise MalformedLine("record is not an object")
    if record.get("action") == "removed":
        return None
    name = record.get("name")
    if not isinstance(name, str):
        raise MalformedLine("missing table name")
    if name not in TABLE_KINDS:
        raise UnknownTable(name)
    columns = record.get("columns")
    if not isinstance(columns, dict):
        raise MalformedLine("missing columns object")
    host = record.get("hostIdentifier", "")
    if not isinstance(host, str):
        raise MalformedLine("hostIdentifier is not a string")
    if "time" not in columns and "unixTime" in record:
        columns = dict(columns, time=str(record["unixTime"]))
    return name, host, columns


def serialize(event: Event) -> str:
    """One log line that :func:`parse_event_line` reads back to ``event``."""
    record = {
        "name": event.table_name,
        "hostIdentifier": event.host,
        "unixTime": event.time,
        "action": "added",
        "columns": to_columns(event.payload),
    }
    return json.dumps(record, ensure_ascii=False)


def write_log(events: Iterable[Event]) -> str:
    return "".join(serialize(e) + "\n" for e in events)


@dataclass(frozen=True)
class IngestReport:
    accepted: int
    rejected: List[Tuple[int, Exception]]
    duration: float
    skipped: int = 0

    @property
    def total(self) -> int:
        return self.accepted + len(self.rejected) + self.skipped

    def to_dict(self, timing: bool = False) -> dict:
        """Plain-data form; ``duration_ms`` only when ``timing`` (it varies run to run)."""
        doc = {
            "accepted": self.accepted,
            "rejected": [
                {"line": line, "error": type(err).__name__, "message": str(err)}
                for line, err in self.rejected
            ],
            "skipped": self.skipped,
        }
        if timing:
            doc["duration_ms"] = round(self.duration, 3)
        return doc


class EventStore:
    """Sealed, indexed collection of events from one ingestion run.

    Positions are ingestion order. ``by_time()`` breaks timestamp ties by
    position, so two events logged in the same second keep file order.
    """

    def __init__(self, events: Iterable[Event], host: Optional[str] = None):
        self._events: Tuple[Event, ...] = tuple(events)
        by_kind: Dict[EventKind, List[int]] = {k: [] for k in EventKind}
        by_guid: Dict[str, List[int]] = {}
        for pos, event in enumerate(self._events):
            by_kind[event.kind].append(pos)
            by_guid.setdefault(event.process_guid.lower(), []).append(pos)
        self._by_kind = {k: tuple(v) for k, v in by_kind.items()}
        self._by_guid = {k: tuple(v) for k, v in by_guid.items()}
        self._by_time = tuple(sorted(range(len(self._events)), key=lambda p: self._events[p].time))
        if host is None:
            host = self._events[0].host if self._events else ""
        self.host = host

    def __len__(self):
        return len(self._events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self._events)

    def __getitem__(self, pos: int) -> Event:
        return self._events[pos]

    @property
    def events(self) -> Tuple[Event, ...]:
        return self._events

    def positions(self, kind: EventKind) -> Tuple[int, ...]:
        return self._by_kind[kind]

    def of_kind(self, kind: EventKind) -> List[Event]:
        return [self._events[p] for p in self._by_kind[kind]]

    def positions_for_guid(self, guid: str) -> Tuple[int, ...]:
        return self._by_guid.get(guid.lower(), ())

    def by_time(self) -> Tuple[int, ...]:
        return self._by_time

    @property
    def stats(self) -> dict:
        return {
            "events": len(self._events),
            "by_kind": {k.value: len(v) for k, v in self._by_kind.items()},
        }


def _lines(source) -> Iterator[str]:
    for raw in source:
        if isinstance(raw, bytes):
            try:
                raw = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                # Handed to the caller as a per-line error, not an abort.
                yield exc
                continue
        yield raw.rstrip("\r\n")


def ingest_log(source) -> Tuple[EventStore, IngestReport]:
    """Parse and validate every line of ``source`` into a sealed store.

    ``source`` is a binary or text stream (or any iterable of lines). Bad
    lines are recorded in the report with their 1-based line number and never
    stop the run; an ``OSError`` from the stream raises :class:`IoFailure`.
    """
    start = _clock.perf_counter()
    events: List[Event] = []
    rejected: List[Tuple[int, Exception]] = []
    skipped = 0
    lineno = 0
    try:
        for lineno, line in enumerate(_lines(source), start=1):
            if isinstance(line, UnicodeDecodeError):
                rejected.append((lineno, MalformedLine(f"invalid UTF-8: {line.reason}")))
                continue
            if not line.strip():
                continue
            try:
                parsed = parse_event_line(line)
                if parsed is None:
                    skipped += 1
                    continue
                table, host, columns = parsed
                events.append(validate_event(columns, table, host))
            except (ParseError, ValidationError) as err:
                rejected.append((lineno, err))
    except OSError as exc:
        raise IoFailure(f"reading log failed after line {lineno}: {exc}") from exc
    store = EventStore(events)
    report = IngestReport(
        accepted=len(events),
        rejected=rejected,
        duration=(_clock.perf_counter() - start) * 1000.0,
        skipped=skipped,
    )
    return store, report


def ingest_text(text: str) -> Tuple[EventStore, IngestReport]:
    return ingest_log(io.StringIO(text))


def ingest_path(path) -> Tuple[EventStore, IngestReport]:
    try:
        handle = open(path, "rb")
    except OSError as exc:
        raise IoFailure(f"cannot open {path}: {exc}") from exc
    with handle:
        return ingest_log(handle)
