"""Declarative detection rules evaluated over a sealed :class:`EventStore`.

A rule is a list of parts; each part is a predicate tree over one event
kind. A rule's result is the union of its parts' matches, so one event can
match at most once per part.

Rule documents are JSON::

    {
      "rule_id": "office-drops-exe",
      "severity": "high",
      "description": "...",
      "parts": [
        {"kind": "file",
         "where": {"all": [
            {"field": "process_name", "like": "%WINWORD.EXE%"},
            {"field": "action", "in": ["FILE_CREATE", "FILE_RENAME"]},
            {"not": {"field": "target_path", "like": "%\\\\Temp\\\\%"}}
         ]}}
      ]
    }

Leaves are ``equals``, ``in`` and ``like``; ``like`` takes SQL ``ILIKE``
wildcards (``%`` any run, ``_`` one character).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .events import (
    FIELD_TYPES,
    AddressFamily,
    Event,
    EventKind,
    FileAction,
    ProcessAction,
    Protocol,
    SocketAction,
)
from .ingest import EventStore

_FOLD = str.maketrans("ABCDEFGHIJKLMNOPQRSTUVWXYZ", "abcdefghijklmnopqrstuvwxyz")


def ascii_fold(text: str) -> str:
    return text.translate(_FOLD)


def match_pattern(pattern: str, text: str) -> bool:
    """Case-insensitive SQL ``LIKE`` over the whole of ``text``.

    ``%`` matches any run of characters (including none), ``_`` exactly one.
    Every other character is literal; there is no escape character. Only
    ASCII letters are case-folded.
    """
    return _wildcard(ascii_fold(pattern), ascii_fold(text))


def _wildcard(p: str, t: str) -> bool:
    # Greedy scan; on mismatch, retry from the most recent '%' one char later.
    pi = ti = 0
    star = -1
    mark = 0
    np, nt = len(p), len(t)
    while ti < nt:
        if pi < np and p[pi] == "%":
            star = pi
            mark = ti
            pi += 1
        elif pi < np and (p[pi] == "_" or p[pi] == t[ti]):
            pi += 1
            ti += 1
        elif star >= 0:
            pi = star + 1
            mark += 1
            ti = mark
        else:
            return False
    while pi < np and p[pi] == "%":
        pi += 1
    return pi == np


class LikePattern:
    """A pre-folded ``LIKE`` pattern with a fast path for ``%literal%``."""

    __slots__ = ("pattern", "_folded", "_contains")

    def __init__(self, pattern: str):
        self.pattern = pattern
        self._folded = ascii_fold(pattern)
        inner = self._folded[1:-1]
        if (len(self._folded) >= 2 and self._folded[0] == "%" and self._folded[-1] == "%"
                and "%" not in inner and "_" not in inner):
            self._contains = inner
        else:
            self._contains = None

    def __call__(self, text: str) -> bool:
        if self._contains is not None:
            return self._contains in ascii_fold(text)
        return _wildcard(self._folded, ascii_fold(text))

    def __repr__(self):
        return f"LikePattern({self.pattern!r})"


# --- predicates --------------------------------------------------------------

def _getter(name: str):
    def get(payload):
        value = getattr(payload, name)
        return value.value if isinstance(value, Enum) else value
    return get


@dataclass(frozen=True)
class FieldEquals:
    field: str
    value: Any

    def test(self, payload) -> bool:
        return _getter(self.field)(payload) == self.value

    def to_doc(self):
        return {"field": self.field, "equals": self.value}


@dataclass(frozen=True)
class FieldInSet:
    field: str
    values: frozenset

    def test(self, payload) -> bool:
        return _getter(self.field)(payload) in self.values

    def to_doc(self):
        return {"field": self.field, "in": sorted(self.values)}


@dataclass(frozen=True)
class PatternMatch:
    field: str
    pattern: str

    def test(self, payload) -> bool:
        return match_pattern(self.pattern, str(_getter(self.field)(payload)))

    def to_doc(self):
        return {"field": self.field, "like": self.pattern}


@dataclass(frozen=True)
class Not:
    child: "Predicate"

    def test(self, payload) -> bool:
        return not self.child.test(payload)

    def to_doc(self):
        return {"not": self.child.to_doc()}


@dataclass(frozen=True)
class And:
    children: Tuple["Predicate", ...]

    def test(self, payload) -> bool:
        return all(c.test(payload) for c in self.children)

    def to_doc(self):
        return {"all": [c.to_doc() for c in self.children]}


@dataclass(frozen=True)
class Or:
    children: Tuple["Predicate", ...]

    def test(self, payload) -> bool:
        return any(c.test(payload) for c in self.children)

    def to_doc(self):
        return {"any": [c.to_doc() for c in self.children]}


Predicate = Union[FieldEquals, FieldInSet, PatternMatch, Not, And, Or]


def compile_predicate(pred: Predicate):
    """Turn a predicate tree into a plain closure; same truth table as ``pred.test``."""
    if isinstance(pred, FieldEquals):
        get, value = _getter(pred.field), pred.value
        return lambda p: get(p) == value
    if isinstance(pred, FieldInSet):
        get, values = _getter(pred.field), pred.values
        return lambda p: get(p) in values
    if isinstance(pred, PatternMatch):
        get, like = _getter(pred.field), LikePattern(pred.pattern)
        return lambda p: like(str(get(p)))
    if isinstance(pred, Not):
        inner = compile_predicate(pred.child)
        return lambda p: not inner(p)
    children = [compile_predicate(c) for c in pred.children]
    if isinstance(pred, And):
        return lambda p: all(c(p) for c in children)
    return lambda p: any(c(p) for c in children)


# --- rules -------------------------------------------------------------------

class RuleError(ValueError):
    pass


class UnknownField(RuleError):
    def __init__(self, field: str, kind: str):
        super().__init__(f"field {field!r} does not exist on {kind} events")
        self.field = field
        self.kind = kind


class EmptyRule(RuleError):
    def __init__(self, rule_id: str = ""):
        super().__init__(f"rule {rule_id!r} has no parts")
        self.rule_id = rule_id


class DuplicateRuleId(RuleError):
    def __init__(self, rule_id: str):
        super().__init__(f"duplicate rule id {rule_id!r}")
        self.rule_id = rule_id


class RuleFormatError(RuleError):
    pass


SEVERITIES = ("info", "low", "medium", "high", "critical")

_ENUM_FIELDS = {
    EventKind.PROCESS: {"action": ProcessAction},
    EventKind.FILE: {"action": FileAction},
    EventKind.SOCKET: {"action": SocketAction, "family": AddressFamily, "protocol": Protocol},
}


@dataclass(frozen=True)
class RulePart:
    kind: EventKind
    predicate: Predicate
    description: str = ""


@dataclass(frozen=True)
class DetectionRule:
    rule_id: str
    severity: str
    parts: Tuple[RulePart, ...]
    description: str = ""

    def to_doc(self) -> dict:
        parts = []
        for part in self.parts:
            doc = {"kind": part.kind.value, "where": part.predicate.to_doc()}
            if part.description:
                doc["description"] = part.description
            parts.append(doc)
        return {"rule_id": self.rule_id, "severity": self.severity,
                "description": self.description, "parts": parts}


def _coerce(kind: EventKind, field: str, value):
    expected = FIELD_TYPES[kind][field]
    if expected is int:
        if isinstance(value, bool):
            raise RuleFormatError(f"{field!r} needs an integer, got {value!r}")
        try:
            return int(value)
        except (TypeError, ValueError):
            raise RuleFormatError(f"{field!r} needs an integer, got {value!r}") from None
    if not isinstance(value, str):
        raise RuleFormatError(f"{field!r} needs a string, got {value!r}")
    enum_cls = _ENUM_FIELDS[kind].get(field)
    if enum_cls is not None and value not in enum_cls.__members__:
        raise RuleFormatError(f"{value!r} is not a valid {field!r} for {kind.value} events")
    return value


def _predicate(doc, kind: EventKind) -> Predicate:
    if not isinstance(doc, Mapping):
        raise RuleFormatError(f"predicate must be an object, got {doc!r}")
    if "all" in doc or "any" in doc:
        key = "all" if "all" in doc else "any"
        if len(doc) != 1:
            raise RuleFormatError(f"{key!r} node takes no other keys")
        children = doc[key]
        if not isinstance(children, list) or not children:
            raise RuleFormatError(f"{key!r} needs a non-empty list")
        nodes = tuple(_predicate(c, kind) for c in children)
        return And(nodes) if key == "all" else Or(nodes)
    if "not" in doc:
        if len(doc) != 1:
            raise RuleFormatError("'not' node takes no other keys")
        return Not(_predicate(doc["not"], kind))
    field = doc.get("field")
    if not isinstance(field, str):
        raise RuleFormatError(f"leaf predicate needs a 'field': {doc!r}")
    if field not in FIELD_TYPES[kind]:
        raise UnknownField(field, kind.value)
    ops = [k for k in ("equals", "in", "like") if k in doc]
    if len(ops) != 1 or len(doc) != 2:
        raise RuleFormatError(f"leaf on {field!r} needs exactly one of equals/in/like")
    op = ops[0]
    if op == "equals":
        return FieldEquals(field, _coerce(kind, field, doc["equals"]))
    if op == "in":
        values = doc["in"]
        if not isinstance(values, list):
            raise RuleFormatError(f"'in' on {field!r} needs a list")
        return FieldInSet(field, frozenset(_coerce(kind, field, v) for v in values))
    pattern = doc["like"]
    if not isinstance(pattern, str):
        raise RuleFormatError(f"'like' on {field!r} needs a string pattern")
    return PatternMatch(field, pattern)


def compile_rule(doc: Mapping) -> DetectionRule:
    """Validate a rule document and build a :class:`DetectionRule`."""
    if not isinstance(doc, Mapping):
        raise RuleFormatError("rule document must be an object")
    rule_id = doc.get("rule_id")
    if not isinstance(rule_id, str) or not rule_id:
        raise RuleFormatError("rule needs a non-empty 'rule_id'")
    severity = doc.get("severity", "medium")
    if severity not in SEVERITIES:
        raise RuleFormatError(f"unknown severity {severity!r}")
    parts_doc = doc.get("parts")
    if not parts_doc:
        raise EmptyRule(rule_id)
    if not isinstance(parts_doc, list):
        raise RuleFormatError("'parts' must be a list")
    parts = []
    for part in parts_doc:
        if not isinstance(part, Mapping):
            raise RuleFormatError("each part must be an object")
        try:
            kind = EventKind(part.get("kind"))
        except ValueError:
            raise RuleFormatError(f"unknown event kind {part.get('kind')!r}") from None
        if "where" not in part:
            raise RuleFormatError("part needs a 'where' predicate")
        parts.append(RulePart(kind, _predicate(part["where"], kind), str(part.get("description", ""))))
    return DetectionRule(rule_id, severity, tuple(parts), str(doc.get("description", "")))


def compile_rules(docs: Iterable[Mapping]) -> List[DetectionRule]:
    rules, seen = [], set()
    for doc in docs:
        rule = compile_rule(doc)
        if rule.rule_id in seen:
            raise DuplicateRuleId(rule.rule_id)
        seen.add(rule.rule_id)
        rules.append(rule)
    return rules


class RuleFileError(RuleError):
    def __init__(self, path, line: Optional[int], cause: Exception):
        where = f"{path}:{line}" if line else str(path)
        super().__init__(f"{where}: {cause}")
        self.path = path
        self.line = line
        self.cause = cause


def load_rule_file(path) -> DetectionRule:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RuleFileError(path, exc.lineno, exc) from None
    try:
        return compile_rule(doc)
    except RuleError as exc:
        raise RuleFileError(path, _blame_line(text, exc), exc) from None


def _blame_line(text: str, exc: RuleError) -> Optional[int]:
    needle = getattr(exc, "field", None) or getattr(exc, "rule_id", None)
    if not needle:
        return None
    quoted = json.dumps(needle)
    for number, line in enumerate(text.splitlines(), start=1):
        if quoted in line:
            return number
    return None


def load_rules(directory, include_builtin: bool = True) -> List[DetectionRule]:
    """Every ``*.json`` rule under ``directory`` (sorted by name), plus the built-in rule."""
    rules = [builtin_crimson_rat_rule()] if include_builtin else []
    seen = {r.rule_id for r in rules}
    if directory is not None:
        if not Path(directory).is_dir():
            raise RuleFileError(directory, None, NotADirectoryError("not a rule directory"))
        for path in sorted(Path(directory).glob("*.json")):
            rule = load_rule_file(path)
            if rule.rule_id in seen:
                raise RuleFileError(path, _blame_line(path.read_text(encoding="utf-8"),
                                                      DuplicateRuleId(rule.rule_id)),
                                    DuplicateRuleId(rule.rule_id))
            seen.add(rule.rule_id)
            rules.append(rule)
    return rules


# --- evaluation --------------------------------------------------------------

@dataclass(frozen=True)
class Detection:
    rule_id: str
    severity: str
    event: Event
    matched_part: int
    utc_time: str
    position: int

    def to_record(self) -> dict:
        """Flat output row: the columns of the file/socket union query plus rule metadata."""
        e = self.event
        p = e.payload
        if e.kind is EventKind.SOCKET:
            process_name, target, md5 = p.process_name, p.remote_endpoint, None
        elif e.kind is EventKind.FILE:
            process_name, target, md5 = p.process_name, p.target_path, p.md5
        else:
            process_name, target, md5 = p.path, p.path, None
        return {
            "table_name": e.table_name,
            "action": p.action.value,
            "process_name": process_name,
            "target_path": target,
            "md5": md5,
            "utc_time": self.utc_time,
            "rule_id": self.rule_id,
            "severity": self.severity,
        }


def eval_rule(rule: DetectionRule, store: EventStore) -> List[Detection]:
    """All detections of ``rule`` in ``store``, ordered by (time, ingestion position)."""
    found = []
    for index, part in enumerate(rule.parts):
        test = compile_predicate(part.predicate)
        for pos in store.positions(part.kind):
            event = store[pos]
            if test(event.payload):
                found.append((event.time, pos, index, event))
    found.sort(key=lambda item: item[:3])
    return [Detection(rule.rule_id, rule.severity, event, index, event.utc_time, pos)
            for _, pos, index, event in found]


def eval_rules(rules: Sequence[DetectionRule], store: EventStore) -> List[Detection]:
    detections = [d for rule in rules for d in eval_rule(rule, store)]
    detections.sort(key=lambda d: (d.event.time, d.position, d.rule_id, d.matched_part))
    return detections


# --- the Crimson RAT rule ----------------------------------------------------

CRIMSON_MD5S = [
    "d946e3e94fec670f9e47aca186ecaabe",
    "e18c4172329c32d8394ba0658d5212c2",
    "2fde001f4c17c8613480091fa48b55a0",
    "c1f4c9f969f955dec2465317b526b600",
    "026e8e7acb2f2a156f8afff64fd54066",
    "fb64c22d37c502bde55b19688d40c803",
    "70b8040730c62e4a52a904251fa74029",
    "3efec6ffcbfe79f71f5410eb46f1c19e",
    "b03211f6feccd3a62273368b52f6079d",
]
CRIMSON_IPS = [
    "93.127.133.58", "104.129.27.14", "37.221.64.134", "78.40.143.189",
    "45.141.58.224", "45.141.59.167", "45.141.58.33", "78.40.143.98",
    "84.54.51.12", "176.65.143.215", "45.141.59.72", "192.64.118.76",
]
CRIMSON_PORTS = [1097, 17241, 19821, 21817, 23221, 27425, 8108, 16197, 19867, 28784, 30123]

_CREATE_OR_RENAME = {"field": "action", "in": ["FILE_RENAME", "FILE_CREATE"]}
_DROPPER_PROCS = {"any": [
    {"field": "process_name", "like": "%POWERPNT.EXE%"},
    {"field": "process_name", "like": "%jnmxrvt hcsm.exe%"},
]}

CRIMSON_RAT_RULE = {
    "rule_id": "crimson-rat-sindoor",
    "severity": "critical",
    "description": "Crimson RAT delivered by a PowerPoint add-in: known dropper hashes, "
                   "WEISTE.jpg / 0ffice360-48 staging, rename to jnmxrvt hcsm.exe, "
                   "and C2 connects to campaign IPs on campaign ports.",
    "parts": [
        {
            "kind": "file",
            "description": "branches: known hashes | staging-directory drops | rename to payload name",
            "where": {"any": [
                {"all": [
                    {"field": "process_name", "like": "%POWERPNT.EXE%"},
                    _CREATE_OR_RENAME,
                    {"field": "md5", "in": CRIMSON_MD5S},
                ]},
                {"all": [
                    _DROPPER_PROCS,
                    _CREATE_OR_RENAME,
                    {"any": [
                        {"field": "target_path", "like": "%WEISTE.jpg%"},
                        {"field": "target_path", "like": "%0ffice360-48%"},
                    ]},
                ]},
                {"all": [
                    {"field": "action", "equals": "FILE_RENAME"},
                    {"field": "target_path", "like": "%jnmxrvt hcsm.exe%"},
                ]},
            ]},
        },
        {
            "kind": "socket",
            "description": "dropper or payload process talking to a campaign IP on a campaign port",
            "where": {"all": [
                _DROPPER_PROCS,
                {"field": "remote_address", "in": CRIMSON_IPS},
                {"field": "remote_port", "in": CRIMSON_PORTS},
                {"not": {"all": [
                    {"field": "remote_address", "equals": "96.17.168.104"},
                    {"field": "remote_port", "equals": 443},
                ]}},
            ]},
        },
    ],
}


def builtin_crimson_rat_rule() -> DetectionRule:
    return compile_rule(CRIMSON_RAT_RULE)
