"""Typed telemetry events for the three Windows event tables.

Every column arrives from the logger as a string. ``validate_event`` turns a
raw column map into a frozen, fully checked :class:`Event`, or raises one of
the :class:`ValidationError` subclasses naming the offending field.
"""

from __future__ import annotations

import dataclasses
import ipaddress
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Dict, Mapping, Union


class ValidationError(ValueError):
    """A raw field map could not be turned into an event."""

    def __init__(self, field: str, message: str):
        super().__init__(message)
        self.field = field


class MissingField(ValidationError):
    def __init__(self, name: str):
        super().__init__(name, f"missing field {name!r}")


class BadEnum(ValidationError):
    def __init__(self, field: str, value: Any):
        super().__init__(field, f"bad value for {field!r}: {value!r}")
        self.value = value


class BadFormat(ValidationError):
    def __init__(self, field: str, value: Any):
        super().__init__(field, f"badly formatted {field!r}: {value!r}")
        self.value = value


class EventKind(str, Enum):
    PROCESS = "process"
    FILE = "file"
    SOCKET = "socket"


class ProcessAction(str, Enum):
    PROC_CREATE = "PROC_CREATE"
    PROC_EXIT = "PROC_EXIT"


class FileAction(str, Enum):
    FILE_CREATE = "FILE_CREATE"
    FILE_WRITE = "FILE_WRITE"
    FILE_DELETE = "FILE_DELETE"
    FILE_RENAME = "FILE_RENAME"


class SocketAction(str, Enum):
    SOCKET_CONNECT = "SOCKET_CONNECT"
    SOCKET_ACCEPT = "SOCKET_ACCEPT"
    SOCKET_CLOSE = "SOCKET_CLOSE"


class AddressFamily(str, Enum):
    AF_INET = "AF_INET"
    AF_INET6 = "AF_INET6"


class Protocol(str, Enum):
    TCP = "TCP"
    UDP = "UDP"


@dataclass(frozen=True)
class ProcessEvent:
    time: int
    action: ProcessAction
    pid: int
    parent_pid: int
    path: str
    cmdline: str
    user: str
    process_guid: str
    parent_process_guid: str
    eid: str = ""


@dataclass(frozen=True)
class FileEvent:
    """A file operation. For FILE_RENAME, ``target_path`` is the new name."""

    time: int
    action: FileAction
    eid: str
    target_path: str
    md5: str
    sha256: str
    pid: int
    process_guid: str
    process_name: str


@dataclass(frozen=True)
class SocketEvent:
    time: int
    action: SocketAction
    pid: int
    process_guid: str
    process_name: str
    family: AddressFamily
    protocol: Protocol
    local_address: str
    local_port: int
    remote_address: str
    remote_port: int
    eid: str

    @property
    def remote_endpoint(self) -> str:
        return f"{self.remote_address}:{self.remote_port}"


Payload = Union[ProcessEvent, FileEvent, SocketEvent]

TABLE_KINDS = {
    "win_process_events": EventKind.PROCESS,
    "win_file_events": EventKind.FILE,
    "win_socket_events": EventKind.SOCKET,
}
KIND_TABLES = {kind: table for table, kind in TABLE_KINDS.items()}
PAYLOAD_TYPES = {
    EventKind.PROCESS: ProcessEvent,
    EventKind.FILE: FileEvent,
    EventKind.SOCKET: SocketEvent,
}


@dataclass(frozen=True)
class Event:
    """Envelope tying a payload to its host and source table."""

    kind: EventKind
    payload: Payload
    host: str
    table_name: str

    def __post_init__(self):
        if TABLE_KINDS.get(self.table_name) is not self.kind:
            raise ValueError(f"table {self.table_name!r} does not hold {self.kind.value} events")
        if not isinstance(self.payload, PAYLOAD_TYPES[self.kind]):
            raise ValueError(f"{type(self.payload).__name__} is not a {self.kind.value} payload")

    @property
    def time(self) -> int:
        return self.payload.time

    @property
    def eid(self) -> str:
        return self.payload.eid

    @property
    def process_guid(self) -> str:
        return self.payload.process_guid

    @property
    def utc_time(self) -> str:
        return utc_iso(self.payload.time)


def utc_iso(epoch: int) -> str:
    """Render epoch seconds as ``YYYY-MM-DDTHH:MM:SSZ``."""
    return datetime.fromtimestamp(epoch, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def field_names(kind: EventKind) -> tuple:
    return tuple(f.name for f in dataclasses.fields(PAYLOAD_TYPES[kind]))


# Column types used by the rule compiler; enum-valued columns compare as strings.
FIELD_TYPES: Dict[EventKind, Dict[str, type]] = {
    kind: {f.name: (int if f.type == "int" else str) for f in dataclasses.fields(cls)}
    for kind, cls in PAYLOAD_TYPES.items()
}


_GUID_RE = re.compile(r"^[0-9a-fA-F]{8}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{12}$")
_HEX_RE = re.compile(r"^[0-9a-f]*$")
_INT_RE = re.compile(r"^[0-9]+$")

# Numeric spellings seen in real osquery output alongside the symbolic names.
_FAMILY_ALIASES = {"2": AddressFamily.AF_INET, "23": AddressFamily.AF_INET6, "10": AddressFamily.AF_INET6}
_PROTOCOL_ALIASES = {"6": Protocol.TCP, "17": Protocol.UDP}


def _get(candidate: Mapping[str, Any], name: str) -> str:
    if name not in candidate:
        raise MissingField(name)
    value = candidate[name]
    if isinstance(value, bool) or not isinstance(value, (str, int)):
        raise BadFormat(name, value)
    return str(value)


def _text(candidate, name):
    return _get(candidate, name)


def _uint(candidate, name, upper=None):
    raw = _get(candidate, name).strip()
    # Length cap keeps int() clear of the interpreter's digit limit.
    if not _INT_RE.match(raw) or len(raw) > 20:
        raise BadFormat(name, raw)
    value = int(raw)
    if upper is not None and value > upper:
        raise BadFormat(name, raw)
    return value


# Last second of year 9999; keeps ISO rendering total.
_MAX_EPOCH = 253402300799


def _time(candidate):
    value = _uint(candidate, "time", _MAX_EPOCH)
    if value <= 0:
        raise BadFormat("time", value)
    return value


def _enum(candidate, name, enum_cls, aliases=None):
    raw = _get(candidate, name).strip()
    if aliases and raw in aliases:
        return aliases[raw]
    try:
        return enum_cls(raw.upper() if enum_cls in (AddressFamily, Protocol) else raw)
    except ValueError:
        raise BadEnum(name, raw) from None


def _guid(candidate, name):
    raw = _get(candidate, name).strip()
    if not _GUID_RE.match(raw):
        raise BadFormat(name, raw)
    return raw


def _hash(candidate, name, length):
    raw = _get(candidate, name).strip().lower()
    if raw and (len(raw) != length or not _HEX_RE.match(raw)):
        raise BadFormat(name, raw)
    return raw


def _ip(candidate, name, family):
    raw = _get(candidate, name).strip()
    try:
        addr = ipaddress.ip_address(raw)
    except ValueError:
        raise BadFormat(name, raw) from None
    if family is AddressFamily.AF_INET and addr.version != 4:
        raise BadFormat(name, raw)
    return str(addr)


def _process(c):
    return ProcessEvent(
        time=_time(c),
        action=_enum(c, "action", ProcessAction),
        pid=_uint(c, "pid"),
        parent_pid=_uint(c, "parent_pid"),
        path=_text(c, "path"),
        cmdline=_text(c, "cmdline"),
        user=_text(c, "user"),
        process_guid=_guid(c, "process_guid"),
        parent_process_guid=_guid(c, "parent_process_guid"),
        # win_process_events has no eid column in every build; tolerate its absence.
        eid=_text(c, "eid") if "eid" in c else "",
    )


def _file(c):
    return FileEvent(
        time=_time(c),
        action=_enum(c, "action", FileAction),
        eid=_text(c, "eid"),
        target_path=_text(c, "target_path"),
        md5=_hash(c, "md5", 32),
        sha256=_hash(c, "sha256", 64),
        pid=_uint(c, "pid"),
        process_guid=_guid(c, "process_guid"),
        process_name=_text(c, "process_name"),
    )


def _socket(c):
    family = _enum(c, "family", AddressFamily, _FAMILY_ALIASES)
    return SocketEvent(
        time=_time(c),
        action=_enum(c, "action", SocketAction),
        pid=_uint(c, "pid"),
        process_guid=_guid(c, "process_guid"),
        process_name=_text(c, "process_name"),
        family=family,
        protocol=_enum(c, "protocol", Protocol, _PROTOCOL_ALIASES),
        local_address=_ip(c, "local_address", family),
        local_port=_uint(c, "local_port", 65535),
        remote_address=_ip(c, "remote_address", family),
        remote_port=_uint(c, "remote_port", 65535),
        eid=_text(c, "eid"),
    )


_BUILDERS = {EventKind.PROCESS: _process, EventKind.FILE: _file, EventKind.SOCKET: _socket}


def validate_event(candidate: Mapping[str, Any], table_name: str, host: str = "") -> Event:
    """Build a typed :class:`Event` from a string-keyed column map.

    Unknown columns (``utc_time``, ``event_type``, ...) are ignored. Raises a
    :class:`ValidationError` subclass for the first bad field encountered.
    """
    kind = TABLE_KINDS.get(table_name)
    if kind is None:
        raise BadEnum("table_name", table_name)
    if not isinstance(candidate, Mapping):
        raise BadFormat("columns", candidate)
    payload = _BUILDERS[kind](candidate)
    return Event(kind=kind, payload=payload, host=host, table_name=table_name)


def to_columns(payload: Payload) -> Dict[str, str]:
    """Inverse of validation: the string column map for a payload."""
    columns = {}
    for f in dataclasses.fields(payload):
        value = getattr(payload, f.name)
        columns[f.name] = value.value if isinstance(value, Enum) else str(value)
    columns["utc_time"] = utc_iso(payload.time)
    return columns


def field_value(payload: Payload, name: str):
    """Column value with enums flattened to their string form."""
    value = getattr(payload, name)
    return value.value if isinstance(value, Enum) else value


def same_guid(a: str, b: str) -> bool:
    return a.lower() == b.lower()
