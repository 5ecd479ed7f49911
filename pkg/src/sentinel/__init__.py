"""Correlation and detection over Osquery Windows event telemetry."""

from .events import Event, EventKind, FileEvent, ProcessEvent, SocketEvent, validate_event
from .ingest import EventStore, IngestReport, ingest_log, parse_event_line, serialize
from .iocs import IocHit, IocSet, default_iocs, load_iocs, match_event
from .rules import (
    Detection,
    DetectionRule,
    builtin_crimson_rat_rule,
    compile_rule,
    eval_rule,
    match_pattern,
)

__all__ = [
    "Event", "EventKind", "FileEvent", "ProcessEvent", "SocketEvent", "validate_event",
    "EventStore", "IngestReport", "ingest_log", "parse_event_line", "serialize",
    "IocHit", "IocSet", "default_iocs", "load_iocs", "match_event",
    "Detection", "DetectionRule", "builtin_crimson_rat_rule", "compile_rule", "eval_rule",
    "match_pattern",
]

__version__ = "0.1.0"
