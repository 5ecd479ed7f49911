"""Behavioural heuristics over a sealed store.

H1  an Office binary spawns an executable outside the standard program
    directories shortly after it starts
H2  an image file is created and then renamed to an executable name by the
    same process in the same directory
H3  a process running from a user profile connects to a port outside the
    usual web/DNS set
H4  activity under a directory whose name is a near-miss of a trusted
    vendor name (``0ffice360-48`` vs ``Office``)

Thresholds and lists are defaults on :class:`HeuristicConfig`.
"""

from __future__ import annotations

import ntpath
import re
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Tuple

from .chain import (
    EXECUTABLE_EXTENSIONS,
    IMAGE_EXTENSIONS,
    STANDARD_PROGRAM_DIRS,
    AttackChain,
    ProcessGraph,
    build_process_graph,
    extension,
    in_standard_dir,
    rename_pairs,
)
from .events import EventKind, SocketAction, utc_iso
from .ingest import EventStore

HEURISTIC_IDS = ("H1", "H2", "H3", "H4")


@dataclass(frozen=True)
class HeuristicConfig:
    spawn_window: int = 30
    office_binaries: FrozenSet[str] = frozenset({"WINWORD.EXE", "POWERPNT.EXE", "EXCEL.EXE"})
    standard_dirs: Tuple[str, ...] = STANDARD_PROGRAM_DIRS
    well_known_ports: FrozenSet[int] = frozenset({80, 443, 53, 8080})
    image_extensions: FrozenSet[str] = IMAGE_EXTENSIONS
    executable_extensions: FrozenSet[str] = EXECUTABLE_EXTENSIONS
    vendor_names: Tuple[str, ...] = ("Office", "Microsoft", "Windows", "Google", "Adobe", "Mozilla")
    max_edit_distance: int = 2
    enabled: Tuple[str, ...] = HEURISTIC_IDS


@dataclass(frozen=True)
class HeuristicFinding:
    heuristic_id: str
    evidence: Tuple[str, ...]
    explanation: str
    time: int
    detail: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {"heuristic_id": self.heuristic_id, "evidence": list(self.evidence),
                "explanation": self.explanation, "time": self.time,
                "utc_time": utc_iso(self.time), "detail": self.detail}


_USER_PROFILE = re.compile(r"^[a-z]:\\users\\[^\\]+\\", re.IGNORECASE)


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(min(previous[j] + 1, current[j - 1] + 1,
                               previous[j - 1] + (ca != cb)))
        previous = current
    return previous[-1]


def near_miss(component: str, vendors, max_distance: int = 2) -> Optional[Tuple[str, int]]:
    """``(vendor, distance)`` if ``component`` looks like a misspelt vendor name.

    The vendor is compared against prefixes of the component within two
    characters of its length, so a suffix (``0ffice360-48``) does not hide
    the misspelling. A component that starts with the genuine vendor name
    (``Office16``) is never a near-miss.
    """
    comp = component.lower()
    if not any(c.isalpha() for c in comp):
        return None
    best = None
    for vendor in vendors:
        v = vendor.lower()
        if comp.startswith(v):
            return None
        lengths = range(max(1, len(v) - 2), min(len(comp), len(v) + 2) + 1)
        for n in lengths:
            d = levenshtein(comp[:n], v)
            if 1 <= d <= max_distance and (best is None or d < best[1]):
                best = (vendor, d)
    return best


def _h1(graph: ProcessGraph, scope, cfg: HeuristicConfig) -> List[HeuristicFinding]:
    office = {b.upper() for b in cfg.office_binaries}
    out = []
    for node in graph.nodes.values():
        if node.create_time is None or node.parent_guid is None:
            continue
        if scope is not None and node.key not in scope:
            continue
        parent = graph.nodes.get(node.parent_guid.lower())
        if parent is None or parent.create_time is None:
            continue
        if ntpath.basename(parent.path).upper() not in office:
            continue
        if extension(node.path) not in cfg.executable_extensions:
            continue
        if in_standard_dir(node.path, cfg.standard_dirs):
            continue
        gap = node.create_time - parent.create_time
        if 0 <= gap <= cfg.spawn_window:
            out.append(HeuristicFinding(
                "H1", (parent.create_eid, node.create_eid),
                f"{ntpath.basename(parent.path)} (pid {parent.pid}) spawned "
                f"{node.path} (pid {node.pid}) {gap} s after starting",
                node.create_time,
                {"parent_guid": parent.guid, "child_guid": node.guid, "gap_seconds": gap}))
    return out


def _h2(events, cfg: HeuristicConfig) -> List[HeuristicFinding]:
    out = []
    for create, rename in rename_pairs(events, cfg.image_extensions, cfg.executable_extensions):
        old = ntpath.basename(create.payload.target_path)
        new = ntpath.basename(rename.payload.target_path)
        out.append(HeuristicFinding(
            "H2", (create.eid, rename.eid),
            f"{ntpath.basename(rename.payload.process_name)} created {old} and renamed it to {new}",
            rename.time,
            {"created": create.payload.target_path, "renamed_to": rename.payload.target_path,
             "process_guid": rename.process_guid}))
    return out


def _h3(events, cfg: HeuristicConfig) -> List[HeuristicFinding]:
    out = []
    for _, e in events:
        if e.kind is not EventKind.SOCKET or e.payload.action is not SocketAction.SOCKET_CONNECT:
            continue
        p = e.payload
        if p.remote_port in cfg.well_known_ports or not _USER_PROFILE.match(p.process_name):
            continue
        out.append(HeuristicFinding(
            "H3", (e.eid,),
            f"{ntpath.basename(p.process_name)} (user-profile binary) connected to "
            f"{p.remote_endpoint} on a non-standard port",
            e.time,
            {"process_name": p.process_name, "remote": p.remote_endpoint}))
    return out


def _paths(event):
    p = event.payload
    if event.kind is EventKind.PROCESS:
        return (p.path,)
    if event.kind is EventKind.FILE:
        return (p.target_path, p.process_name)
    return (p.process_name,)


def _h4(events, cfg: HeuristicConfig) -> List[HeuristicFinding]:
    verdicts: Dict[str, Optional[Tuple[str, int]]] = {}
    hits: Dict[str, dict] = {}
    for _, e in events:
        for path in _paths(e):
            parts = ntpath.dirname(path).split("\\")
            for i, component in enumerate(parts):
                if not component:
                    continue
                key = component.lower()
                if key not in verdicts:
                    verdicts[key] = near_miss(component, cfg.vendor_names, cfg.max_edit_distance)
                verdict = verdicts[key]
                if verdict is None:
                    continue
                directory = "\\".join(parts[: i + 1])
                entry = hits.setdefault(directory.lower(), {
                    "directory": directory, "component": component, "vendor": verdict[0],
                    "distance": verdict[1], "time": e.time, "eids": []})
                if e.eid and e.eid not in entry["eids"]:
                    entry["eids"].append(e.eid)
    out = []
    for entry in hits.values():
        out.append(HeuristicFinding(
            "H4", tuple(entry["eids"]),
            f"activity under {entry['directory']}: {entry['component']!r} is "
            f"{entry['distance']} edit(s) from {entry['vendor']!r}",
            entry["time"],
            {"directory": entry["directory"], "component": entry["component"],
             "vendor": entry["vendor"], "distance": entry["distance"]}))
    return out


def run_heuristics(store: EventStore, chain: Optional[AttackChain] = None,
                   config: Optional[HeuristicConfig] = None,
                   graph: Optional[ProcessGraph] = None) -> List[HeuristicFinding]:
    """Findings of the enabled heuristics, ordered by (time, heuristic id).

    With ``chain`` given, only events of the chain's processes are examined.
    """
    cfg = config or HeuristicConfig()
    scope = chain.guids() if chain is not None else None
    events = [(pos, store[pos]) for pos in store.by_time()]
    if scope is not None:
        events = [(pos, e) for pos, e in events if e.process_guid.lower() in scope]
    findings: List[HeuristicFinding] = []
    if "H1" in cfg.enabled:
        findings += _h1(graph or build_process_graph(store), scope, cfg)
    if "H2" in cfg.enabled:
        findings += _h2(events, cfg)
    if "H3" in cfg.enabled:
        findings += _h3(events, cfg)
    if "H4" in cfg.enabled:
        findings += _h4(events, cfg)
    findings.sort(key=lambda f: (f.time, f.heuristic_id))
    return findings
