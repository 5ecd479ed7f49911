"""Process lineage and forward tracking from a seed file hash."""

from __future__ import annotations

import ntpath
import re
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

from .events import Event, EventKind, FileAction, ProcessAction, SocketAction, utc_iso
from .ingest import EventStore

IMAGE_EXTENSIONS = frozenset({".jpg", ".jpeg", ".png", ".gif", ".bmp"})
EXECUTABLE_EXTENSIONS = frozenset({".exe", ".dll", ".scr", ".com"})
STANDARD_PROGRAM_DIRS = ("c:\\program files\\", "c:\\program files (x86)\\", "c:\\windows\\")
DEFAULT_MAX_DEPTH = 16


def extension(path: str) -> str:
    return ntpath.splitext(path)[1].lower()


def in_standard_dir(path: str, dirs: Sequence[str] = STANDARD_PROGRAM_DIRS) -> bool:
    lowered = path.lower()
    return any(lowered.startswith(d) for d in dirs)


class CycleDetected(Warning):
    def __init__(self, guids: Sequence[str]):
        super().__init__(f"process lineage cycle through {', '.join(guids)}; edge dropped")
        self.guids = tuple(guids)


class SeedNotFound(LookupError):
    def __init__(self, seed: str):
        super().__init__(f"seed not found: {seed}")
        self.seed = seed


@dataclass(frozen=True)
class ProcessNode:
    guid: str
    pid: int
    path: str
    cmdline: str = ""
    user: str = ""
    create_time: Optional[int] = None
    exit_time: Optional[int] = None
    parent_guid: Optional[str] = None
    create_eid: str = ""
    # Seen only as someone's parent_process_guid.
    external: bool = False
    first_seen: int = 0
    position: int = 0

    @property
    def key(self) -> str:
        return self.guid.lower()

    @property
    def start(self) -> int:
        return self.create_time if self.create_time is not None else self.first_seen

    def to_dict(self) -> dict:
        return {
            "process_guid": self.guid,
            "pid": self.pid,
            "path": self.path,
            "cmdline": self.cmdline,
            "user": self.user,
            "create_time": self.create_time,
            "exit_time": self.exit_time,
            "parent_process_guid": self.parent_guid,
            "external": self.external,
        }


class ProcessGraph:
    """Parent/child lineage keyed by case-folded process GUID."""

    def __init__(self, nodes: Dict[str, ProcessNode], warnings: Sequence[CycleDetected] = ()):
        self.nodes = dict(nodes)
        self.warnings = list(warnings)
        children: Dict[str, List[ProcessNode]] = {}
        for node in self.nodes.values():
            if node.parent_guid is not None:
                children.setdefault(node.parent_guid.lower(), []).append(node)
        self._children = {
            k: tuple(n.key for n in sorted(v, key=lambda n: (n.start, n.position)))
            for k, v in children.items()
        }

    def __len__(self):
        return len(self.nodes)

    def __contains__(self, guid: str) -> bool:
        return guid.lower() in self.nodes

    def node(self, guid: str) -> ProcessNode:
        return self.nodes[guid.lower()]

    def children(self, guid: str) -> Tuple[str, ...]:
        return self._children.get(guid.lower(), ())

    def parent(self, guid: str) -> Optional[ProcessNode]:
        p = self.nodes[guid.lower()].parent_guid
        return self.nodes.get(p.lower()) if p else None

    @property
    def edges(self) -> Dict[str, Tuple[str, ...]]:
        return dict(self._children)

    def descendants(self, guid: str, max_depth: int = DEFAULT_MAX_DEPTH) -> Dict[str, int]:
        """``{key: depth}`` for ``guid`` and everything below it, breadth first."""
        root = guid.lower()
        depth = {root: 0}
        frontier = [root]
        while frontier:
            nxt = []
            for key in frontier:
                if depth[key] >= max_depth:
                    continue
                for child in self._children.get(key, ()):
                    if child not in depth:
                        depth[child] = depth[key] + 1
                        nxt.append(child)
            frontier = nxt
        return depth


def build_process_graph(store: EventStore) -> ProcessGraph:
    """Lineage graph from every process GUID the store mentions.

    PROC_CREATE supplies a node's details and parent; PROC_EXIT its exit
    time. Processes only seen acting in file/socket events get a bare node;
    parents never seen acting are ``external``. A parent link that would
    close a cycle is dropped and reported in ``graph.warnings``.
    """
    nodes: Dict[str, ProcessNode] = {}

    def ensure(guid, pid, path, time, pos, external=False):
        key = guid.lower()
        node = nodes.get(key)
        if node is None:
            node = ProcessNode(guid=guid, pid=pid, path=path, external=external,
                               first_seen=time, position=pos)
            nodes[key] = node
        elif node.external and not external:
            node = replace(node, external=False, pid=pid, path=path or node.path)
            nodes[key] = node
        return node

    for pos in store.by_time():
        event = store[pos]
        p = event.payload
        if event.kind is EventKind.PROCESS:
            node = ensure(p.process_guid, p.pid, p.path, p.time, pos)
            if p.action is ProcessAction.PROC_CREATE and node.create_time is None:
                ensure(p.parent_process_guid, p.parent_pid, "", p.time, pos, external=True)
                node = replace(node, pid=p.pid, path=p.path, cmdline=p.cmdline, user=p.user,
                               create_time=p.time, parent_guid=p.parent_process_guid,
                               create_eid=p.eid)
            elif p.action is ProcessAction.PROC_EXIT:
                node = replace(node, exit_time=p.time)
            nodes[node.key] = node
        else:
            ensure(p.process_guid, p.pid, p.process_name, p.time, pos)

    warnings = []
    done = set()
    for start in list(nodes):
        path: List[str] = []
        on_path = set()
        key = start
        while key is not None and key not in done and key not in on_path:
            on_path.add(key)
            path.append(key)
            parent = nodes[key].parent_guid
            key = parent.lower() if parent else None
        if key is not None and key in on_path:
            cycle = path[path.index(key):]
            closer = path[-1]
            warnings.append(CycleDetected([nodes[k].guid for k in cycle]))
            nodes[closer] = replace(nodes[closer], parent_guid=None)
        done.update(path)
    return ProcessGraph(nodes, warnings)


# --- forward tracking --------------------------------------------------------

class Stage(str, Enum):
    DECOY_OPEN = "decoy_open"
    PAYLOAD_DROP = "payload_drop"
    PAYLOAD_RENAME = "payload_rename"
    PAYLOAD_EXEC = "payload_exec"
    C2_CONNECT = "c2_connect"


_STAGE_ORDER = {s: i for i, s in enumerate(Stage)}


@dataclass(frozen=True)
class StageRecord:
    stage: Stage
    evidence: Tuple[str, ...]
    time: int

    def to_dict(self) -> dict:
        return {"stage": self.stage.value, "evidence": list(self.evidence), "time": self.time,
                "utc_time": utc_iso(self.time)}


@dataclass(frozen=True)
class AttackChain:
    seed: Tuple[str, str]
    processes: Tuple[ProcessNode, ...]
    depths: Dict[str, int]
    events: Tuple[Event, ...]
    process_events: Tuple[Event, ...]
    file_events: Tuple[Event, ...]
    socket_events: Tuple[Event, ...]
    stages: Tuple[StageRecord, ...]
    span: Tuple[int, int]
    duplicate_eids: Tuple[str, ...] = ()

    @property
    def root(self) -> ProcessNode:
        return self.processes[0]

    def guids(self) -> set:
        return {p.key for p in self.processes}

    def timeline(self) -> List[Event]:
        """Every attached event in log order (time, then ingestion position)."""
        return list(self.events)

    def to_dict(self) -> dict:
        def ev(e: Event) -> dict:
            from .events import to_columns
            return {"table_name": e.table_name, **to_columns(e.payload)}

        return {
            "seed": {"kind": self.seed[0], "value": self.seed[1]},
            "processes": [dict(p.to_dict(), depth=self.depths[p.key]) for p in self.processes],
            "process_events": [ev(e) for e in self.process_events],
            "file_events": [ev(e) for e in self.file_events],
            "socket_events": [ev(e) for e in self.socket_events],
            "stages": [s.to_dict() for s in self.stages],
            "span": list(self.span),
            "duplicate_eids": list(self.duplicate_eids),
        }


def _seed_kind(seed: str) -> str:
    if re.fullmatch(r"[0-9a-f]{64}", seed):
        return "sha256"
    if re.fullmatch(r"[0-9a-f]{32}", seed):
        return "md5"
    raise ValueError(f"seed must be a hex MD5 or SHA-256: {seed!r}")


def rename_pairs(events: Sequence[Tuple[int, Event]],
                 image_exts=IMAGE_EXTENSIONS, exec_exts=EXECUTABLE_EXTENSIONS):
    """``(create, rename)`` pairs where one process created an image and renamed
    something in the same directory to an executable name.

    ``events`` are ``(position, event)`` in log order. The most recent prior
    qualifying create is paired; each create pairs at most once.
    """
    pending: Dict[Tuple[str, str], List[Event]] = {}
    pairs = []
    for _, event in events:
        if event.kind is not EventKind.FILE:
            continue
        p = event.payload
        where = (p.process_guid.lower(), ntpath.dirname(p.target_path).lower())
        if p.action is FileAction.FILE_CREATE and extension(p.target_path) in image_exts:
            pending.setdefault(where, []).append(event)
        elif p.action is FileAction.FILE_RENAME and extension(p.target_path) in exec_exts:
            stack = pending.get(where)
            if stack:
                pairs.append((stack.pop(), event))
    return pairs


def _stages(root: ProcessNode, depths: Dict[str, int], graph: ProcessGraph,
            chain_events: List[Tuple[int, Event]], hashed: List[Event]) -> List[StageRecord]:
    stages = []
    if root.create_time is not None:
        stages.append(StageRecord(Stage.DECOY_OPEN, (root.create_eid,), root.create_time))
    else:
        first = min(hashed, key=lambda e: e.time)
        stages.append(StageRecord(Stage.DECOY_OPEN, (first.eid,), first.time))
    # Later stages are consequences of the open, so nothing earlier qualifies.
    chain_events = [(pos, e) for pos, e in chain_events if e.time >= stages[0].time]

    payload_paths = []
    pairs = rename_pairs(chain_events)
    if pairs:
        create, rename = pairs[0]
        stages.append(StageRecord(Stage.PAYLOAD_DROP, (create.eid,), create.time))
        stages.append(StageRecord(Stage.PAYLOAD_RENAME, (rename.eid,), rename.time))
        payload_paths = [rename.payload.target_path.lower()]
    else:
        hashed_ids = {id(e) for e in hashed}
        for _, e in chain_events:
            p = e.payload
            if (e.kind is EventKind.FILE and p.action is FileAction.FILE_CREATE
                    and extension(p.target_path) in EXECUTABLE_EXTENSIONS and id(e) not in hashed_ids):
                stages.append(StageRecord(Stage.PAYLOAD_DROP, (e.eid,), e.time))
                payload_paths = [p.target_path.lower()]
                break

    creates = [e for _, e in chain_events
               if e.kind is EventKind.PROCESS and e.payload.action is ProcessAction.PROC_CREATE
               and e.process_guid.lower() != root.key and e.time >= stages[-1].time]
    exec_event = next((e for e in creates if e.payload.path.lower() in payload_paths), None)
    if exec_event is None:
        exec_event = next((e for e in creates if extension(e.payload.path) in EXECUTABLE_EXTENSIONS
                           and not in_standard_dir(e.payload.path)), None)
    if exec_event is not None:
        stages.append(StageRecord(Stage.PAYLOAD_EXEC, (exec_event.eid,), exec_event.time))
        payload_guid = exec_event.process_guid.lower()
        connects = [e for _, e in chain_events
                    if e.kind is EventKind.SOCKET and e.payload.action is SocketAction.SOCKET_CONNECT
                    and e.process_guid.lower() == payload_guid and e.time >= exec_event.time]
        if connects:
            stages.append(StageRecord(Stage.C2_CONNECT, tuple(e.eid for e in connects),
                                      connects[0].time))
    stages.sort(key=lambda s: (s.time, _STAGE_ORDER[s.stage]))
    return stages


def forward_track(seed_hash: str, store: EventStore, graph: Optional[ProcessGraph] = None,
                  max_depth: int = DEFAULT_MAX_DEPTH) -> AttackChain:
    """Follow a malicious file hash forward through process lineage.

    The hash is linked to processes two ways: the processes that touched a
    file bearing it, and processes whose command line names such a file. The
    earliest of those roots the chain; its descendants (to ``max_depth``)
    and every file/socket event they performed are attached.
    """
    seed = seed_hash.strip().lower()
    kind = _seed_kind(seed)
    if graph is None:
        graph = build_process_graph(store)

    hashed = [e for e in store.of_kind(EventKind.FILE)
              if (e.payload.sha256 if kind == "sha256" else e.payload.md5) == seed]
    if not hashed:
        raise SeedNotFound(seed)
    names = {ntpath.basename(e.payload.target_path).lower() for e in hashed} - {""}
    candidates = {e.process_guid.lower() for e in hashed}
    for e in store.of_kind(EventKind.PROCESS):
        if e.payload.action is ProcessAction.PROC_CREATE:
            cmd = e.payload.cmdline.lower()
            if any(name in cmd for name in names):
                candidates.add(e.process_guid.lower())
    root = min((graph.nodes[k] for k in candidates), key=lambda n: (n.start, n.position))

    depths = graph.descendants(root.guid, max_depth)
    # Root first, then by start; corrupt telemetry can start a child before its parent.
    processes = sorted((graph.nodes[k] for k in depths),
                       key=lambda n: (n.key != root.key, n.start, n.position))

    positions = sorted({pos for key in depths for pos in store.positions_for_guid(key)},
                       key=lambda pos: (store[pos].time, pos))
    chain_events = [(pos, store[pos]) for pos in positions]
    by_kind = {k: tuple(e for _, e in chain_events if e.kind is k) for k in EventKind}

    times = [e.time for _, e in chain_events] + [n.create_time for n in processes
                                                  if n.create_time is not None]
    eids = [e.eid for _, e in chain_events if e.eid]
    seen, dupes = set(), []
    for eid in eids:
        if eid in seen and eid not in dupes:
            dupes.append(eid)
        seen.add(eid)

    return AttackChain(
        seed=(kind, seed),
        processes=tuple(processes),
        depths=depths,
        events=tuple(e for _, e in chain_events),
        process_events=by_kind[EventKind.PROCESS],
        file_events=by_kind[EventKind.FILE],
        socket_events=by_kind[EventKind.SOCKET],
        stages=tuple(_stages(root, depths, graph, chain_events, hashed)),
        span=(min(times), max(times)),
        duplicate_eids=tuple(dupes),
    )


def render_timeline(chain: AttackChain) -> List[str]:
    """One line per attached event, indented by lineage depth below the root."""
    lines = []
    for event in chain.timeline():
        p = event.payload
        depth = chain.depths.get(event.process_guid.lower(), 0)
        indent = "  " * depth
        if event.kind is EventKind.PROCESS:
            what = f"{ntpath.basename(p.path)} pid={p.pid} cmdline={p.cmdline}"
        elif event.kind is EventKind.FILE:
            what = f"{ntpath.basename(p.process_name)} -> {p.target_path}"
            if p.md5:
                what += f" md5={p.md5}"
        else:
            what = (f"{ntpath.basename(p.process_name)} {p.local_address}:{p.local_port}"
                    f" -> {p.remote_endpoint}")
        lines.append(f"{event.utc_time} {indent}{p.action.value} {what} [eid={event.eid}]")
    return lines
