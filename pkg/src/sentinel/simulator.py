"""Deterministic telemetry for the Crimson RAT infection recorded on DESKTOP-3DD3GTB.

``generate_reference_log()`` reproduces the 25 recorded events. Scenarios
toggle stages, rename the host/user, shift the clock and mix in benign
background noise; ``fuzz_events`` adds random near-miss events built from the
campaign's own vocabulary, for exercising rule evaluation.

Fixture choices the recording does not pin down:

* the .ppam carries MD5 ``d946e3e9...`` (first hash of the rule's list) so
  the hash branch of the rule has something to fire on;
* the bin/jpg/temp files get pseudo-hashes derived from their names;
* the two Temp files have fixed names and match no rule branch;
* POWERPNT's first :443 connect at 14:34:40 has no epoch in the record;
  1752503680 is 56 s after the 14:33:44 == 1752503624 anchor;
* local port 55625 goes with the earlier C2 connect, 55648 with the later.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import asdict, dataclass, fields
from enum import Enum
from typing import List, Tuple

from .events import (
    AddressFamily,
    Event,
    EventKind,
    FileAction,
    FileEvent,
    KIND_TABLES,
    ProcessAction,
    ProcessEvent,
    Protocol,
    SocketAction,
    SocketEvent,
)
from .ingest import write_log

REFERENCE_BASE_TIME = 1752503624  # 2025-07-14T14:33:44Z, POWERPNT.EXE start
REFERENCE_HOST = "DESKTOP-3DD3GTB"
REFERENCE_USER = "Itachi"

CAMPAIGN_SHA256 = "8cbd47119356081e70fc023d3ac78af560651e7932636adeca7bec96b09e0e95"
PPAM_MD5 = "d946e3e94fec670f9e47aca186ecaabe"

POWERPNT_PATH = r"C:\Program Files\Microsoft Office\Root\Office16\POWERPNT.EXE"
EXPLORER_PID = 2140
EXPLORER_GUID = "68C109FE-5156-11F0-B8DF-0800270D762D"
POWERPNT_PID = 10476
POWERPNT_GUID = "68C10DB4-5156-11F0-B8DF-0800270D762D"
RAT_PID = 2192
RAT_GUID = "68C10DCA-5156-11F0-B8DF-0800270D762D"
RAT_NAME = "jnmxrvt hcsm.exe"
DROPPER_NAME = "WEISTE.jpg"
STAGING_DIR = "0ffice360-48"

C2_ADDRESS = "93.127.133.58"
C2_PORT = 19821
C2_EID = "65D9BA08-9728-46A1-BCBA-CE0003000000"
PHISHING_ADDRESS = "37.221.64.134"
LOCAL_ADDRESS = "10.0.2.15"
ALLOWLISTED = ("96.17.168.104", 443)

STAGES = ("decoy", "drop", "rename", "exec", "c2", "phishing_connects")
# A stage can only run if the one it names has run.
_REQUIRES = {"drop": "decoy", "rename": "drop", "exec": "rename", "c2": "exec",
             "phishing_connects": "decoy"}


class InvalidSpec(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioSpec:
    host: str = REFERENCE_HOST
    user: str = REFERENCE_USER
    base_time: int = REFERENCE_BASE_TIME
    decoy: bool = True
    drop: bool = True
    rename: bool = True
    exec: bool = True
    c2: bool = True
    phishing_connects: bool = True
    jitter_seed: int = 0
    noise_events: int = 0
    fuzz_events: int = 0

    def validate(self) -> None:
        if not isinstance(self.base_time, int) or self.base_time <= 0:
            raise InvalidSpec(f"base_time must be a positive integer, got {self.base_time!r}")
        if self.noise_events < 0 or self.fuzz_events < 0:
            raise InvalidSpec("event counts must be non-negative")
        for stage, needed in _REQUIRES.items():
            if getattr(self, stage) and not getattr(self, needed):
                raise InvalidSpec(f"stage {stage!r} needs stage {needed!r}")
        if "\\" in self.user or not self.user:
            raise InvalidSpec(f"bad user name {self.user!r}")

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise InvalidSpec(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioSpec":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidSpec(f"line {exc.lineno}: {exc.msg}") from None
        if not isinstance(doc, dict):
            raise InvalidSpec("scenario must be a JSON object")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SimEvent:
    """A generated event and the stage it belongs to (``noise``/``fuzz`` for filler)."""

    stage: str
    event: Event


def _fixture_guid(label: str) -> str:
    h = hashlib.md5(label.encode("utf-8")).hexdigest().upper()
    return f"{h[:8]}-{h[8:12]}-{h[12:16]}-{h[16:20]}-{h[20:32]}"


def _pseudo_hashes(name: str) -> Tuple[str, str]:
    data = f"fixture:{name}".encode("utf-8")
    return hashlib.md5(data).hexdigest(), hashlib.sha256(data).hexdigest()


def _random_guid(rng: random.Random) -> str:
    h = f"{rng.getrandbits(128):032X}"
    return f"{h[:8]}-{h[8:12]}-{h[12:16]}-{h[16:20]}-{h[20:32]}"


def _wrap(host: str, payload) -> Event:
    kind = {ProcessEvent: EventKind.PROCESS, FileEvent: EventKind.FILE,
            SocketEvent: EventKind.SOCKET}[type(payload)]
    return Event(kind, payload, host, KIND_TABLES[kind])


class _Paths:
    def __init__(self, user: str):
        home = f"C:\\Users\\{user}"
        self.home = home
        self.ppam = f"{home}\\sample\\{CAMPAIGN_SHA256}.ppam"
        self.staging = f"{home}\\{STAGING_DIR}"
        self.dropper = f"{self.staging}\\{DROPPER_NAME}"
        self.rat = f"{self.staging}\\{RAT_NAME}"
        self.temp = f"{home}\\AppData\\Local\\Temp"


def _attack_events(spec: ScenarioSpec) -> List[SimEvent]:
    t = spec.base_time
    host = spec.host
    account = f"{host}\\{spec.user}"
    paths = _Paths(spec.user)
    out: List[SimEvent] = []

    def add(stage, payload):
        out.append(SimEvent(stage, _wrap(host, payload)))

    def file_event(stage, when, action, target, md5, sha256, label):
        add(stage, FileEvent(
            time=when, action=action, eid=_fixture_guid(label), target_path=target,
            md5=md5, sha256=sha256, pid=POWERPNT_PID, process_guid=POWERPNT_GUID,
            process_name=POWERPNT_PATH))

    def socket_event(stage, when, pid, guid, exe, remote, rport, lport, eid):
        add(stage, SocketEvent(
            time=when, action=SocketAction.SOCKET_CONNECT, pid=pid, process_guid=guid,
            process_name=exe, family=AddressFamily.AF_INET, protocol=Protocol.TCP,
            local_address=LOCAL_ADDRESS, local_port=lport, remote_address=remote,
            remote_port=rport, eid=eid))

    if not spec.decoy:
        return out

    add("decoy", ProcessEvent(
        time=t, action=ProcessAction.PROC_CREATE, pid=POWERPNT_PID, parent_pid=EXPLORER_PID,
        path=POWERPNT_PATH, cmdline=f'"{POWERPNT_PATH}" "{paths.ppam}" /ou', user=account,
        process_guid=POWERPNT_GUID, parent_process_guid=EXPLORER_GUID,
        eid="486C38E4-40C8-44EA-9D7D-1A2E00000000"))
    file_event("decoy", t + 1, FileAction.FILE_CREATE, paths.ppam, PPAM_MD5, CAMPAIGN_SHA256,
               "ppam-create")
    for name in ["vbaProject.bin"] + [f"oleObject{i}.bin" for i in range(1, 6)]:
        md5, sha = _pseudo_hashes(name)
        target = f"{paths.staging}\\{name}"
        file_event("decoy", t + 4, FileAction.FILE_CREATE, target, md5, sha, f"{name}-create")
        file_event("decoy", t + 4, FileAction.FILE_WRITE, target, md5, sha, f"{name}-write")

    jpg_md5, jpg_sha = _pseudo_hashes(DROPPER_NAME)
    if spec.drop:
        file_event("drop", t + 5, FileAction.FILE_CREATE, paths.dropper, jpg_md5, jpg_sha,
                   "dropper-create")
    if spec.rename:
        file_event("rename", t + 5, FileAction.FILE_RENAME, paths.rat, jpg_md5, jpg_sha,
                   "dropper-rename")
    if spec.exec:
        add("exec", ProcessEvent(
            time=t + 5, action=ProcessAction.PROC_CREATE, pid=RAT_PID, parent_pid=POWERPNT_PID,
            path=paths.rat, cmdline=f'"{paths.rat}"', user=account, process_guid=RAT_GUID,
            parent_process_guid=POWERPNT_GUID, eid="3839A309-60F2-4D27-A3EE-8A6200000000"))

    file_event("decoy", t + 6, FileAction.FILE_WRITE, paths.ppam, PPAM_MD5, CAMPAIGN_SHA256,
               "ppam-write")
    for name in ("ppt7F3A.tmp", "~DF1C5E8B2A49D7F3.TMP"):
        md5, sha = _pseudo_hashes(name)
        file_event("decoy", t + 6, FileAction.FILE_CREATE, f"{paths.temp}\\{name}", md5, sha,
                   f"{name}-create")

    if spec.c2:
        socket_event("c2", t + 51, RAT_PID, RAT_GUID, paths.rat, C2_ADDRESS, C2_PORT, 55625, C2_EID)
    if spec.phishing_connects:
        for offset, lport, eid in ((56, 55626, "753FB770-923A-42B2-9493-157103000000"),
                                   (94, 55643, "4DE4180B-FCFF-48E9-810E-2F3F03000000"),
                                   (109, 55647, "6130D1D4-DC08-41DB-9FB8-877303000000")):
            socket_event("phishing_connects", t + offset, POWERPNT_PID, POWERPNT_GUID,
                         POWERPNT_PATH, PHISHING_ADDRESS, 443, lport, eid)
    if spec.c2:
        socket_event("c2", t + 114, RAT_PID, RAT_GUID, paths.rat, C2_ADDRESS, C2_PORT, 55648, C2_EID)
    return out


# --- background noise ---------------------------------------------------------

_BENIGN_PROGRAMS = [
    (r"C:\Program Files\Google\Chrome\Application\chrome.exe", "--type=renderer"),
    (r"C:\Program Files (x86)\Microsoft\Edge\Application\msedge.exe", "--no-startup-window"),
    (r"C:\Windows\System32\notepad.exe", ""),
    (r"C:\Windows\System32\SearchProtocolHost.exe", "Global\\UsGthrFltPipeMssGthrPipe1"),
    (r"C:\Windows\System32\RuntimeBroker.exe", "-Embedding"),
    (r"C:\Program Files\Mozilla Firefox\firefox.exe", "-contentproc"),
]
_SYSTEM_PROCS = [
    (r"C:\Windows\System32\svchost.exe", 1184, "68C10001-5156-11F0-B8DF-0800270D762D"),
    (r"C:\Windows\System32\MsMpEng.exe", 3320, "68C10002-5156-11F0-B8DF-0800270D762D"),
]
_BENIGN_REMOTES = [
    ("142.250.183.14", 443), ("13.107.42.14", 443), ("20.190.160.20", 443),
    ("151.101.1.69", 443), ("10.0.2.3", 53), ALLOWLISTED,
]
_BENIGN_DOCS = ["notes", "budget", "draft", "meeting", "photo", "invoice", "report-q3"]
_BENIGN_EXTS = [".docx", ".xlsx", ".png", ".txt", ".pdf", ".log"]


def _noise_events(spec: ScenarioSpec, rng: random.Random) -> List[SimEvent]:
    host, account = spec.host, f"{spec.host}\\{spec.user}"
    paths = _Paths(spec.user)
    lo, hi = max(1, spec.base_time - 120), spec.base_time + 600
    procs = []  # (time, pid, guid, path)
    exited = set()
    out: List[SimEvent] = []

    def add(payload):
        out.append(SimEvent("noise", _wrap(host, payload)))

    for _ in range(spec.noise_events):
        roll = rng.random()
        if not procs or roll < 0.08:
            path, args = rng.choice(_BENIGN_PROGRAMS)
            if procs and rng.random() < 0.3:
                ptime, ppid, pguid, _ = rng.choice(procs)
            else:
                ptime, ppid, pguid = lo, EXPLORER_PID, EXPLORER_GUID
            when = rng.randint(ptime, hi)
            pid, guid = rng.randint(3000, 40000) & ~3, _random_guid(rng)
            add(ProcessEvent(time=when, action=ProcessAction.PROC_CREATE, pid=pid, parent_pid=ppid,
                             path=path, cmdline=f'"{path}" {args}'.rstrip(), user=account,
                             process_guid=guid, parent_process_guid=pguid,
                             eid=_random_guid(rng)))
            procs.append((when, pid, guid, path))
            continue
        system = rng.random() < 0.15
        if system:
            path, pid, guid = rng.choice(_SYSTEM_PROCS)
            when = lo
        else:
            when, pid, guid, path = rng.choice(procs)
        at = rng.randint(when, hi)
        if roll < 0.10 and not system and guid not in exited:
            exited.add(guid)
            add(ProcessEvent(time=at, action=ProcessAction.PROC_EXIT, pid=pid, parent_pid=0,
                             path=path, cmdline="", user=account, process_guid=guid,
                             parent_process_guid=EXPLORER_GUID, eid=_random_guid(rng)))
        elif roll < 0.60:
            folder = rng.choice([f"{paths.home}\\Documents", f"{paths.home}\\Downloads",
                                 r"C:\Windows\Temp", f"{paths.home}\\Pictures"])
            target = f"{folder}\\{rng.choice(_BENIGN_DOCS)}-{rng.randint(1, 99)}{rng.choice(_BENIGN_EXTS)}"
            action = rng.choice([FileAction.FILE_CREATE, FileAction.FILE_WRITE,
                                 FileAction.FILE_WRITE, FileAction.FILE_DELETE])
            hashed = action is not FileAction.FILE_DELETE
            add(FileEvent(time=at, action=action, eid=_random_guid(rng), target_path=target,
                          md5=f"{rng.getrandbits(128):032x}" if hashed else "",
                          sha256=f"{rng.getrandbits(256):064x}" if hashed else "",
                          pid=pid, process_guid=guid, process_name=path))
        else:
            remote, rport = rng.choice(_BENIGN_REMOTES)
            add(SocketEvent(time=at, action=SocketAction.SOCKET_CONNECT, pid=pid, process_guid=guid,
                            process_name=path, family=AddressFamily.AF_INET,
                            protocol=Protocol.UDP if rport == 53 else Protocol.TCP,
                            local_address=LOCAL_ADDRESS, local_port=rng.randint(49152, 65535),
                            remote_address=remote, remote_port=rport, eid=_random_guid(rng)))
    return out


# --- fuzz mode ----------------------------------------------------------------

def _fuzz_events(spec: ScenarioSpec, rng: random.Random) -> List[SimEvent]:
    """Random events mixing campaign and benign values, including case and near-miss variants."""
    from .rules import CRIMSON_IPS, CRIMSON_MD5S, CRIMSON_PORTS

    host = spec.host
    procs = [POWERPNT_PATH, POWERPNT_PATH.lower(), r"C:\Users\X\0ffice360-48\JNMXRVT HCSM.EXE",
             r"C:\Program Files\Google\Chrome\Application\chrome.exe", r"C:\Windows\explorer.exe",
             r"C:\Users\X\jnmxrvt_hcsm.exe", r"C:\Office16\POWERPNT.EX", "POWERPNT.EXE"]
    targets = [r"C:\Users\X\dl\WEISTE.jpg", r"c:\users\x\0FFICE360-48\a.bin", r"C:\a\weiste.JPG.bak",
               r"C:\Users\X\Office360-48\b.bin", r"C:\t\jnmxrvt hcsm.exe", r"C:\t\jnmxrvthcsm.exe",
               r"C:\Users\X\Documents\x.docx", r"C:\0ffice360-4\c.dat", r"D:\WEISTE_jpg"]
    md5s = CRIMSON_MD5S + [f"{rng.getrandbits(128):032x}" for _ in range(3)] + [""]
    ips = CRIMSON_IPS + [ALLOWLISTED[0], "8.8.8.8", C2_ADDRESS, "93.127.133.59"]
    ports = CRIMSON_PORTS + [443, 80, 19822, 0, 65535]
    guids = [_random_guid(rng) for _ in range(6)] + [POWERPNT_GUID, RAT_GUID]
    lo, hi = max(1, spec.base_time - 300), spec.base_time + 900
    out: List[SimEvent] = []
    for _ in range(spec.fuzz_events):
        when, guid, pid = rng.randint(lo, hi), rng.choice(guids), rng.randint(0, 70000)
        kind = rng.random()
        if kind < 0.2:
            parent = rng.choice(guids)
            payload = ProcessEvent(
                time=when, action=rng.choice(list(ProcessAction)), pid=pid,
                parent_pid=rng.randint(0, 70000), path=rng.choice(procs + targets),
                cmdline=rng.choice(["", "/ou", rng.choice(targets)]), user=f"{host}\\fuzz",
                process_guid=guid, parent_process_guid=parent, eid=_random_guid(rng))
        elif kind < 0.6:
            md5 = rng.choice(md5s)
            payload = FileEvent(
                time=when, action=rng.choice(list(FileAction)), eid=_random_guid(rng),
                target_path=rng.choice(targets), md5=md5,
                sha256=rng.choice(["", CAMPAIGN_SHA256, f"{rng.getrandbits(256):064x}"]),
                pid=pid, process_guid=guid, process_name=rng.choice(procs))
        else:
            payload = SocketEvent(
                time=when, action=rng.choice(list(SocketAction)), pid=pid, process_guid=guid,
                process_name=rng.choice(procs), family=AddressFamily.AF_INET,
                protocol=rng.choice(list(Protocol)), local_address=LOCAL_ADDRESS,
                local_port=rng.randint(0, 65535), remote_address=rng.choice(ips),
                remote_port=rng.choice(ports), eid=_random_guid(rng))
        out.append(SimEvent("fuzz", _wrap(host, payload)))
    return out


def scenario_events(spec: ScenarioSpec) -> List[SimEvent]:
    """Stage-labelled events for ``spec`` in log order (time, then generation order)."""
    spec.validate()
    rng = random.Random(spec.jitter_seed)
    events = _attack_events(spec) + _noise_events(spec, rng) + _fuzz_events(spec, rng)
    order = sorted(range(len(events)), key=lambda i: (events[i].event.time, i))
    return [events[i] for i in order]


def generate_scenario(spec: ScenarioSpec) -> str:
    """JSON Lines log for ``spec``."""
    return write_log(s.event for s in scenario_events(spec))


def generate_reference_log() -> str:
    """The 25 events recorded on DESKTOP-3DD3GTB, as JSON Lines."""
    return generate_scenario(ScenarioSpec())


# --- C2 session ---------------------------------------------------------------

class C2Command(str, Enum):
    PROCL = "procl"
    GETAVS = "getavs"
    ENDPO = "endpo"
    CSCREEN = "cscreen"
    DOWF = "dowf"
    FILE = "file"
    INFO = "info"

    @property
    def description(self) -> str:
        return _C2_DESCRIPTIONS[self]


_C2_DESCRIPTIONS = {
    C2Command.PROCL: "Get a list of all processes",
    C2Command.GETAVS: "Get a list of all processes",
    C2Command.ENDPO: "Kill process based on PID",
    C2Command.CSCREEN: "Get screenshot",
    C2Command.DOWF: "Download a file from C2",
    C2Command.FILE: "Exfiltrate a file to C2",
    C2Command.INFO: "Get machine info (computer name, username, IP, OS, etc.)",
}


class Direction(str, Enum):
    TO_IMPLANT = "to_implant"
    FROM_IMPLANT = "from_implant"


@dataclass(frozen=True)
class C2Transcript:
    session: Tuple[Tuple[int, C2Command, Direction], ...]
    window: Tuple[int, int]

    def to_dict(self) -> dict:
        return {
            "window": list(self.window),
            "session": [{"time": t, "command": c.value, "direction": d.value}
                        for t, c, d in self.session],
        }


def c2_window(spec: ScenarioSpec) -> Tuple[int, int]:
    """First and last C2 connect times for ``spec``."""
    return spec.base_time + 51, spec.base_time + 114


def generate_c2_transcript(spec: ScenarioSpec) -> C2Transcript:
    """A plausible operator session over the implant's C2 channel.

    Opens with ``info``; every tasking is answered by the implant no earlier
    than it was sent. Deterministic in ``jitter_seed``.
    """
    spec.validate()
    if not spec.c2:
        raise InvalidSpec("C2 transcript needs the c2 stage")
    rng = random.Random(f"c2:{spec.jitter_seed}")
    start, end = c2_window(spec)
    follow_ups = [rng.choice([c for c in C2Command if c is not C2Command.INFO] + [C2Command.INFO])
                  for _ in range(rng.randint(3, 8))]
    times = sorted(rng.randint(start, end) for _ in range(2 * (len(follow_ups) + 1)))
    times[0] = start
    session = []
    for i, command in enumerate([C2Command.INFO] + follow_ups):
        session.append((times[2 * i], command, Direction.TO_IMPLANT))
        session.append((times[2 * i + 1], command, Direction.FROM_IMPLANT))
    return C2Transcript(tuple(session), (start, end))
