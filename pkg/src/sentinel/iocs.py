"""Threat-intel indicators and per-event IOC matching."""

from __future__ import annotations

import ipaddress
import json
import ntpath
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import FrozenSet, List, Optional, Tuple

from .events import Event, EventKind


class IocError(ValueError):
    pass


class BadIocFormat(IocError):
    def __init__(self, line: Optional[int], reason: str):
        where = f"line {line}: " if line else ""
        super().__init__(f"{where}{reason}")
        self.line = line
        self.reason = reason


class BadHashLength(IocError):
    def __init__(self, value: str):
        super().__init__(f"hash has wrong length ({len(value)}): {value!r}")
        self.value = value


class BadPort(IocError):
    def __init__(self, value):
        super().__init__(f"port out of range: {value!r}")
        self.value = value


class IocField(str, Enum):
    MD5 = "md5"
    SHA256 = "sha256"
    REMOTE_ADDRESS = "remote_address"
    REMOTE_PORT = "remote_port"
    DOMAIN = "domain"
    FILENAME = "filename"


@dataclass(frozen=True)
class IocHit:
    field_matched: IocField
    value: str
    source_label: str

    def to_dict(self) -> dict:
        return {"field": self.field_matched.value, "value": self.value, "source": self.source_label}


@dataclass(frozen=True)
class IocSet:
    md5_hashes: FrozenSet[str] = frozenset()
    sha256_hashes: FrozenSet[str] = frozenset()
    ip_addresses: FrozenSet[str] = frozenset()
    ports: FrozenSet[int] = frozenset()
    domains: FrozenSet[str] = frozenset()
    decoy_filenames: FrozenSet[str] = frozenset()
    allowlist: FrozenSet[Tuple[str, int]] = frozenset()
    source_label: str = ""
    # Lowercased decoy names, kept sorted so hits come out in a stable order.
    _folded_names: Tuple[Tuple[str, str], ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        folded = tuple(sorted((name.lower(), name) for name in self.decoy_filenames))
        object.__setattr__(self, "_folded_names", folded)

    def __len__(self):
        return (len(self.md5_hashes) + len(self.sha256_hashes) + len(self.ip_addresses)
                + len(self.ports) + len(self.domains) + len(self.decoy_filenames))

    def to_dict(self) -> dict:
        return {
            "label": self.source_label,
            "md5": sorted(self.md5_hashes),
            "sha256": sorted(self.sha256_hashes),
            "ips": sorted(self.ip_addresses),
            "ports": sorted(self.ports),
            "domains": sorted(self.domains),
            "filenames": sorted(self.decoy_filenames),
            "allowlist": [{"ip": ip, "port": port} for ip, port in sorted(self.allowlist)],
        }


_KEYS = {"label", "md5", "sha256", "ips", "ports", "domains", "filenames", "allowlist"}
_HEX = re.compile(r"^[0-9a-f]+$")


def _line_of(text: str, needle) -> Optional[int]:
    needle = json.dumps(needle) if isinstance(needle, str) else str(needle)
    for number, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return number
    return None


def _hashes(text, values, length, key):
    out = set()
    for value in values:
        if not isinstance(value, str):
            raise BadIocFormat(_line_of(text, value), f"{key} entries must be strings")
        canon = value.strip().lower()
        if len(canon) != length:
            raise BadHashLength(value)
        if not _HEX.match(canon):
            raise BadIocFormat(_line_of(text, value), f"{key} entry is not hex: {value!r}")
        out.add(canon)
    return frozenset(out)


def _ip(text, value):
    try:
        return str(ipaddress.ip_address(str(value).strip()))
    except ValueError:
        raise BadIocFormat(_line_of(text, value), f"not an IP address: {value!r}") from None


def _port(value):
    if isinstance(value, bool) or not isinstance(value, (int, str)):
        raise BadPort(value)
    try:
        port = int(value)
    except ValueError:
        raise BadPort(value) from None
    if not 0 <= port <= 65535:
        raise BadPort(value)
    return port


def _list(doc, key, text):
    values = doc.get(key, [])
    if not isinstance(values, list):
        raise BadIocFormat(_line_of(text, key), f"{key!r} must be a list")
    return values


def load_iocs(source, label: Optional[str] = None) -> IocSet:
    """Parse an IOC config (JSON text or a readable stream) into an :class:`IocSet`.

    Defanged domains (``example[.]com``) are refanged; hashes are lowercased;
    duplicates collapse. Blank input yields an empty set.
    """
    text = source if isinstance(source, str) else source.read()
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    if not text.strip():
        return IocSet(source_label=label or "")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise BadIocFormat(exc.lineno, exc.msg) from None
    if not isinstance(doc, dict):
        raise BadIocFormat(1, "top level must be an object")
    unknown = set(doc) - _KEYS
    if unknown:
        key = sorted(unknown)[0]
        raise BadIocFormat(_line_of(text, key), f"unknown key {key!r}")

    allowlist = set()
    for entry in _list(doc, "allowlist", text):
        if not isinstance(entry, dict) or set(entry) != {"ip", "port"}:
            raise BadIocFormat(_line_of(text, "allowlist"), f"allowlist entry must be {{ip, port}}: {entry!r}")
        allowlist.add((_ip(text, entry["ip"]), _port(entry["port"])))

    domains = set()
    for value in _list(doc, "domains", text):
        if not isinstance(value, str) or not value.strip():
            raise BadIocFormat(_line_of(text, value), f"bad domain: {value!r}")
        domains.add(value.strip().lower().replace("[.]", "."))

    names = set()
    for value in _list(doc, "filenames", text):
        if not isinstance(value, str) or not value.strip():
            raise BadIocFormat(_line_of(text, value), f"bad filename: {value!r}")
        names.add(value.strip())

    return IocSet(
        md5_hashes=_hashes(text, _list(doc, "md5", text), 32, "md5"),
        sha256_hashes=_hashes(text, _list(doc, "sha256", text), 64, "sha256"),
        ip_addresses=frozenset(_ip(text, v) for v in _list(doc, "ips", text)),
        ports=frozenset(_port(v) for v in _list(doc, "ports", text)),
        domains=frozenset(domains),
        decoy_filenames=frozenset(names),
        allowlist=frozenset(allowlist),
        source_label=label if label is not None else str(doc.get("label", "")),
    )


def default_iocs() -> IocSet:
    """The bundled Operation Sindoor corpus."""
    text = resources.files("sentinel").joinpath("data/iocs.json").read_text(encoding="utf-8")
    return load_iocs(text)


def _filename_hits(path: str, iocs: IocSet) -> List[IocHit]:
    base = ntpath.basename(path).lower()
    if not base:
        return []
    return [IocHit(IocField.FILENAME, name, iocs.source_label)
            for folded, name in iocs._folded_names if folded in base]


def match_event(event: Event, iocs: IocSet) -> List[IocHit]:
    """Every indicator in ``iocs`` that ``event`` carries.

    Socket events to an allowlisted ``(ip, port)`` never hit. Domains cannot
    match: none of the three event tables carries a hostname.
    """
    p = event.payload
    label = iocs.source_label
    hits: List[IocHit] = []
    if event.kind is EventKind.SOCKET:
        if (p.remote_address, p.remote_port) in iocs.allowlist:
            return []
        if p.remote_address in iocs.ip_addresses:
            hits.append(IocHit(IocField.REMOTE_ADDRESS, p.remote_address, label))
        if p.remote_port in iocs.ports:
            hits.append(IocHit(IocField.REMOTE_PORT, str(p.remote_port), label))
    elif event.kind is EventKind.FILE:
        if p.md5 and p.md5 in iocs.md5_hashes:
            hits.append(IocHit(IocField.MD5, p.md5, label))
        if p.sha256 and p.sha256 in iocs.sha256_hashes:
            hits.append(IocHit(IocField.SHA256, p.sha256, label))
        hits.extend(_filename_hits(p.target_path, iocs))
    else:
        hits.extend(_filename_hits(p.path, iocs))
    return hits
