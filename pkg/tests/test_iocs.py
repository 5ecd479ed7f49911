import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sentinel.events import (
    AddressFamily,
    Event,
    EventKind,
    FileAction,
    FileEvent,
    ProcessAction,
    ProcessEvent,
    Protocol,
    SocketAction,
    SocketEvent,
)
from sentinel.iocs import (
    BadHashLength,
    BadIocFormat,
    BadPort,
    IocField,
    IocSet,
    default_iocs,
    load_iocs,
    match_event,
)

GUID = "68C10DCA-5156-11F0-B8DF-0800270D762D"
RAT = r"C:\Users\Itachi\0ffice360-48\jnmxrvt hcsm.exe"


def sock(ip, port, process=RAT):
    return Event(EventKind.SOCKET, SocketEvent(
        1752503675, SocketAction.SOCKET_CONNECT, 2192, GUID, process, AddressFamily.AF_INET,
        Protocol.TCP, "10.0.2.15", 55625, ip, port, "E"), "h", "win_socket_events")


def file_event(target, md5="", sha256=""):
    return Event(EventKind.FILE, FileEvent(
        1752503625, FileAction.FILE_CREATE, "E", target, md5, sha256, 10476, GUID, "POWERPNT.EXE"),
        "h", "win_file_events")


def fields(hits):
    return [h.field_matched for h in hits]


def test_c2_socket_hits_address_and_port():
    hits = match_event(sock("93.127.133.58", 19821), default_iocs())
    assert fields(hits) == [IocField.REMOTE_ADDRESS, IocField.REMOTE_PORT]
    assert [h.value for h in hits] == ["93.127.133.58", "19821"]


def test_allowlisted_socket_has_no_hits():
    assert match_event(sock("96.17.168.104", 443), default_iocs()) == []


def test_allowlist_dominates_even_when_listed():
    iocs = load_iocs(json.dumps({"ips": ["96.17.168.104"], "ports": [443],
                                 "allowlist": [{"ip": "96.17.168.104", "port": 443}]}))
    assert match_event(sock("96.17.168.104", 443), iocs) == []
    assert fields(match_event(sock("96.17.168.104", 80), iocs)) == [IocField.REMOTE_ADDRESS]


def test_phishing_ip_on_443_hits_address_only():
    hits = match_event(sock("37.221.64.134", 443), default_iocs())
    assert fields(hits) == [IocField.REMOTE_ADDRESS]


def test_md5_hit():
    hits = match_event(file_event(r"C:\x.ppam", md5="d946e3e94fec670f9e47aca186ecaabe"), default_iocs())
    assert fields(hits) == [IocField.MD5]
    assert hits[0].source_label == "operation-sindoor"


def test_sha256_hit():
    sha = "8cbd47119356081e70fc023d3ac78af560651e7932636adeca7bec96b09e0e95"
    assert fields(match_event(file_event(r"C:\x.ppam", sha256=sha), default_iocs())) == [IocField.SHA256]


def test_filename_hit_case_insensitive_on_basename():
    path = r"C:\Users\x\Downloads\j&k police letter.pdf"
    hits = match_event(file_event(path), default_iocs())
    assert [(h.field_matched, h.value) for h in hits] == [(IocField.FILENAME, "J&K Police Letter")]
    # directory names do not count
    assert match_event(file_event(r"C:\J&K Police Letter\notes.txt"), default_iocs()) == []


def test_process_path_filename_hit():
    event = Event(EventKind.PROCESS, ProcessEvent(
        1, ProcessAction.PROC_CREATE, 1, 0, r"C:\t\DO Letter, Integrated HQ of MoD.exe", "", "u", GUID,
        GUID), "h", "win_process_events")
    assert fields(match_event(event, default_iocs())) == [IocField.FILENAME]


def test_empty_config_matches_nothing():
    empty = load_iocs("")
    assert len(empty) == 0 and empty.allowlist == frozenset()
    assert match_event(sock("93.127.133.58", 19821), empty) == []
    assert load_iocs("{}") == IocSet()


def test_short_md5_rejected():
    with pytest.raises(BadHashLength):
        load_iocs(json.dumps({"md5": ["a" * 31]}))


def test_bad_port_rejected():
    with pytest.raises(BadPort):
        load_iocs(json.dumps({"ports": [70000]}))


def test_bad_format_reports_line():
    text = '{\n  "md5": [],\n  "ips": ["1.2.3"]\n}'
    with pytest.raises(BadIocFormat) as err:
        load_iocs(text)
    assert err.value.line == 3
    with pytest.raises(BadIocFormat) as err:
        load_iocs('{\n  "md5": [,]\n}')
    assert err.value.line == 2
    with pytest.raises(BadIocFormat):
        load_iocs('{"hashes": []}')


def test_normalization_and_dedup():
    iocs = load_iocs(json.dumps({
        "md5": ["D946E3E94FEC670F9E47ACA186ECAABE", "d946e3e94fec670f9e47aca186ecaabe"],
        "domains": ["Example[.]COM", "example.com"], "ports": ["443", 443]}))
    assert iocs.md5_hashes == {"d946e3e94fec670f9e47aca186ecaabe"}
    assert iocs.domains == {"example.com"}
    assert iocs.ports == {443}


def test_hit_values_are_members():
    iocs = default_iocs()
    collections = {IocField.MD5: iocs.md5_hashes, IocField.SHA256: iocs.sha256_hashes,
                   IocField.REMOTE_ADDRESS: iocs.ip_addresses,
                   IocField.REMOTE_PORT: {str(p) for p in iocs.ports},
                   IocField.FILENAME: iocs.decoy_filenames}
    from sentinel.ingest import ingest_text
    from sentinel.simulator import ScenarioSpec, generate_scenario
    store, _ = ingest_text(generate_scenario(ScenarioSpec(noise_events=200, fuzz_events=300)))
    seen = 0
    for event in store:
        for hit in match_event(event, iocs):
            assert hit.value in collections[hit.field_matched]
            seen += 1
    assert seen > 0


# --- properties ---------------------------------------------------------------

ips = st.sampled_from(["93.127.133.58", "96.17.168.104", "37.221.64.134", "8.8.8.8", "10.0.0.1"])
ports = st.sampled_from([443, 19821, 80, 1097, 8080])
hashes = st.sampled_from(["d946e3e94fec670f9e47aca186ecaabe", "0" * 32, "f" * 32])
names = st.sampled_from(["WEISTE", "letter", "Report", "x.pdf", "J&K"])


@st.composite
def ioc_docs(draw):
    return {
        "md5": draw(st.lists(hashes, max_size=3)),
        "ips": draw(st.lists(ips, max_size=3)),
        "ports": draw(st.lists(ports, max_size=3)),
        "filenames": draw(st.lists(names, max_size=3)),
        "allowlist": [{"ip": i, "port": p} for i, p in draw(st.lists(st.tuples(ips, ports), max_size=2))],
    }


events = st.one_of(
    st.builds(sock, ips, ports),
    st.builds(file_event, st.sampled_from([r"C:\a\WEISTE.jpg", r"C:\b\J&K Police Letter.pdf",
                                           r"C:\c\report.docx"]), hashes),
)


@settings(max_examples=200, deadline=None)
@given(ioc_docs(), ioc_docs(), events)
def test_monotone_in_indicators(base, extra, event):
    small = load_iocs(json.dumps(base))
    merged = {k: base[k] + extra[k] for k in base if k != "allowlist"}
    merged["allowlist"] = base["allowlist"]
    large = load_iocs(json.dumps(merged))
    assert set(match_event(event, small)) <= set(match_event(event, large))
    assert match_event(event, small) == match_event(event, small)


@settings(max_examples=200, deadline=None)
@given(ioc_docs(), ips, ports)
def test_suppression_dominance(doc, ip, port):
    doc["allowlist"].append({"ip": ip, "port": port})
    assert match_event(sock(ip, port), load_iocs(json.dumps(doc))) == []
