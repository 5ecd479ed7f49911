import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import like, scan
from sentinel.events import (
    AddressFamily,
    Event,
    EventKind,
    FileAction,
    FileEvent,
    Protocol,
    SocketAction,
    SocketEvent,
)
from sentinel.ingest import EventStore, ingest_text
from sentinel.rules import (
    CRIMSON_RAT_RULE,
    DetectionRule,
    DuplicateRuleId,
    EmptyRule,
    LikePattern,
    RuleFileError,
    RuleFormatError,
    UnknownField,
    builtin_crimson_rat_rule,
    compile_predicate,
    compile_rule,
    compile_rules,
    eval_rule,
    eval_rules,
    load_rules,
    match_pattern,
)
from sentinel.simulator import ScenarioSpec, generate_scenario

POWERPNT = r"C:\Program Files\Microsoft Office\Root\Office16\POWERPNT.EXE"
GUID = "68C10DB4-5156-11F0-B8DF-0800270D762D"


def file_event(action, target, process=POWERPNT, md5="", t=1752503629):
    return Event(EventKind.FILE, FileEvent(t, action, "E", target, md5, "", 10476, GUID, process),
                 "h", "win_file_events")


def sock(process, ip, port, t=1752503675):
    return Event(EventKind.SOCKET, SocketEvent(
        t, SocketAction.SOCKET_CONNECT, 1, GUID, process, AddressFamily.AF_INET, Protocol.TCP,
        "10.0.2.15", 5000, ip, port, "E"), "h", "win_socket_events")


# --- matcher ------------------------------------------------------------------

@pytest.mark.parametrize("pattern, text, expected", [
    ("%powerpnt.exe%", POWERPNT, True),
    ("%", "", True),
    ("%0ffice360-48%", r"C:\Users\Itachi\AppData\Local\Temp\x.tmp", False),
    ("", "", True),
    ("", "a", False),
    ("_", "", False),
    ("_", "\\", True),
    ("a\\b", "A\\B", True),
    ("%\\%", "c:\\dir\\", True),
    ("%a%b%c", "xaybzc", True),
    ("%a%b%c", "xaybzcd", False),
    ("W_ISTE.JPG", "weiste.jpg", True),
    ("%%%", "anything", True),
    ("ÄB", "äb", False),  # non-ASCII letters are not folded
    ("%.exe", "x.exe.bak", False),
])
def test_match_pattern_examples(pattern, text, expected):
    assert match_pattern(pattern, text) is expected
    assert LikePattern(pattern)(text) is expected


alphabet = st.sampled_from(list("aAbB%_\\.xX-é"))


@settings(max_examples=500, deadline=None)
@given(st.text(alphabet, max_size=8), st.text(alphabet, max_size=12))
def test_match_pattern_agrees_with_regex(pattern, text):
    assert match_pattern(pattern, text) == like(pattern, text)
    assert LikePattern(pattern)(text) == like(pattern, text)


@settings(max_examples=200, deadline=None)
@given(st.text(alphabet, max_size=10))
def test_pattern_matches_itself_when_literal(text):
    literal = text.replace("%", "").replace("_", "")
    assert match_pattern(literal, literal.swapcase() if literal.isascii() else literal)
    assert match_pattern("%" + literal + "%", "x" + literal + "y")


# --- compilation --------------------------------------------------------------

def test_builtin_rule_shape():
    rule = builtin_crimson_rat_rule()
    assert rule.rule_id == "crimson-rat-sindoor"
    assert rule.severity == "critical"
    assert [p.kind for p in rule.parts] == [EventKind.FILE, EventKind.SOCKET]
    assert compile_rule(rule.to_doc()) == rule


def test_unknown_field():
    doc = {"rule_id": "r", "parts": [{"kind": "file", "where": {"field": "registry_key", "equals": "x"}}]}
    with pytest.raises(UnknownField) as err:
        compile_rule(doc)
    assert (err.value.field, err.value.kind) == ("registry_key", "file")


def test_empty_rule():
    with pytest.raises(EmptyRule):
        compile_rule({"rule_id": "r", "parts": []})


def test_duplicate_rule_id():
    doc = {"rule_id": "r", "parts": [{"kind": "file", "where": {"field": "md5", "equals": ""}}]}
    with pytest.raises(DuplicateRuleId):
        compile_rules([doc, doc])


@pytest.mark.parametrize("where", [
    {"field": "action", "equals": "FILE_OPEN"},
    {"field": "pid", "equals": "ten"},
    {"field": "md5", "like": 5},
    {"field": "md5", "equals": "", "like": "%"},
    {"all": []},
    {"any": [{"field": "md5", "equals": ""}], "not": {}},
    [1, 2],
])
def test_malformed_predicates(where):
    with pytest.raises(RuleFormatError):
        compile_rule({"rule_id": "r", "parts": [{"kind": "file", "where": where}]})


def test_bad_severity_and_kind():
    with pytest.raises(RuleFormatError):
        compile_rule({"rule_id": "r", "severity": "urgent",
                      "parts": [{"kind": "file", "where": {"field": "md5", "equals": ""}}]})
    with pytest.raises(RuleFormatError):
        compile_rule({"rule_id": "r", "parts": [{"kind": "registry", "where": {}}]})


def test_integer_fields_coerced():
    rule = compile_rule({"rule_id": "r", "parts": [
        {"kind": "socket", "where": {"field": "remote_port", "in": ["19821", 443]}}]})
    assert rule.parts[0].predicate.values == frozenset({19821, 443})


# --- built-in rule on single events -------------------------------------------

def hits(event):
    return eval_rule(builtin_crimson_rat_rule(), EventStore([event]))


def test_rename_to_payload_by_any_process():
    event = file_event(FileAction.FILE_RENAME, r"C:\Users\X\dl\jnmxrvt hcsm.exe", process=r"C:\x\other.exe")
    assert [d.matched_part for d in hits(event)] == [0]


def test_file_write_never_matches():
    event = file_event(FileAction.FILE_WRITE, r"C:\Users\Itachi\sample\x.ppam",
                       md5="d946e3e94fec670f9e47aca186ecaabe")
    assert hits(event) == []


def test_unrelated_process_to_c2_no_detection():
    assert hits(sock(r"C:\Program Files\Google\Chrome\Application\chrome.exe", "93.127.133.58", 19821)) == []
    assert len(hits(sock(r"C:\Users\I\0ffice360-48\jnmxrvt hcsm.exe", "93.127.133.58", 19821))) == 1


def test_phishing_443_not_detected():
    assert hits(sock(POWERPNT, "37.221.64.134", 443)) == []


def test_one_detection_per_part_even_if_branches_overlap():
    # matches both the hash branch and the staging-directory branch
    event = file_event(FileAction.FILE_CREATE, r"C:\Users\I\0ffice360-48\WEISTE.jpg",
                       md5="d946e3e94fec670f9e47aca186ecaabe")
    assert len(hits(event)) == 1


def test_socket_record_format():
    [d] = hits(sock(r"C:\Users\I\0ffice360-48\jnmxrvt hcsm.exe", "93.127.133.58", 19821))
    record = d.to_record()
    assert record["target_path"] == "93.127.133.58:19821"
    assert record["md5"] is None
    assert record["table_name"] == "win_socket_events"
    assert record["utc_time"] == "2025-07-14T14:34:35Z"


def test_empty_store():
    assert eval_rule(builtin_crimson_rat_rule(), EventStore([])) == []


# --- over logs ---------------------------------------------------------------

def test_reference_log_eleven_detections(reference_log, reference_store):
    detections = eval_rule(builtin_crimson_rat_rule(), reference_store)
    assert len(detections) == 11
    assert sum(d.event.kind is EventKind.FILE for d in detections) == 9
    assert sum(d.event.kind is EventKind.SOCKET for d in detections) == 2
    assert [(d.position, d.matched_part) for d in detections] == scan(reference_log)


def test_detection_invariants_and_order():
    store, _ = ingest_text(generate_scenario(ScenarioSpec(noise_events=500, fuzz_events=1500, jitter_seed=9)))
    rule = builtin_crimson_rat_rule()
    detections = eval_rule(rule, store)
    assert detections
    keys = [(d.event.time, d.position) for d in detections]
    assert keys == sorted(keys)
    for d in detections:
        assert rule.parts[d.matched_part].predicate.test(d.event.payload)
        assert d.utc_time == d.event.utc_time
    assert eval_rule(rule, store) == detections  # idempotent


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), fuzz=st.integers(0, 400))
def test_part_independence(seed, fuzz):
    store, _ = ingest_text(generate_scenario(ScenarioSpec(jitter_seed=seed, fuzz_events=fuzz)))
    rule = builtin_crimson_rat_rule()
    whole = {(d.position, d.matched_part) for d in eval_rule(rule, store)}
    union = set()
    for index, part in enumerate(rule.parts):
        single = DetectionRule(f"part{index}", rule.severity, (part,))
        union |= {(d.position, index) for d in eval_rule(single, store)}
    assert whole == union


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), fuzz=st.integers(1, 300))
def test_closure_agrees_with_tree(seed, fuzz):
    store, _ = ingest_text(generate_scenario(ScenarioSpec(jitter_seed=seed, fuzz_events=fuzz)))
    for part in builtin_crimson_rat_rule().parts:
        fast = compile_predicate(part.predicate)
        for pos in store.positions(part.kind):
            assert fast(store[pos].payload) == part.predicate.test(store[pos].payload)


def test_eval_rules_merges_deterministically(reference_store):
    extra = compile_rule({"rule_id": "a-rule", "severity": "low", "parts": [
        {"kind": "file", "where": {"field": "target_path", "like": "%.bin"}}]})
    merged = eval_rules([builtin_crimson_rat_rule(), extra], reference_store)
    keys = [(d.event.time, d.position, d.rule_id) for d in merged]
    assert keys == sorted(keys)
    assert len(merged) == 11 + 12


# --- rule files --------------------------------------------------------------

def write_rule(directory, name, doc):
    path = directory / name
    path.write_text(json.dumps(doc, indent=2), encoding="utf-8")
    return path


def test_load_rules_directory(tmp_path):
    write_rule(tmp_path, "b.json", {"rule_id": "bin-drop", "parts": [
        {"kind": "file", "where": {"field": "target_path", "like": "%.bin"}}]})
    write_rule(tmp_path, "a.json", {"rule_id": "odd-port", "severity": "low", "parts": [
        {"kind": "socket", "where": {"field": "remote_port", "equals": 19821}}]})
    (tmp_path / "notes.txt").write_text("ignored")
    rules = load_rules(tmp_path)
    assert [r.rule_id for r in rules] == ["crimson-rat-sindoor", "odd-port", "bin-drop"]
    assert [r.rule_id for r in load_rules(None)] == ["crimson-rat-sindoor"]


def test_rule_file_errors_name_file_and_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "rule_id": "x",\n  "parts": [\n    {"kind": "file", "where": {"field": "registry_key", "equals": 1}}\n  ]\n}')
    with pytest.raises(RuleFileError) as err:
        load_rules(tmp_path)
    assert err.value.line == 4 and "bad.json" in str(err.value)

    path.write_text('{\n  "rule_id": "x",\n  oops\n}')
    with pytest.raises(RuleFileError) as err:
        load_rules(tmp_path)
    assert err.value.line == 3


def test_rule_file_duplicate_of_builtin(tmp_path):
    write_rule(tmp_path, "dup.json", dict(CRIMSON_RAT_RULE))
    with pytest.raises(RuleFileError) as err:
        load_rules(tmp_path)
    assert isinstance(err.value.cause, DuplicateRuleId)


def test_missing_rule_directory(tmp_path):
    with pytest.raises(RuleFileError):
        load_rules(tmp_path / "nope")


def test_randomized_patterns_quick():
    rng = random.Random(3)
    for _ in range(2000):
        p = "".join(rng.choice("ab%_\\A") for _ in range(rng.randint(0, 6)))
        t = "".join(rng.choice("abAB\\%_") for _ in range(rng.randint(0, 8)))
        assert match_pattern(p, t) == like(p, t)
