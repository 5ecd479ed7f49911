import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from sentinel.events import (
    AddressFamily,
    BadEnum,
    BadFormat,
    Event,
    EventKind,
    FileEvent,
    MissingField,
    ProcessAction,
    ProcessEvent,
    Protocol,
    ValidationError,
    to_columns,
    utc_iso,
    validate_event,
)

POWERPNT = r"C:\Program Files\Microsoft Office\Root\Office16\POWERPNT.EXE"


def process_columns(**over):
    cols = {
        "time": "1752503624", "action": "PROC_CREATE", "pid": "10476", "parent_pid": "2140",
        "path": POWERPNT, "cmdline": f'"{POWERPNT}" /ou', "user": r"DESKTOP-3DD3GTB\Itachi",
        "process_guid": "68C10DB4-5156-11F0-B8DF-0800270D762D",
        "parent_process_guid": "68C109FE-5156-11F0-B8DF-0800270D762D",
        "eid": "486C38E4-40C8-44EA-9D7D-1A2E00000000",
    }
    cols.update(over)
    return cols


def socket_columns(**over):
    cols = {
        "time": "1752503675", "action": "SOCKET_CONNECT", "pid": "2192",
        "process_guid": "68C10DCA-5156-11F0-B8DF-0800270D762D",
        "process_name": r"C:\Users\Itachi\0ffice360-48\jnmxrvt hcsm.exe",
        "family": "AF_INET", "protocol": "TCP", "local_address": "10.0.2.15",
        "local_port": "55625", "remote_address": "93.127.133.58", "remote_port": "19821",
        "eid": "65D9BA08-9728-46A1-BCBA-CE0003000000",
    }
    cols.update(over)
    return cols


def file_columns(**over):
    cols = {
        "time": "1752503629", "action": "FILE_CREATE", "eid": "E1",
        "target_path": r"C:\Users\Itachi\0ffice360-48\WEISTE.jpg", "md5": "", "sha256": "",
        "pid": "10476", "process_guid": "68C10DB4-5156-11F0-B8DF-0800270D762D",
        "process_name": POWERPNT,
    }
    cols.update(over)
    return cols


def test_powerpnt_process_event():
    event = validate_event(process_columns(), "win_process_events")
    assert event.kind is EventKind.PROCESS
    assert event.payload.pid == 10476
    assert event.payload.action is ProcessAction.PROC_CREATE
    assert event.payload.path == POWERPNT
    assert event.utc_time == "2025-07-14T14:33:44Z"


def test_unknown_action_rejected():
    with pytest.raises(BadEnum) as err:
        validate_event(process_columns(action="PROC_SUSPEND"), "win_process_events")
    assert (err.value.field, err.value.value) == ("action", "PROC_SUSPEND")


def test_out_of_range_port_rejected():
    with pytest.raises(BadFormat) as err:
        validate_event(socket_columns(remote_port="70000"), "win_socket_events")
    assert (err.value.field, err.value.value) == ("remote_port", "70000")


def test_missing_field_names_it():
    cols = socket_columns()
    del cols["remote_address"]
    with pytest.raises(MissingField) as err:
        validate_event(cols, "win_socket_events")
    assert err.value.field == "remote_address"


@pytest.mark.parametrize("cols, table, field", [
    (process_columns(time="0"), "win_process_events", "time"),
    (process_columns(time="-5"), "win_process_events", "time"),
    (process_columns(pid="12a"), "win_process_events", "pid"),
    (process_columns(process_guid="68C10DB4-5156-11F0-B8DF"), "win_process_events", "process_guid"),
    (file_columns(md5="abc"), "win_file_events", "md5"),
    (file_columns(sha256="z" * 64), "win_file_events", "sha256"),
    (socket_columns(remote_address="93.127.133"), "win_socket_events", "remote_address"),
    (socket_columns(remote_address="::1"), "win_socket_events", "remote_address"),
    (socket_columns(local_port="1" * 400), "win_socket_events", "local_port"),
])
def test_bad_format_identifies_field(cols, table, field):
    with pytest.raises(BadFormat) as err:
        validate_event(cols, table)
    assert err.value.field == field


def test_guid_case_insensitive_and_preserved():
    guid = "68c10db4-5156-11f0-b8df-0800270d762d"
    event = validate_event(process_columns(process_guid=guid), "win_process_events")
    assert event.payload.process_guid == guid


def test_process_eid_optional():
    cols = process_columns()
    del cols["eid"]
    assert validate_event(cols, "win_process_events").eid == ""


def test_socket_numeric_family_and_protocol():
    event = validate_event(socket_columns(family="2", protocol="6"), "win_socket_events")
    assert event.payload.family is AddressFamily.AF_INET
    assert event.payload.protocol is Protocol.TCP


def test_ipv6_socket():
    event = validate_event(
        socket_columns(family="AF_INET6", local_address="fe80::1", remote_address="2001:DB8::5"),
        "win_socket_events")
    assert event.payload.remote_address == "2001:db8::5"


def test_utc_time_column_ignored():
    event = validate_event(file_columns(utc_time="garbage"), "win_file_events")
    assert event.utc_time == "2025-07-14T14:33:49Z"


def test_event_envelope_consistency():
    payload = validate_event(file_columns(), "win_file_events").payload
    with pytest.raises(ValueError):
        Event(EventKind.PROCESS, payload, "h", "win_process_events")
    with pytest.raises(ValueError):
        Event(EventKind.FILE, payload, "h", "win_socket_events")


def test_utc_iso():
    assert utc_iso(1752503624) == "2025-07-14T14:33:44Z"


# --- properties ---------------------------------------------------------------

hex_case = st.text("0123456789abcdefABCDEF", min_size=32, max_size=32)


@given(md5=hex_case, sha=st.text("0123456789abcdefABCDEF", min_size=64, max_size=64))
def test_hash_canonicalization(md5, sha):
    event = validate_event(file_columns(md5=md5, sha256=sha), "win_file_events")
    assert event.payload.md5 == md5.lower()
    assert event.payload.sha256 == sha.lower()


raw_values = st.one_of(st.text(max_size=30), st.integers(), st.none(), st.booleans(),
                       st.floats(allow_nan=True), st.lists(st.integers(), max_size=2))
field_pool = sorted(set(process_columns()) | set(socket_columns()) | set(file_columns()))


@settings(max_examples=400, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.sampled_from(["win_process_events", "win_file_events", "win_socket_events"]),
       st.sampled_from([process_columns(), file_columns(), socket_columns(), {}]),
       st.dictionaries(st.sampled_from(field_pool), raw_values, max_size=6),
       st.sets(st.sampled_from(field_pool), max_size=3))
def test_validate_event_is_total(table, base, overrides, dropped):
    cols = {k: v for k, v in {**base, **overrides}.items() if k not in dropped}
    try:
        event = validate_event(cols, table)
    except ValidationError as err:
        assert err.field
    else:
        assert isinstance(event, Event)


@given(st.one_of(st.none(), st.integers(), st.text(max_size=5), st.lists(st.text(), max_size=2)))
def test_non_mapping_candidate_is_classified(candidate):
    with pytest.raises(ValidationError):
        validate_event(candidate, "win_file_events")


paths = st.text(st.characters(blacklist_categories=("Cs",)), max_size=40)


@given(path=paths, target=paths, t=st.integers(1, 2**33), pid=st.integers(0, 2**32),
       action=st.sampled_from(["FILE_CREATE", "FILE_WRITE", "FILE_DELETE", "FILE_RENAME"]))
def test_columns_round_trip(path, target, t, pid, action):
    cols = file_columns(time=str(t), pid=str(pid), process_name=path, target_path=target,
                        action=action, md5="D946E3E94FEC670F9E47ACA186ECAABE")
    event = validate_event(cols, "win_file_events", "host")
    assert validate_event(to_columns(event.payload), "win_file_events", "host") == event


def test_payloads_are_immutable():
    event = validate_event(file_columns(), "win_file_events")
    with pytest.raises(AttributeError):
        event.payload.md5 = "x"
    assert isinstance(event.payload, FileEvent) and isinstance(
        validate_event(process_columns(), "win_process_events").payload, ProcessEvent)
