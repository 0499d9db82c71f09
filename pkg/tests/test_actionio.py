import json

import pytest
from hypothesis import given, strategies as st

from pktaction.actionio import make_header, read_actions, write_actions
from pktaction.errors import ActionParseError, ActionSchemaError
from pktaction.lift import lift_trace


def test_roundtrip_with_header(small_synth):
    _, res = small_synth
    acts, rep = lift_trace(res.packets)
    text = write_actions(acts, header=make_header(4096, "abc", rep.first_ts_us))
    header, back = read_actions(text)
    assert back == acts
    assert header["schema_version"] == 1 and header["V"] == 4096 and header["epoch_us"] == rep.first_ts_us


def test_empty_file():
    assert read_actions("") == (None, [])


def one_line(small_synth):
    _, res = small_synth
    acts, _ = lift_trace(res.packets[:1])
    return acts[0].to_dict()


def test_digit_out_of_range(small_synth):
    obj = one_line(small_synth)
    obj["tcp_win_d"] = [0, 0, 16, 0]
    with pytest.raises(ActionSchemaError) as exc:
        read_actions(json.dumps(obj))
    assert exc.value.field == "tcp_win_d" and exc.value.line == 1


def test_missing_field_named(small_synth):
    obj = one_line(small_synth)
    del obj["ttl_res"]
    with pytest.raises(ActionSchemaError) as exc:
        read_actions(json.dumps(obj))
    assert exc.value.field == "ttl_res"


def test_malformed_line_number(small_synth):
    good = json.dumps(one_line(small_synth))
    with pytest.raises(ActionParseError) as exc:
        read_actions(good + "\n" + good + "\n{oops\n")
    assert exc.value.line == 3


@pytest.mark.parametrize("field,value", [("proto", "sctp"), ("tcp_ack_unseen", 1), ("flow_token", -1),
                                         ("bogus", 3), ("l4_payload_len_d", [1, 2, 3])])
def test_schema_violations(small_synth, field, value):
    obj = one_line(small_synth)
    obj[field] = value
    with pytest.raises(ActionSchemaError):
        read_actions(json.dumps(obj))


@given(st.integers(0, 2**16 - 1), st.integers(0, 2**32 - 1))
def test_digit_fields_roundtrip(win_like, adv):
    from dataclasses import replace
    from pktaction.lift import ActionRecord, Direction, FlowEvent, encode_digits
    from pktaction.packet import IpFamily, Proto
    a = ActionRecord(3, 1, FlowEvent.OPEN, Proto.TCP, IpFamily.V6, Direction.B_TO_A,
                     tcp_win_d=encode_digits(win_like, 4), tcp_ack_adv_d=encode_digits(adv, 8))
    assert read_actions(write_actions([a]))[1] == [a]
