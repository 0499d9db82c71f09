from pktaction.compiler import CompileConfig, compile_actions
from pktaction.lift import lift_trace
from pktaction.packet import encode_frame
from pktaction.validate import is_synthetic_address, validate_frames, validate_packets
from pktaction.packet import IpFamily

from conftest import F, handshake, tcp


def synthetic(pk):
    # compile through the oracle path to get synthetic endpoints
    acts, rep = lift_trace(pk)
    return compile_actions(acts, CompileConfig(epoch_us=rep.first_ts_us)).packets


def rules(report):
    return sorted({v.rule for v in report.violations})


def test_original_addresses_flagged():
    assert "non_synthetic_address" in rules(validate_packets(handshake()))


def test_clean_compiled_flow():
    assert validate_packets(synthetic(handshake())).ok


def test_tcp_violations_detected():
    pk = synthetic(handshake())
    syn, synack, ack = pk
    from dataclasses import replace
    bad = [syn, synack, replace(ack, tcp_ack=(ack.tcp_ack + 10) % 2**32)]
    assert rules(validate_packets(bad)) == ["ack_beyond_peer"]
    assert validate_packets(bad, unseen=[False, False, True]).ok
    bad = [syn, synack, replace(ack, tcp_seq=(syn.tcp_seq - 5) % 2**32)]
    assert rules(validate_packets(bad)) == ["seq_before_isn"]
    bad = [syn, synack, replace(ack, tcp_seq=(syn.tcp_seq + 2**30 + 10) % 2**32)]
    assert rules(validate_packets(bad)) == ["seq_jump"]
    rst = replace(synack, tcp_flags=F.RST | F.ACK)
    assert rules(validate_packets([syn, rst, ack])) == ["after_rst"]
    data = replace(ack, tcp_flags=F.SYN, payload_len=3, payload=b"abc")
    assert "syn_payload" in rules(validate_packets([syn, synack, data]))
    assert rules(validate_packets([ack, syn])) == ["timestamp_order"]


def test_frames_checksum_and_undecodable():
    pk = synthetic(handshake())
    frames = [(p.ts_us, encode_frame(p)) for p in pk]
    assert validate_frames(frames).ok
    broken = bytearray(frames[1][1])
    broken[-1] ^= 0xFF
    frames2 = [frames[0], (frames[1][0], b"\x00" * 5), (frames[2][0], bytes(broken))]
    rep = validate_frames(frames2)
    assert [(v.index, v.rule) for v in rep.violations] == [(1, "undecodable"), (2, "bad_checksum")]


def test_synthetic_address_ranges():
    assert is_synthetic_address(IpFamily.V4, bytes([10, 1, 2, 3]))
    assert not is_synthetic_address(IpFamily.V4, bytes([10, 1, 2, 255]))
    assert not is_synthetic_address(IpFamily.V4, bytes([192, 168, 0, 1]))
    assert is_synthetic_address(IpFamily.V6, b"\xfd" + bytes(15))
    assert not is_synthetic_address(IpFamily.V6, b"\x20\x01" + bytes(14))
