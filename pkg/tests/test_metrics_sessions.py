import pytest
from hypothesis import given, settings, strategies as st

from pktaction.metrics.sessions import SESSION_IDLE_US, CloseReason, sessionize

from conftest import F, handshake, tcp, udp
from microtraces import SESSION_CASES


def test_idle_constant_is_sixty_seconds():
    assert SESSION_IDLE_US == 60 * 1_000_000


@pytest.mark.parametrize("name", sorted(SESSION_CASES))
def test_boundary_suite(name):
    packets, reasons = SESSION_CASES[name]
    sessions, labels = sessionize(packets)
    assert [s.close_reason for s in sessions] == reasons
    assert len(labels) == len(packets)
    assert sorted(set(labels)) == list(range(len(sessions)))
    for s in sessions:
        assert s.end_ts_us >= s.start_ts_us and s.packets >= 1


def test_single_packet_duration_zero():
    sessions, _ = sessionize([udp(5, 0)])
    assert sessions[0].duration_us == 0


def test_byte_counts_per_direction():
    pk = handshake() + [tcp(50, 0, 1001, 5001, F.ACK | F.PSH, 30), tcp(60, 1, 5001, 1031, F.ACK | F.PSH, 7)]
    (s,), _ = sessionize(pk)
    assert (s.bytes_a_to_b, s.bytes_b_to_a, s.packets) == (30, 7, 5)


def test_fin_labels_split_at_close():
    packets, _ = SESSION_CASES["fin_then_new_syn"]
    _, labels = sessionize(packets)
    assert labels == [0] * 8 + [1]
    assert CloseReason.FIN.value == "fin"


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 90_000_000)), min_size=1, max_size=40))
def test_tuples_are_sessionized_independently(events):
    # each tuple's sessions do not depend on which other tuples are interleaved with it
    ts = 0
    pk = []
    for port, gap in events:
        ts += gap
        pk.append(udp(ts, 0, a_port=6000 + port))
    sessions, _ = sessionize(pk)
    for port in {p for p, _ in events}:
        alone, _ = sessionize([p for p in pk if p.src_port == 6000 + port])
        mine = [s for s in sessions if 6000 + port in (s.key[2][1], s.key[3][1])]
        assert [(s.start_ts_us, s.end_ts_us, s.packets) for s in mine] == \
            [(s.start_ts_us, s.end_ts_us, s.packets) for s in alone]
