"""Hand-built TCP traces, one per diagnostic event, plus session boundary cases.

Every TCP trace opens with the handshake a=1000 / b=5000, so a's first
data byte is 1001 and b acks a's bytes with 1001 + offset.
"""

from conftest import F, handshake, icmp, tcp, udp
from pktaction.metrics.sessions import CloseReason


def _data(ts, off, n=100):
    return tcp(ts, 0, 1001 + off, 5001, F.ACK | F.PSH, n)


def _ack(ts, off, win=64000):
    return tcp(ts, 1, 5001, 1001 + off, F.ACK, win=win)


DIAG_TRACES = {
    "retransmission": handshake() + [_data(100, 0), _data(200, 0), _ack(300, 100)],
    "fast_retransmission": handshake() + [
        _data(100, 0), _data(110, 100), _data(120, 200), _data(130, 300),
        _ack(200, 100), _ack(210, 100), _ack(220, 100), _ack(230, 100), _data(300, 100),
    ],
    "spurious_retransmission": handshake() + [_data(100, 0), _ack(200, 100), _data(300, 0)],
    "lost_segment": handshake() + [_data(100, 0), _data(200, 200)],
    "acked_lost_segment": handshake() + [_data(100, 0), _ack(200, 200)],
    "duplicate_ack": handshake() + [_data(100, 0), _ack(200, 100), _ack(210, 100), _ack(220, 100)],
    "out_of_order": handshake() + [_data(100, 100), _data(110, 0)],
    "zero_window": handshake() + [_data(100, 0), _ack(200, 100, win=0)],
}

# Exact event vectors the rules give on each trace, in EVENTS order:
# retransmission, fast, spurious, lost, acked_lost, duplicate_ack, out_of_order, zero_window
DIAG_EXPECTED = {
    "retransmission": (1, 0, 0, 0, 0, 0, 0, 0),
    "fast_retransmission": (0, 1, 0, 0, 0, 2, 0, 0),
    "spurious_retransmission": (0, 0, 1, 0, 0, 0, 0, 0),
    "lost_segment": (0, 0, 0, 1, 0, 0, 0, 0),
    "acked_lost_segment": (0, 0, 0, 0, 1, 0, 0, 0),
    "duplicate_ack": (0, 0, 0, 0, 0, 1, 0, 0),
    "out_of_order": (0, 0, 0, 1, 0, 0, 1, 0),
    "zero_window": (0, 0, 0, 0, 0, 0, 0, 1),
}


def _fin_close(t0):
    return handshake(t0) + [
        _data(t0 + 100, 0), _ack(t0 + 200, 100),
        tcp(t0 + 300, 0, 1101, 5001, F.FIN | F.ACK),
        tcp(t0 + 400, 1, 5001, 1102, F.FIN | F.ACK),
        tcp(t0 + 500, 0, 1102, 5002, F.ACK),
    ]


S = 1_000_000
SESSION_CASES = {
    "fin_then_new_syn": (_fin_close(0) + handshake(5 * S, 9000, 9500)[:1], [CloseReason.FIN, CloseReason.TRACE_END]),
    "rst_close": (handshake() + [tcp(100, 1, 5001, 1001, F.RST | F.ACK), tcp(200, 0, 1001, 5001, F.ACK)],
                  [CloseReason.RST, CloseReason.TRACE_END]),
    "idle_61s": ([udp(0, 0), udp(61 * S, 1)], [CloseReason.IDLE, CloseReason.TRACE_END]),
    "idle_exactly_60s": ([udp(0, 0), udp(60 * S, 1)], [CloseReason.TRACE_END]),
    "udp_0_30_95": ([udp(0, 0), udp(30 * S, 1), udp(95 * S, 0)], [CloseReason.IDLE, CloseReason.TRACE_END]),
    "back_to_back": (_fin_close(0) + _fin_close(1000), [CloseReason.FIN, CloseReason.FIN]),
    "syn_after_fins_without_last_ack": (_fin_close(0)[:-1] + handshake(1000), [CloseReason.FIN, CloseReason.TRACE_END]),
    "icmp_echo_pair": ([icmp(0, 0, 8), icmp(10, 1, 0), icmp(20, 0, 8), icmp(30, 1, 0)], [CloseReason.TRACE_END]),
    "icmp_unrelated_types": ([icmp(0, 0, 8), icmp(10, 1, 3, 1)], [CloseReason.TRACE_END, CloseReason.TRACE_END]),
    "single_packet": ([udp(0, 0)], [CloseReason.TRACE_END]),
}
