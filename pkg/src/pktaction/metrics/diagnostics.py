"""Native TCP diagnostic events.

Rules are evaluated per session and per direction on unwrapped sequence
positions:

* retransmission: a payload segment lying entirely below the direction's
  highest observed sequence end;
* spurious_retransmission: such a segment already fully acked by the peer;
* fast_retransmission: such a segment starting at the peer's repeated ack
  after at least three duplicate ACKs;
* out_of_order: such a segment filling a gap opened at most three session
  packets earlier;
* lost_segment: a sequence number beyond the expected next, opening a gap;
* acked_lost_segment: an ack covering peer bytes that were never seen;
* duplicate_ack: a pure ACK repeating the previous ack and window of its
  direction, counted from the second repeat on;
* zero_window: any non-SYN, non-RST packet advertising window 0.

Precedence among the retransmission kinds is spurious, fast, out of order,
plain retransmission.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from typing import Iterable, Sequence

from ..lift import serial_diff
from ..packet import CanonicalPacket, Proto, TcpFlags
from ..flows import src_endpoint

EVENTS = (
    "retransmission", "fast_retransmission", "spurious_retransmission", "lost_segment",
    "acked_lost_segment", "duplicate_ack", "out_of_order", "zero_window",
)
OOO_WINDOW = 3
FAST_RETX_DUPACKS = 3
DUPACK_COUNT_FROM = 2


@dataclass
class TcpEventCounts:
    retransmission: int = 0
    fast_retransmission: int = 0
    spurious_retransmission: int = 0
    lost_segment: int = 0
    acked_lost_segment: int = 0
    duplicate_ack: int = 0
    out_of_order: int = 0
    zero_window: int = 0
    n_tcp: int = 0

    def as_vector(self) -> tuple[int, ...]:
        return tuple(getattr(self, e) for e in EVENTS)

    def __iadd__(self, other: "TcpEventCounts") -> "TcpEventCounts":
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        return self

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def load_event_counts(text: str) -> TcpEventCounts:
    """Import event counts produced by an external analyzer (JSON object keyed by event name)."""
    obj = json.loads(text)
    unknown = set(obj) - set(EVENTS) - {"n_tcp"}
    if unknown:
        raise ValueError(f"unknown event names: {sorted(unknown)}")
    counts = TcpEventCounts(**{k: int(v) for k, v in obj.items()})
    if any(c > counts.n_tcp for c in counts.as_vector()):
        raise ValueError("an event count exceeds n_tcp")
    return counts


class _Side:
    __slots__ = ("seen", "wire_end", "end", "acked", "last_ack_wire", "last_win", "dup_streak", "gaps")

    def __init__(self):
        self.seen = False
        self.wire_end = 0  # highest sequence end as a 32-bit number
        self.end = 0  # the same position unwrapped
        self.acked = None  # highest unwrapped ack this side sent for the peer's bytes
        self.last_ack_wire = None
        self.last_win = None
        self.dup_streak = 0
        self.gaps: list[list[int]] = []  # [start, end, created_at] in unwrapped positions

    def pos(self, seq: int) -> int:
        return self.end + serial_diff(seq, self.wire_end)


def _subtract(gaps: list[list[int]], lo: int, hi: int) -> bool:
    """Remove [lo, hi) from the open gaps; True if anything was covered."""
    hit = False
    out = []
    for g in gaps:
        s, e, t = g
        if hi <= s or lo >= e:
            out.append(g)
            continue
        hit = True
        if s < lo:
            out.append([s, lo, t])
        if hi < e:
            out.append([hi, e, t])
    gaps[:] = out
    return hit


def _session_events(packets: Iterable[CanonicalPacket], counts: TcpEventCounts) -> None:
    sides: dict = {}
    for k, pkt in enumerate(packets):
        if pkt.proto is not Proto.TCP:
            continue
        counts.n_tcp += 1
        src = src_endpoint(pkt)
        me = sides.setdefault(src, _Side())
        peer = next((s for e, s in sides.items() if e != src), None)
        flags = pkt.tcp_flags
        syn, fin, rst = flags & TcpFlags.SYN, flags & TcpFlags.FIN, flags & TcpFlags.RST
        plen = pkt.payload_len
        seglen = plen + bool(syn) + bool(fin)

        if not syn and not rst and pkt.tcp_window == 0:
            counts.zero_window += 1

        if not me.seen:
            me.seen = True
            me.wire_end = (pkt.tcp_seq + seglen) & 0xFFFFFFFF
            me.end = seglen
        elif not rst:
            start = me.pos(pkt.tcp_seq)
            stop = start + seglen
            if start > me.end:
                counts.lost_segment += 1
                me.gaps.append([me.end, start, k])
            if plen and stop <= me.end:
                filled = [g for g in me.gaps if g[0] < stop and start < g[1]]
                acked = peer is not None and peer.acked is not None and peer.acked >= stop
                if acked:
                    counts.spurious_retransmission += 1
                elif (peer is not None and peer.dup_streak >= FAST_RETX_DUPACKS
                      and peer.last_ack_wire == pkt.tcp_seq):
                    counts.fast_retransmission += 1
                elif any(k - g[2] <= OOO_WINDOW for g in filled):
                    counts.out_of_order += 1
                else:
                    counts.retransmission += 1
            if seglen:
                _subtract(me.gaps, start, stop)
            if stop > me.end:
                me.wire_end = (pkt.tcp_seq + seglen) & 0xFFFFFFFF
                me.end = stop

        if flags & TcpFlags.ACK:
            pure = flags == TcpFlags.ACK and plen == 0
            if (pure and me.last_ack_wire == pkt.tcp_ack and me.last_win == pkt.tcp_window):
                me.dup_streak += 1
                if me.dup_streak >= DUPACK_COUNT_FROM:
                    counts.duplicate_ack += 1
            else:
                me.dup_streak = 0
            me.last_ack_wire = pkt.tcp_ack
            me.last_win = pkt.tcp_window
            if peer is not None and peer.seen:
                apos = peer.pos(pkt.tcp_ack)
                never_seen = apos > peer.end or any(g[0] < apos for g in peer.gaps)
                if never_seen:
                    counts.acked_lost_segment += 1
                    # the receiver had these bytes; stop treating them as missing
                    _subtract(peer.gaps, -(1 << 62), apos)
                if me.acked is None or apos > me.acked:
                    me.acked = apos
        else:
            me.dup_streak = 0
            me.last_win = pkt.tcp_window


def tcp_diagnostics(packets: Sequence[CanonicalPacket], labels: Sequence[int] | None = None) -> TcpEventCounts:
    """Event counts over a trace.

    With session ``labels`` (from :func:`sessionize`) the rules run per
    session; without them the whole input is treated as one session.
    """
    counts = TcpEventCounts()
    if labels is None:
        _session_events(packets, counts)
        return counts
    groups: dict[int, list[CanonicalPacket]] = {}
    for pkt, lab in zip(packets, labels):
        groups.setdefault(lab, []).append(pkt)
    for lab in sorted(groups):
        _session_events(groups[lab], counts)
    return counts
