"""Bidirectional transport sessions with FIN/RST boundaries and an idle split."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from ..flows import flow_key, src_endpoint
from ..packet import CanonicalPacket, Proto, TcpFlags

SESSION_IDLE_US = 60_000_000


class CloseReason(str, Enum):
    FIN = "fin"
    RST = "rst"
    IDLE = "idle"
    TRACE_END = "trace_end"


@dataclass
class SessionRecord:
    key: tuple
    start_ts_us: int
    end_ts_us: int
    packets: int = 0
    bytes_a_to_b: int = 0
    bytes_b_to_a: int = 0
    close_reason: CloseReason = CloseReason.TRACE_END

    @property
    def duration_us(self) -> int:
        return self.end_ts_us - self.start_ts_us


@dataclass
class _Open:
    index: int
    a: object  # initiator endpoint
    fins: set
    closer: object = None  # endpoint expected to send the final ACK


def sessionize(packets: Sequence[CanonicalPacket]) -> tuple[list[SessionRecord], list[int]]:
    """Split a time-ordered trace into sessions.

    Returns the sessions in order of their first packet and, for every
    packet, the index of the session it belongs to.
    """
    sessions: list[SessionRecord] = []
    labels: list[int] = []
    live: dict[tuple, _Open] = {}

    for pkt in packets:
        key = flow_key(pkt)
        src = src_endpoint(pkt)
        cur = live.get(key)
        if cur is not None and pkt.ts_us - sessions[cur.index].end_ts_us > SESSION_IDLE_US:
            sessions[cur.index].close_reason = CloseReason.IDLE
            cur = None
        elif (cur is not None and cur.closer is not None and pkt.proto is Proto.TCP
              and pkt.tcp_flags & (TcpFlags.SYN | TcpFlags.ACK) == TcpFlags.SYN):
            # a fresh SYN after both FINs opens a new session even without the final ACK
            sessions[cur.index].close_reason = CloseReason.FIN
            del live[key]
            cur = None
        if cur is None:
            cur = live[key] = _Open(len(sessions), src, set())
            sessions.append(SessionRecord(key, pkt.ts_us, pkt.ts_us))
        rec = sessions[cur.index]
        rec.end_ts_us = pkt.ts_us
        rec.packets += 1
        if src == cur.a:
            rec.bytes_a_to_b += pkt.payload_len
        else:
            rec.bytes_b_to_a += pkt.payload_len
        labels.append(cur.index)

        if pkt.proto is not Proto.TCP:
            continue
        flags = pkt.tcp_flags
        closed = None
        if flags & TcpFlags.RST:
            closed = CloseReason.RST
        elif cur.closer is not None and src == cur.closer and flags & TcpFlags.ACK:
            closed = CloseReason.FIN
        elif flags & TcpFlags.FIN:
            cur.fins.add(src)
            if len(cur.fins) == 2 and cur.closer is None:
                # the side that did not send the second FIN completes the close
                cur.closer = next(e for e in cur.fins if e != src)
        if closed is not None:
            rec.close_reason = closed
            del live[key]
    return sessions, labels
