"""Lift canonical packets into per-packet action records.

Each packet becomes one :class:`ActionRecord`: which active-flow slot it
belongs to, what it did (control event, payload length, window, relative
sequence/ack movement), a few bucketed facts about the flow's recent past,
and the trace-order time since the previous packet.

TCP sequence numbers are tracked relative to a per-direction base. The
base is the first sequence number seen from that direction, or, when the
peer acknowledges before the direction has sent anything, the first
acknowledgment number aimed at it. Either way the packet that fixes the base
sits at relative position 0, which is what makes the compiler's
reconstruction from template ISNs exact.
"""

from __future__ import annotations

import hashlib
import heapq
import json
from bisect import bisect_right
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Iterable

from .errors import OrderingError
from .flows import flow_key, src_endpoint
from .packet import CanonicalPacket, IpFamily, Proto, TcpFlags, TcpOptProfile

M32 = 0xFFFFFFFF
DEFAULT_SLOTS = 4096
IDLE_TIMEOUT_US = 60_000_000
TTL_CLASSES = (32, 64, 128, 255)


class FlowEvent(str, Enum):
    OPEN = "open"
    CONTINUE = "continue"
    CLOSE = "close"


class Direction(str, Enum):
    A_TO_B = "a_to_b"
    B_TO_A = "b_to_a"


class LastDir(str, Enum):
    NONE = "none"
    A_TO_B = "a_to_b"
    B_TO_A = "b_to_a"


class TcpCtrl(str, Enum):
    NONE = "none"
    SYN = "syn"
    SYNACK = "synack"
    FIN = "fin"
    RST = "rst"
    DATA = "data"
    ACK = "ack"


class SeqSign(str, Enum):
    NONNEG = "nonneg"
    NEG = "neg"


_Z4 = (0, 0, 0, 0)
_Z8 = (0,) * 8


@dataclass(frozen=True, slots=True)
class ActionRecord:
    """One packet action. Digit fields hold base-16 digits, most significant first."""

    flow_token: int
    generation: int
    flow_evt: FlowEvent
    proto: Proto
    ip_family: IpFamily
    dir: Direction
    tcp_ctrl: TcpCtrl = TcpCtrl.NONE
    tcp_opt_profile: TcpOptProfile = TcpOptProfile.NONE
    tcp_win_d: tuple[int, ...] = _Z4
    tcp_ack_adv_d: tuple[int, ...] = _Z8
    tcp_ack_unseen: bool = False
    tcp_seq_delta_sign: SeqSign = SeqSign.NONNEG
    tcp_seq_delta_d: tuple[int, ...] = _Z8
    ttl_res: int = 0
    icmp_type: int = 0
    icmp_code: int = 0
    l4_payload_len_d: tuple[int, ...] = _Z4
    ctx_gap_b: int = 0
    ctx_pkt_count_b: int = 0
    ctx_last_payload_b: int = 0
    ctx_ack_streak_b: int = 0
    ctx_last_dir: LastDir = LastDir.NONE
    delta_t_us: int = 0

    @property
    def payload_len(self) -> int:
        return decode_digits(self.l4_payload_len_d)

    @property
    def window(self) -> int:
        return decode_digits(self.tcp_win_d)

    @property
    def ack_adv(self) -> int:
        return decode_digits(self.tcp_ack_adv_d)

    @property
    def seq_delta(self) -> int:
        mag = decode_digits(self.tcp_seq_delta_d)
        return -mag if self.tcp_seq_delta_sign is SeqSign.NEG else mag

    def to_dict(self) -> dict:
        out = {}
        for name, value in asdict(self).items():
            if isinstance(value, Enum):
                value = value.value
            elif isinstance(value, tuple):
                value = list(value)
            out[name] = value
        return out


# -- digits and buckets ------------------------------------------------------

def encode_digits(value: int, n_digits: int) -> tuple[int, ...]:
    """Base-16 digits of ``value``, most significant first."""
    if value < 0 or value >= 16 ** n_digits:
        raise ValueError(f"{value} does not fit in {n_digits} hex digits")
    return tuple((value >> (4 * (n_digits - 1 - i))) & 0xF for i in range(n_digits))


def decode_digits(digits) -> int:
    value = 0
    for d in digits:
        value = (value << 4) | d
    return value


_GAP_EDGES = (0, 1, 10, 100, 1_000, 10_000, 100_000, 1_000_000, 10_000_000, 60_000_000,
              120_000_000, 240_000_000, 480_000_000, 960_000_000, 1_920_000_000, 3_840_000_000)
_COUNT_EDGES = (0, 1, 2, 3, 4, 8, 16, 64, 256)
_PAYLOAD_EDGES = (0, 1, 64, 256, 512, 1024, 1460, 1461)

BUCKET_EDGES = {"gap": _GAP_EDGES, "pkt_count": _COUNT_EDGES, "ack_streak": _COUNT_EDGES,
                "payload": _PAYLOAD_EDGES}


def bucketize(kind: str, value: int) -> int:
    """Index of the bucket containing ``value``; edges are inclusive lower bounds."""
    return bisect_right(BUCKET_EDGES[kind], value) - 1


def ttl_residual(ttl: int) -> int:
    for i, cls in enumerate(TTL_CLASSES):
        if ttl <= cls:
            return i * 32 + min(cls - ttl, 31)
    raise ValueError(f"ttl {ttl} out of range")


def ttl_from_residual(res: int) -> int:
    return TTL_CLASSES[res // 32] - res % 32


def classify_tcp_ctrl(flags: TcpFlags, payload_len: int) -> TcpCtrl:
    """RST > SYN+ACK > SYN > FIN > data (payload) > ack."""
    if flags & TcpFlags.RST:
        return TcpCtrl.RST
    if flags & TcpFlags.SYN:
        return TcpCtrl.SYNACK if flags & TcpFlags.ACK else TcpCtrl.SYN
    if flags & TcpFlags.FIN:
        return TcpCtrl.FIN
    return TcpCtrl.DATA if payload_len > 0 else TcpCtrl.ACK


def serial_diff(a: int, b: int) -> int:
    """Signed distance a - b in 32-bit sequence space."""
    d = (a - b) & M32
    return d - (1 << 32) if d >= 1 << 31 else d


# -- state ---------------------------------------------------------------------

@dataclass(frozen=True)
class LiftConfig:
    slots: int = DEFAULT_SLOTS
    idle_timeout_us: int = IDLE_TIMEOUT_US

    def __post_init__(self):
        if not 1 <= self.slots <= 65536:
            raise ValueError("slot vocabulary must be between 1 and 65536")

    def digest(self) -> str:
        # bucket schedules are fixed by the schema but still identify the action file
        blob = json.dumps({**asdict(self), "buckets": BUCKET_EDGES, "ttl_classes": TTL_CLASSES},
                          sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class LiftReport:
    packets: int = 0
    flows_opened: int = 0
    slot_reuses: int = 0
    evictions: int = 0
    idle_releases: int = 0
    close_releases: int = 0
    first_ts_us: int | None = None
    last_ts_us: int | None = None


@dataclass(slots=True)
class LiftFlowState:
    key: tuple
    token: int
    generation: int
    proto: Proto
    endpoint_a: object
    pkt_count: int = 0
    last_ts_us: int = 0
    last_payload_len: int = 0
    ack_streak: int = 0
    last_dir: LastDir = LastDir.NONE
    # per direction, index 0 = A->B, 1 = B->A
    base_seq: list = field(default_factory=lambda: [None, None])
    expected_next: list = field(default_factory=lambda: [0, 0])
    last_ack: list = field(default_factory=lambda: [None, None])
    observed: list = field(default_factory=lambda: [False, False])
    fin_seen: list = field(default_factory=lambda: [False, False])
    fin_end: list = field(default_factory=lambda: [0, 0])
    fin_acked: list = field(default_factory=lambda: [False, False])
    rst_seen: bool = False


class SlotAllocator:
    """Bounded slot vocabulary; always hands out the lowest free slot."""

    def __init__(self, size: int):
        self.size = size
        self._free = list(range(size))
        self._generation = [-1] * size
        self.occupied = 0

    def bind(self) -> tuple[int, int] | None:
        if not self._free:
            return None
        slot = heapq.heappop(self._free)
        self._generation[slot] += 1
        self.occupied += 1
        return slot, self._generation[slot]

    def release(self, slot: int) -> None:
        heapq.heappush(self._free, slot)
        self.occupied -= 1

    def generation(self, slot: int) -> int:
        return self._generation[slot]


class Lifter:
    """Stateful packet-to-action lifter for one trace."""

    def __init__(self, config: LiftConfig | None = None):
        self.config = config or LiftConfig()
        self.slots = SlotAllocator(self.config.slots)
        self.active: OrderedDict[tuple, LiftFlowState] = OrderedDict()
        self._idle_watch: OrderedDict[tuple, LiftFlowState] = OrderedDict()
        self.report = LiftReport()
        self._prev_ts: int | None = None

    def _release(self, st: LiftFlowState) -> None:
        del self.active[st.key]
        self._idle_watch.pop(st.key, None)
        self.slots.release(st.token)

    def _expire_idle(self, ts_us: int) -> None:
        limit = self.config.idle_timeout_us
        while self._idle_watch:
            st = next(iter(self._idle_watch.values()))
            if ts_us - st.last_ts_us <= limit:
                break
            self._release(st)
            self.report.idle_releases += 1

    def _open(self, key: tuple, pkt: CanonicalPacket) -> LiftFlowState:
        bound = self.slots.bind()
        if bound is None:
            victim = next(iter(self.active.values()))
            self._release(victim)
            self.report.evictions += 1
            bound = self.slots.bind()
        token, gen = bound
        if gen > 0:
            self.report.slot_reuses += 1
        self.report.flows_opened += 1
        st = LiftFlowState(key=key, token=token, generation=gen, proto=pkt.proto, endpoint_a=src_endpoint(pkt))
        self.active[key] = st
        return st

    def push(self, pkt: CanonicalPacket) -> ActionRecord:
        ts = pkt.ts_us
        if self._prev_ts is not None and ts < self._prev_ts:
            raise OrderingError(f"packet {self.report.packets}: timestamp {ts} precedes {self._prev_ts}")
        delta_t = 0 if self._prev_ts is None else ts - self._prev_ts
        self._prev_ts = ts
        if self.report.first_ts_us is None:
            self.report.first_ts_us = ts
        self.report.last_ts_us = ts
        self.report.packets += 1

        self._expire_idle(ts)
        key = flow_key(pkt)
        st = self.active.get(key)
        opening = st is None
        if opening:
            st = self._open(key, pkt)
        else:
            self.active.move_to_end(key)
        if pkt.proto is not Proto.TCP:
            self._idle_watch[key] = st
            self._idle_watch.move_to_end(key)

        d = 0 if src_endpoint(pkt) == st.endpoint_a else 1
        gap = 0 if st.pkt_count == 0 else ts - st.last_ts_us
        common = dict(
            flow_token=st.token,
            generation=st.generation,
            proto=pkt.proto,
            ip_family=pkt.ip_family,
            dir=Direction.A_TO_B if d == 0 else Direction.B_TO_A,
            ttl_res=ttl_residual(pkt.ttl),
            l4_payload_len_d=encode_digits(pkt.payload_len, 4),
            ctx_gap_b=bucketize("gap", gap),
            ctx_pkt_count_b=bucketize("pkt_count", st.pkt_count),
            ctx_last_payload_b=bucketize("payload", st.last_payload_len),
            ctx_ack_streak_b=bucketize("ack_streak", st.ack_streak),
            ctx_last_dir=st.last_dir,
            delta_t_us=delta_t,
        )
        release = False
        if pkt.proto is Proto.TCP:
            ctrl, evt, tcp, release = self._tcp_step(st, pkt, d)
            common.update(tcp)
        else:
            ctrl = TcpCtrl.NONE
            evt = FlowEvent.CONTINUE
            if pkt.proto is Proto.ICMP:
                common.update(icmp_type=pkt.icmp_type, icmp_code=pkt.icmp_code)
        if opening:
            evt = FlowEvent.OPEN
        action = ActionRecord(flow_evt=evt, tcp_ctrl=ctrl, **common)

        st.pkt_count += 1
        st.last_ts_us = ts
        st.last_payload_len = pkt.payload_len
        st.ack_streak = st.ack_streak + 1 if ctrl is TcpCtrl.ACK else 0
        st.last_dir = LastDir.A_TO_B if d == 0 else LastDir.B_TO_A
        if release:
            self._release(st)
            self.report.close_releases += 1
        return action

    def _tcp_step(self, st: LiftFlowState, pkt: CanonicalPacket, d: int):
        flags = pkt.tcp_flags
        p = 1 - d
        ctrl = classify_tcp_ctrl(flags, pkt.payload_len)
        syn = 1 if flags & TcpFlags.SYN else 0
        fin = 1 if flags & TcpFlags.FIN else 0
        seglen = pkt.payload_len + syn + fin

        if st.base_seq[d] is None:
            st.base_seq[d] = pkt.tcp_seq
        delta = serial_diff(pkt.tcp_seq, (st.base_seq[d] + st.expected_next[d]) & M32)
        seq_rel = st.expected_next[d] + delta
        st.expected_next[d] = max(st.expected_next[d], seq_rel + seglen)
        st.observed[d] = True

        evt = FlowEvent.CONTINUE
        if ctrl is TcpCtrl.RST:
            evt = FlowEvent.CLOSE
            st.rst_seen = True
        if fin:
            if not st.fin_seen[d] and st.fin_seen[p]:
                evt = FlowEvent.CLOSE
            st.fin_seen[d] = True
            st.fin_end[d] = seq_rel + seglen

        adv, unseen = 0, False
        if flags & TcpFlags.ACK:
            ack = pkt.tcp_ack
            peer_observed = st.observed[p]
            if st.base_seq[p] is None:
                st.base_seq[p] = ack
            peer_next = (st.base_seq[p] + st.expected_next[p]) & M32
            ref = peer_next if st.last_ack[d] is None else st.last_ack[d]
            adv = (ack - ref) & M32
            unseen = not peer_observed or serial_diff(ack, peer_next) > 0
            st.last_ack[d] = ack
            if st.fin_seen[p] and serial_diff(ack, (st.base_seq[p] + st.fin_end[p]) & M32) >= 0:
                st.fin_acked[p] = True

        release = st.rst_seen or (st.fin_acked[0] and st.fin_acked[1])
        tcp = dict(
            tcp_opt_profile=pkt.tcp_options,
            tcp_win_d=encode_digits(pkt.tcp_window, 4),
            tcp_ack_adv_d=encode_digits(adv, 8),
            tcp_ack_unseen=unseen,
            tcp_seq_delta_sign=SeqSign.NEG if delta < 0 else SeqSign.NONNEG,
            tcp_seq_delta_d=encode_digits(abs(delta), 8),
        )
        return ctrl, evt, tcp, release


def lift_trace(packets: Iterable[CanonicalPacket], config: LiftConfig | None = None
               ) -> tuple[list[ActionRecord], LiftReport]:
    lifter = Lifter(config)
    actions = [lifter.push(p) for p in packets]
    return actions, lifter.report
