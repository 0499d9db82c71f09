"""Lower action sequences into concrete packets under per-flow transport state.

Endpoints come from the FlowTable, oriented by each action's direction.
TCP sequence and acknowledgment numbers are rebuilt from template ISNs and
the relative movement recorded in the actions, mirroring the lifter's
bookkeeping step for step so that re-lifting the output reproduces the input.

In permissive mode (the default) actions that cannot be rendered legally
under the current state are coerced to the nearest legal packet, or dropped
when no legal packet exists, and every such event is counted by category.
Strict mode raises :class:`CompileError` instead.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .errors import CompileError
from .flowtable import FlowTemplate, payload_seed, resolve_template
from .lift import ActionRecord, Direction, M32, SeqSign, TcpCtrl, serial_diff, ttl_from_residual
from .mixing import keystream
from .packet import CanonicalPacket, IpFamily, Proto, TcpFlags, TcpOptProfile, max_payload_len

MAX_SEQ_JUMP = 1 << 30

_CTRL_FLAGS = {
    TcpCtrl.SYN: TcpFlags.SYN,
    TcpCtrl.SYNACK: TcpFlags.SYN | TcpFlags.ACK,
    TcpCtrl.FIN: TcpFlags.FIN | TcpFlags.ACK,
    TcpCtrl.DATA: TcpFlags.ACK | TcpFlags.PSH,
    TcpCtrl.ACK: TcpFlags.ACK,
}


class PayloadMode(str, Enum):
    SYNTHETIC = "synthetic"
    ZERO = "zero"
    NONE = "none"  # zero-filled in memory, meant to be written truncated


@dataclass(frozen=True)
class CompileConfig:
    salt: int = 0
    epoch_us: int = 0
    payload_mode: PayloadMode = PayloadMode.SYNTHETIC
    strict: bool = False


@dataclass
class CompileReport:
    packets_emitted: int = 0
    actions_dropped: int = 0
    flows_instantiated: int = 0
    mid_capture_instantiations: int = 0
    coercions: Counter = field(default_factory=Counter)

    def to_dict(self) -> dict:
        return {
            "packets_emitted": self.packets_emitted,
            "actions_dropped": self.actions_dropped,
            "flows_instantiated": self.flows_instantiated,
            "mid_capture_instantiations": self.mid_capture_instantiations,
            "coercions": dict(sorted(self.coercions.items())),
            "coercions_total": sum(self.coercions.values()),
        }


@dataclass
class CompileResult:
    packets: list[CanonicalPacket]
    report: CompileReport
    action_indices: list[int]  # source action of each emitted packet


@dataclass(slots=True)
class DirectionState:
    next_seq: int = 0
    last_ack: int | None = None
    emitted: bool = False
    sent_payload: bool = False
    syn_sent: bool = False
    fin_sent: bool = False


@dataclass(slots=True)
class CompilerFlowState:
    template: FlowTemplate
    generation: int
    proto: Proto
    ip_family: IpFamily
    dirs: tuple = field(default_factory=lambda: (DirectionState(), DirectionState()))
    established: bool = False
    rst: bool = False
    pkt_index: int = 0


@dataclass(frozen=True, slots=True)
class TcpFields:
    flags: TcpFlags
    seq: int
    ack: int
    window: int
    options: TcpOptProfile
    payload_len: int


def render_payload(flow_token: int, generation: int, pkt_index: int, length: int,
                   config: CompileConfig) -> bytes:
    """Deterministic payload bytes for one packet of a flow episode."""
    if length <= 0:
        return b""
    if config.payload_mode is PayloadMode.SYNTHETIC:
        return keystream(payload_seed(config.salt, flow_token, generation, pkt_index), length)
    return bytes(length)


class _Coercer:
    def __init__(self, report: CompileReport, strict: bool, index: int):
        self.report = report
        self.strict = strict
        self.index = index

    def __call__(self, category: str) -> None:
        if self.strict:
            raise CompileError(self.index, category)
        self.report.coercions[category] += 1


def step_tcp(state: CompilerFlowState, action: ActionRecord, payload_len: int,
             coerce=None) -> TcpFields:
    """Render the TCP header fields for ``action`` and advance ``state``.

    ``coerce`` is called with a category name whenever the action has to be
    adjusted to stay legal; by default adjustments happen silently.
    """
    if coerce is None:
        coerce = lambda category: None  # noqa: E731
    d = 0 if action.dir is Direction.A_TO_B else 1
    me, peer = state.dirs[d], state.dirs[1 - d]
    tpl = state.template
    isn_me, isn_peer = (tpl.isn_a, tpl.isn_b) if d == 0 else (tpl.isn_b, tpl.isn_a)

    ctrl = action.tcp_ctrl
    plen = payload_len
    if ctrl is TcpCtrl.NONE:
        coerce("tcp_ctrl_none")
        ctrl = TcpCtrl.DATA if plen else TcpCtrl.ACK
    if ctrl in (TcpCtrl.SYN, TcpCtrl.SYNACK):
        if plen:
            coerce("syn_payload")
            plen = 0
        if me.sent_payload:
            coerce("late_syn")
            ctrl = TcpCtrl.ACK
    if ctrl is TcpCtrl.DATA and plen == 0:
        coerce("data_without_payload")
        ctrl = TcpCtrl.ACK
    elif ctrl is TcpCtrl.ACK and plen > 0:
        coerce("ack_with_payload")
        ctrl = TcpCtrl.DATA

    if ctrl is TcpCtrl.RST:
        flags = TcpFlags.RST | TcpFlags.ACK if state.established else TcpFlags.RST
    else:
        flags = _CTRL_FLAGS[ctrl]

    seq_rel = me.next_seq + action.seq_delta
    if flags & TcpFlags.SYN and not me.emitted and seq_rel != 0:
        # an opening SYN defines the direction's ISN
        coerce("syn_seq_offset")
        seq_rel = 0
    elif seq_rel < 0:
        coerce("seq_floor")
        seq_rel = 0
    # keep every segment within 2**30 of the stream front so 32-bit order stays unambiguous
    if me.next_seq - seq_rel > MAX_SEQ_JUMP:
        coerce("seq_back_jump")
        seq_rel = me.next_seq - MAX_SEQ_JUMP
    elif seq_rel - me.next_seq > MAX_SEQ_JUMP:
        coerce("seq_jump")
        seq_rel = me.next_seq + MAX_SEQ_JUMP
    seglen = plen + (1 if flags & TcpFlags.SYN else 0) + (1 if flags & TcpFlags.FIN else 0)
    seq = (isn_me + seq_rel) & M32
    me.next_seq = max(me.next_seq, seq_rel + seglen)

    ack = 0
    if flags & TcpFlags.ACK:
        peer_next = (isn_peer + peer.next_seq) & M32
        ref = peer_next if me.last_ack is None else me.last_ack
        ack = (ref + action.ack_adv) & M32
        if not action.tcp_ack_unseen and peer.emitted and serial_diff(ack, peer_next) > 0:
            coerce("ack_beyond_peer")
            ack = peer_next
        me.last_ack = ack

    me.emitted = True
    me.sent_payload = me.sent_payload or plen > 0
    me.syn_sent = me.syn_sent or bool(flags & TcpFlags.SYN)
    me.fin_sent = me.fin_sent or bool(flags & TcpFlags.FIN)
    if ctrl is TcpCtrl.SYNACK:
        state.established = True
    if ctrl is TcpCtrl.RST:
        state.rst = True
    return TcpFields(flags, seq, ack, action.window, action.tcp_opt_profile, plen)


def _non_tcp_neutral(a: ActionRecord) -> bool:
    return (a.tcp_ctrl is TcpCtrl.NONE and a.tcp_opt_profile is TcpOptProfile.NONE and not any(a.tcp_win_d)
            and not any(a.tcp_ack_adv_d) and not a.tcp_ack_unseen and a.tcp_seq_delta_sign is SeqSign.NONNEG
            and not any(a.tcp_seq_delta_d))


def compile_actions(actions: Sequence[ActionRecord], config: CompileConfig | None = None) -> CompileResult:
    """Lower ``actions`` to packets. Timestamps are ``epoch_us`` plus the running sum of ``delta_t_us``."""
    config = config or CompileConfig()
    report = CompileReport()
    states: dict[int, CompilerFlowState] = {}
    packets: list[CanonicalPacket] = []
    indices: list[int] = []
    ts = config.epoch_us

    for i, a in enumerate(actions):
        ts += a.delta_t_us
        coerce = _Coercer(report, config.strict, i)
        st = states.get(a.flow_token)
        if st is not None and a.generation < st.generation:
            coerce("stale_generation")
            report.actions_dropped += 1
            continue
        if st is None or a.generation > st.generation:
            tpl = resolve_template(a.flow_token, a.proto, a.ip_family, a.generation, config.salt)
            st = CompilerFlowState(tpl, a.generation, a.proto, a.ip_family)
            states[a.flow_token] = st
            report.flows_instantiated += 1
            if a.proto is Proto.TCP and a.tcp_ctrl is not TcpCtrl.SYN:
                st.established = True
                report.mid_capture_instantiations += 1
        elif a.proto is not st.proto or a.ip_family is not st.ip_family:
            coerce("episode_mismatch")
            report.actions_dropped += 1
            continue
        if st.rst:
            coerce("after_rst")
            report.actions_dropped += 1
            continue

        if a.proto is not Proto.TCP and not _non_tcp_neutral(a):
            coerce("tcp_fields_on_non_tcp")
        if a.proto is not Proto.ICMP and (a.icmp_type or a.icmp_code):
            coerce("icmp_fields_on_non_icmp")
        options = a.tcp_opt_profile if a.proto is Proto.TCP else None
        plen = a.payload_len
        limit = max_payload_len(a.ip_family, a.proto, options)
        if plen > limit:
            coerce("payload_too_long")
            plen = limit

        src_mac, dst_mac, src_ip, dst_ip, sport, dport = st.template.oriented(a.dir is Direction.A_TO_B)
        ttl = ttl_from_residual(a.ttl_res)
        if a.proto is Proto.TCP:
            tcp = step_tcp(st, a, plen, coerce)
            payload = render_payload(a.flow_token, a.generation, st.pkt_index, tcp.payload_len, config)
            pkt = CanonicalPacket(
                ts_us=ts, ip_family=a.ip_family, proto=Proto.TCP, src_mac=src_mac, dst_mac=dst_mac,
                src_ip=src_ip, dst_ip=dst_ip, ttl=ttl, payload_len=tcp.payload_len, payload=payload,
                src_port=sport, dst_port=dport, tcp_seq=tcp.seq, tcp_ack=tcp.ack, tcp_flags=tcp.flags,
                tcp_window=tcp.window, tcp_options=tcp.options,
            )
        else:
            payload = render_payload(a.flow_token, a.generation, st.pkt_index, plen, config)
            if a.proto is Proto.UDP:
                extra = dict(src_port=sport, dst_port=dport)
            else:
                extra = dict(icmp_type=a.icmp_type, icmp_code=a.icmp_code)
            pkt = CanonicalPacket(
                ts_us=ts, ip_family=a.ip_family, proto=a.proto, src_mac=src_mac, dst_mac=dst_mac,
                src_ip=src_ip, dst_ip=dst_ip, ttl=ttl, payload_len=plen, payload=payload, **extra,
            )
        st.pkt_index += 1
        packets.append(pkt)
        indices.append(i)

    report.packets_emitted = len(packets)
    return CompileResult(packets, report, indices)
