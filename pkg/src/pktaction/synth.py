"""Deterministic synthetic traces with ground truth, for roundtrip and analyzer tests.

Flows are built one at a time from a SplitMix64 stream and then merged by
timestamp. TCP flows follow a canonical flag discipline (data segments carry
ACK|PSH, FIN is FIN|ACK, RST is RST|ACK) and only ever acknowledge bytes the
peer has sent, so every injected anomaly is the one recorded in the manifest.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import asdict, dataclass, field

from .mixing import SplitMix64, keystream
from .packet import CanonicalPacket, IpFamily, Proto, TcpFlags, TcpOptProfile

M32 = 0xFFFFFFFF
MSS = 1448  # 1460 minus the 12-byte timestamp option
EPOCH_US = 1_700_000_000_000_000
_UDP_SERVICES = (53, 123, 443, 500, 1900, 4500, 5353)
_TCP_SERVICES = (22, 25, 80, 443, 993, 3306, 8080)


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    tcp_flows: int = 160
    udp_flows: int = 30
    icmp_flows: int = 20
    v6_fraction: float = 0.2
    tcp_rounds_mean: int = 5  # request/response exchanges per TCP flow
    response_segments_mean: int = 6
    udp_packets_mean: int = 40
    icmp_pairs_mean: int = 15
    iat_scale_us: int = 40_000  # mean gap between packets of one flow
    duration_us: int = 60_000_000  # window over which flows start
    small_segment_fraction: float = 0.3
    retransmission_rate: float = 0.02
    reorder_rate: float = 0.02
    zero_window_rate: float = 0.01
    rst_fraction: float = 0.1
    epoch_us: int = EPOCH_US

    def __post_init__(self):
        for name in ("v6_fraction", "small_segment_fraction", "retransmission_rate", "reorder_rate",
                     "zero_window_rate", "rst_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        for name in ("tcp_flows", "udp_flows", "icmp_flows", "tcp_rounds_mean", "response_segments_mean",
                     "udp_packets_mean", "icmp_pairs_mean", "iat_scale_us", "duration_us"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass
class FlowTruth:
    flow_id: int
    proto: str
    ip_family: str
    packets: int = 0
    start_us: int = 0
    end_us: int = 0
    close_reason: str = "trace_end"
    retransmissions: int = 0
    reorders: int = 0
    zero_windows: int = 0


@dataclass
class SynthResult:
    packets: list[CanonicalPacket]
    flows: list[FlowTruth] = field(default_factory=list)

    def manifest(self, config: SynthConfig) -> dict:
        retx = sum(f.retransmissions for f in self.flows)
        reord = sum(f.reorders for f in self.flows)
        zw = sum(f.zero_windows for f in self.flows)
        return {
            "config": asdict(config),
            "packets": len(self.packets),
            "sessions": len(self.flows),
            "close_reasons": {r: sum(f.close_reason == r for f in self.flows)
                              for r in ("fin", "rst", "idle", "trace_end")},
            "expected_tcp_events": {
                "retransmission": retx, "fast_retransmission": 0, "spurious_retransmission": 0,
                "lost_segment": reord, "acked_lost_segment": 0, "duplicate_ack": 0,
                "out_of_order": reord, "zero_window": zw,
            },
            "flows": [asdict(f) for f in self.flows],
        }


class _Clock:
    """Strictly increasing per-flow timestamps with exponential-like gaps."""

    def __init__(self, rng: SplitMix64, start: int, scale: int):
        self.rng = rng
        self.t = start
        self.scale = scale

    def tick(self, scale: int | None = None) -> int:
        s = self.scale if scale is None else scale
        self.t += 1 + int(-s * math.log(1.0 - self.rng.uniform()))
        return self.t


def _spread(rng: SplitMix64, mean: int) -> int:
    """Uniform on [1, 2*mean - 1], so the mean is ``mean``."""
    return 1 + rng.below(max(2 * mean - 1, 1))


def _mac(rng: SplitMix64) -> bytes:
    raw = bytearray(rng.next().to_bytes(8, "little")[:6])
    raw[0] &= 0xFE  # unicast
    return bytes(raw)


class _Endpoints:
    def __init__(self, rng: SplitMix64):
        self.rng = rng
        self.used: set = set()

    def ip(self, family: IpFamily, client: bool) -> bytes:
        r = self.rng.next()
        if family is IpFamily.V4:
            if client:
                return bytes([192, 168, (r >> 8) & 0xFF, 1 + (r & 0xFF) % 254])
            return bytes([203, 0, 113, 1 + (r & 0xFF) % 254]) if r & 0x10000 else \
                bytes([198, 51, 100, 1 + (r & 0xFF) % 254])
        prefix = bytes.fromhex("20010db8") + (b"\x00\x01" if client else b"\x00\x02")
        return prefix + (r & ((1 << 80) - 1)).to_bytes(10, "big")

    def claim(self, key) -> bool:
        if key in self.used:
            return False
        self.used.add(key)
        return True


def _tcp_flow(rng: SplitMix64, cfg: SynthConfig, fam: IpFamily, eps: _Endpoints, start: int,
              truth: FlowTruth) -> list[CanonicalPacket]:
    while True:
        a_ip, b_ip = eps.ip(fam, True), eps.ip(fam, False)
        a_port = 32768 + rng.below(28232)
        b_port = _TCP_SERVICES[rng.below(len(_TCP_SERVICES))]
        if eps.claim(("tcp", a_ip, a_port, b_ip, b_port)):
            break
    macs = (_mac(rng), _mac(rng))
    ttl = (64 - rng.below(20), 128 - rng.below(25))
    win = (256 + rng.below(65000), 256 + rng.below(65000))
    seq = [rng.next() & M32, rng.next() & M32]  # next sequence number per side
    acked = [0, 0]  # last ack number each side sent
    clock = _Clock(rng, start, cfg.iat_scale_us)
    out: list[CanonicalPacket] = []

    def emit(d: int, flags, s: int, plen: int = 0, ack: int | None = None, window: int | None = None,
             opts=TcpOptProfile.TS_ONLY) -> None:
        src, dst = (0, 1) if d == 0 else (1, 0)
        ips, ports = (a_ip, b_ip), (a_port, b_port)
        ack_val = 0 if not flags & TcpFlags.ACK else (acked[d] if ack is None else ack)
        if flags & TcpFlags.ACK:
            acked[d] = ack_val
        out.append(CanonicalPacket(
            ts_us=clock.tick(), ip_family=fam, proto=Proto.TCP, src_mac=macs[src], dst_mac=macs[dst],
            src_ip=ips[src], dst_ip=ips[dst], ttl=ttl[d], payload_len=plen,
            payload=keystream(rng.next(), plen) if plen else b"", src_port=ports[src], dst_port=ports[dst],
            tcp_seq=s & M32, tcp_ack=ack_val & M32, tcp_flags=flags, tcp_window=win[d] if window is None else window,
            tcp_options=opts,
        ))

    syn = TcpOptProfile.MSS_SACK_TS_WS
    emit(0, TcpFlags.SYN, seq[0], opts=syn)
    seq[0] += 1
    emit(1, TcpFlags.SYN | TcpFlags.ACK, seq[1], ack=seq[0], opts=syn)
    seq[1] += 1
    emit(0, TcpFlags.ACK, seq[0], ack=seq[1])

    def sizes(n: int) -> list[int]:
        return [1 + rng.below(600) if rng.uniform() < cfg.small_segment_fraction else MSS for _ in range(n)]

    def send_burst(d: int, lens: list[int]) -> None:
        """Send ``lens`` from side d; the other side acks every second segment and at the end."""
        r = 1 - d
        i = 0
        since_ack = 0
        while i < len(lens):
            s0 = seq[d]
            if i + 1 < len(lens) and rng.uniform() < cfg.reorder_rate:
                s1 = s0 + lens[i]
                emit(d, TcpFlags.ACK | TcpFlags.PSH, s1, lens[i + 1])
                emit(d, TcpFlags.ACK | TcpFlags.PSH, s0, lens[i])
                truth.reorders += 1
                seq[d] = s1 + lens[i + 1]
                i += 2
                since_ack += 2
            else:
                emit(d, TcpFlags.ACK | TcpFlags.PSH, s0, lens[i])
                if rng.uniform() < cfg.retransmission_rate:
                    emit(d, TcpFlags.ACK | TcpFlags.PSH, s0, lens[i])
                    truth.retransmissions += 1
                seq[d] = s0 + lens[i]
                i += 1
                since_ack += 1
            if since_ack >= 2 or i == len(lens):
                if rng.uniform() < cfg.zero_window_rate:
                    emit(r, TcpFlags.ACK, seq[r], ack=seq[d], window=0)
                    emit(r, TcpFlags.ACK, seq[r], ack=seq[d])  # window update
                    truth.zero_windows += 1
                else:
                    emit(r, TcpFlags.ACK, seq[r], ack=seq[d])
                since_ack = 0

    for _ in range(_spread(rng, cfg.tcp_rounds_mean)):
        send_burst(0, sizes(1 + rng.below(2)))
        send_burst(1, sizes(_spread(rng, cfg.response_segments_mean)))
        clock.tick(cfg.iat_scale_us * 4)  # think time

    if rng.uniform() < cfg.rst_fraction:
        emit(0, TcpFlags.RST | TcpFlags.ACK, seq[0], ack=seq[1])
        truth.close_reason = "rst"
    else:
        emit(0, TcpFlags.FIN | TcpFlags.ACK, seq[0], ack=seq[1])
        seq[0] += 1
        emit(1, TcpFlags.FIN | TcpFlags.ACK, seq[1], ack=seq[0])
        seq[1] += 1
        emit(0, TcpFlags.ACK, seq[0], ack=seq[1])
        truth.close_reason = "fin"
    return out


def _udp_flow(rng: SplitMix64, cfg: SynthConfig, fam: IpFamily, eps: _Endpoints, start: int
              ) -> list[CanonicalPacket]:
    while True:
        a_ip, b_ip = eps.ip(fam, True), eps.ip(fam, False)
        a_port = 32768 + rng.below(28232)
        b_port = _UDP_SERVICES[rng.below(len(_UDP_SERVICES))]
        if eps.claim(("udp", a_ip, a_port, b_ip, b_port)):
            break
    macs = (_mac(rng), _mac(rng))
    ttl = (64 - rng.below(20), 255 - rng.below(30))
    clock = _Clock(rng, start, cfg.iat_scale_us)
    out = []
    for k in range(_spread(rng, cfg.udp_packets_mean)):
        d = 0 if k == 0 else rng.below(2)
        src, dst = (0, 1) if d == 0 else (1, 0)
        ips, ports = (a_ip, b_ip), (a_port, b_port)
        plen = 8 + rng.below(1200)
        out.append(CanonicalPacket(
            ts_us=clock.tick(), ip_family=fam, proto=Proto.UDP, src_mac=macs[src], dst_mac=macs[dst],
            src_ip=ips[src], dst_ip=ips[dst], ttl=ttl[d], payload_len=plen, payload=keystream(rng.next(), plen),
            src_port=ports[src], dst_port=ports[dst],
        ))
    return out


def _icmp_flow(rng: SplitMix64, cfg: SynthConfig, fam: IpFamily, eps: _Endpoints, start: int
               ) -> list[CanonicalPacket]:
    while True:
        a_ip, b_ip = eps.ip(fam, True), eps.ip(fam, False)
        if eps.claim(("icmp", frozenset((a_ip, b_ip)))):
            break
    macs = (_mac(rng), _mac(rng))
    ttl = (64 - rng.below(20), 64 - rng.below(30))
    req, rep = (8, 0) if fam is IpFamily.V4 else (128, 129)
    ident = rng.below(1 << 16)
    clock = _Clock(rng, start, cfg.iat_scale_us)
    out = []
    for k in range(_spread(rng, cfg.icmp_pairs_mean)):
        body = ident.to_bytes(2, "big") + (k & 0xFFFF).to_bytes(2, "big") + keystream(rng.next(), 56)
        for d, typ in ((0, req), (1, rep)):
            src, dst = (0, 1) if d == 0 else (1, 0)
            ips = (a_ip, b_ip)
            out.append(CanonicalPacket(
                ts_us=clock.tick(cfg.iat_scale_us if d else 10 * cfg.iat_scale_us), ip_family=fam,
                proto=Proto.ICMP, src_mac=macs[src], dst_mac=macs[dst], src_ip=ips[src], dst_ip=ips[dst],
                ttl=ttl[d], payload_len=len(body), payload=body, icmp_type=typ, icmp_code=0,
            ))
    return out


def generate(config: SynthConfig | None = None) -> SynthResult:
    """Build the trace for ``config``; identical configs give identical traces."""
    cfg = config or SynthConfig()
    rng = SplitMix64(cfg.seed)
    eps = _Endpoints(rng)
    kinds = [Proto.TCP] * cfg.tcp_flows + [Proto.UDP] * cfg.udp_flows + [Proto.ICMP] * cfg.icmp_flows
    # deterministic shuffle so protocols interleave in arrival order
    for i in range(len(kinds) - 1, 0, -1):
        j = rng.below(i + 1)
        kinds[i], kinds[j] = kinds[j], kinds[i]
    mean_arrival = cfg.duration_us / max(len(kinds), 1)
    t = cfg.epoch_us
    flows: list[list[CanonicalPacket]] = []
    truths: list[FlowTruth] = []
    for fid, proto in enumerate(kinds):
        t += int(-mean_arrival * math.log(1.0 - rng.uniform()))
        fam = IpFamily.V6 if rng.uniform() < cfg.v6_fraction else IpFamily.V4
        truth = FlowTruth(fid, proto.value, fam.value)
        if proto is Proto.TCP:
            pkts = _tcp_flow(rng, cfg, fam, eps, t, truth)
        elif proto is Proto.UDP:
            pkts = _udp_flow(rng, cfg, fam, eps, t)
        else:
            pkts = _icmp_flow(rng, cfg, fam, eps, t)
        truth.packets = len(pkts)
        truth.start_us, truth.end_us = pkts[0].ts_us, pkts[-1].ts_us
        flows.append(pkts)
        truths.append(truth)
    # ties break by flow id, then position within the flow
    merged = heapq.merge(*[[(p.ts_us, fid, k, p) for k, p in enumerate(f)] for fid, f in enumerate(flows)])
    return SynthResult([item[3] for item in merged], truths)
