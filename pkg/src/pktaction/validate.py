"""Legality checks for compiled traces.

This is deliberately independent of the compiler: it only looks at the
rendered packets (and, optionally, which packets came from actions flagged
``tcp_ack_unseen``). A flow is one bidirectional tuple; compiled traces give
every slot episode its own tuple.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .flows import flow_key, src_endpoint
from .lift import serial_diff
from .packet import CanonicalPacket, IpFamily, Proto, Skip, TcpFlags, decode_frame, verify_checksums

MAX_SEQ_JUMP = 1 << 30


@dataclass(frozen=True)
class Violation:
    index: int
    rule: str
    detail: str = ""


@dataclass
class ValidationReport:
    packets: int = 0
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self, limit: int = 50) -> dict:
        return {
            "packets": self.packets,
            "ok": self.ok,
            "violation_counts": dict(sorted(Counter(v.rule for v in self.violations).items())),
            "violations": [vars(v) for v in self.violations[:limit]],
        }


def is_synthetic_address(family: IpFamily, ip: bytes) -> bool:
    if family is IpFamily.V4:
        return len(ip) == 4 and ip[0] == 10 and ip[3] not in (0, 255)
    return len(ip) == 16 and ip[0] == 0xFD


@dataclass
class _Dir:
    started_with_syn: bool = False
    seen: bool = False
    end_wire: int = 0  # highest sequence end as sent
    end_pos: int = 0  # the same, unwrapped relative to the first segment
    sent_payload: bool = False


def _check_tcp(i: int, pkt: CanonicalPacket, me: _Dir, peer: _Dir, unseen: bool, out: list) -> None:
    flags = pkt.tcp_flags
    syn = bool(flags & TcpFlags.SYN)
    if syn and pkt.payload_len:
        out.append(Violation(i, "syn_payload"))
    if syn and me.sent_payload:
        out.append(Violation(i, "late_syn", "SYN after this direction already sent data"))
    seglen = pkt.payload_len + syn + bool(flags & TcpFlags.FIN)
    end_wire = (pkt.tcp_seq + seglen) & 0xFFFFFFFF
    if not me.seen:
        me.seen = True
        me.started_with_syn = syn
        me.end_pos, me.end_wire = seglen, end_wire
    else:
        pos = me.end_pos + serial_diff(pkt.tcp_seq, me.end_wire)
        if me.started_with_syn and pos < 0:
            out.append(Violation(i, "seq_before_isn"))
        if abs(pos - me.end_pos) > MAX_SEQ_JUMP:
            out.append(Violation(i, "seq_jump", f"{pos - me.end_pos:+d} bytes from the stream front"))
        if pos + seglen > me.end_pos:
            me.end_pos, me.end_wire = pos + seglen, end_wire
    me.sent_payload = me.sent_payload or pkt.payload_len > 0
    if flags & TcpFlags.ACK and peer.seen and not unseen:
        if serial_diff(pkt.tcp_ack, peer.end_wire) > 0:
            out.append(Violation(i, "ack_beyond_peer", f"ack {pkt.tcp_ack} > peer end {peer.end_wire}"))


def validate_packets(packets: Sequence[CanonicalPacket], unseen: Sequence[bool] | None = None,
                     report: ValidationReport | None = None,
                     indices: Sequence[int] | None = None) -> ValidationReport:
    """Check privacy scope and TCP state consistency of an already decoded trace."""
    report = report or ValidationReport()
    out = report.violations
    flows: dict[tuple, dict] = {}
    prev_ts = None
    for j, pkt in enumerate(packets):
        i = indices[j] if indices is not None else j
        report.packets += 1
        if prev_ts is not None and pkt.ts_us < prev_ts:
            out.append(Violation(i, "timestamp_order"))
        prev_ts = pkt.ts_us
        if not (is_synthetic_address(pkt.ip_family, pkt.src_ip) and is_synthetic_address(pkt.ip_family, pkt.dst_ip)):
            out.append(Violation(i, "non_synthetic_address"))
        if pkt.src_mac[0] & 0x03 != 0x02 or pkt.dst_mac[0] & 0x03 != 0x02:
            out.append(Violation(i, "non_synthetic_mac"))
        if pkt.proto is not Proto.TCP:
            continue
        key = flow_key(pkt)
        flow = flows.get(key)
        if flow is None:
            flow = flows[key] = {"a": src_endpoint(pkt), "dirs": (_Dir(), _Dir()), "rst": False}
        if flow["rst"]:
            out.append(Violation(i, "after_rst"))
            continue
        d = 0 if src_endpoint(pkt) == flow["a"] else 1
        _check_tcp(i, pkt, flow["dirs"][d], flow["dirs"][1 - d], bool(unseen and unseen[j]), out)
        if pkt.tcp_flags & TcpFlags.RST:
            flow["rst"] = True
    return report


def validate_frames(frames: Iterable[tuple[int, bytes]], unseen: Sequence[bool] | None = None) -> ValidationReport:
    """Decode and checksum-verify raw frames, then run :func:`validate_packets`."""
    report = ValidationReport()
    packets = []
    kept = []
    keep_unseen = []
    for i, (ts, frame) in enumerate(frames):
        outcome = decode_frame(frame, ts)
        if isinstance(outcome, Skip):
            report.violations.append(Violation(i, "undecodable", outcome.reason.value))
            continue
        if not outcome.payload_truncated:
            for name in verify_checksums(frame):
                report.violations.append(Violation(i, "bad_checksum", name))
        packets.append(outcome)
        kept.append(i)
        keep_unseen.append(bool(unseen and unseen[i]))
    validate_packets(packets, keep_unseen if unseen else None, report, kept)
    report.violations.sort(key=lambda v: v.index)
    return report
