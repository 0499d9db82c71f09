"""Per-shard summaries, scalar fidelity metrics and the comparison report."""

from __future__ import annotations

import csv
import io
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from ..errors import PairingError
from ..packet import CanonicalPacket, Skip, decode_frame, wire_length
from ..pcapio import PcapRecord, read_pcap_file
from .diagnostics import EVENTS, TcpEventCounts, tcp_diagnostics
from .histograms import (SCHEDULE_UNITS, SCHEDULES, Histogram, coverage_adjusted_tv, duration_bin,
                         flow_pkts_bin, iat_bin, size_bin, tv_distance)
from .sessions import sessionize
from .structure import InterleavingTally, TransitionMatrix, interleaving_tally, matrix_distance, transition_matrix

REPORT_SCHEMA_VERSION = 1
PROTO_CLASSES = ("tcp", "udp", "icmp", "other")
SCALARS = ("count_err", "proto_tv", "iat_tv", "flow_count_err", "flow_dur_tv", "tcp_event_distance_pp")
EXTRA_SCALARS = ("transition_distance", "pkt_size_tv", "flow_pkts_tv", "coverage", "iat_ca_tv")


@dataclass
class ShardSummary:
    """Everything the metrics need from one trace, mergeable across shards."""

    n: int = 0
    decoded: int = 0
    proto: Counter = field(default_factory=Counter)
    iat: Histogram = field(default_factory=lambda: Histogram("iat_ms"))
    pkt_size: Histogram = field(default_factory=lambda: Histogram("pkt_size"))
    sessions: int = 0
    duration: Histogram = field(default_factory=lambda: Histogram("dur_ms_log2"))
    flow_pkts: Histogram = field(default_factory=lambda: Histogram("flow_pkts"))
    events: TcpEventCounts = field(default_factory=TcpEventCounts)
    transitions: TransitionMatrix = field(default_factory=TransitionMatrix)
    interleaving: InterleavingTally = field(default_factory=InterleavingTally)

    def merge(self, other: "ShardSummary") -> None:
        self.n += other.n
        self.decoded += other.decoded
        self.proto.update(other.proto)
        for name in ("iat", "pkt_size", "duration", "flow_pkts"):
            getattr(self, name).merge(getattr(other, name))
        self.sessions += other.sessions
        self.events += other.events
        self.transitions.merge(other.transitions)
        self.interleaving.merge(other.interleaving)

    def proto_vector(self) -> list[int]:
        return [self.proto.get(c, 0) for c in PROTO_CLASSES]

    def to_dict(self) -> dict:
        return {
            "packets": self.n,
            "decoded": self.decoded,
            "proto": {c: self.proto.get(c, 0) for c in PROTO_CLASSES},
            "sessions": self.sessions,
            "histograms": {h.schedule: h.to_dict() for h in (self.iat, self.pkt_size, self.duration, self.flow_pkts)},
            "tcp_events": self.events.to_dict(),
            "transitions": self.transitions.to_dict(),
            "interleaving": self.interleaving.stats(),
        }


def summarize(entries: Iterable[tuple[int, int, CanonicalPacket | None]]) -> ShardSummary:
    """Summarize ``(ts_us, wire_len, packet or None)`` entries in capture order.

    Undecodable records (``None``) count as protocol "other" and contribute
    only to the packet count, inter-arrival and size histograms.
    """
    s = ShardSummary()
    packets: list[CanonicalPacket] = []
    prev_ts = None
    for ts, size, pkt in entries:
        s.n += 1
        if prev_ts is not None:
            s.iat.add(iat_bin(max(ts - prev_ts, 0)))
        prev_ts = ts
        s.pkt_size.add(size_bin(size))
        if pkt is None:
            s.proto["other"] += 1
            continue
        s.proto[pkt.proto.value] += 1
        packets.append(pkt)
    s.decoded = len(packets)
    sessions, labels = sessionize(packets)
    s.sessions = len(sessions)
    for rec in sessions:
        s.duration.add(duration_bin(rec.duration_us))
        s.flow_pkts.add(flow_pkts_bin(rec.packets))
    s.events = tcp_diagnostics(packets, labels)
    s.transitions = transition_matrix(packets, labels)
    s.interleaving = interleaving_tally(labels)
    return s


def summarize_packets(packets: Sequence[CanonicalPacket]) -> ShardSummary:
    return summarize((p.ts_us, wire_length(p), p) for p in packets)


def summarize_records(records: Iterable[PcapRecord]) -> ShardSummary:
    def entries():
        for r in records:
            pkt = decode_frame(r.data, r.ts_us)
            yield r.ts_us, r.orig_len, None if isinstance(pkt, Skip) else pkt
    return summarize(entries())


def summarize_pcap_file(path) -> ShardSummary:
    return summarize_records(read_pcap_file(path))


def _vector_tv(p: Sequence[int], q: Sequence[int]) -> float:
    tp, tq = sum(p), sum(q)
    if not tp or not tq:
        return 0.0 if tp == tq else 1.0
    return 0.5 * sum(abs(a / tp - b / tq) for a, b in zip(p, q))


def count_error(n_ref: int, n_dec: int) -> float:
    return abs(n_dec - n_ref) / max(n_ref, 1)


def tcp_event_distance_pp(ref: TcpEventCounts, dec: TcpEventCounts) -> float:
    """Summed absolute difference of per-packet event rates, in percentage points."""
    nr, nd = max(ref.n_tcp, 1), max(dec.n_tcp, 1)
    return 100.0 * sum(abs(d / nd - r / nr) for r, d in zip(ref.as_vector(), dec.as_vector()))


def scalar_metrics(ref: ShardSummary, dec: ShardSummary) -> dict[str, float]:
    """Fractions for the TV and error metrics; percentage points for the event distance."""
    coverage = min(dec.decoded / ref.n, 1.0) if ref.n else (1.0 if not dec.n else 0.0)
    return {
        "count_err": count_error(ref.n, dec.n),
        "proto_tv": _vector_tv(ref.proto_vector(), dec.proto_vector()),
        "iat_tv": tv_distance(ref.iat, dec.iat),
        "flow_count_err": count_error(ref.sessions, dec.sessions),
        "flow_dur_tv": tv_distance(ref.duration, dec.duration),
        "tcp_event_distance_pp": tcp_event_distance_pp(ref.events, dec.events),
        "transition_distance": matrix_distance(ref.transitions, dec.transitions),
        "pkt_size_tv": tv_distance(ref.pkt_size, dec.pkt_size),
        "flow_pkts_tv": tv_distance(ref.flow_pkts, dec.flow_pkts),
        "coverage": coverage,
        "iat_ca_tv": coverage_adjusted_tv(ref.iat, dec.iat, coverage),
    }


def metric_weight(name: str, ref: ShardSummary) -> int:
    """Reference mass a shard contributes to the aggregate of ``name``."""
    if name in ("iat_tv", "iat_ca_tv"):
        return ref.iat.total
    if name in ("flow_count_err", "flow_dur_tv", "flow_pkts_tv"):
        return ref.sessions
    if name == "tcp_event_distance_pp":
        return ref.events.n_tcp
    if name == "transition_distance":
        return ref.transitions.total
    return ref.n


def aggregate(per_shard: Sequence[tuple[ShardSummary, dict[str, float]]]) -> dict[str, float]:
    out = {}
    for name in SCALARS + EXTRA_SCALARS:
        weights = [metric_weight(name, ref) for ref, _ in per_shard]
        values = [m[name] for _, m in per_shard]
        if not values:
            out[name] = 0.0
        elif sum(weights):
            out[name] = sum(w * v for w, v in zip(weights, values)) / sum(weights)
        else:
            out[name] = sum(values) / len(values)
    return out


def resolve_pairs(ref_ids: Iterable[str], dec_ids: Iterable[str],
                  pairs: Sequence[tuple[str, str]] | None = None) -> list[tuple[str, str]]:
    """Check a one-to-one pairing. Without explicit pairs, ids must match exactly."""
    ref_ids, dec_ids = set(ref_ids), set(dec_ids)
    if pairs is None:
        for sid in sorted(ref_ids ^ dec_ids):
            raise PairingError(sid, f"shard {sid!r} has no counterpart")
        return [(s, s) for s in sorted(ref_ids)]
    used_ref, used_dec = set(), set()
    for r, d in pairs:
        if r not in ref_ids:
            raise PairingError(r, f"reference shard {r!r} not found")
        if d not in dec_ids:
            raise PairingError(d, f"decoded shard {d!r} not found")
        if r in used_ref or d in used_dec:
            raise PairingError(r if r in used_ref else d, "shard paired more than once")
        used_ref.add(r)
        used_dec.add(d)
    for d in sorted(dec_ids - used_dec):
        raise PairingError(d, f"decoded shard {d!r} is not paired")
    return sorted(pairs)


def load_pairing(obj) -> list[tuple[str, str]]:
    """Accept ``{"pairs": [...]}`` or a bare list; entries are ids, ``[ref, dec]`` or ``{"ref", "dec"}``."""
    items = obj.get("pairs", []) if isinstance(obj, dict) else obj
    pairs = []
    for item in items:
        if isinstance(item, str):
            pairs.append((item, item))
        elif isinstance(item, dict):
            pairs.append((str(item["ref"]), str(item["dec"])))
        else:
            r, d = item
            pairs.append((str(r), str(d)))
    return pairs


def compare(ref: Mapping[str, ShardSummary], dec: Mapping[str, ShardSummary],
            pairs: Sequence[tuple[str, str]] | None = None) -> dict:
    """Per-pair metrics, mass-weighted aggregates and pooled plot data as one JSON-ready dict."""
    pairing = resolve_pairs(ref, dec, pairs)
    rows = []
    scored = []
    pooled_ref, pooled_dec = ShardSummary(), ShardSummary()
    for r, d in pairing:
        m = scalar_metrics(ref[r], dec[d])
        scored.append((ref[r], m))
        pooled_ref.merge(ref[r])
        pooled_dec.merge(dec[d])
        rows.append({
            "ref": r, "dec": d, "metrics": m,
            "ref_summary": {"packets": ref[r].n, "sessions": ref[r].sessions, "n_tcp": ref[r].events.n_tcp,
                            "interleaving": ref[r].interleaving.stats()},
            "dec_summary": {"packets": dec[d].n, "sessions": dec[d].sessions, "n_tcp": dec[d].events.n_tcp,
                            "interleaving": dec[d].interleaving.stats()},
        })
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "schedules": {name: {"edges": list(edges), "unit": SCHEDULE_UNITS[name]} for name, edges in SCHEDULES.items()},
        "events": list(EVENTS),
        "per_shard": rows,
        "aggregate": {
            "metrics": aggregate(scored),
            "pooled_metrics": scalar_metrics(pooled_ref, pooled_dec) if pairing else {},
            "ref": pooled_ref.to_dict(),
            "dec": pooled_dec.to_dict(),
        },
    }


def report_csv(report: dict) -> str:
    """Flatten the scalar metrics to ``shard,metric,value`` rows."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["ref", "dec", "metric", "value"])
    for row in report["per_shard"]:
        for k, v in row["metrics"].items():
            w.writerow([row["ref"], row["dec"], k, repr(v)])
    for k, v in report["aggregate"]["metrics"].items():
        w.writerow(["*", "*", k, repr(v)])
    return buf.getvalue()


def pcap_paths(directory) -> dict[str, Path]:
    return {p.stem: p for p in sorted(Path(directory).glob("*.pcap"))}


def summarize_dir(directory, jobs: int = 1) -> dict[str, ShardSummary]:
    """Summaries of every ``*.pcap`` in ``directory`` keyed by file stem."""
    paths = pcap_paths(directory)
    ids = list(paths)
    if jobs > 1 and len(ids) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, os.cpu_count() or 1)) as pool:
            results = list(pool.map(summarize_pcap_file, [paths[i] for i in ids]))
    else:
        results = [summarize_pcap_file(paths[i]) for i in ids]
    return dict(zip(ids, results))
