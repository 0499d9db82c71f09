"""Session-level structure: control-label transitions and flow interleaving."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from ..lift import TcpCtrl, classify_tcp_ctrl
from ..packet import CanonicalPacket, Proto

LABELS = (TcpCtrl.SYN, TcpCtrl.SYNACK, TcpCtrl.FIN, TcpCtrl.RST, TcpCtrl.DATA, TcpCtrl.ACK)
_LABEL_INDEX = {lab: i for i, lab in enumerate(LABELS)}
PERCENTILES = (90, 99)


@dataclass
class TransitionMatrix:
    counts: list[list[int]] = field(default_factory=lambda: [[0] * len(LABELS) for _ in LABELS])

    @property
    def row_mass(self) -> list[int]:
        return [sum(r) for r in self.counts]

    @property
    def total(self) -> int:
        return sum(self.row_mass)

    def rows(self) -> list[list[float]]:
        """Row-normalized matrix; empty rows stay all zero."""
        return [[c / m for c in r] if m else [0.0] * len(r) for r, m in zip(self.counts, self.row_mass)]

    def merge(self, other: "TransitionMatrix") -> None:
        for r, o in zip(self.counts, other.counts):
            for j, c in enumerate(o):
                r[j] += c

    def to_dict(self) -> dict:
        return {"labels": [lab.value for lab in LABELS], "counts": [list(r) for r in self.counts],
                "row_mass": self.row_mass, "rows": self.rows()}


def transition_matrix(packets: Sequence[CanonicalPacket], labels: Sequence[int]) -> TransitionMatrix:
    """Count consecutive TCP control labels within each session."""
    m = TransitionMatrix()
    prev: dict[int, int] = {}
    for pkt, sid in zip(packets, labels):
        if pkt.proto is not Proto.TCP:
            continue
        cur = _LABEL_INDEX[classify_tcp_ctrl(pkt.tcp_flags, pkt.payload_len)]
        if sid in prev:
            m.counts[prev[sid]][cur] += 1
        prev[sid] = cur
    return m


def matrix_distance(ref: TransitionMatrix, dec: TransitionMatrix) -> float:
    """Reference-row-mass weighted TV between rows; a row missing from ``dec`` costs 1."""
    total = ref.total
    if not total:
        return 0.0 if not dec.total else 1.0
    ref_rows, dec_rows = ref.rows(), dec.rows()
    dist = 0.0
    for r, mass in enumerate(ref.row_mass):
        if not mass:
            continue
        if dec.row_mass[r]:
            tv = 0.5 * sum(abs(a - b) for a, b in zip(ref_rows[r], dec_rows[r]))
        else:
            tv = 1.0
        dist += mass / total * tv
    return dist


def transition_distance(ref_packets, ref_labels, dec_packets, dec_labels) -> float:
    return matrix_distance(transition_matrix(ref_packets, ref_labels),
                           transition_matrix(dec_packets, dec_labels))


@dataclass
class InterleavingTally:
    """Mergeable counts behind :func:`interleaving_stats`."""

    pairs: int = 0
    switches: int = 0
    runs: Counter = field(default_factory=Counter)  # run length -> how many runs
    sessions: int = 0

    def merge(self, other: "InterleavingTally") -> None:
        self.pairs += other.pairs
        self.switches += other.switches
        self.runs.update(other.runs)
        self.sessions += other.sessions

    def stats(self) -> dict:
        n_runs = sum(self.runs.values())
        out = {
            "switch_rate": self.switches / self.pairs if self.pairs else 0.0,
            "run_mean": sum(k * v for k, v in self.runs.items()) / n_runs if n_runs else 0.0,
        }
        for p in PERCENTILES:
            out[f"run_p{p}"] = nearest_rank(self.runs, p)
        out["session_count"] = self.sessions
        return out


def nearest_rank(hist: Counter, p: float) -> int:
    """Nearest-rank percentile of a value->count table (0 when empty)."""
    n = sum(hist.values())
    if not n:
        return 0
    rank = max(1, math.ceil(p / 100 * n))
    seen = 0
    for value in sorted(hist):
        seen += hist[value]
        if seen >= rank:
            return value
    return max(hist)


def interleaving_tally(labels: Sequence) -> InterleavingTally:
    t = InterleavingTally(pairs=max(len(labels) - 1, 0), sessions=len(set(labels)))
    run = 0
    prev = object()
    for lab in labels:
        if lab == prev:
            run += 1
            continue
        if run:
            t.runs[run] += 1
            t.switches += 1
        prev, run = lab, 1
    if run:
        t.runs[run] += 1
    return t


def interleaving_stats(labels: Sequence) -> dict:
    """Switch rate between adjacent packets and maximal same-session run lengths."""
    return interleaving_tally(labels).stats()
