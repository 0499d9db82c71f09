"""Fixed-schedule histograms and total-variation distances."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import HistogramSchemaError
from ..lift import BUCKET_EDGES, bucketize

IAT_OVERFLOW_MS = 1000
DUR_BINS = 22
SIZE_BIN = 64
SIZE_BINS = 25  # 0..1535 in 64-byte bins, then overflow

# lower bin edges per schedule
SCHEDULES: dict[str, tuple[int, ...]] = {
    "iat_ms": tuple(range(IAT_OVERFLOW_MS + 1)),
    "dur_ms_log2": (0,) + tuple(1 << k for k in range(DUR_BINS - 1)),
    "pkt_size": tuple(SIZE_BIN * k for k in range(SIZE_BINS)),
    "flow_pkts": BUCKET_EDGES["pkt_count"],
}
SCHEDULE_UNITS = {"iat_ms": "ms", "dur_ms_log2": "ms", "pkt_size": "bytes", "flow_pkts": "packets"}


def iat_bin(iat_us: int) -> int:
    return min(iat_us // 1000, IAT_OVERFLOW_MS)


def duration_bin(duration_us: int) -> int:
    """0 for under 1 ms, then one bin per power of two, overflow at 2**20 ms."""
    return min((duration_us // 1000).bit_length(), DUR_BINS - 1)


def size_bin(size: int) -> int:
    return min(size // SIZE_BIN, SIZE_BINS - 1)


def flow_pkts_bin(count: int) -> int:
    return bucketize("pkt_count", count)


@dataclass
class Histogram:
    schedule: str
    counts: list[int] = field(default_factory=list)

    def __post_init__(self):
        if self.schedule not in SCHEDULES:
            raise HistogramSchemaError(f"unknown schedule {self.schedule!r}")
        n = len(SCHEDULES[self.schedule])
        if not self.counts:
            self.counts = [0] * n
        elif len(self.counts) != n:
            raise HistogramSchemaError(f"{self.schedule} expects {n} bins, got {len(self.counts)}")

    @property
    def edges(self) -> tuple[int, ...]:
        return SCHEDULES[self.schedule]

    @property
    def total(self) -> int:
        return sum(self.counts)

    def add(self, bin_index: int, n: int = 1) -> None:
        self.counts[bin_index] += n

    def merge(self, other: "Histogram") -> None:
        _same_schedule(self, other)
        for i, c in enumerate(other.counts):
            self.counts[i] += c

    def normalized(self) -> list[float]:
        t = self.total
        return [c / t for c in self.counts] if t else [0.0] * len(self.counts)

    def to_dict(self) -> dict:
        return {"schedule": self.schedule, "counts": list(self.counts), "total": self.total}

    @classmethod
    def from_dict(cls, obj: dict) -> "Histogram":
        return cls(obj["schedule"], list(obj["counts"]))


def _same_schedule(h1: Histogram, h2: Histogram) -> None:
    if h1.schedule != h2.schedule or len(h1.counts) != len(h2.counts):
        raise HistogramSchemaError(f"schedule mismatch: {h1.schedule} vs {h2.schedule}")


def tv_distance(h1: Histogram, h2: Histogram) -> float:
    """Half L1 distance of the normalized histograms.

    Two empty histograms are at distance 0; empty against nonempty is 1.
    """
    _same_schedule(h1, h2)
    t1, t2 = h1.total, h2.total
    if not t1 or not t2:
        return 0.0 if t1 == t2 else 1.0
    return 0.5 * sum(abs(a / t1 - b / t2) for a, b in zip(h1.counts, h2.counts))


def coverage_adjusted_tv(h_ref: Histogram, h_dec: Histogram, coverage: float) -> float:
    """TV with the decoded distribution scaled by ``coverage`` and the missing mass charged."""
    _same_schedule(h_ref, h_dec)
    if not 0.0 <= coverage <= 1.0:
        raise ValueError(f"coverage must be in [0, 1], got {coverage}")
    p, q = h_ref.normalized(), h_dec.normalized()
    if not h_dec.total:
        coverage = 0.0
    return 0.5 * (sum(abs(coverage * b - a) for a, b in zip(p, q)) + (1.0 - coverage))
