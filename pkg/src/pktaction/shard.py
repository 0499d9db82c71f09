"""Session-preserving temporal sharding and contiguous split assignment."""

from __future__ import annotations

import heapq
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from .metrics.sessions import sessionize
from .packet import CanonicalPacket, encode_frame
from .pcapio import write_pcap_file

log = logging.getLogger(__name__)

SHARD_NAME = "shard_{:06d}.pcap"
MANIFEST_NAME = "manifest.json"


@dataclass
class ShardInfo:
    shard_id: int
    sessions: list[int]
    start_ts_us: int
    packets: int
    oversized: bool = False

    @property
    def filename(self) -> str:
        return SHARD_NAME.format(self.shard_id)


@dataclass
class ShardPlan:
    shards: list[ShardInfo] = field(default_factory=list)
    splits: dict[str, tuple[int, int]] = field(default_factory=dict)  # half-open shard id ranges
    budget: int = 0
    warnings: list[str] = field(default_factory=list)

    def split_of(self, shard_id: int) -> str | None:
        for name, (lo, hi) in self.splits.items():
            if lo <= shard_id < hi:
                return name
        return None

    def to_dict(self) -> dict:
        return {
            "budget": self.budget,
            "shards": [dict(asdict(s), file=s.filename) for s in self.shards],
            "splits": {k: list(v) for k, v in self.splits.items()},
            "warnings": list(self.warnings),
        }


def plan_shards(packets: Sequence[CanonicalPacket], budget: int) -> tuple[ShardPlan, list[int]]:
    """Greedy packing of whole sessions, in start-time order, into shards of at most ``budget`` packets.

    Returns the plan and each packet's shard id.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1 packet")
    sessions, labels = sessionize(packets)
    plan = ShardPlan(budget=budget)
    session_shard = [0] * len(sessions)
    cur: ShardInfo | None = None
    # sessionize already lists sessions by first packet, which is start order
    for sid, rec in enumerate(sessions):
        if cur is None or (cur.packets and cur.packets + rec.packets > budget):
            cur = ShardInfo(len(plan.shards), [], rec.start_ts_us, 0)
            plan.shards.append(cur)
        cur.sessions.append(sid)
        cur.packets += rec.packets
        session_shard[sid] = cur.shard_id
        if rec.packets > budget:
            cur.oversized = True
            msg = f"session {sid} has {rec.packets} packets, over the budget of {budget}; kept whole in shard {cur.shard_id}"
            plan.warnings.append(msg)
            log.warning(msg)
    return plan, [session_shard[lab] for lab in labels]


def assign_splits(n: int, fractions: Sequence[float] = (0.8, 0.1, 0.1)) -> tuple[dict[str, tuple[int, int]], list[str]]:
    """Contiguous train/val/test ranges over ``n`` ordered shards.

    Validation and test get ``floor(n * fraction)`` shards and train takes the
    remainder. At ``n >= 3`` an empty split borrows one shard from train.
    """
    if len(fractions) != 3 or any(f < 0 for f in fractions) or not math.isclose(sum(fractions), 1.0, abs_tol=1e-3):
        raise ValueError(f"fractions must be three nonnegative numbers summing to 1, got {fractions}")
    notes = []
    n_val = math.floor(n * fractions[1] + 1e-9)
    n_test = math.floor(n * fractions[2] + 1e-9)
    n_train = n - n_val - n_test
    if n >= 3:
        for name in ("val", "test"):
            count = n_val if name == "val" else n_test
            if count == 0 and n_train > 1:
                n_train -= 1
                if name == "val":
                    n_val = 1
                else:
                    n_test = 1
                notes.append(f"{name} split was empty; moved one shard from train")
        if n_train == 0:
            # fractions gave everything to val/test; train takes one back from the larger one
            if n_val >= n_test:
                n_val -= 1
            else:
                n_test -= 1
            n_train = 1
            notes.append("train split was empty; moved one shard into train")
    splits = {"train": (0, n_train), "val": (n_train, n_train + n_val), "test": (n_train + n_val, n)}
    return splits, notes


def shard_trace(packets: Sequence[CanonicalPacket], budget: int,
                fractions: Sequence[float] = (0.8, 0.1, 0.1)) -> tuple[ShardPlan, list[list[CanonicalPacket]]]:
    plan, owner = plan_shards(packets, budget)
    plan.splits, notes = assign_splits(len(plan.shards), fractions)
    plan.warnings.extend(notes)
    groups: list[list[CanonicalPacket]] = [[] for _ in plan.shards]
    for pkt, sid in zip(packets, owner):
        groups[sid].append(pkt)
    return plan, groups


def write_shards(out_dir, plan: ShardPlan, groups: Sequence[Sequence[CanonicalPacket]], jobs: int = 1) -> Path:
    """Write one pcap per shard plus the plan manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def write_one(info: ShardInfo) -> None:
        write_pcap_file(out / info.filename, ((p.ts_us, encode_frame(p)) for p in groups[info.shard_id]))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(write_one, plan.shards))
    else:
        for info in plan.shards:
            write_one(info)
    path = out / MANIFEST_NAME
    path.write_text(json.dumps(plan.to_dict(), indent=2) + "\n")
    return path


def concatenate(shards: Sequence[Sequence[CanonicalPacket]]) -> list[CanonicalPacket]:
    """Merge shard packet lists back into one time-ordered trace."""
    keyed = [[(p.ts_us, sid, k, p) for k, p in enumerate(s)] for sid, s in enumerate(shards)]
    return [item[3] for item in heapq.merge(*keyed)]
