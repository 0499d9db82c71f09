import random

import pytest
from hypothesis import given, settings, strategies as st

from pktaction.errors import HistogramSchemaError
from pktaction.metrics.histograms import (SCHEDULES, Histogram, coverage_adjusted_tv, duration_bin, iat_bin,
                                          size_bin, tv_distance)

from oracles import brute_ca_tv, brute_tv, random_histogram_pair


def h(schedule, values):
    out = Histogram(schedule)
    for i, v in enumerate(values):
        out.add(i, v)
    return out


def test_schedules_strictly_increasing():
    for edges in SCHEDULES.values():
        assert all(a < b for a, b in zip(edges, edges[1:]))
    assert len(SCHEDULES["iat_ms"]) == 1001 and len(SCHEDULES["dur_ms_log2"]) == 22
    assert len(SCHEDULES["pkt_size"]) == 25


def test_bin_functions():
    assert [iat_bin(x) for x in (0, 999, 1000, 999_999, 1_000_000, 10**9)] == [0, 0, 1, 999, 1000, 1000]
    assert [duration_bin(x) for x in (0, 999, 1000, 1999, 2000, 4000, 2**20 * 1000, 10**12)] == \
        [0, 0, 1, 1, 2, 3, 21, 21]
    assert [size_bin(x) for x in (0, 63, 64, 1535, 1536, 9000)] == [0, 0, 1, 23, 24, 24]


def test_tv_examples():
    a = h("pkt_size", [1, 1])
    assert tv_distance(a, a) == 0
    assert tv_distance(a, h("pkt_size", [1, 0])) == 0.5
    assert tv_distance(Histogram("pkt_size"), Histogram("pkt_size")) == 0
    assert tv_distance(Histogram("pkt_size"), a) == 1.0


def test_schedule_mismatch():
    with pytest.raises(HistogramSchemaError):
        tv_distance(Histogram("pkt_size"), Histogram("iat_ms"))
    with pytest.raises(HistogramSchemaError):
        Histogram("pkt_size", [1, 2])
    with pytest.raises(HistogramSchemaError):
        Histogram("nope")


def test_ca_tv_examples():
    a = h("pkt_size", [3, 1, 4])
    assert coverage_adjusted_tv(a, a, 1.0) == 0
    assert coverage_adjusted_tv(a, a, 0.0) == 1.0
    assert coverage_adjusted_tv(a, a, 0.5) == pytest.approx(0.5, abs=1e-15)
    b = h("pkt_size", [0, 1])
    assert coverage_adjusted_tv(a, b, 1.0) == tv_distance(a, b)
    with pytest.raises(ValueError):
        coverage_adjusted_tv(a, a, 1.5)


def test_random_pairs_match_oracle():
    rng = random.Random(2024)
    for _ in range(300):
        p, q = random_histogram_pair(rng)
        c = rng.random()
        assert abs(tv_distance(p, q) - float(brute_tv(p.counts, q.counts))) <= 1e-12
        assert abs(coverage_adjusted_tv(p, q, c) - float(brute_ca_tv(p.counts, q.counts, c))) <= 1e-12


counts = st.lists(st.integers(0, 50), min_size=25, max_size=25)


@settings(max_examples=150, deadline=None)
@given(counts, counts, counts)
def test_tv_metric_properties(a, b, c):
    x, y, z = (Histogram("pkt_size", v) for v in (a, b, c))
    assert tv_distance(x, x) == 0
    assert tv_distance(x, y) == pytest.approx(tv_distance(y, x), abs=1e-12)
    assert 0 <= tv_distance(x, y) <= 1 + 1e-12
    if x.total and y.total and z.total:
        assert tv_distance(x, z) <= tv_distance(x, y) + tv_distance(y, z) + 1e-12


@settings(max_examples=100, deadline=None)
@given(counts, counts, st.floats(0, 1))
def test_ca_tv_bounds(a, b, c):
    x, y = Histogram("pkt_size", a), Histogram("pkt_size", b)
    v = coverage_adjusted_tv(x, y, c)
    assert -1e-12 <= v <= 1 + 1e-12
    if x.total and y.total:
        assert v >= tv_distance(x, y) * c - 1e-12


def test_roundtrip_dict():
    a = h("dur_ms_log2", [0, 4, 2])
    assert Histogram.from_dict(a.to_dict()) == a
