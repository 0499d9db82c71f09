from dataclasses import replace

import pytest

from pktaction.metrics.diagnostics import tcp_diagnostics
from pktaction.metrics.sessions import sessionize
from pktaction.synth import SynthConfig, generate


def test_default_scale(synth_default):
    cfg, res = synth_default
    assert len(res.packets) >= 10_000 and len(res.flows) >= 200
    assert {p.proto.value for p in res.packets} == {"tcp", "udp", "icmp"}
    assert {p.ip_family.value for p in res.packets} == {"v4", "v6"}
    ts = [p.ts_us for p in res.packets]
    assert ts == sorted(ts)


def test_deterministic(small_synth):
    cfg, res = small_synth
    assert generate(cfg).packets == res.packets
    assert generate(replace(cfg, seed=8)).packets != res.packets


def test_truth_matches_diagnostics_and_sessions(synth_default):
    cfg, res = synth_default
    manifest = res.manifest(cfg)
    sessions, labels = sessionize(res.packets)
    assert len(sessions) == manifest["sessions"]
    reasons = {r: sum(s.close_reason.value == r for s in sessions) for r in manifest["close_reasons"]}
    assert reasons == manifest["close_reasons"]
    assert tcp_diagnostics(res.packets, labels).to_dict() | {"n_tcp": 0} == \
        manifest["expected_tcp_events"] | {"n_tcp": 0}


def test_zero_rates_give_clean_traffic():
    cfg = SynthConfig(seed=3, tcp_flows=20, udp_flows=0, icmp_flows=0, retransmission_rate=0,
                      reorder_rate=0, zero_window_rate=0)
    res = generate(cfg)
    assert tcp_diagnostics(res.packets, sessionize(res.packets)[1]).as_vector() == (0,) * 8


def test_bad_rate_rejected():
    with pytest.raises(ValueError):
        SynthConfig(retransmission_rate=1.5)
