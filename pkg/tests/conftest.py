import sys

import pytest

from pktaction.packet import CanonicalPacket, IpFamily, Proto, TcpFlags, TcpOptProfile
from pktaction.synth import SynthConfig, generate

F = TcpFlags
A_IP, B_IP = bytes([192, 168, 1, 10]), bytes([198, 51, 100, 7])
MAC_A, MAC_B = bytes.fromhex("001122334455"), bytes.fromhex("66778899aabb")


def tcp(ts, d, seq, ack, flags, plen=0, win=64000, a_port=40000, b_port=80, opts=TcpOptProfile.NONE,
        a_ip=A_IP, b_ip=B_IP):
    """One TCP packet between a fixed pair; d=0 is a->b."""
    src, dst = (a_ip, b_ip) if d == 0 else (b_ip, a_ip)
    sp, dp = (a_port, b_port) if d == 0 else (b_port, a_port)
    sm, dm = (MAC_A, MAC_B) if d == 0 else (MAC_B, MAC_A)
    return CanonicalPacket(ts, IpFamily.V4, Proto.TCP, sm, dm, src, dst, 64, plen, bytes(plen), sp, dp,
                           seq & 0xFFFFFFFF, ack & 0xFFFFFFFF, F(flags), win, opts)


def udp(ts, d, plen=10, a_port=5000, b_port=53, a_ip=A_IP, b_ip=B_IP):
    src, dst = (a_ip, b_ip) if d == 0 else (b_ip, a_ip)
    sp, dp = (a_port, b_port) if d == 0 else (b_port, a_port)
    return CanonicalPacket(ts, IpFamily.V4, Proto.UDP, MAC_A, MAC_B, src, dst, 64, plen, bytes(plen), sp, dp)


def icmp(ts, d, typ, code=0, plen=8, a_ip=A_IP, b_ip=B_IP, family=IpFamily.V4):
    src, dst = (a_ip, b_ip) if d == 0 else (b_ip, a_ip)
    return CanonicalPacket(ts, family, Proto.ICMP, MAC_A, MAC_B, src, dst, 64, plen, bytes(plen),
                           icmp_type=typ, icmp_code=code)


def handshake(t0=0, isn_a=1000, isn_b=5000):
    return [
        tcp(t0, 0, isn_a, 0, F.SYN),
        tcp(t0 + 10, 1, isn_b, isn_a + 1, F.SYN | F.ACK),
        tcp(t0 + 20, 0, isn_a + 1, isn_b + 1, F.ACK),
    ]


@pytest.fixture(scope="session")
def synth_default():
    cfg = SynthConfig()
    return cfg, generate(cfg)


@pytest.fixture(scope="session")
def small_synth():
    cfg = SynthConfig(seed=7, tcp_flows=12, udp_flows=4, icmp_flows=3, duration_us=5_000_000)
    return cfg, generate(cfg)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
