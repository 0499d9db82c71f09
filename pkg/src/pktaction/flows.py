"""Bidirectional flow keys shared by the lifter and the sessionizer."""

from __future__ import annotations

from .packet import CanonicalPacket, IpFamily, Proto

# echo request/reply types per family
_ECHO_TYPES = {IpFamily.V4: (8, 0), IpFamily.V6: (128, 129)}


def icmp_type_class(family: IpFamily, icmp_type: int) -> str:
    """Echo request and reply share one class; every other type is its own class."""
    return "echo" if icmp_type in _ECHO_TYPES[family] else str(icmp_type)


def flow_key(pkt: CanonicalPacket) -> tuple:
    """Direction-independent key: ordered endpoint pair plus protocol and family."""
    if pkt.proto is Proto.ICMP:
        a, b = pkt.src_ip, pkt.dst_ip
        cls = icmp_type_class(pkt.ip_family, pkt.icmp_type)
    else:
        a, b = (pkt.src_ip, pkt.src_port), (pkt.dst_ip, pkt.dst_port)
        cls = ""
    lo, hi = (a, b) if a <= b else (b, a)
    return (pkt.ip_family.value, pkt.proto.value, lo, hi, cls)


def src_endpoint(pkt: CanonicalPacket):
    return pkt.src_ip if pkt.proto is Proto.ICMP else (pkt.src_ip, pkt.src_port)
