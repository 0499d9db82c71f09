"""Deterministic synthetic endpoint templates keyed by slot coordinates and salt.

Every template field comes from its own mix of the 16-byte message
``salt (u64 LE) || token u16 | generation u32 | proto<<4|family u8 | tag u8``
folded through :func:`pktaction.mixing.fold_words`. Nothing from the
original trace enters the derivation.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from .mixing import coord_word, fold_words
from .packet import IpFamily, Proto

PROTO_CODE = {Proto.TCP: 0, Proto.UDP: 1, Proto.ICMP: 2}
FAMILY_CODE = {IpFamily.V4: 0, IpFamily.V6: 1}

TAG_A_IP, TAG_B_IP, TAG_A_PORT, TAG_B_PORT = 1, 2, 3, 4
TAG_A_MAC, TAG_B_MAC, TAG_ISN_A, TAG_ISN_B = 5, 6, 7, 8
TAG_A_IP_LO, TAG_B_IP_LO = 9, 10
TAG_PAYLOAD = 16


@dataclass(frozen=True, slots=True)
class FlowTemplate:
    a_mac: bytes
    b_mac: bytes
    a_ip: bytes
    b_ip: bytes
    a_port: int
    b_port: int
    isn_a: int
    isn_b: int

    def oriented(self, a_to_b: bool):
        """(src_mac, dst_mac, src_ip, dst_ip, src_port, dst_port) for one direction."""
        if a_to_b:
            return self.a_mac, self.b_mac, self.a_ip, self.b_ip, self.a_port, self.b_port
        return self.b_mac, self.a_mac, self.b_ip, self.a_ip, self.b_port, self.a_port


def _v4_host(h: int) -> int:
    """24 host bits under 10/8 whose last octet is in [1, 254]."""
    return (((h >> 8) & 0xFFFF) << 8) | (1 + (h & 0xFF) % 254)


def _v4_next(host: int) -> int:
    host = (host + 1) & 0xFFFFFF
    while host & 0xFF in (0, 255):
        host = (host + 1) & 0xFFFFFF
    return host


@lru_cache(maxsize=1 << 16)
def resolve_template(flow_token: int, proto: Proto, ip_family: IpFamily, generation: int,
                     salt: int) -> FlowTemplate:
    pc, fc = PROTO_CODE[proto], FAMILY_CODE[ip_family]

    def mix(tag: int) -> int:
        return fold_words((salt, coord_word(flow_token, generation, pc, fc, tag)))

    if ip_family is IpFamily.V4:
        a_host, b_host = _v4_host(mix(TAG_A_IP)), _v4_host(mix(TAG_B_IP))
        if a_host == b_host:
            b_host = _v4_next(b_host)
        a_ip = bytes([10]) + a_host.to_bytes(3, "big")
        b_ip = bytes([10]) + b_host.to_bytes(3, "big")
    else:
        a_bits = (mix(TAG_A_IP) << 56) | (mix(TAG_A_IP_LO) >> 8)
        b_bits = (mix(TAG_B_IP) << 56) | (mix(TAG_B_IP_LO) >> 8)
        mask = (1 << 120) - 1
        a_bits &= mask
        b_bits &= mask
        if a_bits == b_bits:
            b_bits = (b_bits + 1) & mask
        a_ip = b"\xfd" + a_bits.to_bytes(15, "big")
        b_ip = b"\xfd" + b_bits.to_bytes(15, "big")

    return FlowTemplate(
        a_mac=b"\x02" + (mix(TAG_A_MAC) & ((1 << 40) - 1)).to_bytes(5, "big"),
        b_mac=b"\x02" + (mix(TAG_B_MAC) & ((1 << 40) - 1)).to_bytes(5, "big"),
        a_ip=a_ip,
        b_ip=b_ip,
        a_port=49152 + mix(TAG_A_PORT) % 16384,
        b_port=1 + mix(TAG_B_PORT) % 49151,
        isn_a=mix(TAG_ISN_A) & 0xFFFFFFFF,
        isn_b=mix(TAG_ISN_B) & 0xFFFFFFFF,
    )


def payload_seed(salt: int, flow_token: int, generation: int, pkt_index: int) -> int:
    return fold_words((salt, coord_word(flow_token, generation, 0, 0, TAG_PAYLOAD), pkt_index))
