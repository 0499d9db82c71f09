"""Canonical single-packet model: Ethernet / IPv4 / IPv6 / TCP / UDP / ICMP.

decode_frame never raises on bad input; anything outside the supported header
stack comes back as a :class:`Skip`. encode_frame produces wire-exact frames
with every length and checksum computed from content.

ICMP and ICMPv6 share one proto value. Their header is taken to be the
4-byte type/code/checksum prefix; the rest-of-header word (echo id/seq,
unused field, ...) is part of ``payload``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum, IntFlag

from .errors import PacketError

ETH_HEADER_LEN = 14
IPV4_HEADER_LEN = 20
IPV6_HEADER_LEN = 40
UDP_HEADER_LEN = 8
ICMP_HEADER_LEN = 4
TCP_BASE_HEADER_LEN = 20

ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_IPV6 = 0x86DD
ETHERTYPE_VLAN = 0x8100

IPPROTO_ICMP = 1
IPPROTO_TCP = 6
IPPROTO_UDP = 17
IPPROTO_ICMPV6 = 58
IPV6_FRAGMENT_HEADER = 44
IPV6_EXTENSION_HEADERS = frozenset({0, 43, 44, 50, 51, 60, 135, 139, 140, 253, 254})

MSS_VALUE = 1460
WSCALE_VALUE = 7


class IpFamily(str, Enum):
    V4 = "v4"
    V6 = "v6"


class Proto(str, Enum):
    TCP = "tcp"
    UDP = "udp"
    ICMP = "icmp"


class TcpOptProfile(str, Enum):
    NONE = "none"
    MSS_ONLY = "mss_only"
    MSS_SACK_TS_WS = "mss_sack_ts_ws"
    TS_ONLY = "ts_only"
    SACK_TS = "sack_ts"


class TcpFlags(IntFlag):
    FIN = 0x01
    SYN = 0x02
    RST = 0x04
    PSH = 0x08
    ACK = 0x10
    URG = 0x20


TCP_FLAG_MASK = 0x3F


class SkipReason(str, Enum):
    NON_ETHERNET = "non_ethernet"
    NON_IP = "non_ip"
    UNSUPPORTED_PROTO = "unsupported_proto"
    FRAGMENT = "fragment"
    TRUNCATED_HEADER = "truncated_header"
    MALFORMED = "malformed"


# option kinds collapsed to the features a profile can express
_OPT_MSS, _OPT_WS, _OPT_SACK, _OPT_TS = "mss", "ws", "sack", "ts"
PROFILE_OPTIONS: dict[TcpOptProfile, frozenset[str]] = {
    TcpOptProfile.NONE: frozenset(),
    TcpOptProfile.MSS_ONLY: frozenset({_OPT_MSS}),
    TcpOptProfile.MSS_SACK_TS_WS: frozenset({_OPT_MSS, _OPT_SACK, _OPT_TS, _OPT_WS}),
    TcpOptProfile.TS_ONLY: frozenset({_OPT_TS}),
    TcpOptProfile.SACK_TS: frozenset({_OPT_SACK, _OPT_TS}),
}
PROFILE_OPTION_LEN = {
    TcpOptProfile.NONE: 0,
    TcpOptProfile.MSS_ONLY: 4,
    TcpOptProfile.MSS_SACK_TS_WS: 20,
    TcpOptProfile.TS_ONLY: 12,
    TcpOptProfile.SACK_TS: 12,
}


@dataclass(frozen=True, slots=True)
class CanonicalPacket:
    """One fully decoded packet.

    Protocol-specific fields are ``None`` unless ``proto`` selects them.
    ``payload`` may be empty while ``payload_len`` is positive when the
    capture was truncated.
    """

    ts_us: int
    ip_family: IpFamily
    proto: Proto
    src_mac: bytes
    dst_mac: bytes
    src_ip: bytes
    dst_ip: bytes
    ttl: int
    payload_len: int
    payload: bytes = b""
    src_port: int | None = None
    dst_port: int | None = None
    tcp_seq: int | None = None
    tcp_ack: int | None = None
    tcp_flags: TcpFlags | None = None
    tcp_window: int | None = None
    tcp_options: TcpOptProfile | None = None
    icmp_type: int | None = None
    icmp_code: int | None = None

    @property
    def payload_truncated(self) -> bool:
        return len(self.payload) != self.payload_len

    @property
    def has_ack(self) -> bool:
        return self.tcp_flags is not None and bool(self.tcp_flags & TcpFlags.ACK)


@dataclass(frozen=True, slots=True)
class Skip:
    reason: SkipReason
    detail: str = ""


def internet_checksum(data: bytes) -> int:
    """16-bit ones-complement of the ones-complement sum of ``data``."""
    if len(data) % 2:
        data = data + b"\x00"
    total = sum(struct.unpack(f"!{len(data) // 2}H", data))
    while total > 0xFFFF:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def _pseudo_header(family: IpFamily, src: bytes, dst: bytes, proto_num: int, length: int) -> bytes:
    if family is IpFamily.V4:
        return src + dst + struct.pack("!BBH", 0, proto_num, length)
    return src + dst + struct.pack("!I3xB", length, proto_num)


def l4_header_length(pkt: CanonicalPacket) -> int:
    if pkt.proto is Proto.TCP:
        return TCP_BASE_HEADER_LEN + PROFILE_OPTION_LEN[pkt.tcp_options or TcpOptProfile.NONE]
    if pkt.proto is Proto.UDP:
        return UDP_HEADER_LEN
    return ICMP_HEADER_LEN


def ip_header_length(family: IpFamily) -> int:
    return IPV4_HEADER_LEN if family is IpFamily.V4 else IPV6_HEADER_LEN


def wire_length(pkt: CanonicalPacket) -> int:
    """Frame length ``encode_frame`` would produce for ``pkt`` with its full payload."""
    return ETH_HEADER_LEN + ip_header_length(pkt.ip_family) + l4_header_length(pkt) + pkt.payload_len


def max_payload_len(family: IpFamily, proto: Proto, options: TcpOptProfile | None = None) -> int:
    l4 = {Proto.TCP: TCP_BASE_HEADER_LEN + PROFILE_OPTION_LEN[options or TcpOptProfile.NONE],
          Proto.UDP: UDP_HEADER_LEN, Proto.ICMP: ICMP_HEADER_LEN}[proto]
    if family is IpFamily.V4:
        return 0xFFFF - IPV4_HEADER_LEN - l4
    return 0xFFFF - l4


def _tcp_option_bytes(profile: TcpOptProfile, ts_us: int) -> bytes:
    tsval = (ts_us // 1000) & 0xFFFFFFFF
    if profile is TcpOptProfile.NONE:
        return b""
    if profile is TcpOptProfile.MSS_ONLY:
        return struct.pack("!BBH", 2, 4, MSS_VALUE)
    if profile is TcpOptProfile.MSS_SACK_TS_WS:
        return (struct.pack("!BBH", 2, 4, MSS_VALUE) + b"\x04\x02"
                + struct.pack("!BBII", 8, 10, tsval, 0) + b"\x01" + struct.pack("!BBB", 3, 3, WSCALE_VALUE))
    if profile is TcpOptProfile.TS_ONLY:
        return b"\x01\x01" + struct.pack("!BBII", 8, 10, tsval, 0)
    return b"\x04\x02" + struct.pack("!BBII", 8, 10, tsval, 0)


def profile_for_options(kinds: frozenset[str]) -> TcpOptProfile:
    """Largest profile whose option set is a subset of ``kinds``; ties go to enum order."""
    best = TcpOptProfile.NONE
    for profile in TcpOptProfile:
        opts = PROFILE_OPTIONS[profile]
        if opts <= kinds and len(opts) > len(PROFILE_OPTIONS[best]):
            best = profile
    return best


def _parse_tcp_options(raw: bytes) -> frozenset[str]:
    kinds = set()
    i = 0
    while i < len(raw):
        kind = raw[i]
        if kind == 0:
            break
        if kind == 1:
            i += 1
            continue
        if i + 1 >= len(raw) or raw[i + 1] < 2 or i + raw[i + 1] > len(raw):
            break  # malformed option list: keep what was parsed
        if kind == 2:
            kinds.add(_OPT_MSS)
        elif kind == 3:
            kinds.add(_OPT_WS)
        elif kind in (4, 5):
            kinds.add(_OPT_SACK)
        elif kind == 8:
            kinds.add(_OPT_TS)
        i += raw[i + 1]
    return frozenset(kinds)


def _check(pkt: CanonicalPacket) -> None:
    addr_len = 4 if pkt.ip_family is IpFamily.V4 else 16
    if len(pkt.src_ip) != addr_len or len(pkt.dst_ip) != addr_len:
        raise PacketError(f"address length does not match {pkt.ip_family.value}")
    if len(pkt.src_mac) != 6 or len(pkt.dst_mac) != 6:
        raise PacketError("MAC addresses must be 6 bytes")
    if not 0 <= pkt.ttl <= 255:
        raise PacketError("ttl out of range")
    if len(pkt.payload) != pkt.payload_len:
        raise PacketError("payload bytes must be present and match payload_len")
    if pkt.payload_len > max_payload_len(pkt.ip_family, pkt.proto, pkt.tcp_options):
        raise PacketError("payload too long for the IP length field")
    tcp_fields = (pkt.tcp_seq, pkt.tcp_ack, pkt.tcp_flags, pkt.tcp_window, pkt.tcp_options)
    port_fields = (pkt.src_port, pkt.dst_port)
    icmp_fields = (pkt.icmp_type, pkt.icmp_code)
    is_tcp = pkt.proto is Proto.TCP
    if any(f is None for f in tcp_fields) if is_tcp else any(f is not None for f in tcp_fields):
        raise PacketError("tcp fields must be present iff proto is tcp")
    has_ports = pkt.proto in (Proto.TCP, Proto.UDP)
    if any(f is None for f in port_fields) if has_ports else any(f is not None for f in port_fields):
        raise PacketError("ports must be present iff proto is tcp or udp")
    is_icmp = pkt.proto is Proto.ICMP
    if any(f is None for f in icmp_fields) if is_icmp else any(f is not None for f in icmp_fields):
        raise PacketError("icmp fields must be present iff proto is icmp")


def encode_frame(pkt: CanonicalPacket) -> bytes:
    """Render ``pkt`` as an Ethernet II frame with computed lengths and checksums."""
    _check(pkt)
    family = pkt.ip_family
    if pkt.proto is Proto.TCP:
        opts = _tcp_option_bytes(pkt.tcp_options, pkt.ts_us)
        offset_words = (TCP_BASE_HEADER_LEN + len(opts)) // 4
        header = struct.pack(
            "!HHIIHHHH", pkt.src_port, pkt.dst_port, pkt.tcp_seq & 0xFFFFFFFF, pkt.tcp_ack & 0xFFFFFFFF,
            (offset_words << 12) | (int(pkt.tcp_flags) & TCP_FLAG_MASK), pkt.tcp_window, 0, 0,
        ) + opts
        proto_num = IPPROTO_TCP
        checksum_at = 16
    elif pkt.proto is Proto.UDP:
        header = struct.pack("!HHHH", pkt.src_port, pkt.dst_port, UDP_HEADER_LEN + pkt.payload_len, 0)
        proto_num = IPPROTO_UDP
        checksum_at = 6
    else:
        header = struct.pack("!BBH", pkt.icmp_type, pkt.icmp_code, 0)
        proto_num = IPPROTO_ICMP if family is IpFamily.V4 else IPPROTO_ICMPV6
        checksum_at = 2

    segment = header + pkt.payload
    if proto_num == IPPROTO_ICMP:
        csum = internet_checksum(segment)
    else:
        csum = internet_checksum(_pseudo_header(family, pkt.src_ip, pkt.dst_ip, proto_num, len(segment)) + segment)
        if proto_num == IPPROTO_UDP and csum == 0:
            csum = 0xFFFF
    segment = segment[:checksum_at] + struct.pack("!H", csum) + segment[checksum_at + 2:]

    if family is IpFamily.V4:
        ip = bytearray(struct.pack("!BBHHHBBH4s4s", 0x45, 0, IPV4_HEADER_LEN + len(segment), 0, 0x4000,
                                   pkt.ttl, proto_num, 0, pkt.src_ip, pkt.dst_ip))
        ip[10:12] = struct.pack("!H", internet_checksum(bytes(ip)))
        ethertype = ETHERTYPE_IPV4
    else:
        ip = struct.pack("!IHBB16s16s", 6 << 28, len(segment), proto_num, pkt.ttl, pkt.src_ip, pkt.dst_ip)
        ethertype = ETHERTYPE_IPV6
    return pkt.dst_mac + pkt.src_mac + struct.pack("!H", ethertype) + bytes(ip) + segment


def _link_and_network(frame: bytes):
    """Shared L2/L3 walk. Returns (Skip, None) or (None, fields tuple)."""
    if len(frame) < ETH_HEADER_LEN:
        return Skip(SkipReason.NON_ETHERNET, "frame shorter than an Ethernet header"), None
    ethertype = struct.unpack_from("!H", frame, 12)[0]
    off = ETH_HEADER_LEN
    if ethertype == ETHERTYPE_VLAN:
        if len(frame) < off + 4:
            return Skip(SkipReason.TRUNCATED_HEADER, "vlan tag"), None
        ethertype = struct.unpack_from("!H", frame, off + 2)[0]
        off += 4
    if ethertype < 0x0600:
        return Skip(SkipReason.NON_ETHERNET, "802.3 length field"), None
    if ethertype == ETHERTYPE_IPV4:
        if len(frame) < off + IPV4_HEADER_LEN:
            return Skip(SkipReason.TRUNCATED_HEADER, "ipv4"), None
        vihl, _, total_len, _, frag, ttl, proto_num, _, src, dst = struct.unpack_from("!BBHHHBBH4s4s", frame, off)
        if vihl >> 4 != 4 or (vihl & 0xF) < 5 or total_len < (vihl & 0xF) * 4:
            return Skip(SkipReason.MALFORMED, "ipv4 header"), None
        if frag & 0x2000 or frag & 0x1FFF:
            return Skip(SkipReason.FRAGMENT), None
        if vihl & 0xF != 5:
            return Skip(SkipReason.UNSUPPORTED_PROTO, "ipv4 options"), None
        l4_off = off + IPV4_HEADER_LEN
        l4_len = total_len - IPV4_HEADER_LEN
        family = IpFamily.V4
        if proto_num not in (IPPROTO_TCP, IPPROTO_UDP, IPPROTO_ICMP):
            return Skip(SkipReason.UNSUPPORTED_PROTO, f"ip proto {proto_num}"), None
    elif ethertype == ETHERTYPE_IPV6:
        if len(frame) < off + IPV6_HEADER_LEN:
            return Skip(SkipReason.TRUNCATED_HEADER, "ipv6"), None
        vtf, plen, proto_num, ttl, src, dst = struct.unpack_from("!IHBB16s16s", frame, off)
        if vtf >> 28 != 6:
            return Skip(SkipReason.MALFORMED, "ipv6 version"), None
        if proto_num == IPV6_FRAGMENT_HEADER:
            return Skip(SkipReason.FRAGMENT), None
        if proto_num in IPV6_EXTENSION_HEADERS or proto_num not in (IPPROTO_TCP, IPPROTO_UDP, IPPROTO_ICMPV6):
            return Skip(SkipReason.UNSUPPORTED_PROTO, f"next header {proto_num}"), None
        l4_off = off + IPV6_HEADER_LEN
        l4_len = plen
        family = IpFamily.V6
    else:
        return Skip(SkipReason.NON_IP, f"ethertype 0x{ethertype:04x}"), None
    return None, (family, proto_num, ttl, src, dst, l4_off, l4_len)


def decode_frame(frame: bytes, ts_us: int) -> CanonicalPacket | Skip:
    """Decode one Ethernet frame. Never raises on malformed input."""
    skip, fields = _link_and_network(frame)
    if skip is not None:
        return skip
    family, proto_num, ttl, src, dst, off, l4_len = fields
    dst_mac, src_mac = bytes(frame[0:6]), bytes(frame[6:12])
    avail = len(frame) - off

    if proto_num == IPPROTO_TCP:
        if l4_len < TCP_BASE_HEADER_LEN:
            return Skip(SkipReason.MALFORMED, "tcp segment shorter than its header")
        if avail < TCP_BASE_HEADER_LEN:
            return Skip(SkipReason.TRUNCATED_HEADER, "tcp")
        sport, dport, seq, ack, off_flags, window = struct.unpack_from("!HHIIHH", frame, off)
        hlen = (off_flags >> 12) * 4
        if hlen < TCP_BASE_HEADER_LEN or hlen > l4_len:
            return Skip(SkipReason.MALFORMED, "tcp data offset")
        if avail < hlen:
            return Skip(SkipReason.TRUNCATED_HEADER, "tcp options")
        profile = profile_for_options(_parse_tcp_options(bytes(frame[off + TCP_BASE_HEADER_LEN:off + hlen])))
        payload_len = l4_len - hlen
        payload = bytes(frame[off + hlen:off + l4_len]) if avail >= l4_len else b""
        return CanonicalPacket(
            ts_us=ts_us, ip_family=family, proto=Proto.TCP, src_mac=src_mac, dst_mac=dst_mac,
            src_ip=bytes(src), dst_ip=bytes(dst), ttl=ttl, payload_len=payload_len, payload=payload,
            src_port=sport, dst_port=dport, tcp_seq=seq, tcp_ack=ack,
            tcp_flags=TcpFlags(off_flags & TCP_FLAG_MASK), tcp_window=window, tcp_options=profile,
        )
    if proto_num == IPPROTO_UDP:
        if l4_len < UDP_HEADER_LEN:
            return Skip(SkipReason.MALFORMED, "udp datagram shorter than its header")
        if avail < UDP_HEADER_LEN:
            return Skip(SkipReason.TRUNCATED_HEADER, "udp")
        sport, dport = struct.unpack_from("!HH", frame, off)
        payload_len = l4_len - UDP_HEADER_LEN
        payload = bytes(frame[off + UDP_HEADER_LEN:off + l4_len]) if avail >= l4_len else b""
        return CanonicalPacket(
            ts_us=ts_us, ip_family=family, proto=Proto.UDP, src_mac=src_mac, dst_mac=dst_mac,
            src_ip=bytes(src), dst_ip=bytes(dst), ttl=ttl, payload_len=payload_len, payload=payload,
            src_port=sport, dst_port=dport,
        )
    if (proto_num == IPPROTO_ICMP) != (family is IpFamily.V4):
        return Skip(SkipReason.UNSUPPORTED_PROTO, "icmp version does not match ip family")
    if l4_len < ICMP_HEADER_LEN:
        return Skip(SkipReason.MALFORMED, "icmp message shorter than its header")
    if avail < ICMP_HEADER_LEN:
        return Skip(SkipReason.TRUNCATED_HEADER, "icmp")
    icmp_type, icmp_code = frame[off], frame[off + 1]
    payload_len = l4_len - ICMP_HEADER_LEN
    payload = bytes(frame[off + ICMP_HEADER_LEN:off + l4_len]) if avail >= l4_len else b""
    return CanonicalPacket(
        ts_us=ts_us, ip_family=family, proto=Proto.ICMP, src_mac=src_mac, dst_mac=dst_mac,
        src_ip=bytes(src), dst_ip=bytes(dst), ttl=ttl, payload_len=payload_len, payload=payload,
        icmp_type=icmp_type, icmp_code=icmp_code,
    )


def frame_header_length(frame: bytes) -> int:
    """Bytes of L2+L3+L4 headers in ``frame``; the whole frame when it cannot be parsed.

    ICMP keeps its full 8-byte header (including the rest-of-header word)
    so that echo identifiers survive truncated capture.
    """
    skip, fields = _link_and_network(frame)
    if skip is not None:
        return len(frame)
    _, proto_num, _, _, _, off, l4_len = fields
    if proto_num == IPPROTO_TCP:
        if len(frame) < off + TCP_BASE_HEADER_LEN:
            return len(frame)
        hlen = (frame[off + 12] >> 4) * 4
    elif proto_num == IPPROTO_UDP:
        hlen = UDP_HEADER_LEN
    else:
        hlen = min(8, l4_len)
    return min(len(frame), off + hlen)


def verify_checksums(frame: bytes) -> list[str]:
    """Names of header checksums in ``frame`` that do not verify. Empty when all pass."""
    skip, fields = _link_and_network(frame)
    if skip is not None:
        return [f"undecodable:{skip.reason.value}"]
    family, proto_num, _, src, dst, off, l4_len = fields
    bad = []
    if family is IpFamily.V4 and internet_checksum(bytes(frame[off - IPV4_HEADER_LEN:off])) != 0:
        bad.append("ipv4")
    segment = bytes(frame[off:off + l4_len])
    if len(segment) < l4_len:
        return bad + ["l4_truncated"]
    name = {IPPROTO_TCP: "tcp", IPPROTO_UDP: "udp", IPPROTO_ICMP: "icmp", IPPROTO_ICMPV6: "icmpv6"}[proto_num]
    if proto_num == IPPROTO_ICMP:
        ok = internet_checksum(segment) == 0
    else:
        if proto_num == IPPROTO_UDP and segment[6:8] == b"\x00\x00":
            return bad + ["udp_zero"]
        ok = internet_checksum(_pseudo_header(family, bytes(src), bytes(dst), proto_num, l4_len) + segment) == 0
    if not ok:
        bad.append(name)
    return bad
