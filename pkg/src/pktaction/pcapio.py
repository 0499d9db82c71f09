"""Classic libpcap container reading and writing.

Reading accepts microsecond and nanosecond magics in either byte order and
normalizes timestamps to microseconds. Writing always produces
little-endian microsecond files with linktype 1 (Ethernet).
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Iterator

from .errors import OrderingError, TruncatedFileError, UnsupportedFormatError, UnsupportedLinktypeError
from .packet import frame_header_length

MAGIC_US = 0xA1B2C3D4
MAGIC_NS = 0xA1B23C4D
LINKTYPE_ETHERNET = 1
GLOBAL_HEADER_LEN = 24
RECORD_HEADER_LEN = 16
DEFAULT_SNAPLEN = 65535


@dataclass(frozen=True, slots=True)
class PcapRecord:
    ts_sec: int
    ts_frac: int
    incl_len: int
    orig_len: int
    data: bytes
    nanosecond: bool = False

    @property
    def ts_us(self) -> int:
        frac = self.ts_frac // 1000 if self.nanosecond else self.ts_frac
        return self.ts_sec * 1_000_000 + frac


@dataclass(frozen=True, slots=True)
class PcapHeader:
    byte_order: str
    nanosecond: bool
    version: tuple[int, int]
    snaplen: int
    linktype: int


def _read_header(stream: BinaryIO) -> PcapHeader:
    raw = stream.read(GLOBAL_HEADER_LEN)
    if len(raw) < 4:
        raise UnsupportedFormatError("not a pcap file: missing magic number")
    for order in ("<", ">"):
        magic = struct.unpack(order + "I", raw[:4])[0]
        if magic in (MAGIC_US, MAGIC_NS):
            break
    else:
        raise UnsupportedFormatError(f"unsupported magic number 0x{raw[:4].hex()} (pcapng is not supported)")
    if len(raw) < GLOBAL_HEADER_LEN:
        raise TruncatedFileError(0, "truncated pcap global header at byte offset 0")
    _, vmaj, vmin, _, _, snaplen, linktype = struct.unpack(order + "IHHiIII", raw)
    if linktype != LINKTYPE_ETHERNET:
        raise UnsupportedLinktypeError(f"linktype {linktype} is not supported (only Ethernet, linktype 1)")
    return PcapHeader(order, magic == MAGIC_NS, (vmaj, vmin), snaplen, linktype)


def iter_records(stream: BinaryIO) -> Iterator[PcapRecord]:
    """Yield every record of a classic pcap stream in file order."""
    header = _read_header(stream)
    fmt = header.byte_order + "IIII"
    offset = GLOBAL_HEADER_LEN
    while True:
        raw = stream.read(RECORD_HEADER_LEN)
        if not raw:
            return
        if len(raw) < RECORD_HEADER_LEN:
            raise TruncatedFileError(offset, f"truncated record header at byte offset {offset}")
        ts_sec, ts_frac, incl_len, orig_len = struct.unpack(fmt, raw)
        data = stream.read(incl_len)
        if len(data) < incl_len:
            raise TruncatedFileError(offset, f"truncated record data for record at byte offset {offset}")
        yield PcapRecord(ts_sec, ts_frac, incl_len, orig_len, data, header.nanosecond)
        offset += RECORD_HEADER_LEN + incl_len


def read_pcap(source: BinaryIO | bytes) -> list[tuple[int, bytes]]:
    """All records of ``source`` as ``(ts_us, frame)`` pairs."""
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    return [(r.ts_us, r.data) for r in iter_records(source)]


def read_pcap_file(path) -> list[PcapRecord]:
    with open(path, "rb") as fh:
        return list(iter_records(fh))


class PcapWriter:
    """Streaming writer. Timestamps must be nondecreasing."""

    def __init__(self, stream: BinaryIO, snaplen: int = DEFAULT_SNAPLEN, truncate_payload: bool = False):
        self.stream = stream
        self.snaplen = snaplen
        self.truncate_payload = truncate_payload
        self.count = 0
        self._last_ts: int | None = None
        stream.write(struct.pack("<IHHiIII", MAGIC_US, 2, 4, 0, 0, snaplen, LINKTYPE_ETHERNET))

    def write(self, ts_us: int, frame: bytes, orig_len: int | None = None) -> None:
        if self._last_ts is not None and ts_us < self._last_ts:
            raise OrderingError(f"record {self.count}: timestamp {ts_us} precedes {self._last_ts}")
        self._last_ts = ts_us
        orig = len(frame) if orig_len is None else orig_len
        data = frame
        if self.truncate_payload:
            data = data[:frame_header_length(frame)]
        data = data[:self.snaplen]
        sec, usec = divmod(ts_us, 1_000_000)
        self.stream.write(struct.pack("<IIII", sec, usec, len(data), orig))
        self.stream.write(data)
        self.count += 1


def write_pcap(records: Iterable[tuple[int, bytes]], snaplen: int = DEFAULT_SNAPLEN,
               truncate_payload: bool = False) -> bytes:
    """Serialize ``(ts_us, frame)`` records into a classic pcap byte string."""
    buf = io.BytesIO()
    writer = PcapWriter(buf, snaplen, truncate_payload)
    for ts_us, frame in records:
        writer.write(ts_us, frame)
    return buf.getvalue()


def write_pcap_file(path, records: Iterable[tuple[int, bytes]], snaplen: int = DEFAULT_SNAPLEN,
                    truncate_payload: bool = False) -> int:
    with open(path, "wb") as fh:
        writer = PcapWriter(fh, snaplen, truncate_payload)
        for ts_us, frame in records:
            writer.write(ts_us, frame)
        return writer.count
