"""Classic (libpcap) capture files and payload extraction.

Only the original 24-byte-header format is handled; pcapng is out of scope.
"""

from __future__ import annotations

import enum
import ipaddress
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import BinaryIO, Iterable, Union

MAGIC_MICRO = 0xA1B2C3D4
MAGIC_NANO = 0xA1B23C4D

LINKTYPE_ETHERNET = 1
LINKTYPE_USER0 = 147  # used for bare UPER payloads

GLOBAL_HEADER_LEN = 24
RECORD_HEADER_LEN = 16
_U32_MAX = 0xFFFFFFFF

ETHERTYPE_IPV4 = 0x0800
IPPROTO_UDP = 17


class PcapError(ValueError):
    pass


class UnknownMagic(PcapError):
    pass


class TruncatedRecord(PcapError):
    def __init__(self, message: str, partial: "CaptureFile"):
        super().__init__(message)
        self.partial = partial


class OversizedRecord(PcapError):
    pass


class InvalidRecord(PcapError):
    pass


class NotUdp(PcapError):
    pass


class TooShort(PcapError):
    pass


class ByteOrder(enum.Enum):
    NATIVE = "native"  # little-endian header fields (magic bytes d4 c3 b2 a1)
    SWAPPED = "swapped"  # big-endian header fields (magic bytes a1 b2 c3 d4)


class TimeResolution(enum.Enum):
    MICRO = "micro"
    NANO = "nano"

    @property
    def ticks(self) -> int:
        return 1_000_000 if self is TimeResolution.MICRO else 1_000_000_000


# "native" is pinned to little-endian so files are identical on every host.
_ENDIAN = {ByteOrder.NATIVE: "<", ByteOrder.SWAPPED: ">"}


@dataclass(frozen=True)
class CaptureRecord:
    ts_seconds: int
    ts_fraction: int
    payload: bytes
    original_length: int | None = None

    def __post_init__(self) -> None:
        if self.original_length is None:
            object.__setattr__(self, "original_length", len(self.payload))


@dataclass
class CaptureFile:
    records: list[CaptureRecord] = field(default_factory=list)
    link_type: int = LINKTYPE_USER0
    byte_order: ByteOrder = ByteOrder.NATIVE
    time_resolution: TimeResolution = TimeResolution.MICRO
    snaplen: int = 65535
    # Set by read_capture; not part of equality.
    truncated: bool = field(default=False, compare=False)
    out_of_order: bool = field(default=False, compare=False)

    @property
    def ticks_per_second(self) -> int:
        return self.time_resolution.ticks

    def ticks_of(self, record: CaptureRecord) -> int:
        return record.ts_seconds * self.ticks_per_second + record.ts_fraction

    def time_of(self, record: CaptureRecord) -> float:
        return record.ts_seconds + record.ts_fraction / self.ticks_per_second

    def derive(self, records: Iterable[CaptureRecord]) -> "CaptureFile":
        """Same header, different records."""
        return replace(self, records=list(records), truncated=False, out_of_order=False)

    def make_record(self, ticks: int, payload: bytes) -> CaptureRecord:
        sec, frac = divmod(ticks, self.ticks_per_second)
        return CaptureRecord(sec, frac, payload, len(payload))


@dataclass(frozen=True)
class Encapsulation:
    kind: str = "raw_payload"  # or "ethernet_ipv4_udp"
    fixed_skip: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("raw_payload", "ethernet_ipv4_udp"):
            raise ValueError(f"unknown encapsulation {self.kind!r}")
        if self.fixed_skip < 0:
            raise ValueError("fixed_skip must be >= 0")

    @property
    def link_type(self) -> int:
        return LINKTYPE_ETHERNET if self.kind == "ethernet_ipv4_udp" else LINKTYPE_USER0


RAW = Encapsulation()
ETHERNET_UDP = Encapsulation("ethernet_ipv4_udp")

Source = Union[bytes, bytearray, memoryview, BinaryIO]


def read_capture(source: Source, strict: bool = False) -> CaptureFile:
    """Parse a classic PCAP file.

    A record whose header promises more bytes than remain ends the read; the
    records before it are returned with ``truncated`` set (or TruncatedRecord
    is raised when ``strict``).
    """
    data = bytes(source) if isinstance(source, (bytes, bytearray, memoryview)) else source.read()
    if len(data) < GLOBAL_HEADER_LEN:
        raise UnknownMagic(f"{len(data)} bytes is too short for a pcap header")

    for endian, order in (("<", ByteOrder.NATIVE), (">", ByteOrder.SWAPPED)):
        (magic,) = struct.unpack_from(endian + "I", data)
        if magic in (MAGIC_MICRO, MAGIC_NANO):
            break
    else:
        raise UnknownMagic(f"magic {data[:4].hex()} is not classic pcap")
    resolution = TimeResolution.MICRO if magic == MAGIC_MICRO else TimeResolution.NANO
    _, _, _, _, _, snaplen, link_type = struct.unpack_from(endian + "IHHiIII", data)

    cap = CaptureFile(
        link_type=link_type, byte_order=order, time_resolution=resolution, snaplen=snaplen
    )
    rec_fmt = endian + "IIII"
    pos = GLOBAL_HEADER_LEN
    last = None
    while pos < len(data):
        if len(data) - pos < RECORD_HEADER_LEN:
            cap.truncated = True
            break
        sec, frac, caplen, origlen = struct.unpack_from(rec_fmt, data, pos)
        pos += RECORD_HEADER_LEN
        if caplen > len(data) - pos:
            cap.truncated = True
            break
        rec = CaptureRecord(sec, frac, data[pos : pos + caplen], origlen)
        pos += caplen
        ticks = cap.ticks_of(rec)
        if last is not None and ticks < last:
            cap.out_of_order = True
        last = ticks
        cap.records.append(rec)

    if cap.truncated and strict:
        raise TruncatedRecord(f"truncated after {len(cap.records)} records", cap)
    return cap


def write_capture(cap: CaptureFile) -> bytes:
    endian = _ENDIAN[cap.byte_order]
    magic = MAGIC_MICRO if cap.time_resolution is TimeResolution.MICRO else MAGIC_NANO
    parts = [struct.pack(endian + "IHHiIII", magic, 2, 4, 0, 0, cap.snaplen, cap.link_type)]
    rec_fmt = endian + "IIII"
    limit = cap.ticks_per_second
    for i, rec in enumerate(cap.records):
        n = len(rec.payload)
        if n > _U32_MAX:
            raise OversizedRecord(f"record {i}: {n} bytes exceeds the 32-bit capture length")
        if n > rec.original_length:
            raise InvalidRecord(f"record {i}: payload longer than original_length")
        if not 0 <= rec.ts_fraction < limit:
            raise InvalidRecord(f"record {i}: ts_fraction {rec.ts_fraction} out of range")
        parts.append(struct.pack(rec_fmt, rec.ts_seconds, rec.ts_fraction, n, rec.original_length))
        parts.append(bytes(rec.payload))
    return b"".join(parts)


def load_capture(path: str | Path, strict: bool = False) -> CaptureFile:
    with open(path, "rb") as fh:
        return read_capture(fh, strict=strict)


def save_capture(path: str | Path, cap: CaptureFile) -> None:
    Path(path).write_bytes(write_capture(cap))


# --------------------------------------------------------------------------
# Ethernet II / IPv4 / UDP


def _udp_span(frame: bytes) -> tuple[int, int]:
    """(start, end) of the UDP payload inside an Ethernet II frame."""
    if len(frame) < 14:
        raise TooShort(f"{len(frame)} bytes is shorter than an Ethernet header")
    (ethertype,) = struct.unpack_from("!H", frame, 12)
    if ethertype != ETHERTYPE_IPV4:
        raise NotUdp(f"ethertype 0x{ethertype:04x}")
    if len(frame) < 14 + 20:
        raise TooShort("truncated IPv4 header")
    ihl = (frame[14] & 0x0F) * 4
    if frame[14] >> 4 != 4 or ihl < 20:
        raise NotUdp("not an IPv4 header")
    if frame[14 + 9] != IPPROTO_UDP:
        raise NotUdp(f"IP protocol {frame[14 + 9]}")
    (total_len,) = struct.unpack_from("!H", frame, 14 + 2)
    udp = 14 + ihl
    if udp + 8 > len(frame) or total_len < ihl + 8:
        raise TooShort("truncated UDP header")
    (udp_len,) = struct.unpack_from("!H", frame, udp + 4)
    end = udp + udp_len
    if udp_len < 8 or end > len(frame) or udp_len > total_len - ihl:
        raise TooShort(f"UDP length {udp_len} exceeds the captured frame")
    return udp + 8, end


def extract_payload(record: CaptureRecord, encap: Encapsulation = RAW) -> bytes:
    """Application bytes carried by ``record``."""
    if encap.kind == "raw_payload":
        if encap.fixed_skip > len(record.payload):
            raise TooShort(f"skip {encap.fixed_skip} exceeds {len(record.payload)} bytes")
        return bytes(record.payload[encap.fixed_skip :])
    start, end = _udp_span(record.payload)
    return bytes(record.payload[start:end])


def _ipv4_checksum(header: bytes) -> int:
    total = sum(struct.unpack(f"!{len(header) // 2}H", header))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def build_udp_frame(
    payload: bytes,
    src_ip: str = "192.168.1.10",
    dst_ip: str = "192.168.1.255",
    src_port: int = 47000,
    dst_port: int = 1516,
    src_mac: bytes = b"\x02\x00\x00\x00\x00\x01",
    dst_mac: bytes = b"\xff\xff\xff\xff\xff\xff",
) -> bytes:
    """Ethernet II + IPv4 + UDP frame around ``payload`` (UDP checksum left 0)."""
    udp = struct.pack("!HHHH", src_port, dst_port, 8 + len(payload), 0) + payload
    total = 20 + len(udp)
    if total > 0xFFFF:
        raise OversizedRecord("payload too large for one IPv4 datagram")
    ip = struct.pack(
        "!BBHHHBBH4s4s",
        0x45,
        0,
        total,
        0,
        0x4000,
        64,
        IPPROTO_UDP,
        0,
        ipaddress.IPv4Address(src_ip).packed,
        ipaddress.IPv4Address(dst_ip).packed,
    )
    ip = ip[:10] + struct.pack("!H", _ipv4_checksum(ip)) + ip[12:]
    return dst_mac + src_mac + struct.pack("!H", ETHERTYPE_IPV4) + ip + udp


def wrap_payload(app: bytes, encap: Encapsulation = RAW) -> bytes:
    """Inverse of extract_payload for newly generated records."""
    if encap.kind == "raw_payload":
        return bytes(encap.fixed_skip) + app
    return build_udp_frame(app)


def replace_payload(record: CaptureRecord, app: bytes, encap: Encapsulation = RAW) -> CaptureRecord:
    """Swap the application bytes of ``record``, keeping its framing and timestamp."""
    old = record.payload
    if encap.kind == "raw_payload":
        new = bytes(old[: encap.fixed_skip]) + app
    else:
        start, end = _udp_span(old)
        ihl = (old[14] & 0x0F) * 4
        udp = 14 + ihl
        ip = bytearray(old[14:udp])
        struct.pack_into("!H", ip, 2, ihl + 8 + len(app))
        struct.pack_into("!H", ip, 10, 0)
        struct.pack_into("!H", ip, 10, _ipv4_checksum(bytes(ip)))
        udp_hdr = bytearray(old[udp : udp + 8])
        struct.pack_into("!H", udp_hdr, 4, 8 + len(app))
        struct.pack_into("!H", udp_hdr, 6, 0)
        new = bytes(old[:14]) + bytes(ip) + bytes(udp_hdr) + app + bytes(old[end:])
    missing = record.original_length - len(old)
    return CaptureRecord(record.ts_seconds, record.ts_fraction, new, len(new) + max(missing, 0))
