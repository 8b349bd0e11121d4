"""Domain types and the 64-byte collector entry layout.

All multi-byte integers are big-endian. A collector cell is laid out as

    flow_id(4) | packet_count(4) | sum_iat1..3(12) | sum_ps1..3(12)
    | five_tuple(17) | checksum(4) | padding(11)

and the checksum is CRC-32/IEEE over bytes 0..49.

"""
import enum
import struct
from collections import namedtuple

from .utils import MASK32, crc32, int_to_ip, ip_to_int

ENTRY_SIZE = 64
FEATURE_SIZE = 45
FIVE_TUPLE_SIZE = 17
CHECKSUM_OFFSET = 49
PADDING_OFFSET = 53
HISTORY_DEPTH = 10
PIPELINE_CAPACITY = 2 ** 17

PROTO_TCP = 6
PROTO_UDP = 17

TCP_FIN = 0x01
TCP_SYN = 0x02
TCP_RST = 0x04
TCP_PSH = 0x08
TCP_ACK = 0x10

DTA_FLAG_REPORT = 0x01

_FIVE_TUPLE_FMT = struct.Struct("!IIHHB4s")
_FEATURE_FMT = struct.Struct("!7I17s")
_ENTRY_FMT = struct.Struct("!8I17sI11s")
_RESERVED = bytes(4)
_PADDING = bytes(ENTRY_SIZE - PADDING_OFFSET)
_EMPTY_CELL = bytes(ENTRY_SIZE)


class CellState(enum.IntEnum):
    """State of a 64-byte collector cell."""

    EMPTY = 0
    WRITTEN = 1
    CORRUPT = 2


EMPTY = CellState.EMPTY
CORRUPT = CellState.CORRUPT


class FiveTuple(
    namedtuple("FiveTuple", ["src_ip", "dst_ip", "src_port", "dst_port", "protocol"])
):
    """IPv4 flow identity. Addresses are stored as 32-bit integers."""

    __slots__ = ()

    @classmethod
    def from_strings(cls, src_ip, dst_ip, src_port, dst_port, protocol):
        return cls(ip_to_int(src_ip), ip_to_int(dst_ip), src_port, dst_port, protocol)

    def __str__(self):
        return "{0}:{1}->{2}:{3}/{4}".format(
            int_to_ip(self.src_ip),
            self.src_port,
            int_to_ip(self.dst_ip),
            self.dst_port,
            self.protocol,
        )

    def is_valid(self):
        return (
            0 <= self.src_ip <= MASK32
            and 0 <= self.dst_ip <= MASK32
            and 0 <= self.src_port <= 0xFFFF
            and 0 <= self.dst_port <= 0xFFFF
            and 0 <= self.protocol <= 0xFF
        )


def encode_five_tuple(ft):
    """Encode a FiveTuple into its 17-byte wire form (4 trailing zero bytes)."""
    try:
        return _FIVE_TUPLE_FMT.pack(*ft, _RESERVED)
    except struct.error as err:
        raise ValueError("Five-tuple {0!r} out of range: {1}".format(ft, err))


def decode_five_tuple(raw):
    """Decode 17 bytes into a FiveTuple, rejecting nonzero reserved bytes."""
    if len(raw) != FIVE_TUPLE_SIZE:
        msg = "Five-tuple wire form must be {0} bytes, got {1}"
        raise ValueError(msg.format(FIVE_TUPLE_SIZE, len(raw)))
    src_ip, dst_ip, src_port, dst_port, proto, reserved = _FIVE_TUPLE_FMT.unpack(raw)
    if reserved != _RESERVED:
        raise ValueError("Five-tuple reserved bytes must be zero")
    return FiveTuple(src_ip, dst_ip, src_port, dst_port, proto)


def ts32(ts):
    """Data-plane form of a simulation timestamp: its low 32 bits."""
    return ts & MASK32


def iat32(now32, last32):
    """Inter-arrival time by wrapping subtraction of two 32-bit timestamps."""
    return (now32 - last32) & MASK32


FeatureState = namedtuple(
    "FeatureState",
    [
        "packet_count",
        "last_ts32",
        "sum_iat1",
        "sum_iat2",
        "sum_iat3",
        "sum_ps1",
        "sum_ps2",
        "sum_ps3",
    ],
)
ZERO_FEATURE_STATE = FeatureState(0, 0, 0, 0, 0, 0, 0, 0)

FeatureVector = namedtuple(
    "FeatureVector",
    [
        "packet_count",
        "sum_iat1",
        "sum_iat2",
        "sum_iat3",
        "sum_ps1",
        "sum_ps2",
        "sum_ps3",
        "five_tuple",
    ],
)

_ENTRY_FIELDS = ["flow_id", *FeatureVector._fields, "checksum"]


class TelemetryEntry(namedtuple("TelemetryEntry", _ENTRY_FIELDS)):
    """One history entry of a flow, as stored in a 64-byte collector cell."""

    __slots__ = ()

    @property
    def features(self):
        return FeatureVector(*self[1:9])

    @property
    def sums_iat(self):
        return self.sum_iat1, self.sum_iat2, self.sum_iat3

    @property
    def sums_ps(self):
        return self.sum_ps1, self.sum_ps2, self.sum_ps3


def feature_vector(fs, five_tuple):
    """Build the transmitted vector from the register state of a flow."""
    return FeatureVector(
        fs.packet_count,
        fs.sum_iat1,
        fs.sum_iat2,
        fs.sum_iat3,
        fs.sum_ps1,
        fs.sum_ps2,
        fs.sum_ps3,
        five_tuple,
    )


def pack_features(fv):
    """Encode a FeatureVector into its 45-byte wire form."""
    try:
        return _FEATURE_FMT.pack(*fv[:7], encode_five_tuple(fv.five_tuple))
    except struct.error as err:
        raise ValueError("Feature vector field out of range: {0}".format(err))


def unpack_features(raw):
    """Decode the 45-byte wire form into a FeatureVector."""
    if len(raw) != FEATURE_SIZE:
        msg = "Feature vector must be {0} bytes, got {1}"
        raise ValueError(msg.format(FEATURE_SIZE, len(raw)))
    *stats, ft_raw = _FEATURE_FMT.unpack(raw)
    return FeatureVector(*stats, decode_five_tuple(ft_raw))


def make_entry(flow_id, fv):
    """Build a TelemetryEntry for flow_id carrying fv, with its checksum."""
    entry = TelemetryEntry(flow_id, *fv, 0)
    return entry._replace(checksum=crc32(_pack_entry_body(entry)))


def _pack_entry_body(e):
    try:
        return _ENTRY_FMT.pack(*e[:8], encode_five_tuple(e.five_tuple), 0, _PADDING)[
            :CHECKSUM_OFFSET
        ]
    except struct.error as err:
        raise ValueError("Entry field out of range: {0}".format(err))


def encode_entry(e):
    """Encode a TelemetryEntry into its 64-byte cell image.

    The checksum field of the input is ignored and recomputed.

    Parameters
    ----------
    e : TelemetryEntry

    Returns
    -------
    cell : bytes of length 64

    """
    body = _pack_entry_body(e)
    return body + struct.pack("!I", crc32(body)) + _PADDING


def decode_entry(b):
    """Decode a 64-byte cell image.

    Parameters
    ----------
    b : bytes-like of length 64

    Returns
    -------
    entry : TelemetryEntry, or CellState.EMPTY for an all-zero cell, or
        CellState.CORRUPT when the checksum, reserved bytes or padding disagree

    """
    b = bytes(b)
    assert len(b) == ENTRY_SIZE, "cell must be {0} bytes, got {1}".format(
        ENTRY_SIZE, len(b)
    )
    if b == _EMPTY_CELL:
        return EMPTY
    fields = _ENTRY_FMT.unpack(b)
    *head, ft_raw, checksum, padding = fields
    if checksum != crc32(b[:CHECKSUM_OFFSET]) or padding != _PADDING:
        return CORRUPT
    try:
        ft = decode_five_tuple(ft_raw)
    except ValueError:
        return CORRUPT
    return TelemetryEntry(*head, ft, checksum)


class DtaReport(
    namedtuple("DtaReport", ["flow_id", "features", "reporter_id", "flags"])
):
    """Reporter to Translator telemetry message: base header fields and the vector."""

    __slots__ = ()

    def __new__(cls, flow_id, features, reporter_id=1, flags=DTA_FLAG_REPORT):
        return super().__new__(cls, flow_id, features, reporter_id, flags)
