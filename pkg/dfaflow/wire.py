"""Bit-exact codecs for the telemetry frame and the RoCEv2 WRITE-Only frame.

Telemetry frame, Reporter to Translator (95 bytes)::

    eth(14) | ipv4(20) | udp(8, dport 40050)
    | version(1)=1 | flags(1) | reporter_id(2) | flow_id(4) | features(45)

RoCEv2 WRITE-Only frame, Translator to Collector (74 + payload bytes)::

    eth(14) | ipv4(20) | udp(8, dport 4791, checksum 0)
    | bth(12) | reth(16) | payload | icrc(4)

"""
import struct
from collections import namedtuple

from .core import DTA_FLAG_REPORT, ENTRY_SIZE, FEATURE_SIZE, PROTO_UDP, CellState
from .core import DtaReport, FeatureVector, decode_entry, pack_features
from .core import unpack_features
from .utils import MASK24, bytes_to_mac, crc32, int_to_ip, internet_checksum
from .utils import ip_to_int, mac_to_bytes

DTA_PORT = 40050
ROCE_PORT = 4791
DTA_VERSION = 1
OPCODE_RC_RDMA_WRITE_ONLY = 0x2A
DEFAULT_PKEY = 0xFFFF
ROCE_PAYLOAD_SIZES = (8, 16, 32, 64, 128)
ETHERTYPE_IPV4 = 0x0800

ETH_LEN = 14
IPV4_LEN = 20
UDP_LEN = 8
DTA_BASE_LEN = 8
BTH_LEN = 12
RETH_LEN = 16
ICRC_LEN = 4
L4_OFFSET = ETH_LEN + IPV4_LEN
PAYLOAD_OFFSET = L4_OFFSET + UDP_LEN
DTA_FRAME_LEN = PAYLOAD_OFFSET + DTA_BASE_LEN + FEATURE_SIZE
ROCE_OVERHEAD = PAYLOAD_OFFSET + BTH_LEN + RETH_LEN + ICRC_LEN

_ETH = struct.Struct("!6s6sH")
_IPV4 = struct.Struct("!BBHHHBBH4s4s")
_UDP = struct.Struct("!HHHH")
_DTA_BASE = struct.Struct("!BBHI")
_BTH = struct.Struct("!BBHB3sB3s")
_RETH = struct.Struct("!QII")


class WireError(ValueError):
    """Base class of classified frame parse errors."""


class NotDta(WireError):
    """Frame is not addressed to the telemetry port."""


class NotRoce(WireError):
    """Frame is not a RoCEv2 frame."""


class BadLength(WireError):
    pass


class BadMagic(WireError):
    """Unknown telemetry header version."""


class BadFlags(WireError):
    pass


class BadReserved(WireError):
    """Nonzero reserved bytes."""


class BadChecksum(WireError):
    pass


class BadOpcode(WireError):
    pass


class BadIcrc(WireError):
    pass


NetAddressing = namedtuple(
    "NetAddressing", ["src_mac", "dst_mac", "src_ip", "dst_ip", "src_port"]
)
DTA_ADDRESSING = NetAddressing(
    "02:00:00:00:00:01", "02:00:00:00:00:02", "10.100.0.1", "10.100.0.2", 49152
)
ROCE_ADDRESSING = NetAddressing(
    "02:00:00:00:00:02", "02:00:00:00:00:03", "10.100.0.2", "10.100.0.3", 49152
)

RoceWrite = namedtuple(
    "RoceWrite",
    ["virtual_addr", "rkey", "dest_qp", "psn", "payload", "pkey", "opcode"],
)


def _l2_l3_l4(net, dport, l4_payload_len):
    src_ip = ip_to_int(net.src_ip).to_bytes(4, "big")
    dst_ip = ip_to_int(net.dst_ip).to_bytes(4, "big")
    dst_mac, src_mac = mac_to_bytes(net.dst_mac), mac_to_bytes(net.src_mac)
    eth = _ETH.pack(dst_mac, src_mac, ETHERTYPE_IPV4)
    udp_len = UDP_LEN + l4_payload_len
    ip_fields = [0x45, 0, IPV4_LEN + udp_len, 0, 0, 64, PROTO_UDP, 0, src_ip, dst_ip]
    ip_fields[7] = internet_checksum(_IPV4.pack(*ip_fields))
    udp = _UDP.pack(net.src_port, dport, udp_len, 0)
    return eth + _IPV4.pack(*ip_fields), udp, src_ip, dst_ip


def udp_checksum(src_ip, dst_ip, udp_segment):
    """UDP checksum over the IPv4 pseudo-header. Zero is sent as 0xFFFF."""
    pseudo = src_ip + dst_ip + struct.pack("!BBH", 0, PROTO_UDP, len(udp_segment))
    csum = internet_checksum(pseudo + udp_segment)
    return csum or 0xFFFF


def dta_encode(report, net=DTA_ADDRESSING):
    """Encode a DtaReport into a 95-byte telemetry frame.

    Parameters
    ----------
    report : DtaReport
        features may be a FeatureVector or its 45-byte wire form

    net : NetAddressing, optional

    Returns
    -------
    frame : bytes
        IPv4 and UDP checksums are valid

    """
    if report.flags != DTA_FLAG_REPORT:
        raise BadFlags("flags = {0:#04x}, only bit 0 may be set".format(report.flags))
    if isinstance(report.features, FeatureVector):
        features = pack_features(report.features)
    else:
        features = bytes(report.features)
    if len(features) != FEATURE_SIZE:
        msg = "Feature payload must be {0} bytes, got {1}"
        raise BadLength(msg.format(FEATURE_SIZE, len(features)))
    try:
        base = _DTA_BASE.pack(
            DTA_VERSION, report.flags, report.reporter_id, report.flow_id
        )
    except struct.error as err:
        raise ValueError("Telemetry header field out of range: {0}".format(err))

    body = base + features
    head, udp, src_ip, dst_ip = _l2_l3_l4(net, DTA_PORT, len(body))
    csum = udp_checksum(src_ip, dst_ip, udp + body)
    return head + udp[:6] + struct.pack("!H", csum) + body


def _parse_udp(frame, port, not_ours):
    if len(frame) < PAYLOAD_OFFSET:
        msg = "Frame of {0} bytes is shorter than eth+ipv4+udp"
        raise BadLength(msg.format(len(frame)))
    _, _, ethertype = _ETH.unpack_from(frame)
    ip = _IPV4.unpack_from(frame, ETH_LEN)
    sport, dport, udp_len, udp_csum = _UDP.unpack_from(frame, L4_OFFSET)
    if ethertype != ETHERTYPE_IPV4 or ip[0] != 0x45 or ip[6] != PROTO_UDP:
        raise not_ours("Not an option-free IPv4/UDP frame")
    if dport != port:
        raise not_ours("UDP destination port {0}, expected {1}".format(dport, port))
    if ip[2] != len(frame) - ETH_LEN or udp_len != len(frame) - L4_OFFSET:
        msg = "Frame of {0} bytes disagrees with IPv4 length {1}"
        raise BadLength(msg.format(len(frame), ip[2]))
    if internet_checksum(frame[ETH_LEN:L4_OFFSET]) != 0:
        raise BadChecksum("IPv4 header checksum mismatch")
    return ip, sport, udp_csum


def dta_decode(frame):
    """Decode a telemetry frame.

    Returns
    -------
    report : DtaReport

    Raises
    ------
    NotDta, BadLength, BadChecksum, BadMagic, BadFlags, BadReserved

    """
    frame = bytes(frame)
    ip, _, csum = _parse_udp(frame, DTA_PORT, NotDta)
    if len(frame) != DTA_FRAME_LEN:
        msg = "Telemetry frame must be {0} bytes, got {1}"
        raise BadLength(msg.format(DTA_FRAME_LEN, len(frame)))
    if csum and internet_checksum(_pseudo_header(ip, frame) + frame[L4_OFFSET:]) != 0:
        raise BadChecksum("UDP checksum mismatch")
    version, flags, reporter_id, flow_id = _DTA_BASE.unpack_from(frame, PAYLOAD_OFFSET)
    if version != DTA_VERSION:
        raise BadMagic("Telemetry header version {0}".format(version))
    if flags != DTA_FLAG_REPORT:
        raise BadFlags("flags = {0:#04x}, only bit 0 may be set".format(flags))
    try:
        features = unpack_features(frame[PAYLOAD_OFFSET + DTA_BASE_LEN :])
    except ValueError as err:
        raise BadReserved(str(err))
    return DtaReport(flow_id, features, reporter_id, flags)


def _pseudo_header(ip, frame):
    return ip[8] + ip[9] + struct.pack("!BBH", 0, PROTO_UDP, len(frame) - L4_OFFSET)


def icrc(frame):
    """Invariant CRC of a RoCEv2 frame given without its trailing ICRC.

    CRC-32 over 8 bytes of 0xFF followed by the IPv4 header, UDP header, BTH and
    payload, with the variant fields masked to ones: IPv4 TOS, TTL and header
    checksum, UDP checksum and the FECN/BECN/reserved byte of the BTH.

    """
    masked = bytearray(frame[ETH_LEN:])
    masked[1] = 0xFF
    masked[8] = 0xFF
    masked[10:12] = b"\xff\xff"
    masked[IPV4_LEN + 6 : IPV4_LEN + 8] = b"\xff\xff"
    masked[IPV4_LEN + UDP_LEN + 4] = 0xFF
    return crc32(b"\xff" * 8 + bytes(masked))


def pack_icrc(value):
    """ICRC trailer bytes, least significant byte first."""
    return struct.pack("<I", value)


def rocev2_encode_write_only(
    virtual_addr, rkey, dest_qp, psn, payload, net=ROCE_ADDRESSING, pkey=DEFAULT_PKEY
):
    """Encode an RDMA WRITE-Only frame.

    Parameters
    ----------
    virtual_addr : int
        64-bit target address

    rkey : int
        32-bit remote key

    dest_qp : int
        24-bit destination queue pair

    psn : int
        24-bit packet sequence number

    payload : bytes
        Length one of 8, 16, 32, 64 or 128. dma_len is set to this length.

    net : NetAddressing, optional

    pkey : int, optional

    Returns
    -------
    frame : bytes of length 74 + len(payload)

    """
    payload = bytes(payload)
    if len(payload) not in ROCE_PAYLOAD_SIZES:
        msg = "RoCEv2 payload of {0} bytes, accepted sizes are {1}"
        raise ValueError(msg.format(len(payload), ROCE_PAYLOAD_SIZES))
    if not 0 <= dest_qp <= MASK24 or not 0 <= psn <= MASK24:
        msg = "dest_qp and psn must be 24-bit, got {0}, {1}"
        raise ValueError(msg.format(dest_qp, psn))
    try:
        bth = _BTH.pack(
            OPCODE_RC_RDMA_WRITE_ONLY,
            0,
            pkey,
            0,
            dest_qp.to_bytes(3, "big"),
            0,
            psn.to_bytes(3, "big"),
        )
        reth = _RETH.pack(virtual_addr, rkey, len(payload))
    except (struct.error, OverflowError) as err:
        raise ValueError("RoCEv2 header field out of range: {0}".format(err))

    body = bth + reth + payload
    head, udp, _, _ = _l2_l3_l4(net, ROCE_PORT, len(body) + ICRC_LEN)
    frame = head + udp + body
    return frame + pack_icrc(icrc(frame))


def rocev2_decode(frame, check_icrc=True):
    """Decode an RDMA WRITE-Only frame.

    Returns
    -------
    write : RoceWrite

    Raises
    ------
    NotRoce, BadLength, BadChecksum, BadOpcode, BadIcrc

    """
    frame = bytes(frame)
    _parse_udp(frame, ROCE_PORT, NotRoce)
    if len(frame) < ROCE_OVERHEAD:
        raise BadLength("RoCEv2 frame of {0} bytes is too short".format(len(frame)))
    opcode, _, pkey, _, qp, _, psn = _BTH.unpack_from(frame, PAYLOAD_OFFSET)
    if opcode != OPCODE_RC_RDMA_WRITE_ONLY:
        raise BadOpcode("BTH opcode {0:#04x} is not RDMA WRITE-Only".format(opcode))
    va, rkey, dma_len = _RETH.unpack_from(frame, PAYLOAD_OFFSET + BTH_LEN)
    if len(frame) != ROCE_OVERHEAD + dma_len:
        msg = "dma_len {0} disagrees with frame length {1}"
        raise BadLength(msg.format(dma_len, len(frame)))
    if check_icrc and frame[-ICRC_LEN:] != pack_icrc(icrc(frame[:-ICRC_LEN])):
        raise BadIcrc("ICRC mismatch")
    start = ROCE_OVERHEAD - ICRC_LEN
    payload = frame[start : start + dma_len]
    qp = int.from_bytes(qp, "big")
    psn = int.from_bytes(psn, "big")
    return RoceWrite(va, rkey, qp, psn, payload, pkey, opcode)


def classify_frame(frame):
    """Return "dta", "rocev2" or "other" from the UDP destination port."""
    frame = bytes(frame)
    if len(frame) < PAYLOAD_OFFSET:
        return "other"
    _, _, ethertype = _ETH.unpack_from(frame)
    ip = _IPV4.unpack_from(frame, ETH_LEN)
    if ethertype != ETHERTYPE_IPV4 or ip[0] != 0x45 or ip[6] != PROTO_UDP:
        return "other"
    dport = _UDP.unpack_from(frame, L4_OFFSET)[1]
    return {DTA_PORT: "dta", ROCE_PORT: "rocev2"}.get(dport, "other")


def _header_rows(frame):
    dst, src, ethertype = _ETH.unpack_from(frame)
    ip = _IPV4.unpack_from(frame, ETH_LEN)
    sport, dport, udp_len, udp_csum = _UDP.unpack_from(frame, L4_OFFSET)
    return [
        ("eth", "dst", bytes_to_mac(dst)),
        ("eth", "src", bytes_to_mac(src)),
        ("eth", "type", "{0:#06x}".format(ethertype)),
        ("ipv4", "total_length", ip[2]),
        ("ipv4", "ttl", ip[5]),
        ("ipv4", "protocol", ip[6]),
        ("ipv4", "checksum", "{0:#06x}".format(ip[7])),
        ("ipv4", "src", int_to_ip(int.from_bytes(ip[8], "big"))),
        ("ipv4", "dst", int_to_ip(int.from_bytes(ip[9], "big"))),
        ("udp", "sport", sport),
        ("udp", "dport", dport),
        ("udp", "length", udp_len),
        ("udp", "checksum", "{0:#06x}".format(udp_csum)),
    ]


def _entry_rows(layer, fields):
    return [(layer, name, value) for name, value in zip(fields._fields, fields)]


def dta_rows(frame):
    """Field table rows (layer, field, value) of a telemetry frame."""
    report = dta_decode(frame)
    rows = _header_rows(frame)
    rows += [
        ("dta", "version", DTA_VERSION),
        ("dta", "flags", "{0:#04x}".format(report.flags)),
        ("dta", "reporter_id", report.reporter_id),
        ("dta", "flow_id", report.flow_id),
    ]
    fv = report.features
    rows += _entry_rows("features", fv._replace(five_tuple=str(fv.five_tuple)))
    return rows


def rocev2_rows(frame, check_icrc=True):
    """Field table rows of a RoCEv2 frame, decoding the entry of 64-byte payloads."""
    write = rocev2_decode(frame, check_icrc=check_icrc)
    rows = _header_rows(frame)
    rows += [
        ("bth", "opcode", "{0:#04x} (RDMA WRITE-Only)".format(write.opcode)),
        ("bth", "pkey", "{0:#06x}".format(write.pkey)),
        ("bth", "dest_qp", write.dest_qp),
        ("bth", "psn", write.psn),
        ("reth", "virtual_addr", "{0:#x}".format(write.virtual_addr)),
        ("reth", "rkey", "{0:#010x}".format(write.rkey)),
        ("reth", "dma_len", len(write.payload)),
        ("icrc", "value", "{0:#010x}".format(struct.unpack("<I", frame[-4:])[0])),
    ]
    if len(write.payload) == ENTRY_SIZE:
        entry = decode_entry(write.payload)
        if isinstance(entry, CellState):
            rows.append(("entry", "state", entry.name))
        else:
            entry = entry._replace(five_tuple=str(entry.five_tuple))
            rows += _entry_rows("entry", entry)
    else:
        rows.append(("payload", "hex", write.payload.hex()))
    return rows


def format_rows(rows):
    """Render field table rows as aligned text."""
    width = max(len("{0}.{1}".format(layer, name)) for layer, name, _ in rows)
    lines = []
    for layer, name, value in rows:
        key = "{0}.{1}".format(layer, name)
        lines.append("{0:<{1}}  {2}".format(key, width, value))
    return "\n".join(lines)


def format_dta(frame):
    return format_rows(dta_rows(frame))


def format_rocev2(frame, check_icrc=True):
    return format_rows(rocev2_rows(frame, check_icrc=check_icrc))


def load_hex_frames(path):
    """Read frames from a hex text file, one per line, `#` starting a comment."""
    frames = []
    with open(path, "r") as fin:
        for raw_line in fin:
            line = raw_line.split("#", 1)[0].strip().replace(" ", "")
            if line:
                frames.append(bytes.fromhex(line))
    return frames
