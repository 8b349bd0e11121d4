"""Utility functions used throughout the package."""
import ipaddress
import struct
import zlib

import numpy as np

MASK32 = 0xFFFFFFFF
MASK24 = 0xFFFFFF
CRC32_POLY_REFLECTED = 0xEDB88320


def wrap32(x):
    """Reduce an integer modulo 2^32."""
    return x & MASK32


def crc32(data):
    """CRC-32/IEEE 802.3 of a bytes-like object.

    Reflected polynomial 0x04C11DB7, initial value 0xFFFFFFFF,
    final XOR 0xFFFFFFFF.

    """
    return zlib.crc32(bytes(data)) & MASK32


def crc32_table():
    """Return the 256-entry lookup table of the reflected CRC-32 polynomial.

    Returns
    -------
    table : ndarray of shape (256, ), dtype uint32

    """
    table = np.zeros(256, dtype=np.uint32)
    for i in range(256):
        c = i
        for _ in range(8):
            if c & 1:
                c = CRC32_POLY_REFLECTED ^ (c >> 1)
            else:
                c >>= 1
        table[i] = c
    return table


def internet_checksum(data):
    """Ones' complement checksum of RFC 1071 over a bytes-like object."""
    data = bytes(data)
    if len(data) % 2:
        data += b"\x00"
    total = sum(struct.unpack("!%dH" % (len(data) // 2), data))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def ip_to_int(addr):
    """Convert a dotted-quad string, IPv4Address or int to a 32-bit integer."""
    if isinstance(addr, int):
        if not 0 <= addr <= MASK32:
            raise ValueError("IPv4 address {0} out of range".format(addr))
        return addr
    return int(ipaddress.IPv4Address(addr))


def int_to_ip(value):
    """Convert a 32-bit integer to dotted-quad notation."""
    return str(ipaddress.IPv4Address(value))


def mac_to_bytes(mac):
    """Convert a colon-separated MAC address to 6 bytes."""
    parts = mac.split(":")
    if len(parts) != 6:
        raise ValueError("MAC address `{0}` must have 6 octets".format(mac))
    return bytes(int(p, 16) for p in parts)


def bytes_to_mac(raw):
    return ":".join("{:02x}".format(b) for b in raw)


def parse_size_list(text):
    """Parse a comma-separated list of positive integers such as `8,16,32`."""
    try:
        sizes = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ValueError("Size list `{0}` is not a list of integers".format(text))
    if not sizes:
        raise ValueError("Size list is empty")
    return sizes
