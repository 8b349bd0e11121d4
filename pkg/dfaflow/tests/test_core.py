"""
"""
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ..core import CHECKSUM_OFFSET, CORRUPT, EMPTY, ENTRY_SIZE, FEATURE_SIZE
from ..core import PADDING_OFFSET, PROTO_TCP, CellState, FeatureVector, FiveTuple
from ..core import TelemetryEntry, decode_entry, decode_five_tuple, encode_entry
from ..core import encode_five_tuple, iat32, make_entry, pack_features, ts32
from ..core import unpack_features
from ..utils import MASK32
from ..wire import load_hex_frames

_THIS_DRNAME = os.path.dirname(os.path.abspath(__file__))
DDRN = os.path.join(_THIS_DRNAME, "testing_data")

GOLDEN_FT = FiveTuple.from_strings("10.0.0.1", "10.1.0.1", 1234, 80, PROTO_TCP)
GOLDEN_FV = FeatureVector(3, 20, 200, 2000, 300, 30000, 3000000, GOLDEN_FT)

u32 = st.integers(min_value=0, max_value=MASK32)
five_tuples = st.builds(
    FiveTuple,
    u32,
    u32,
    st.integers(0, 0xFFFF),
    st.integers(0, 0xFFFF),
    st.integers(0, 0xFF),
)
entries = st.builds(
    lambda fid, stats, ft: make_entry(fid, FeatureVector(*stats, ft)),
    u32,
    st.tuples(*[u32] * 7),
    five_tuples,
)


def test_five_tuple_wire_form():
    raw = encode_five_tuple(GOLDEN_FT)
    assert len(raw) == 17
    assert raw == bytes.fromhex("0a0000010a01000104d2005006") + bytes(4)
    assert decode_five_tuple(raw) == GOLDEN_FT


def test_five_tuple_rejects_nonzero_reserved_bytes():
    raw = bytearray(encode_five_tuple(GOLDEN_FT))
    raw[-1] = 1
    with pytest.raises(ValueError):
        decode_five_tuple(bytes(raw))


def test_five_tuple_rejects_out_of_range_port():
    with pytest.raises(ValueError):
        encode_five_tuple(FiveTuple(1, 2, 70000, 80, PROTO_TCP))


def test_five_tuple_string_form():
    assert str(GOLDEN_FT) == "10.0.0.1:1234->10.1.0.1:80/6"


def test_ts32_and_wrapping_iat():
    assert ts32(2 ** 32 + 7) == 7
    assert iat32(5, MASK32 - 4) == 10
    assert iat32(100, 40) == 60


def test_feature_vector_is_45_bytes():
    raw = pack_features(GOLDEN_FV)
    assert len(raw) == FEATURE_SIZE
    assert raw[:4] == (3).to_bytes(4, "big")
    assert raw[24:28] == (3000000).to_bytes(4, "big")
    assert unpack_features(raw) == GOLDEN_FV


def test_encode_entry_layout_of_zero_entry():
    zero_ft = FiveTuple(0, 0, 0, 0, 0)
    cell = encode_entry(make_entry(0, FeatureVector(0, 0, 0, 0, 0, 0, 0, zero_ft)))
    assert len(cell) == ENTRY_SIZE
    assert cell[:CHECKSUM_OFFSET] == bytes(CHECKSUM_OFFSET)
    assert cell[PADDING_OFFSET:] == bytes(ENTRY_SIZE - PADDING_OFFSET)
    assert cell[CHECKSUM_OFFSET:PADDING_OFFSET] != bytes(4)
    assert decode_entry(cell) != EMPTY


def test_encode_entry_agrees_with_golden_fixture():
    golden = load_hex_frames(os.path.join(DDRN, "golden_entry.hex"))[0]
    entry = make_entry(7, GOLDEN_FV)
    assert encode_entry(entry) == golden
    assert decode_entry(golden) == entry


def test_encode_entry_recomputes_checksum():
    entry = make_entry(7, GOLDEN_FV)
    assert encode_entry(entry._replace(checksum=0)) == encode_entry(entry)


def test_decode_entry_of_zero_cell_is_empty():
    assert decode_entry(bytes(ENTRY_SIZE)) is CellState.EMPTY


def test_decode_entry_rejects_nonzero_padding():
    cell = bytearray(encode_entry(make_entry(7, GOLDEN_FV)))
    cell[-1] = 0x01
    assert decode_entry(bytes(cell)) is CORRUPT


def test_every_single_bit_flip_of_a_written_entry_is_corrupt():
    cell = encode_entry(make_entry(7, GOLDEN_FV))
    for bit in range(CHECKSUM_OFFSET * 8):
        flipped = bytearray(cell)
        flipped[bit // 8] ^= 1 << (bit % 8)
        assert decode_entry(bytes(flipped)) is CORRUPT, "bit {0} undetected".format(bit)


def test_entry_accessors():
    entry = make_entry(7, GOLDEN_FV)
    assert isinstance(entry, TelemetryEntry)
    assert entry.features == GOLDEN_FV
    assert entry.sums_iat == (20, 200, 2000)
    assert entry.sums_ps == (300, 30000, 3000000)


@settings(max_examples=500)
@given(entries)
def test_entry_round_trip(entry):
    cell = encode_entry(entry)
    assert len(cell) == ENTRY_SIZE
    assert decode_entry(cell) == entry
    assert encode_entry(decode_entry(cell)) == cell


def test_entry_round_trip_over_1e5_random_entries():
    rng = np.random.RandomState(13)
    n = 100_000
    words = rng.randint(0, 2 ** 32, size=(n, 10), dtype=np.int64).tolist()
    shorts = rng.randint(0, 2 ** 16, size=(n, 3)).tolist()
    for w, s in zip(words, shorts):
        ft = FiveTuple(w[8], w[9], s[0], s[1], s[2] & 0xFF)
        entry = make_entry(w[0], FeatureVector(*w[1:8], ft))
        cell = encode_entry(entry)
        assert decode_entry(cell) == entry
