"""
"""
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ..collector import ConnectionParams
from ..core import PROTO_UDP, DtaReport, FeatureVector, FiveTuple, decode_entry
from ..core import make_entry
from ..translator import DROP, FORWARD, WRITE, HistoryCounters, Translator
from ..translator import map_address
from ..utils import MASK24
from ..wire import dta_encode, rocev2_decode

BASE_VA = 0x10000


def _fv(count, proto=PROTO_UDP):
    ft = FiveTuple.from_strings("10.0.0.7", "10.1.0.1", 4000, 5001, proto)
    return FeatureVector(count, count, count, count, count, count, count, ft)


def _connected(num_flows=100, history_depth=10, start_psn=0):
    translator = Translator(num_flows, history_depth)
    region_len = num_flows * history_depth * 64
    translator.connect(
        ConnectionParams(BASE_VA, region_len, 0x00C0FFEE, 0x11, start_psn)
    )
    return translator


def test_history_counter_advances_round_robin():
    history = HistoryCounters(10)
    assert [history.next_slot(7) for _ in range(3)] == [0, 1, 2]
    assert history.peek(7) == 3
    assert history.peek(8) == 0


def test_history_counter_wraps_at_depth():
    history = HistoryCounters(10)
    slots = [history.next_slot(3) for _ in range(25)]
    assert slots[-1] == 4
    assert history.peek(3) == 5
    assert slots[:12] == list(range(10)) + [0, 1]


def test_history_counter_rejects_depth_beyond_8_bits():
    with pytest.raises(ValueError):
        HistoryCounters(4, history_depth=256)
    with pytest.raises(ValueError):
        HistoryCounters(4, history_depth=0)


def test_map_address():
    assert map_address(0, 0, BASE_VA, 64000) == BASE_VA
    assert map_address(3, 7, BASE_VA, 64000) == 0x10940
    assert map_address(99, 9, BASE_VA, 64000) == BASE_VA + 63936


def test_map_address_rejects_cells_outside_region():
    with pytest.raises(ValueError):
        map_address(100, 0, BASE_VA, 64000)
    with pytest.raises(ValueError):
        map_address(3, 10, BASE_VA, 64000)
    with pytest.raises(ValueError):
        map_address(-1, 0, BASE_VA, 64000)


def test_translate_writes_third_report_into_slot_2():
    translator = _connected()
    frames = [
        translator.translate(dta_encode(DtaReport(7, _fv(n)))) for n in (1, 2, 3)
    ]
    assert all(r.action == WRITE for r in frames)
    write = rocev2_decode(frames[2].frame)
    assert write.virtual_addr == BASE_VA + 72 * 64
    assert len(write.payload) == 64
    assert decode_entry(write.payload) == make_entry(7, _fv(3))
    assert translator.counters["translated"] == 3


def test_translate_assigns_consecutive_psns():
    translator = _connected(start_psn=MASK24 - 1)
    psns = []
    for flow_id in (1, 2, 3):
        result = translator.translate(dta_encode(DtaReport(flow_id, _fv(1))))
        psns.append(rocev2_decode(result.frame).psn)
    assert psns == [MASK24 - 1, MASK24, 0]
    assert translator.metrics()["next_psn"] == 1


def test_translate_forwards_non_telemetry_traffic():
    translator = _connected()
    frame = translator.emit_write(bytes(8), BASE_VA)
    result = translator.translate(frame)
    assert result == (FORWARD, frame)
    assert translator.counters["forwarded"] == 1
    assert translator.drops == 0


def test_translate_drops_malformed_and_out_of_range_reports():
    translator = _connected(num_flows=10)
    frame = bytearray(dta_encode(DtaReport(1, _fv(1))))
    frame[60] ^= 0xFF
    assert translator.translate(bytes(frame)) == (DROP, None)
    assert translator.translate(dta_encode(DtaReport(10, _fv(1)))) == (DROP, None)
    assert translator.counters["dropped_parse"] == 1
    assert translator.counters["dropped_flow_range"] == 1


def test_translate_shares_the_slot_rotation_of_next_history_slot():
    translator = _connected(num_flows=4, history_depth=4)
    assert translator.next_history_slot(2) == 0
    assert translator.next_history_slot(2, advance=False) == 1
    assert translator.next_history_slot(2, advance=False) == 1
    result = translator.translate(dta_encode(DtaReport(2, _fv(5))))
    assert result.action == WRITE
    assert rocev2_decode(result.frame).virtual_addr == BASE_VA + (2 * 4 + 1) * 64
    assert translator.next_history_slot(2, advance=False) == 2
    dropped = translator.translate(dta_encode(DtaReport(9, _fv(5))))
    assert dropped.action == DROP
    assert translator.counters["dropped_flow_range"] == 1
    assert translator.drops == 2
    assert translator.metrics()["next_psn"] == 0


def test_translate_drops_reports_beyond_a_short_region():
    translator = Translator(10)
    translator.connect(ConnectionParams(BASE_VA, 5 * 10 * 64, 0x00C0FFEE, 0x11, 0))
    assert translator.translate(dta_encode(DtaReport(7, _fv(1)))).action == DROP
    assert translator.counters["dropped_bounds"] == 1
    assert translator.history.peek(7) == 0


def test_translator_requires_connection():
    translator = Translator(10)
    with pytest.raises(RuntimeError):
        translator.translate(dta_encode(DtaReport(1, _fv(1))))
    with pytest.raises(RuntimeError):
        translator.emit_write(bytes(8), BASE_VA)


def test_next_history_slot_counts_out_of_range_flows():
    translator = _connected(num_flows=4)
    assert translator.next_history_slot(3) == 0
    assert translator.next_history_slot(4) is None
    assert translator.counters["dropped_flow_range"] == 1


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=1, max_size=60))
def test_slots_rotate_evenly_per_flow(flow_ids):
    translator = _connected(num_flows=5, history_depth=4)
    slots = {f: [] for f in range(5)}
    for i, flow_id in enumerate(flow_ids):
        result = translator.translate(dta_encode(DtaReport(flow_id, _fv(i + 1))))
        write = rocev2_decode(result.frame)
        offset = write.virtual_addr - BASE_VA
        assert offset // (4 * 64) == flow_id
        slots[flow_id].append(offset // 64 % 4)
    for flow_id, seen in slots.items():
        assert seen == [i % 4 for i in range(len(seen))]
        counts = Counter(seen)
        if counts:
            assert max(counts.values()) - min(counts.values()) <= 1
