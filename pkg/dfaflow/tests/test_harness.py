"""
"""
import csv
from collections import defaultdict

import numpy as np
import pytest
from jax import random as jran

from ..collector import DIRECT, STAGED
from ..harness import BENCH_CSV_COLUMNS, DISCREPANCY_THRESHOLD, RUN_CSV_COLUMNS
from ..harness import FabricConfig, Link, bench_payload_sweep, bench_row
from ..harness import build_pipeline, load_hardware_reference, max_reports_per_flow
from ..harness import repeat_validation, run_pipeline, run_row
from ..harness import staged_vs_direct_compare, write_csv
from ..traffic import TrafficSpec, gen_traffic

SMALL_SPEC = TrafficSpec(200, 12, gap="fixed:7000000", seed=3)


def _conserved(metrics):
    return metrics.reports_sent == (
        metrics.writes_applied
        + metrics.fabric_drops
        + metrics.translator_drops
        + metrics.collector_drops
    )


def test_fabric_config_validation():
    assert FabricConfig() == (0.0, 0.0, 0, 0, 0)
    assert FabricConfig(0.01, 0.0, 4).reorder_window == 4
    with pytest.raises(ValueError):
        FabricConfig(loss_rate=1.0)
    with pytest.raises(ValueError):
        FabricConfig(dta_loss_rate=-0.1)
    with pytest.raises(ValueError):
        FabricConfig(reorder_window=-1)


def test_link_delivers_in_order_after_latency():
    link = Link(latency_ns=10)
    for i in range(5):
        link.send(i, now=i)
    assert link.receive(9) == []
    assert link.receive(12) == [0, 1, 2]
    assert link.flush() == [3, 4]
    assert (link.sent, link.dropped, link.delivered) == (5, 0, 5)


def test_link_reorders_within_window():
    link = Link(reorder_window=3, ran_key=jran.PRNGKey(5))
    out = []
    for i in range(200):
        link.send(i, now=i)
        out.extend(link.receive(i))
    out.extend(link.flush())
    assert sorted(out) == list(range(200))
    assert out != list(range(200))
    assert link.delivered == 200


def test_link_loss_rate():
    link = Link(loss_rate=0.1, ran_key=jran.PRNGKey(7))
    for i in range(20000):
        link.send(i, now=0)
    assert link.sent == 20000
    assert 1700 < link.dropped < 2300
    assert len(link.flush()) == 20000 - link.dropped


def test_max_reports_per_flow():
    trace = gen_traffic(TrafficSpec(3, 12, gap="fixed:7000000"))
    assert max_reports_per_flow(trace, 20_000_000) == 3
    assert max_reports_per_flow(trace, 0) == 11


def test_lossless_run_of_10000_flows_writes_every_report():
    metrics = run_pipeline(TrafficSpec(num_flows=10000, seed=1))
    assert metrics.reports_sent == 30000
    assert metrics.reports_sent == metrics.scan.written
    assert metrics.scan.corrupt == 0
    assert metrics.discrepancy == 0.0
    assert metrics.fabric_drops == 0
    assert _conserved(metrics)
    per_flow = np.bincount([flow_id for flow_id, _ in metrics.report_log])
    assert set(per_flow[per_flow > 0].tolist()) == {3}
    assert np.count_nonzero(per_flow) == 10000


def test_five_reports_from_a_flow_just_over_100_ms():
    spec = TrafficSpec(2, 1006, gap="fixed:100000", size="fixed:200", seed=4)
    pipeline, trace = build_pipeline(spec, period_ns=20_000_000)
    metrics = pipeline.run(trace)
    assert metrics.reports_sent == 10
    assert metrics.scan.written == 10
    for flow_id in set(f for f, _ in metrics.report_log):
        history = pipeline.collector.read_history(flow_id)
        assert [e.packet_count for e in history] == [201, 402, 603, 804, 1005]


def test_a_flow_of_exactly_100_ms_sends_four_reports():
    # gating starts at the first packet and needs more than a full period
    spec = TrafficSpec(2, 1001, gap="fixed:100000", size="fixed:200", seed=4)
    pipeline, trace = build_pipeline(spec, period_ns=20_000_000)
    assert trace.flow_spans().tolist() == [100_000_000, 100_000_000]
    metrics = pipeline.run(trace)
    assert metrics.reports_sent == 8
    for flow_id in set(f for f, _ in metrics.report_log):
        history = pipeline.collector.read_history(flow_id)
        assert [e.packet_count for e in history] == [201, 402, 603, 804]


def test_reports_respect_the_period():
    period = 20_000_000
    metrics = run_pipeline(SMALL_SPEC, period_ns=period)
    times = defaultdict(list)
    for flow_id, ts in metrics.report_log:
        times[flow_id].append(ts)
    assert len(times) == 200
    for flow_times in times.values():
        assert np.all(np.diff(flow_times) > period)


def test_exact_and_approximate_runs_agree_on_counts():
    approx = run_pipeline(SMALL_SPEC)
    exact = run_pipeline(SMALL_SPEC, exact=True)
    assert approx.reports_sent == exact.reports_sent
    assert approx.scan.written == exact.scan.written


def test_lossy_run_conserves_every_report():
    fabric = FabricConfig(loss_rate=0.02, dta_loss_rate=0.01, reorder_window=8, seed=9)
    metrics = run_pipeline(SMALL_SPEC, fabric)
    assert metrics.fabric_drops > 0
    assert _conserved(metrics)
    assert metrics.scan.written == metrics.writes_applied
    assert metrics.discrepancy == pytest.approx(
        metrics.fabric_drops / metrics.reports_sent
    )
    assert metrics.component_metrics["collector"]["psn_out_of_order"] > 0


def test_discrepancy_tracks_a_small_loss_rate():
    spec = TrafficSpec(2500, 9, gap="fixed:2100000", seed=5)
    fabric = FabricConfig(loss_rate=0.005, seed=5)
    metrics = run_pipeline(spec, fabric, period_ns=2_000_000)
    assert metrics.reports_sent == 20000
    assert 0.0035 < metrics.discrepancy < 0.0065
    assert metrics.discrepancy == metrics.fabric_drops / metrics.reports_sent


def test_discrepancy_stays_under_threshold_at_low_loss():
    spec = TrafficSpec(12500, 9, gap="fixed:2100000", seed=6)
    fabric = FabricConfig(loss_rate=5e-4, seed=6)
    metrics = run_pipeline(spec, fabric, period_ns=2_000_000)
    assert metrics.reports_sent == 100000
    assert 0.00025 < metrics.discrepancy < 0.00075
    assert metrics.discrepancy < DISCREPANCY_THRESHOLD
    assert _conserved(metrics)


def test_run_rejects_period_that_overruns_history():
    with pytest.raises(ValueError):
        run_pipeline(SMALL_SPEC, period_ns=5_000_000)
    with pytest.raises(ValueError):
        run_pipeline(SMALL_SPEC, period_ns=0)


def test_run_rejects_undersized_collector():
    with pytest.raises(ValueError):
        run_pipeline(SMALL_SPEC, collector_flows=100)
    metrics = run_pipeline(TrafficSpec(10, 12, seed=2), collector_flows=64)
    assert metrics.discrepancy == 0.0


def test_repeat_validation():
    summary = repeat_validation(TrafficSpec(50, 12), runs=2)
    assert summary.discrepancies == [0.0, 0.0]
    assert summary.mean_discrepancy == 0.0
    assert summary.validated
    assert DISCREPANCY_THRESHOLD == 0.001


def test_run_row_and_csv(tmp_path):
    metrics = run_pipeline(TrafficSpec(20, 12))
    row = run_row(metrics)
    assert len(row) == len(RUN_CSV_COLUMNS)
    assert row[0] == 60
    path = str(tmp_path / "run.csv")
    write_csv(path, RUN_CSV_COLUMNS, [row])
    with open(path) as fin:
        rows = list(csv.reader(fin))
    assert tuple(rows[0]) == RUN_CSV_COLUMNS
    assert rows[1][0] == "60"


def test_bench_row_payload_rate_identity():
    row = bench_row(64, 1234567.89012)
    assert row.msgs_per_sec == 1234567.89
    assert row.payload_gbps == row.msgs_per_sec * 64 * 8 / 1e9
    assert BENCH_CSV_COLUMNS == row._fields


def test_bench_payload_sweep():
    rows = bench_payload_sweep(duration=0.2)
    assert [r.size_bytes for r in rows] == [8, 16, 32, 64, 128]
    for row in rows:
        assert row.msgs_per_sec > 0
        assert row.payload_gbps == row.msgs_per_sec * row.size_bytes * 8 / 1e9
    gbps = [row.payload_gbps for row in rows]
    assert all(b > a for a, b in zip(gbps[:-1], gbps[1:]))


def test_bench_payload_sweep_rejects_unsupported_size():
    with pytest.raises(ValueError):
        bench_payload_sweep(sizes=(7,), duration=0.01)


def test_direct_writes_outpace_staged_writes():
    result = staged_vs_direct_compare(
        duration=0.2, staging_latency_s=0.005, staging_batch=4
    )
    (mode_a, direct), (mode_b, staged) = result.rows
    assert (mode_a, mode_b) == (DIRECT, STAGED)
    assert direct > staged > 0
    assert result.ratio > 1
    assert result.reference_ratio == pytest.approx(1.24)


def test_load_hardware_reference():
    ref = load_hardware_reference()
    gdr = ref[ref["mode"] == "gdr"]
    assert gdr["size_bytes"].tolist() == [8, 16, 32, 64, 128]
    assert gdr["mmsgs_per_sec"][gdr["size_bytes"] == 64][0] == 31
    assert ref["mode"].tolist().count("memcopy") == 1
