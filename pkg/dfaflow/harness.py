"""In-process fabric connecting Reporter, Translator and Collector.

run_pipeline drives a packet trace through the three components in timestamp
order and compares the number of written memory cells with the number of
reports sent. bench_payload_sweep and staged_vs_direct_compare measure the
software-scale write rate of the Translator and Collector running in two
threads connected by a bounded queue.

"""
import csv
import heapq
import logging
import os
import queue
import threading
import time
from collections import OrderedDict, namedtuple

import numpy as np
from jax import random as jran

from .collector import DEFAULT_COLLECTOR_PARAMS, DIRECT, STAGED, Collector
from .core import HISTORY_DEPTH
from .reporter import DEFAULT_REPORTER_PARAMS, Reporter
from .traffic import TrafficSpec, gen_traffic
from .translator import WRITE, Translator
from .wire import ROCE_PAYLOAD_SIZES, dta_encode

logger = logging.getLogger(__name__)

_THIS_DRNAME = os.path.dirname(os.path.abspath(__file__))
HARDWARE_REFERENCE_FN = os.path.join(
    _THIS_DRNAME, "data", "hardware_reference_rates.dat"
)

DISCREPANCY_THRESHOLD = 0.001
REFERENCE_STAGED_RATIO = 31 / 25
VALIDATION_RUNS = 5
RANDOM_BLOCK = 4096
BENCH_QUEUE_SIZE = 1024
BENCH_REGION_FLOWS = 1024
BENCH_STRIDE = max(ROCE_PAYLOAD_SIZES)

DEFAULT_FABRIC_PARAMS = OrderedDict(
    loss_rate=0.0, dta_loss_rate=0.0, reorder_window=0, latency_ns=0, seed=0
)

BENCH_CSV_COLUMNS = ("size_bytes", "msgs_per_sec", "payload_gbps")
COMPARE_CSV_COLUMNS = ("mode", "msgs_per_sec")
RUN_CSV_COLUMNS = (
    "reports_sent",
    "writes_applied",
    "fabric_drops",
    "translator_drops",
    "collector_drops",
    "written",
    "empty",
    "corrupt",
    "discrepancy",
)


class FabricConfig(
    namedtuple(
        "FabricConfig",
        ["loss_rate", "dta_loss_rate", "reorder_window", "latency_ns", "seed"],
    )
):
    """Impairments of the two links.

    Parameters
    ----------
    loss_rate : float, optional
        Drop probability on the Translator to Collector link. Default is 0.

    dta_loss_rate : float, optional
        Drop probability on the Reporter to Translator link. Default is 0.

    reorder_window : int, optional
        Frames held back on each link before a random one is released.
        Default is 0, meaning in-order delivery.

    latency_ns : int, optional
        Per-hop latency. Default is 0.

    seed : int, optional
        Seed of the loss and reorder draws. Default is 0.

    """

    __slots__ = ()

    def __new__(
        cls,
        loss_rate=DEFAULT_FABRIC_PARAMS["loss_rate"],
        dta_loss_rate=DEFAULT_FABRIC_PARAMS["dta_loss_rate"],
        reorder_window=DEFAULT_FABRIC_PARAMS["reorder_window"],
        latency_ns=DEFAULT_FABRIC_PARAMS["latency_ns"],
        seed=DEFAULT_FABRIC_PARAMS["seed"],
    ):
        for key, rate in (("loss_rate", loss_rate), ("dta_loss_rate", dta_loss_rate)):
            if not 0.0 <= rate < 1.0:
                raise ValueError("{0} = {1} outside [0, 1)".format(key, rate))
        if reorder_window < 0 or latency_ns < 0:
            raise ValueError("reorder_window and latency_ns must be non-negative")
        return super().__new__(
            cls, loss_rate, dta_loss_rate, reorder_window, latency_ns, seed
        )


RunMetrics = namedtuple(
    "RunMetrics",
    [
        "reports_sent",
        "writes_applied",
        "fabric_drops",
        "translator_drops",
        "collector_drops",
        "scan",
        "discrepancy",
        "report_log",
        "component_metrics",
    ],
)
ValidationSummary = namedtuple(
    "ValidationSummary", ["mean_discrepancy", "discrepancies", "validated"]
)
BenchRow = namedtuple("BenchRow", BENCH_CSV_COLUMNS)
CompareResult = namedtuple("CompareResult", ["rows", "ratio", "reference_ratio"])


class Link:
    """One unidirectional fabric hop with optional loss, reordering and latency."""

    def __init__(self, loss_rate=0.0, reorder_window=0, latency_ns=0, ran_key=None):
        self.loss_rate = loss_rate
        self.reorder_window = reorder_window
        self.latency_ns = latency_ns
        self.ran_key = jran.PRNGKey(0) if ran_key is None else ran_key
        self.sent = 0
        self.dropped = 0
        self.delivered = 0
        self._in_flight = []
        self._held = []
        self._uniforms = np.zeros(0)
        self._pos = 0

    def _uniform(self):
        if self._pos == self._uniforms.size:
            self.ran_key, key = jran.split(self.ran_key)
            self._uniforms = np.asarray(jran.uniform(key, (RANDOM_BLOCK,)))
            self._pos = 0
        u = float(self._uniforms[self._pos])
        self._pos += 1
        return u

    def send(self, frame, now):
        self.sent += 1
        if self.loss_rate and self._uniform() < self.loss_rate:
            self.dropped += 1
            return
        heapq.heappush(self._in_flight, (now + self.latency_ns, self.sent, frame))

    def receive(self, now):
        """Frames delivered at simulated time now."""
        out = []
        while self._in_flight and self._in_flight[0][0] <= now:
            frame = heapq.heappop(self._in_flight)[2]
            if self.reorder_window:
                self._held.append(frame)
                if len(self._held) > self.reorder_window:
                    out.append(self._held.pop(int(self._uniform() * len(self._held))))
            else:
                out.append(frame)
        self.delivered += len(out)
        return out

    def flush(self):
        """Deliver everything still in flight or held back."""
        out = [heapq.heappop(self._in_flight)[2] for _ in range(len(self._in_flight))]
        if self.reorder_window:
            self._held.extend(out)
            out = []
            while self._held:
                out.append(self._held.pop(int(self._uniform() * len(self._held))))
        self.delivered += len(out)
        return out


class DfaPipeline:
    """Reporter, Translator and Collector wired through two fabric links.

    The Collector region holds pipelines * min(flow_capacity, num_flows) flow
    records unless collector_flows asks for more.

    """

    def __init__(
        self,
        num_flows,
        fabric=None,
        period_ns=DEFAULT_REPORTER_PARAMS["period_ns"],
        f_bits=DEFAULT_REPORTER_PARAMS["f_bits"],
        exact=DEFAULT_REPORTER_PARAMS["exact"],
        pipelines=DEFAULT_REPORTER_PARAMS["pipelines"],
        flow_capacity=DEFAULT_REPORTER_PARAMS["flow_capacity"],
        history_depth=HISTORY_DEPTH,
        digest_rate=DEFAULT_REPORTER_PARAMS["digest_rate"],
        idle_timeout_ns=DEFAULT_REPORTER_PARAMS["idle_timeout_ns"],
        reporter_id=DEFAULT_REPORTER_PARAMS["reporter_id"],
        collector_flows=DEFAULT_COLLECTOR_PARAMS["num_flows"],
        copy_model=DEFAULT_COLLECTOR_PARAMS["copy_model"],
        staging_latency_s=DEFAULT_COLLECTOR_PARAMS["staging_latency_us"] * 1e-6,
        staging_batch=DEFAULT_COLLECTOR_PARAMS["staging_batch"],
        check_icrc=DEFAULT_COLLECTOR_PARAMS["check_icrc"],
    ):
        fabric = FabricConfig() if fabric is None else fabric
        capacity = min(flow_capacity, num_flows)
        needed = pipelines * capacity
        if collector_flows and collector_flows < needed:
            msg = "Collector sized for {0} flows but the Reporter can emit {1} flow IDs"
            raise ValueError(msg.format(collector_flows, needed))
        region_flows = collector_flows or needed

        self.fabric = fabric
        self.reporter = Reporter(
            period_ns=period_ns,
            pipelines=pipelines,
            flow_capacity=capacity,
            f_bits=f_bits,
            exact=exact,
            digest_rate=digest_rate,
            idle_timeout_ns=idle_timeout_ns,
            reporter_id=reporter_id,
        )
        self.translator = Translator(region_flows, history_depth)
        self.collector = Collector(
            region_flows,
            history_depth,
            copy_model=copy_model,
            staging_latency_s=staging_latency_s,
            staging_batch=staging_batch,
            check_icrc=check_icrc,
        )
        self.translator.connect(self.collector.handshake())

        dta_key, rdma_key = jran.split(jran.PRNGKey(fabric.seed), 2)
        self.dta_link = Link(
            fabric.dta_loss_rate, fabric.reorder_window, fabric.latency_ns, dta_key
        )
        self.rdma_link = Link(
            fabric.loss_rate, fabric.reorder_window, fabric.latency_ns, rdma_key
        )

    def _to_translator(self, frames, now):
        for frame in frames:
            result = self.translator.translate(frame)
            if result.action == WRITE:
                self.rdma_link.send(result.frame, now)

    def _pump(self, now):
        self._to_translator(self.dta_link.receive(now), now)
        for frame in self.rdma_link.receive(now):
            self.collector.apply_write(frame)

    def _drain(self, now):
        self._to_translator(self.dta_link.flush(), now)
        for frame in self.rdma_link.flush():
            self.collector.apply_write(frame)

    def run(self, trace):
        """Drive every packet of trace through the pipeline.

        Returns
        -------
        metrics : RunMetrics

        """
        logger.info("Running %d packets of %d flows", len(trace), trace.num_flows)
        report_log = []
        now = 0
        for ev in trace:
            now = ev.ts
            self._pump(now)
            result = self.reporter.ingest_packet(ev)
            if result.report is not None:
                report_log.append((result.report.flow_id, now))
                self.dta_link.send(dta_encode(result.report), now)
            self.reporter.poll(now)
            self._pump(now)
        self._drain(now)
        if self.reporter.counters["reused_ids"]:
            logger.warning(
                "%d flow IDs were recycled, their records may mix two flows",
                self.reporter.counters["reused_ids"],
            )
        self.collector.barrier()
        scan = self.collector.scan()

        reports_sent = len(report_log)
        written = scan.written
        discrepancy = 0.0
        if reports_sent:
            discrepancy = abs(written - reports_sent) / reports_sent
        metrics = RunMetrics(
            reports_sent=reports_sent,
            writes_applied=self.collector.counters["writes_applied"],
            fabric_drops=self.dta_link.dropped + self.rdma_link.dropped,
            translator_drops=self.translator.drops,
            collector_drops=self.collector.drops,
            scan=scan,
            discrepancy=discrepancy,
            report_log=report_log,
            component_metrics=OrderedDict(
                reporter=self.reporter.metrics(),
                translator=self.translator.metrics(),
                collector=self.collector.metrics(),
            ),
        )
        logger.info(
            "Sent %d reports, %d cells written, discrepancy %.6f",
            reports_sent,
            written,
            discrepancy,
        )
        return metrics


def max_reports_per_flow(trace, period_ns):
    """Largest number of reports the gating rule allows any flow of trace."""
    if period_ns <= 0:
        return int(np.bincount(trace.flow).max()) - 1
    return int(trace.flow_spans().max()) // period_ns


def run_pipeline(
    source,
    fabric=None,
    period_ns=DEFAULT_REPORTER_PARAMS["period_ns"],
    f_bits=DEFAULT_REPORTER_PARAMS["f_bits"],
    exact=DEFAULT_REPORTER_PARAMS["exact"],
    history_depth=HISTORY_DEPTH,
    **kwargs
):
    """Run the validation experiment on a synthetic or captured trace.

    Parameters
    ----------
    source : TrafficSpec or PacketTrace

    fabric : FabricConfig, optional
        Default is a lossless in-order fabric

    period_ns : int, optional

    f_bits : int, optional

    exact : bool, optional

    history_depth : int, optional

    **kwargs
        Remaining keyword arguments of DfaPipeline

    Returns
    -------
    metrics : RunMetrics
        discrepancy = |written cells - reports sent| / reports sent

    Raises
    ------
    ValueError
        When a flow may report more often than its history ring holds, in which
        case overwritten cells would make the written-cell count meaningless

    """
    pipeline, trace = build_pipeline(
        source, fabric, period_ns, f_bits, exact, history_depth, **kwargs
    )
    return pipeline.run(trace)


def build_pipeline(
    source,
    fabric=None,
    period_ns=DEFAULT_REPORTER_PARAMS["period_ns"],
    f_bits=DEFAULT_REPORTER_PARAMS["f_bits"],
    exact=DEFAULT_REPORTER_PARAMS["exact"],
    history_depth=HISTORY_DEPTH,
    **kwargs
):
    """Check a run configuration and return the DfaPipeline with its trace."""
    trace = gen_traffic(source) if isinstance(source, TrafficSpec) else source
    worst = max_reports_per_flow(trace, period_ns)
    if worst > history_depth:
        msg = (
            "A flow may send {0} reports with period {1} ns but the history ring "
            "holds {2} entries"
        )
        raise ValueError(msg.format(worst, period_ns, history_depth))
    pipeline = DfaPipeline(
        trace.num_flows,
        fabric,
        period_ns=period_ns,
        f_bits=f_bits,
        exact=exact,
        history_depth=history_depth,
        **kwargs
    )
    return pipeline, trace


def repeat_validation(
    spec, fabric=None, runs=VALIDATION_RUNS, threshold=DISCREPANCY_THRESHOLD, **kwargs
):
    """Repeat run_pipeline with consecutive seeds and average the discrepancy.

    Returns
    -------
    summary : ValidationSummary
        validated is True when the mean discrepancy is below threshold

    """
    fabric = FabricConfig() if fabric is None else fabric
    discrepancies = []
    for i in range(runs):
        run_spec = spec._replace(seed=spec.seed + i)
        run_fabric = fabric._replace(seed=fabric.seed + i)
        discrepancies.append(run_pipeline(run_spec, run_fabric, **kwargs).discrepancy)
    mean = float(np.mean(discrepancies))
    return ValidationSummary(mean, discrepancies, mean < threshold)


def load_hardware_reference(fn=HARDWARE_REFERENCE_FN):
    """Published hardware rates as a structured array.

    Returns
    -------
    ref : ndarray with fields mode, size_bytes, mmsgs_per_sec, payload_gbps

    """
    dtype = [
        ("mode", "U8"),
        ("size_bytes", "i8"),
        ("mmsgs_per_sec", "f8"),
        ("payload_gbps", "f8"),
    ]
    return np.loadtxt(fn, dtype=dtype, comments="#")


def _bench_one(size, duration, copy_model, staging_latency_s, staging_batch):
    collector = Collector(
        BENCH_REGION_FLOWS,
        copy_model=copy_model,
        staging_latency_s=staging_latency_s,
        staging_batch=staging_batch,
    )
    translator = Translator(BENCH_REGION_FLOWS)
    translator.connect(collector.handshake())
    num_slots = collector.region_len // BENCH_STRIDE
    payload = bytes(range(size))
    frames = queue.Queue(maxsize=BENCH_QUEUE_SIZE)
    stop = threading.Event()

    def _produce():
        i = 0
        while not stop.is_set():
            va = collector.base_va + (i % num_slots) * BENCH_STRIDE
            frame = translator.emit_write(payload, va)
            while not stop.is_set():
                try:
                    frames.put(frame, timeout=0.01)
                    break
                except queue.Full:
                    continue
            i += 1

    def _consume():
        while True:
            frame = frames.get()
            if frame is None:
                return
            collector.apply_write(frame)

    producer = threading.Thread(target=_produce, daemon=True)
    consumer = threading.Thread(target=_consume, daemon=True)
    start = time.perf_counter()
    consumer.start()
    producer.start()
    time.sleep(duration)
    applied = collector.counters["writes_applied"]
    elapsed = time.perf_counter() - start
    stop.set()
    producer.join()
    frames.put(None)
    consumer.join()
    return applied / elapsed


def bench_row(size, msgs_per_sec):
    """Bench CSV row, with payload_gbps derived from the rounded message rate."""
    msgs_per_sec = round(msgs_per_sec, 3)
    return BenchRow(size, msgs_per_sec, msgs_per_sec * size * 8 / 1e9)


def bench_payload_sweep(
    sizes=ROCE_PAYLOAD_SIZES,
    duration=1.0,
    copy_model=DIRECT,
    staging_latency_s=0.0,
    staging_batch=DEFAULT_COLLECTOR_PARAMS["staging_batch"],
):
    """Software-scale write rate of Translator and Collector per payload size.

    Parameters
    ----------
    sizes : sequence of int, optional
        RoCEv2 payload sizes, each one of 8, 16, 32, 64, 128

    duration : float, optional
        Seconds per size. Default is 1.

    Returns
    -------
    rows : list of BenchRow
        payload_gbps = msgs_per_sec * size * 8 / 1e9 exactly

    """
    bad = [s for s in sizes if s not in ROCE_PAYLOAD_SIZES]
    if bad:
        msg = "Payload sizes {0} unsupported, accepted sizes are {1}"
        raise ValueError(msg.format(bad, ROCE_PAYLOAD_SIZES))
    rows = []
    for size in sizes:
        logger.info("Benchmarking %d byte payloads for %.2f s", size, duration)
        rate = _bench_one(size, duration, copy_model, staging_latency_s, staging_batch)
        rows.append(bench_row(size, rate))
    return rows


def staged_vs_direct_compare(
    duration=1.0,
    staging_latency_s=DEFAULT_COLLECTOR_PARAMS["staging_latency_us"] * 1e-6,
    staging_batch=DEFAULT_COLLECTOR_PARAMS["staging_batch"],
):
    """64-byte write rate with and without a staging copy into the region.

    Returns
    -------
    result : CompareResult
        rows are (mode, msgs_per_sec) for direct and staged, ratio is
        direct / staged and reference_ratio the published hardware ratio

    """
    rows = []
    for mode in (DIRECT, STAGED):
        rate = _bench_one(64, duration, mode, staging_latency_s, staging_batch)
        rows.append((mode, round(rate, 3)))
    ratio = rows[0][1] / rows[1][1] if rows[1][1] else float("inf")
    return CompareResult(rows, ratio, REFERENCE_STAGED_RATIO)


def run_row(metrics):
    """Summary of a RunMetrics in the order of RUN_CSV_COLUMNS."""
    scan = metrics.scan
    return (
        metrics.reports_sent,
        metrics.writes_applied,
        metrics.fabric_drops,
        metrics.translator_drops,
        metrics.collector_drops,
        scan.written,
        scan.empty,
        scan.corrupt,
        metrics.discrepancy,
    )


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fout:
        writer = csv.writer(fout)
        writer.writerow(columns)
        writer.writerows(rows)
