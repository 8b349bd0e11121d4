"""Collector side of the pipeline: the emulated RDMA memory region.

The region holds num_flows * history_depth cells of 64 bytes, zero at
allocation. Cell i occupies bytes [64 i, 64 (i + 1)) and flow f owns cells
f * D .. f * D + D - 1.

"""
import csv
import enum
import logging
import math
import threading
import time
from collections import Counter, OrderedDict, namedtuple

import numpy as np
from jax import jit as jjit
from jax import lax
from jax import numpy as jnp
from jax import vmap

from .core import CHECKSUM_OFFSET, ENTRY_SIZE, HISTORY_DEPTH, PADDING_OFFSET
from .core import CellState, decode_entry
from .utils import MASK24, crc32_table, wrap32
from .wire import WireError, rocev2_decode

logger = logging.getLogger(__name__)

DIRECT = "direct"
STAGED = "staged"
COPY_MODELS = (DIRECT, STAGED)

DEFAULT_COLLECTOR_PARAMS = OrderedDict(
    num_flows=0,
    copy_model=DIRECT,
    staging_latency_us=1000,
    staging_batch=256,
    check_icrc=True,
)
DEFAULT_BASE_VA = 0x10000
DEFAULT_RKEY = 0x00C0FFEE
DEFAULT_DEST_QP = 0x000011
SCAN_CHUNK_CELLS = 2 ** 16

SCAN_CSV_COLUMNS = (
    "cell_index",
    "flow_id",
    "slot",
    "packet_count",
    "sum_iat1",
    "sum_iat2",
    "sum_iat3",
    "sum_ps1",
    "sum_ps2",
    "sum_ps3",
    "five_tuple",
)

ConnectionParams = namedtuple(
    "ConnectionParams", ["base_va", "region_len", "rkey", "dest_qp", "start_psn"]
)
ScanResult = namedtuple("ScanResult", ["written", "empty", "corrupt", "bitmap"])


class Undefined(enum.Enum):
    """Markers of statistics that cannot be computed from the available sums."""

    NO_PACKETS = "no_packets"
    SINGLE_SAMPLE = "single_sample"
    ZERO_STD = "zero_std"
    ZERO_MEAN = "zero_mean"


FlowStats = namedtuple(
    "FlowStats",
    [
        "n",
        "mean_iat",
        "var_iat",
        "std_iat",
        "cov_iat",
        "skew_iat",
        "mean_ps",
        "var_ps",
        "std_ps",
        "cov_ps",
        "skew_ps",
        "volume",
    ],
)

_CRC_TABLE = jnp.asarray(crc32_table())
_RESERVED_START = CHECKSUM_OFFSET - 4


@jjit
def _cell_crc(cell):
    def _step(crc, byte):
        return _CRC_TABLE[(crc ^ byte) & 0xFF] ^ (crc >> 8), None

    crc, _ = lax.scan(_step, jnp.uint32(0xFFFFFFFF), cell[:CHECKSUM_OFFSET])
    return crc ^ jnp.uint32(0xFFFFFFFF)


@jjit
def _cell_state(cell):
    stored = (
        (cell[CHECKSUM_OFFSET] << 24)
        | (cell[CHECKSUM_OFFSET + 1] << 16)
        | (cell[CHECKSUM_OFFSET + 2] << 8)
        | cell[CHECKSUM_OFFSET + 3]
    )
    is_empty = jnp.all(cell == 0)
    zero_tail = jnp.all(cell[PADDING_OFFSET:] == 0) & jnp.all(
        cell[_RESERVED_START:CHECKSUM_OFFSET] == 0
    )
    valid = (_cell_crc(cell) == stored) & zero_tail
    state = jnp.where(valid, int(CellState.WRITTEN), int(CellState.CORRUPT))
    return jnp.where(is_empty, int(CellState.EMPTY), state)


_vmap_cell_state = jjit(vmap(_cell_state))


def classify_cells(cells):
    """Classify 64-byte cells as EMPTY, WRITTEN or CORRUPT.

    Parameters
    ----------
    cells : ndarray of shape (n_cells, 64), dtype uint8

    Returns
    -------
    states : ndarray of shape (n_cells, ), dtype uint8
        Values of CellState

    """
    states = np.zeros(cells.shape[0], dtype=np.uint8)
    for start in range(0, cells.shape[0], SCAN_CHUNK_CELLS):
        chunk = cells[start : start + SCAN_CHUNK_CELLS].astype(np.uint32)
        states[start : start + chunk.shape[0]] = np.asarray(_vmap_cell_state(chunk))
    return states


class Collector:
    """RDMA-registered memory region with a single write-only queue pair.

    Parameters
    ----------
    num_flows : int
        Number of flow records in the region

    history_depth : int, optional
        Entries per flow record. Default is 10.

    copy_model : str, optional
        "direct" writes straight into the region. "staged" collects writes in a
        host staging buffer copied into the region in batches of staging_batch
        writes, each batch paying staging_latency_s. Default is "direct".

    staging_latency_s : float, optional

    staging_batch : int, optional

    check_icrc : bool, optional
        Verify the ICRC of every incoming frame. Default is True.

    """

    def __init__(
        self,
        num_flows,
        history_depth=HISTORY_DEPTH,
        copy_model=DEFAULT_COLLECTOR_PARAMS["copy_model"],
        staging_latency_s=DEFAULT_COLLECTOR_PARAMS["staging_latency_us"] * 1e-6,
        staging_batch=DEFAULT_COLLECTOR_PARAMS["staging_batch"],
        check_icrc=DEFAULT_COLLECTOR_PARAMS["check_icrc"],
        base_va=DEFAULT_BASE_VA,
        rkey=DEFAULT_RKEY,
        dest_qp=DEFAULT_DEST_QP,
        start_psn=0,
    ):
        if num_flows < 1:
            raise ValueError("num_flows = {0} must be positive".format(num_flows))
        if copy_model not in COPY_MODELS:
            msg = "copy_model = `{0}` but accepted values are {1}"
            raise ValueError(msg.format(copy_model, COPY_MODELS))
        if staging_batch < 1 or staging_latency_s < 0:
            raise ValueError("staging_batch must be positive and latency non-negative")

        self.num_flows = num_flows
        self.history_depth = history_depth
        self.num_cells = num_flows * history_depth
        self.region_len = self.num_cells * ENTRY_SIZE
        self.region = np.zeros(self.region_len, dtype=np.uint8)
        self.copy_model = copy_model
        self.staging_latency_s = staging_latency_s
        self.staging_batch = staging_batch
        self.check_icrc = check_icrc
        self.base_va = base_va
        self.rkey = rkey
        self.dest_qp = dest_qp
        self.start_psn = start_psn & MASK24
        self.counters = Counter()
        self._expected_psn = self.start_psn
        self._connected = False
        self._staging = []
        self._lock = threading.Lock()

    def handshake(self):
        """Grant write access to the single queue pair.

        Returns
        -------
        params : ConnectionParams

        """
        if self._connected:
            raise RuntimeError("Queue pair already connected")
        self._connected = True
        logger.info(
            "Registered region of %d cells (%d bytes) at %#x",
            self.num_cells,
            self.region_len,
            self.base_va,
        )
        return ConnectionParams(
            self.base_va, self.region_len, self.rkey, self.dest_qp, self.start_psn
        )

    def apply_write(self, frame):
        """Apply one RDMA WRITE-Only frame to the region.

        Frames with a wrong queue pair, rkey or target range, or that fail to
        parse, are dropped and counted. Out-of-order PSNs are applied and counted.

        Returns
        -------
        applied : bool

        """
        try:
            write = rocev2_decode(frame, check_icrc=self.check_icrc)
        except WireError as err:
            self.counters["dropped_parse"] += 1
            logger.debug("Dropped RoCEv2 frame: %s", err)
            return False
        if write.dest_qp != self.dest_qp:
            self.counters["dropped_qp"] += 1
            return False
        if write.rkey != self.rkey:
            self.counters["dropped_rkey"] += 1
            return False
        offset = write.virtual_addr - self.base_va
        if offset < 0 or offset + len(write.payload) > self.region_len:
            self.counters["dropped_bounds"] += 1
            return False

        if write.psn != self._expected_psn:
            self.counters["psn_out_of_order"] += 1
        self._expected_psn = (write.psn + 1) & MASK24
        data = np.frombuffer(write.payload, dtype=np.uint8)
        with self._lock:
            if self.copy_model == DIRECT:
                self.region[offset : offset + data.size] = data
            else:
                self._staging.append((offset, data))
                if len(self._staging) >= self.staging_batch:
                    self._flush_staging()
        self.counters["writes_applied"] += 1
        return True

    def _flush_staging(self):
        if not self._staging:
            return
        if self.staging_latency_s:
            time.sleep(self.staging_latency_s)
        for offset, data in self._staging:
            self.region[offset : offset + data.size] = data
        self._staging = []

    def barrier(self):
        """Epoch barrier: make every accepted write visible in the region."""
        with self._lock:
            self._flush_staging()

    def cell(self, index):
        start = index * ENTRY_SIZE
        return self.region[start : start + ENTRY_SIZE].tobytes()

    def decode_cell(self, index):
        return decode_entry(self.cell(index))

    def scan(self, bitmap=False):
        """Classify every cell of the region.

        Parameters
        ----------
        bitmap : bool, optional
            Include the per-cell states in the result. Default is False.

        Returns
        -------
        result : ScanResult

        """
        self.barrier()
        with self._lock:
            states = classify_cells(self.region.reshape(self.num_cells, ENTRY_SIZE))
        counts = np.bincount(states, minlength=len(CellState))
        return ScanResult(
            written=int(counts[CellState.WRITTEN]),
            empty=int(counts[CellState.EMPTY]),
            corrupt=int(counts[CellState.CORRUPT]),
            bitmap=states if bitmap else None,
        )

    def read_history(self, flow_id, five_tuple=None):
        """Written entries of a flow record in chronological order.

        The ring is rotated to start after the entry with the largest
        packet_count, which is the most recent since sums are cumulative.

        Parameters
        ----------
        flow_id : int

        five_tuple : FiveTuple, optional
            If given, entries of other flows that held this flow ID are dropped

        Returns
        -------
        entries : list of TelemetryEntry, at most history_depth long

        """
        if not 0 <= flow_id < self.num_flows:
            return []
        self.barrier()
        first = flow_id * self.history_depth
        slots = []
        for slot in range(self.history_depth):
            entry = self.decode_cell(first + slot)
            if isinstance(entry, CellState) or entry.flow_id != flow_id:
                continue
            if five_tuple is not None and entry.five_tuple != five_tuple:
                continue
            slots.append((slot, entry))
        if not slots:
            return []
        newest = max(slots, key=lambda se: se[1].packet_count)[0]
        depth = self.history_depth
        slots.sort(key=lambda se: (se[0] - newest - 1) % depth)
        return [e for _, e in slots]

    def scan_rows(self):
        """One CSV row per written cell, columns as in SCAN_CSV_COLUMNS."""
        states = self.scan(bitmap=True).bitmap
        rows = []
        for index in np.flatnonzero(states == CellState.WRITTEN):
            e = self.decode_cell(int(index))
            rows.append(
                (
                    int(index),
                    e.flow_id,
                    int(index) % self.history_depth,
                    e.packet_count,
                    *e.sums_iat,
                    *e.sums_ps,
                    str(e.five_tuple),
                )
            )
        return rows

    def write_scan_csv(self, path):
        rows = self.scan_rows()
        with open(path, "w", newline="") as fout:
            writer = csv.writer(fout)
            writer.writerow(SCAN_CSV_COLUMNS)
            writer.writerows(rows)
        return len(rows)

    @property
    def drops(self):
        c = self.counters
        return (
            c["dropped_parse"]
            + c["dropped_qp"]
            + c["dropped_rkey"]
            + c["dropped_bounds"]
        )

    def metrics(self):
        return dict(self.counters)

    def summary_metrics(self, scan=None):
        """Occupancy and counter summary of the region."""
        scan = self.scan() if scan is None else scan
        out = OrderedDict(
            num_cells=self.num_cells,
            written=scan.written,
            empty=scan.empty,
            corrupt=scan.corrupt,
            occupancy=scan.written / self.num_cells,
        )
        for key in ("writes_applied", "psn_out_of_order"):
            out[key] = self.counters[key]
        out["collector_drops"] = self.drops
        return out


def _moments(n, s1, s2, s3):
    if n == 0:
        return (Undefined.NO_PACKETS,) * 5
    mean = s1 / n
    if n == 1:
        return (mean,) + (Undefined.SINGLE_SAMPLE,) * 4
    var = (n * s2 - s1 * s1) / (n * n)
    std = math.sqrt(max(var, 0.0))
    cov = Undefined.ZERO_MEAN if s1 == 0 else std / mean
    if std == 0.0:
        skew = Undefined.ZERO_STD
    else:
        m3 = (n * n * s3 - 3 * n * s1 * s2 + 2 * s1 ** 3) / n ** 3
        skew = m3 / std ** 3
    return mean, var, std, cov, skew


def reconstruct_stats(e_prev, e):
    """Table of flow statistics from one entry or the difference of two.

    Parameters
    ----------
    e_prev : TelemetryEntry or None
        Earlier entry of the same flow. When None, absolute statistics since
        the start of the flow are returned.

    e : TelemetryEntry

    Returns
    -------
    stats : FlowStats
        Undefined statistics hold a member of Undefined. In absolute mode the
        inter-arrival statistics have n - 1 samples because the first packet has
        no predecessor; in interval mode every packet contributes one sample.
        Differences of cumulative sums wrap modulo 2^32.

    """
    if e_prev is None:
        n = e.packet_count
        n_iat = max(n - 1, 0)
        iat = e.sums_iat
        ps = e.sums_ps
    else:
        if e_prev.flow_id != e.flow_id:
            msg = "Entries of flows {0} and {1} cannot be differenced"
            raise ValueError(msg.format(e_prev.flow_id, e.flow_id))
        n = wrap32(e.packet_count - e_prev.packet_count)
        n_iat = n
        iat = [wrap32(a - b) for a, b in zip(e.sums_iat, e_prev.sums_iat)]
        ps = [wrap32(a - b) for a, b in zip(e.sums_ps, e_prev.sums_ps)]
    return FlowStats(n, *_moments(n_iat, *iat), *_moments(n, *ps), ps[0])


def flow_stats_series(entries):
    """Interval statistics between consecutive history entries of one flow."""
    return [reconstruct_stats(a, b) for a, b in zip(entries[:-1], entries[1:])]

