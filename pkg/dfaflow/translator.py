"""Telemetry-to-RDMA translation stage.

The Translator parses telemetry frames, picks the next history slot of the flow,
maps (flow_id, slot) into the Collector region and emits one RDMA WRITE-Only
frame carrying the 64-byte entry.

"""
import logging
from collections import Counter, namedtuple

import numpy as np

from .core import ENTRY_SIZE, HISTORY_DEPTH, encode_entry, make_entry
from .utils import MASK24
from .wire import ROCE_ADDRESSING, NotDta, WireError, dta_decode
from .wire import rocev2_encode_write_only

logger = logging.getLogger(__name__)

WRITE = "write"
FORWARD = "forward"
DROP = "drop"

TranslateResult = namedtuple("TranslateResult", ["action", "frame"])


class QueuePairState:
    """Sender side of the single queue pair towards the Collector."""

    def __init__(self, dest_qp, rkey, region_base, region_len, next_psn=0):
        self.dest_qp = dest_qp
        self.rkey = rkey
        self.region_base = region_base
        self.region_len = region_len
        self.next_psn = next_psn & MASK24

    @classmethod
    def from_params(cls, params):
        return cls(
            params.dest_qp,
            params.rkey,
            params.base_va,
            params.region_len,
            params.start_psn,
        )

    def take_psn(self):
        psn = self.next_psn
        self.next_psn = (psn + 1) & MASK24
        return psn


class HistoryCounters:
    """One 8-bit round-robin slot counter per flow ID.

    Parameters
    ----------
    num_flows : int

    history_depth : int, optional
        Number of slots D per flow, at most 255. Default is 10.

    """

    def __init__(self, num_flows, history_depth=HISTORY_DEPTH):
        if not 1 <= history_depth <= 0xFF:
            msg = "history_depth = {0} does not fit an 8-bit counter"
            raise ValueError(msg.format(history_depth))
        self.history_depth = history_depth
        self.counters = np.zeros(num_flows, dtype=np.uint8)

    def __len__(self):
        return self.counters.size

    def peek(self, flow_id):
        return int(self.counters[flow_id])

    def next_slot(self, flow_id):
        """Return the current slot of flow_id and advance it, wrapping at D."""
        slot = int(self.counters[flow_id])
        self.counters[flow_id] = (slot + 1) % self.history_depth
        return slot


def map_address(flow_id, slot, region_base, region_len, history_depth=HISTORY_DEPTH):
    """Virtual address of history slot `slot` of flow `flow_id`.

    Raises
    ------
    ValueError
        When the 64-byte cell does not lie inside the region

    """
    if not 0 <= slot < history_depth:
        raise ValueError("slot = {0} outside 0..{1}".format(slot, history_depth - 1))
    offset = (flow_id * history_depth + slot) * ENTRY_SIZE
    if flow_id < 0 or offset + ENTRY_SIZE > region_len:
        msg = "Cell of flow {0} slot {1} lies outside a region of {2} bytes"
        raise ValueError(msg.format(flow_id, slot, region_len))
    return region_base + offset


class Translator:
    """Telemetry to RDMA WRITE-Only rewriter.

    Parameters
    ----------
    num_flows : int
        Flow IDs accepted, 0 .. num_flows - 1

    history_depth : int, optional
        Default is 10

    net : NetAddressing, optional
        Addressing of the emitted RoCEv2 frames

    """

    def __init__(self, num_flows, history_depth=HISTORY_DEPTH, net=ROCE_ADDRESSING):
        self.num_flows = num_flows
        self.history_depth = history_depth
        self.net = net
        self.history = HistoryCounters(num_flows, history_depth)
        self.qp = None
        self.counters = Counter()

    def connect(self, params):
        """Take the Collector handshake parameters into the queue-pair state."""
        self.qp = QueuePairState.from_params(params)
        logger.info(
            "Connected to QP %d, region of %d bytes at %#x",
            self.qp.dest_qp,
            self.qp.region_len,
            self.qp.region_base,
        )

    def _require_connection(self):
        if self.qp is None:
            raise RuntimeError("Translator used before connect()")

    def next_history_slot(self, flow_id, advance=True):
        """Return the next slot of flow_id, or None for an out-of-range flow.

        With advance=False the slot is returned without moving the counter.
        """
        if not 0 <= flow_id < self.num_flows:
            self.counters["dropped_flow_range"] += 1
            logger.debug("Flow ID %d outside 0..%d", flow_id, self.num_flows - 1)
            return None
        if not advance:
            return self.history.peek(flow_id)
        return self.history.next_slot(flow_id)

    def map_address(self, flow_id, slot):
        self._require_connection()
        return map_address(
            flow_id, slot, self.qp.region_base, self.qp.region_len, self.history_depth
        )

    def translate(self, frame):
        """Rewrite one telemetry frame.

        Returns
        -------
        result : TranslateResult
            action is "write" with the RoCEv2 frame, "forward" with the input
            frame for non-telemetry traffic, or "drop" with frame None

        """
        self._require_connection()
        try:
            report = dta_decode(frame)
        except NotDta:
            self.counters["forwarded"] += 1
            return TranslateResult(FORWARD, frame)
        except WireError as err:
            self.counters["dropped_parse"] += 1
            logger.debug("Dropped malformed telemetry frame: %s", err)
            return TranslateResult(DROP, None)

        flow_id = report.flow_id
        slot = self.next_history_slot(flow_id, advance=False)
        if slot is None:
            return TranslateResult(DROP, None)
        try:
            va = self.map_address(flow_id, slot)
        except ValueError as err:
            self.counters["dropped_bounds"] += 1
            logger.debug("%s", err)
            return TranslateResult(DROP, None)

        self.next_history_slot(flow_id)
        payload = encode_entry(make_entry(flow_id, report.features))
        self.counters["translated"] += 1
        return TranslateResult(WRITE, self._write(payload, va))

    def emit_write(self, payload, virtual_addr):
        """Emit a raw WRITE-Only frame of 8 to 128 bytes on the queue pair."""
        self._require_connection()
        return self._write(payload, virtual_addr)

    def _write(self, payload, va):
        qp = self.qp
        frame = rocev2_encode_write_only(
            va, qp.rkey, qp.dest_qp, qp.next_psn, payload, net=self.net
        )
        qp.take_psn()
        return frame

    @property
    def drops(self):
        c = self.counters
        return c["dropped_parse"] + c["dropped_bounds"] + c["dropped_flow_range"]

    def metrics(self):
        out = dict(self.counters)
        if self.qp is not None:
            out["next_psn"] = self.qp.next_psn
        return out
