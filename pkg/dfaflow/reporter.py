"""Flow-feature extraction stage of the pipeline.

A Reporter owns one or more ReporterPipeline objects, each modelling the
ingress/egress match-action stages of one switch pipeline, and a ControlAgent
that drains digests and installs or removes tracking rules.

"""
import enum
import heapq
import logging
from collections import Counter, OrderedDict, deque, namedtuple

import mmh3

from .bloom import DEFAULT_PARTITION_BITS, DEFAULT_PARTITIONS, CountingBloom
from .bloom import PartitionedBloom
from .core import PIPELINE_CAPACITY, PROTO_TCP, PROTO_UDP, TCP_FIN, TCP_SYN
from .core import ZERO_FEATURE_STATE, DtaReport, FeatureState, encode_five_tuple
from .core import feature_vector, iat32, ts32
from .logapprox import LogTableConfig, get_pow_function
from .utils import wrap32

logger = logging.getLogger(__name__)

DEFAULT_DIGEST_RATE = 1000

DEFAULT_REPORTER_PARAMS = OrderedDict(
    period_ns=20_000_000,
    pipelines=2,
    flow_capacity=PIPELINE_CAPACITY,
    f_bits=8,
    exact=False,
    digest_rate=0,
    idle_timeout_ns=0,
    reporter_id=1,
)


class DigestReason(enum.Enum):
    NEW_TCP_SYN = "NewTcpSyn"
    TCP_FIN = "TcpFin"
    NEW_UDP = "NewUdp"


Digest = namedtuple("Digest", ["five_tuple", "reason", "ts", "pipe"])
BridgedMeta = namedtuple("BridgedMeta", ["ingress_ts"])
IngestResult = namedtuple("IngestResult", ["forward", "report", "digest"])
ControlAction = namedtuple("ControlAction", ["kind", "five_tuple", "flow_id"])

INSTALL = "install_flow"
REMOVE = "remove_flow"
IGNORE = "ignore"


def accept_all(digest):
    return True


def update_features(fs, size_bytes, ts, pow_fn=None):
    """Apply one packet of a tracked flow to its register state.

    Parameters
    ----------
    fs : FeatureState

    size_bytes : int

    ts : int
        Ingress timestamp of the packet in ns

    pow_fn : callable, optional
        Addend function pow(v, k). Default is the f=8 lookup-table approximation.

    Returns
    -------
    fs_new : FeatureState
        The first packet of a flow adds no inter-arrival terms.
        All sums wrap modulo 2^32.

    """
    if pow_fn is None:
        pow_fn = get_pow_function()
    now32 = ts32(ts)
    sum_iat1, sum_iat2, sum_iat3 = fs.sum_iat1, fs.sum_iat2, fs.sum_iat3
    if fs.packet_count:
        iat = iat32(now32, fs.last_ts32)
        sum_iat1 = wrap32(sum_iat1 + pow_fn(iat, 1))
        sum_iat2 = wrap32(sum_iat2 + pow_fn(iat, 2))
        sum_iat3 = wrap32(sum_iat3 + pow_fn(iat, 3))
    return FeatureState(
        wrap32(fs.packet_count + 1),
        now32,
        sum_iat1,
        sum_iat2,
        sum_iat3,
        wrap32(fs.sum_ps1 + pow_fn(size_bytes, 1)),
        wrap32(fs.sum_ps2 + pow_fn(size_bytes, 2)),
        wrap32(fs.sum_ps3 + pow_fn(size_bytes, 3)),
    )


def make_report(flow_id, fs, five_tuple, reporter_id=1):
    """Build the DtaReport of a flow. The register state is left untouched."""
    return DtaReport(flow_id, feature_vector(fs, five_tuple), reporter_id)


def is_malformed(pkt):
    return not (
        1 <= pkt.size <= 0xFFFF
        and 0 <= pkt.tcp_flags <= 0xFF
        and pkt.ts >= 0
        and pkt.five_tuple.is_valid()
    )


class ReporterPipeline:
    """Ingress and egress stages of one pipeline.

    Parameters
    ----------
    index : int
        Position of the pipeline within its Reporter

    flow_capacity : int
        Size of the classification table

    period_ns : int
        Default monitoring period of installed flows

    pow_fn : callable
        Addend function used by update_features

    counters : collections.Counter
        Shared counter object of the owning Reporter

    ingress_clock, egress_clock : callable, optional
        Functions mapping a packet event to the timestamp seen by each stage.
        Default reads pkt.ts. Egress statistics always use the bridged
        ingress timestamp, the egress clock only stamps last_egress_ts.

    """

    def __init__(
        self,
        index,
        flow_capacity,
        period_ns,
        pow_fn,
        counters,
        reporter_id=1,
        bloom_partitions=DEFAULT_PARTITIONS,
        bloom_bits=DEFAULT_PARTITION_BITS,
        ingress_clock=None,
        egress_clock=None,
    ):
        self.index = index
        self.flow_capacity = flow_capacity
        self.period_ns = period_ns
        self.pow_fn = pow_fn
        self.counters = counters
        self.reporter_id = reporter_id
        self.flow_id_offset = index * flow_capacity
        self.ingress_clock = ingress_clock or _packet_ts
        self.egress_clock = egress_clock or _packet_ts
        self.last_egress_ts = None

        self.classification = {}
        self.bloom = PartitionedBloom(bloom_partitions, bloom_bits)
        self._free_ids = []
        self._next_fresh_id = 0
        self._state = {}
        self._five_tuple = {}
        self._last_report_ts = {}
        self._period = {}
        self._last_seen = {}

    def __len__(self):
        return len(self.classification)

    def global_flow_id(self, local_id):
        return self.flow_id_offset + local_id

    def feature_state(self, local_id):
        return self._state[local_id]

    def install_flow(self, five_tuple, ts, period_ns=None):
        """Install a tracking rule with the lowest free flow ID.

        Returns
        -------
        local_id : int or None
            None when the classification table is full

        """
        if five_tuple in self.classification:
            return self.classification[five_tuple]
        if len(self.classification) >= self.flow_capacity:
            return None
        if self._free_ids:
            local_id = heapq.heappop(self._free_ids)
            self.counters["reused_ids"] += 1
        else:
            local_id = self._next_fresh_id
            self._next_fresh_id += 1
        self.classification[five_tuple] = local_id
        self._state[local_id] = ZERO_FEATURE_STATE
        self._five_tuple[local_id] = five_tuple
        self._last_report_ts[local_id] = ts
        self._last_seen[local_id] = ts
        self._period[local_id] = self.period_ns if period_ns is None else period_ns
        return local_id

    def remove_flow(self, five_tuple):
        """Remove a tracking rule. The register state is zeroed on reuse."""
        local_id = self.classification.pop(five_tuple, None)
        if local_id is None:
            return None
        del self._five_tuple[local_id]
        del self._last_report_ts[local_id]
        del self._last_seen[local_id]
        del self._period[local_id]
        heapq.heappush(self._free_ids, local_id)
        return local_id

    def idle_flows(self, now, idle_timeout_ns):
        return [
            self._five_tuple[fid]
            for fid, seen in self._last_seen.items()
            if now - seen > idle_timeout_ns
        ]

    def ingress(self, pkt):
        """Classification, digest generation and report gating.

        Returns
        -------
        local_id : int or None

        digest : Digest or None

        report_due : bool

        meta : BridgedMeta

        """
        ts = self.ingress_clock(pkt)
        meta = BridgedMeta(ts)
        ft = pkt.five_tuple
        local_id = self.classification.get(ft)
        if local_id is None:
            return None, self._miss_digest(pkt, ts), False, meta

        digest = None
        if ft.protocol == PROTO_TCP and pkt.tcp_flags & TCP_FIN:
            digest = Digest(ft, DigestReason.TCP_FIN, ts, self.index)
        report_due = ts - self._last_report_ts[local_id] > self._period[local_id]
        if report_due:
            self._last_report_ts[local_id] = ts
        self._last_seen[local_id] = ts
        return local_id, digest, report_due, meta

    def _miss_digest(self, pkt, ts):
        ft = pkt.five_tuple
        if ft.protocol == PROTO_TCP:
            if pkt.tcp_flags & TCP_SYN:
                return Digest(ft, DigestReason.NEW_TCP_SYN, ts, self.index)
            return None
        if ft.protocol == PROTO_UDP:
            key = encode_five_tuple(ft)
            if key in self.bloom:
                self.counters["digests_suppressed_bloom"] += 1
                return None
            self.bloom.add(key)
            return Digest(ft, DigestReason.NEW_UDP, ts, self.index)
        return None

    def egress(self, local_id, pkt, meta, report_due):
        """Feature update and report construction, timed by the bridged metadata."""
        self.last_egress_ts = self.egress_clock(pkt)
        fs = update_features(
            self._state[local_id], pkt.size, meta.ingress_ts, self.pow_fn
        )
        self._state[local_id] = fs
        if not report_due:
            return None
        return make_report(
            self.global_flow_id(local_id),
            fs,
            self._five_tuple[local_id],
            self.reporter_id,
        )

    def process(self, pkt):
        local_id, digest, report_due, meta = self.ingress(pkt)
        report = None
        if local_id is not None:
            self.counters["tracked_packets"] += 1
            report = self.egress(local_id, pkt, meta, report_due)
        return IngestResult(True, report, digest)


class ControlAgent:
    """Control plane of a Reporter: drains digests and edits the tables.

    Parameters
    ----------
    pipelines : list of ReporterPipeline

    counters : collections.Counter

    digest_rate : float, optional
        Digests handled per simulated second. None or 0 lifts the cap.
        Default is 1000.

    policy : callable, optional
        Admission policy policy(digest) -> bool. Default accepts every flow.

    """

    def __init__(
        self, pipelines, counters, digest_rate=DEFAULT_DIGEST_RATE, policy=None
    ):
        self.pipelines = pipelines
        self.counters = counters
        self.digest_rate = digest_rate or None
        self.policy = policy or accept_all
        self.queue = deque()
        self.counting_blooms = [
            CountingBloom(p.bloom.num_partitions, p.bloom.num_bits) for p in pipelines
        ]
        self._burst = max(1.0, float(self.digest_rate or 1))
        self._tokens = self._burst
        self._last_refill = None

    def submit(self, digest):
        self.queue.append(digest)

    def poll(self, now):
        """Handle queued digests allowed by the rate cap at simulated time now."""
        actions = []
        if self.digest_rate is not None:
            self._refill(now)
        while self.queue:
            if self.digest_rate is not None:
                if self._tokens < 1.0:
                    break
                self._tokens -= 1.0
            actions.append(self.handle_digest(self.queue.popleft(), now))
        return actions

    def _refill(self, now):
        if self._last_refill is not None:
            gained = (now - self._last_refill) * self.digest_rate / 1e9
            self._tokens = min(self._burst, self._tokens + gained)
        self._last_refill = now

    def handle_digest(self, digest, now=None):
        """Turn one digest into a table edit.

        Returns
        -------
        action : ControlAction
            kind is install_flow, remove_flow or ignore

        """
        now = digest.ts if now is None else now
        pipe = self.pipelines[digest.pipe]
        ft = digest.five_tuple
        if digest.reason is DigestReason.NEW_UDP:
            self.counting_blooms[digest.pipe].add(encode_five_tuple(ft))

        if digest.reason is DigestReason.TCP_FIN:
            local_id = pipe.remove_flow(ft)
            if local_id is None:
                return ControlAction(IGNORE, ft, None)
            self.counters["removals"] += 1
            return ControlAction(REMOVE, ft, pipe.global_flow_id(local_id))

        if ft in pipe.classification:
            flow_id = pipe.global_flow_id(pipe.classification[ft])
            return ControlAction(IGNORE, ft, flow_id)
        if not self.policy(digest):
            self.counters["rejected_policy"] += 1
            return ControlAction(IGNORE, ft, None)
        local_id = pipe.install_flow(ft, now)
        if local_id is None:
            self.counters["rejected_capacity"] += 1
            logger.debug("Pipeline %d full, rejected flow %s", pipe.index, ft)
            return ControlAction(IGNORE, ft, None)
        self.counters["installs"] += 1
        return ControlAction(INSTALL, ft, pipe.global_flow_id(local_id))

    def remove_flow(self, pipe_index, five_tuple):
        """Remove a flow, clearing UDP flows from both bloom filters."""
        pipe = self.pipelines[pipe_index]
        local_id = pipe.remove_flow(five_tuple)
        if local_id is None:
            return None
        if five_tuple.protocol == PROTO_UDP:
            counting = self.counting_blooms[pipe_index]
            counting.remove(encode_five_tuple(five_tuple))
            counting.rebuild(pipe.bloom)
            for pending in self.queue:
                is_udp = pending.reason is DigestReason.NEW_UDP
                if pending.pipe == pipe_index and is_udp:
                    pipe.bloom.add(encode_five_tuple(pending.five_tuple))
        return local_id


class Reporter:
    """Flow-feature extractor with several pipelines and one control agent.

    Parameters
    ----------
    period_ns : int, optional
        Default monitoring period. Default is 20 ms.

    pipelines : int, optional
        Default is 2

    flow_capacity : int, optional
        Classification table entries per pipeline. Default is 2^17.

    f_bits : int, optional
        Fractional bits of the lookup-table approximation. Default is 8.

    exact : bool, optional
        Replace the approximation by exact powers modulo 2^32. Default is False.

    digest_rate : float, optional
        Digest rate cap per simulated second, 0 or None for no cap.
        Default is DEFAULT_DIGEST_RATE.

    idle_timeout_ns : int, optional
        Remove flows idle for longer than this. Default is 0, meaning never.

    reporter_id : int, optional
        16-bit identifier carried in every report. Default is 1.

    policy : callable, optional
        Admission policy of the control agent

    """

    def __init__(
        self,
        period_ns=DEFAULT_REPORTER_PARAMS["period_ns"],
        pipelines=DEFAULT_REPORTER_PARAMS["pipelines"],
        flow_capacity=DEFAULT_REPORTER_PARAMS["flow_capacity"],
        f_bits=DEFAULT_REPORTER_PARAMS["f_bits"],
        exact=DEFAULT_REPORTER_PARAMS["exact"],
        digest_rate=DEFAULT_DIGEST_RATE,
        idle_timeout_ns=DEFAULT_REPORTER_PARAMS["idle_timeout_ns"],
        reporter_id=DEFAULT_REPORTER_PARAMS["reporter_id"],
        policy=None,
        bloom_partitions=DEFAULT_PARTITIONS,
        bloom_bits=DEFAULT_PARTITION_BITS,
        ingress_clock=None,
        egress_clock=None,
    ):
        if pipelines < 1:
            raise ValueError("pipelines = {0} must be positive".format(pipelines))
        if not 1 <= flow_capacity <= PIPELINE_CAPACITY:
            msg = "flow_capacity = {0} but accepted values are 1..{1}"
            raise ValueError(msg.format(flow_capacity, PIPELINE_CAPACITY))
        if period_ns < 0:
            raise ValueError("period_ns = {0} must be non-negative".format(period_ns))
        if not 0 <= reporter_id <= 0xFFFF:
            raise ValueError("reporter_id = {0} is not 16-bit".format(reporter_id))

        self.period_ns = period_ns
        self.flow_capacity = flow_capacity
        self.idle_timeout_ns = idle_timeout_ns
        self.reporter_id = reporter_id
        self.pow_fn = get_pow_function(LogTableConfig(f_bits), exact=exact)
        self.counters = Counter()
        self.pipelines = [
            ReporterPipeline(
                i,
                flow_capacity,
                period_ns,
                self.pow_fn,
                self.counters,
                reporter_id=reporter_id,
                bloom_partitions=bloom_partitions,
                bloom_bits=bloom_bits,
                ingress_clock=ingress_clock,
                egress_clock=egress_clock,
            )
            for i in range(pipelines)
        ]
        self.control = ControlAgent(
            self.pipelines, self.counters, digest_rate=digest_rate, policy=policy
        )
        self._last_sweep = None

    def select_pipeline(self, five_tuple):
        key = encode_five_tuple(five_tuple)
        return mmh3.hash(key, 0, signed=False) % len(self.pipelines)

    def ingest_packet(self, pkt):
        """Process one packet event.

        Parameters
        ----------
        pkt : PacketEvent
            Object with attributes five_tuple, size, tcp_flags and ts

        Returns
        -------
        result : IngestResult
            forward is always True. report is a DtaReport when gating fired,
            digest is the Digest queued for the control agent, if any.

        """
        self.counters["packets"] += 1
        if is_malformed(pkt):
            self.counters["malformed"] += 1
            return IngestResult(True, None, None)
        pipe = self.pipelines[self.select_pipeline(pkt.five_tuple)]
        result = pipe.process(pkt)
        if result.report is not None:
            self.counters["reports"] += 1
        if result.digest is not None:
            self.counters["digests_" + result.digest.reason.value] += 1
            self.control.submit(result.digest)
        return result

    def poll(self, now):
        """Let the control agent run at simulated time now."""
        actions = self.control.poll(now)
        if self.idle_timeout_ns:
            last = self._last_sweep
            if last is None or now - last >= self.idle_timeout_ns:
                self.sweep_idle(now)
        return actions

    def sweep_idle(self, now):
        removed = []
        for pipe in self.pipelines:
            for ft in pipe.idle_flows(now, self.idle_timeout_ns):
                self.control.remove_flow(pipe.index, ft)
                removed.append(ft)
        self.counters["idle_removals"] += len(removed)
        self._last_sweep = now
        return removed

    def install_flow(self, five_tuple, ts, period_ns=None):
        """Install a flow directly, bypassing the digest channel.

        Returns
        -------
        flow_id : int or None
            Global flow ID, None when the pipeline is full

        """
        pipe = self.pipelines[self.select_pipeline(five_tuple)]
        local_id = pipe.install_flow(five_tuple, ts, period_ns=period_ns)
        if local_id is None:
            self.counters["rejected_capacity"] += 1
            return None
        self.counters["installs"] += 1
        return pipe.global_flow_id(local_id)

    def remove_flow(self, five_tuple):
        idx = self.select_pipeline(five_tuple)
        local_id = self.control.remove_flow(idx, five_tuple)
        if local_id is None:
            return None
        self.counters["removals"] += 1
        return self.pipelines[idx].global_flow_id(local_id)

    def flow_id_of(self, five_tuple):
        pipe = self.pipelines[self.select_pipeline(five_tuple)]
        local_id = pipe.classification.get(five_tuple)
        return None if local_id is None else pipe.global_flow_id(local_id)

    def feature_state(self, flow_id):
        pipe = self.pipelines[flow_id // self.flow_capacity]
        return pipe.feature_state(flow_id % self.flow_capacity)

    @property
    def tracked_flows(self):
        return sum(len(p) for p in self.pipelines)

    def metrics(self):
        out = dict(self.counters)
        out["tracked_flows"] = self.tracked_flows
        out["pending_digests"] = len(self.control.queue)
        return out


def _packet_ts(pkt):
    return pkt.ts
