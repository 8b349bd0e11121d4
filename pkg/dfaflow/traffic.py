"""Seeded synthetic packet traces and classic pcap ingestion."""
import decimal
import logging
from collections import OrderedDict, namedtuple

import numpy as np
from jax import random as jran

from .core import PROTO_TCP, PROTO_UDP, TCP_ACK, TCP_FIN, TCP_SYN, FiveTuple
from .utils import int_to_ip, ip_to_int

logger = logging.getLogger(__name__)

FIXED = "fixed"
UNIFORM = "uniform"
SRC_NET = ip_to_int("10.0.0.0")
DST_IP = ip_to_int("10.1.0.1")
DST_PORT = 5001
MAX_DRAW = 2 ** 31 - 1

DEFAULT_TRAFFIC_PARAMS = OrderedDict(
    num_flows=1000,
    packets_per_flow=12,
    gap="fixed:7000000",
    size="uniform:64:1500",
    tcp_fraction=0.5,
    start_jitter_ns=0,
    seed=0,
)

PacketEvent = namedtuple("PacketEvent", ["ts", "five_tuple", "size", "tcp_flags"])


class Distribution(namedtuple("Distribution", ["kind", "low", "high"])):
    """Integer distribution written `fixed:V` or `uniform:A:B` (A and B included)."""

    __slots__ = ()

    @classmethod
    def parse(cls, text):
        if isinstance(text, cls):
            return text
        parts = str(text).strip().split(":")
        try:
            values = [int(p) for p in parts[1:]]
        except ValueError:
            values = None
        if parts[0] == FIXED and values is not None and len(values) == 1:
            dist = cls(FIXED, values[0], values[0])
        elif parts[0] == UNIFORM and values is not None and len(values) == 2:
            dist = cls(UNIFORM, *values)
        else:
            msg = "Distribution `{0}` must read fixed:V or uniform:A:B"
            raise ValueError(msg.format(text))
        if not 0 <= dist.low <= dist.high <= MAX_DRAW:
            raise ValueError("Distribution `{0}` has invalid bounds".format(text))
        return dist

    def __str__(self):
        if self.kind == FIXED:
            return "fixed:{0}".format(self.low)
        return "uniform:{0}:{1}".format(self.low, self.high)

    def draw(self, ran_key, shape):
        if self.kind == FIXED or self.low == self.high:
            return np.full(shape, self.low, dtype=np.int64)
        draws = jran.randint(ran_key, shape, self.low, self.high + 1)
        return np.asarray(draws).astype(np.int64)


class TrafficSpec(
    namedtuple(
        "TrafficSpec",
        [
            "num_flows",
            "packets_per_flow",
            "gap",
            "size",
            "tcp_fraction",
            "seed",
            "start_jitter_ns",
        ],
    )
):
    """Parameters of a synthetic trace.

    Parameters
    ----------
    num_flows : int

    packets_per_flow : int

    gap : str or Distribution
        Inter-packet gap of a flow in ns

    size : str or Distribution
        Packet size in bytes, within 1..65535

    tcp_fraction : float
        Probability that a flow is TCP rather than UDP

    seed : int

    start_jitter_ns : int, optional
        Flow start times are uniform in [0, start_jitter_ns]. Default is 0.

    """

    __slots__ = ()

    def __new__(
        cls,
        num_flows=DEFAULT_TRAFFIC_PARAMS["num_flows"],
        packets_per_flow=DEFAULT_TRAFFIC_PARAMS["packets_per_flow"],
        gap=DEFAULT_TRAFFIC_PARAMS["gap"],
        size=DEFAULT_TRAFFIC_PARAMS["size"],
        tcp_fraction=DEFAULT_TRAFFIC_PARAMS["tcp_fraction"],
        seed=DEFAULT_TRAFFIC_PARAMS["seed"],
        start_jitter_ns=DEFAULT_TRAFFIC_PARAMS["start_jitter_ns"],
    ):
        gap = Distribution.parse(gap)
        size = Distribution.parse(size)
        if not 1 <= num_flows < 2 ** 24:
            raise ValueError("num_flows = {0} outside 1..2^24-1".format(num_flows))
        if packets_per_flow < 1:
            msg = "packets_per_flow = {0} must be positive"
            raise ValueError(msg.format(packets_per_flow))
        if size.low < 1 or size.high > 0xFFFF:
            raise ValueError("Packet sizes `{0}` outside 1..65535".format(size))
        if not 0.0 <= tcp_fraction <= 1.0:
            raise ValueError("tcp_fraction = {0} outside [0, 1]".format(tcp_fraction))
        if not 0 <= start_jitter_ns <= MAX_DRAW:
            raise ValueError("start_jitter_ns = {0} is invalid".format(start_jitter_ns))
        return super().__new__(
            cls,
            num_flows,
            packets_per_flow,
            gap,
            size,
            tcp_fraction,
            seed,
            start_jitter_ns,
        )

    @property
    def max_span_ns(self):
        """Upper bound on the time between the first and last packet of a flow."""
        return (self.packets_per_flow - 1) * self.gap.high


class PacketTrace:
    """Column store of a packet trace sorted by timestamp.

    Parameters
    ----------
    ts, flow, size, tcp_flags : ndarray of shape (n_packets, )
        Timestamp in ns, flow index, size in bytes and TCP flags of each packet

    five_tuples : list of FiveTuple
        five_tuples[i] is the identity of flow index i

    """

    def __init__(self, ts, flow, size, tcp_flags, five_tuples):
        self.ts = np.asarray(ts, dtype=np.int64)
        self.flow = np.asarray(flow, dtype=np.int64)
        self.size = np.asarray(size, dtype=np.int64)
        self.tcp_flags = np.asarray(tcp_flags, dtype=np.int64)
        self.five_tuples = list(five_tuples)
        assert np.all(np.diff(self.ts) >= 0), "trace must be sorted by timestamp"

    def __len__(self):
        return self.ts.size

    def __iter__(self):
        fts = self.five_tuples
        for ts, flow, size, flags in zip(
            self.ts.tolist(),
            self.flow.tolist(),
            self.size.tolist(),
            self.tcp_flags.tolist(),
        ):
            yield PacketEvent(ts, fts[flow], size, flags)

    def __eq__(self, other):
        if not isinstance(other, PacketTrace):
            return NotImplemented
        return (
            self.five_tuples == other.five_tuples
            and np.array_equal(self.ts, other.ts)
            and np.array_equal(self.flow, other.flow)
            and np.array_equal(self.size, other.size)
            and np.array_equal(self.tcp_flags, other.tcp_flags)
        )

    @property
    def num_flows(self):
        return len(self.five_tuples)

    @property
    def span_ns(self):
        return int(self.ts[-1] - self.ts[0]) if len(self) else 0

    def flow_spans(self):
        """Time between the first and last packet of every flow."""
        first = np.full(self.num_flows, np.iinfo(np.int64).max)
        last = np.zeros(self.num_flows, dtype=np.int64)
        np.minimum.at(first, self.flow, self.ts)
        np.maximum.at(last, self.flow, self.ts)
        return np.where(last >= first, last - first, 0)

    def flow_packets(self, index):
        """Events of flow `index` in trace order."""
        mask = self.flow == index
        ft = self.five_tuples[index]
        return [
            PacketEvent(int(t), ft, int(s), int(f))
            for t, s, f in zip(self.ts[mask], self.size[mask], self.tcp_flags[mask])
        ]


def gen_traffic(spec, ran_key=None):
    """Generate a synthetic packet trace.

    Parameters
    ----------
    spec : TrafficSpec

    ran_key : jax random key, optional
        If no random key is provided, jran.PRNGKey(spec.seed) is used

    Returns
    -------
    trace : PacketTrace
        Sorted by (timestamp, flow, packet). Flow i has source address
        10.0.0.0 + i + 1. TCP flows start with SYN and end with FIN|ACK,
        packets in between carry ACK.

    """
    if ran_key is None:
        ran_key = jran.PRNGKey(spec.seed)
    proto_key, port_key, start_key, gap_key, size_key = jran.split(ran_key, 5)
    n_flows, n_pkts = spec.num_flows, spec.packets_per_flow

    is_tcp = np.asarray(jran.uniform(proto_key, (n_flows,))) < spec.tcp_fraction
    src_ports = np.asarray(jran.randint(port_key, (n_flows,), 1024, 65536))
    if spec.start_jitter_ns:
        jitter = Distribution(UNIFORM, 0, spec.start_jitter_ns)
        start = jitter.draw(start_key, (n_flows,))
    else:
        start = np.zeros(n_flows, dtype=np.int64)
    gaps = spec.gap.draw(gap_key, (n_flows, n_pkts - 1))
    ts = start[:, None] + np.concatenate(
        (np.zeros((n_flows, 1), dtype=np.int64), np.cumsum(gaps, axis=1)), axis=1
    )
    sizes = spec.size.draw(size_key, (n_flows, n_pkts))

    flags = np.where(is_tcp[:, None], TCP_ACK, 0) * np.ones((1, n_pkts), dtype=np.int64)
    flags[is_tcp, 0] = TCP_SYN
    flags[is_tcp, -1] |= TCP_FIN

    five_tuples = [
        FiveTuple(
            SRC_NET + i + 1,
            DST_IP,
            int(src_ports[i]),
            DST_PORT,
            PROTO_TCP if is_tcp[i] else PROTO_UDP,
        )
        for i in range(n_flows)
    ]
    flow_idx = np.repeat(np.arange(n_flows), n_pkts)
    pkt_idx = np.tile(np.arange(n_pkts), n_flows)
    ts, sizes, flags = ts.ravel(), sizes.ravel(), flags.ravel()
    order = np.lexsort((pkt_idx, flow_idx, ts))
    return PacketTrace(
        ts[order], flow_idx[order], sizes[order], flags[order], five_tuples
    )


def load_pcap_trace(fn):
    """Read a classic pcap file with Ethernet link type into a PacketTrace.

    Only IPv4 TCP and UDP packets are kept. Timestamps are rebased to the first
    kept packet and sizes are IPv4 total lengths.

    """
    from scapy.all import IP, TCP, UDP, PcapReader

    ts, flow, size, flags = [], [], [], []
    index = OrderedDict()
    skipped = 0
    with PcapReader(fn) as pcap:
        for pkt in pcap:
            if IP not in pkt or (TCP not in pkt and UDP not in pkt):
                skipped += 1
                continue
            ip = pkt[IP]
            l4 = ip[TCP] if TCP in ip else ip[UDP]
            ft = FiveTuple.from_strings(ip.src, ip.dst, l4.sport, l4.dport, ip.proto)
            ts.append(int(decimal.Decimal(str(pkt.time)) * 10 ** 9))
            flow.append(index.setdefault(ft, len(index)))
            size.append(ip.len)
            flags.append(int(l4.flags) if TCP in ip else 0)
    if skipped:
        logger.info("Skipped %d non-TCP/UDP packets of %s", skipped, fn)
    if not ts:
        raise ValueError("No IPv4 TCP or UDP packets in {0}".format(fn))
    ts = np.asarray(ts, dtype=np.int64)
    order = np.argsort(ts, kind="stable")
    ts = ts[order] - ts[order[0]]
    return PacketTrace(
        ts,
        np.asarray(flow)[order],
        np.asarray(size)[order],
        np.asarray(flags)[order],
        list(index),
    )


def write_pcap_trace(trace, fn):
    """Write a PacketTrace as a classic pcap file, padding packets to their size."""
    from scapy.all import IP, TCP, UDP, Ether, Raw, wrpcap

    packets = []
    for ev in trace:
        ft = ev.five_tuple
        ip = IP(src=int_to_ip(ft.src_ip), dst=int_to_ip(ft.dst_ip), proto=ft.protocol)
        if ft.protocol == PROTO_TCP:
            l4 = TCP(sport=ft.src_port, dport=ft.dst_port, flags=ev.tcp_flags)
            header = 40
        else:
            l4 = UDP(sport=ft.src_port, dport=ft.dst_port)
            header = 28
        pkt = Ether() / ip / l4 / Raw(b"\x00" * max(ev.size - header, 0))
        pkt.time = decimal.Decimal(ev.ts) / 10 ** 9
        packets.append(pkt)
    wrpcap(fn, packets)
