"""
"""
# flake8: noqa

from .core import FiveTuple, TelemetryEntry, encode_entry, decode_entry
from .reporter import Reporter
from .translator import Translator
from .collector import Collector, reconstruct_stats
from .traffic import TrafficSpec, gen_traffic, load_pcap_trace
from .harness import FabricConfig, run_pipeline, repeat_validation
from .harness import bench_payload_sweep, staged_vs_direct_compare
