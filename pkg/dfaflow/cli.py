"""Command-line entry point of dfaflow.

Exit codes are 0 on success, 1 for a failed validation or an undecodable frame
and 2 for usage or configuration errors.

"""
import argparse
import logging
import sys

from .config import load_config
from .harness import BENCH_CSV_COLUMNS, COMPARE_CSV_COLUMNS, DISCREPANCY_THRESHOLD
from .harness import RUN_CSV_COLUMNS, bench_payload_sweep
from .harness import load_hardware_reference, run_row, staged_vs_direct_compare
from .harness import write_csv
from .utils import parse_size_list
from .wire import ROCE_PAYLOAD_SIZES, WireError, classify_frame, format_dta
from .wire import format_rocev2, load_hex_frames

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def _size_list(text):
    try:
        sizes = parse_size_list(text)
    except ValueError as err:
        raise argparse.ArgumentTypeError(str(err))
    bad = [s for s in sizes if s not in ROCE_PAYLOAD_SIZES]
    if bad:
        msg = "unsupported payload sizes {0}, accepted sizes are {1}"
        raise argparse.ArgumentTypeError(msg.format(bad, list(ROCE_PAYLOAD_SIZES)))
    return sizes


def _positive_float(text):
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError("{0} is not positive".format(text))
    return value


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dfaflow",
        description="Flow telemetry pipeline: Reporter, Translator and Collector.",
    )
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="Increase log verbosity"
    )
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True

    run = subparsers.add_parser(
        "run", help="Validate written memory cells against the reports sent"
    )
    run.add_argument("config", nargs="?", help="INI configuration file")
    run.add_argument(
        "--threshold",
        type=float,
        default=DISCREPANCY_THRESHOLD,
        help="Largest accepted discrepancy. Default is 0.001.",
    )
    run.add_argument("--csv", help="Write the run summary as CSV to this path")
    run.add_argument("--scan-csv", help="Write every written cell as CSV to this path")
    run.set_defaults(func=cmd_run)

    bench = subparsers.add_parser(
        "bench", help="Software-scale write rate per RoCEv2 payload size"
    )
    bench.add_argument(
        "--sizes",
        type=_size_list,
        default=list(ROCE_PAYLOAD_SIZES),
        help="Comma-separated payload sizes in bytes. Default is 8,16,32,64,128.",
    )
    bench.add_argument(
        "--duration",
        type=_positive_float,
        default=1.0,
        help="Seconds per payload size. Default is 1.",
    )
    bench.add_argument("--out", help="Write the rows as CSV to this path")
    bench.set_defaults(func=cmd_bench)

    compare = subparsers.add_parser(
        "compare", help="64-byte write rate of the direct and staged copy models"
    )
    compare.add_argument(
        "--duration",
        type=_positive_float,
        default=1.0,
        help="Seconds per copy model. Default is 1.",
    )
    compare.add_argument(
        "--staging-latency-us",
        type=float,
        default=1000.0,
        help="Latency paid per staged batch in microseconds. Default is 1000.",
    )
    compare.add_argument("--out", help="Write the rows as CSV to this path")
    compare.set_defaults(func=cmd_compare)

    decode = subparsers.add_parser(
        "decode", help="Print the fields of telemetry or RoCEv2 frames"
    )
    source = decode.add_mutually_exclusive_group(required=True)
    source.add_argument("--hex", help="One frame as a hex string")
    source.add_argument(
        "--file", help="Text file with one hex frame per line, # starts a comment"
    )
    decode.set_defaults(func=cmd_decode)
    return parser


def cmd_run(args):
    try:
        config = load_config(args.config)
        pipeline, trace = config.build_pipeline()
    except (ValueError, OSError) as err:
        print("error: {0}".format(err), file=sys.stderr)
        return EXIT_USAGE

    metrics = pipeline.run(trace)
    for name, value in zip(RUN_CSV_COLUMNS, run_row(metrics)):
        print("{0:<18} {1}".format(name, value))
    if args.csv:
        write_csv(args.csv, RUN_CSV_COLUMNS, [run_row(metrics)])
    if args.scan_csv:
        pipeline.collector.write_scan_csv(args.scan_csv)

    if metrics.discrepancy <= args.threshold:
        print("validated: discrepancy within {0}".format(args.threshold))
        return EXIT_OK
    print("FAILED: discrepancy above {0}".format(args.threshold))
    return EXIT_FAILED


def _reference_lines(mode):
    ref = load_hardware_reference()
    lines = []
    for row in ref[ref["mode"] == mode]:
        msg = "# hardware reference {0} {1:>3d} B: {2:g} M msgs/s, {3:g} Gbps"
        lines.append(
            msg.format(
                mode, row["size_bytes"], row["mmsgs_per_sec"], row["payload_gbps"]
            )
        )
    return lines


def cmd_bench(args):
    rows = bench_payload_sweep(args.sizes, args.duration)
    print("software-scale write rates")
    print("{0:>10} {1:>16} {2:>14}".format(*BENCH_CSV_COLUMNS))
    for row in rows:
        print("{0:>10d} {1:>16.3f} {2:>14.6f}".format(*row))
    print("\n".join(_reference_lines("gdr")))
    if args.out:
        write_csv(args.out, BENCH_CSV_COLUMNS, rows)
    return EXIT_OK


def cmd_compare(args):
    result = staged_vs_direct_compare(args.duration, args.staging_latency_us * 1e-6)
    print("software-scale 64 B write rates")
    for mode, rate in result.rows:
        print("{0:<8} {1:>16.3f}".format(mode, rate))
    print("direct / staged = {0:.3f}".format(result.ratio))
    print("# hardware reference ratio = {0:.3f}".format(result.reference_ratio))
    if args.out:
        write_csv(args.out, COMPARE_CSV_COLUMNS, result.rows)
    return EXIT_OK


def _format_frame(frame):
    kind = classify_frame(frame)
    if kind == "dta":
        return format_dta(frame)
    if kind == "rocev2":
        return format_rocev2(frame)
    raise WireError("frame is neither DTA nor RoCEv2")


def cmd_decode(args):
    try:
        frames = [bytes.fromhex(args.hex)] if args.hex else load_hex_frames(args.file)
    except (ValueError, OSError) as err:
        print("error: {0}".format(err), file=sys.stderr)
        return EXIT_USAGE

    status = EXIT_OK
    for i, frame in enumerate(frames):
        if len(frames) > 1:
            print("frame {0}".format(i))
        try:
            print(_format_frame(frame))
        except WireError as err:
            print("parse error: {0}: {1}".format(type(err).__name__, err))
            status = EXIT_FAILED
    return status


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return err.code if isinstance(err.code, int) else EXIT_USAGE
    level = max(logging.WARNING - 10 * args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
