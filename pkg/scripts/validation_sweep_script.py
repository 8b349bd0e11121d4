"""Script to sweep the fabric loss rate and record the mean cell discrepancy."""
import argparse
import os
from time import time

import numpy as np

from dfaflow.harness import DISCREPANCY_THRESHOLD, FabricConfig, repeat_validation
from dfaflow.traffic import TrafficSpec

OUTNAME = "validation_sweep.dat"
HEADER = "# loss_rate reorder_window mean_discrepancy min max validated\n"


def _sweep_row(spec, loss_rate, reorder_window, nruns, period_ns):
    fabric = FabricConfig(loss_rate=loss_rate, reorder_window=reorder_window)
    summary = repeat_validation(
        spec, fabric, runs=nruns, threshold=DISCREPANCY_THRESHOLD, period_ns=period_ns
    )
    d = np.array(summary.discrepancies)
    return (
        loss_rate,
        reorder_window,
        summary.mean_discrepancy,
        d.min(),
        d.max(),
        int(summary.validated),
    )


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("outdir", help="Output directory")
    parser.add_argument("-num_flows", help="Flows per run", type=int, default=12500)
    parser.add_argument("-npackets", help="Packets per flow", type=int, default=9)
    parser.add_argument("-gap_ns", help="Fixed packet gap", type=int, default=2100000)
    parser.add_argument("-period_ns", help="Report period", type=int, default=2000000)
    parser.add_argument("-nruns", help="Runs per loss rate", type=int, default=5)
    parser.add_argument("-reorder", help="Reorder window", type=int, default=0)
    parser.add_argument(
        "-loss_rates",
        help="Comma-separated loss rates",
        default="0,0.0001,0.0005,0.001,0.005",
    )
    args = parser.parse_args()

    start = time()
    spec = TrafficSpec(
        num_flows=args.num_flows,
        packets_per_flow=args.npackets,
        gap="fixed:{0}".format(args.gap_ns),
        seed=0,
    )
    loss_rates = [float(x) for x in args.loss_rates.split(",")]

    outname = os.path.join(args.outdir, OUTNAME)
    with open(outname, "w") as fout:
        fout.write(HEADER)
        for loss_rate in loss_rates:
            row = _sweep_row(spec, loss_rate, args.reorder, args.nruns, args.period_ns)
            fout.write("{0:g} {1:d} {2:.6e} {3:.6e} {4:.6e} {5:d}\n".format(*row))
            print("loss = {0:g}: mean discrepancy = {2:.6e}".format(*row))

    end = time()
    print("Runtime to sweep {0} loss rates = {1:.1f} seconds".format(
        len(loss_rates), end - start
    ))
