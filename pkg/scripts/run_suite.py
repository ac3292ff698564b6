#!/usr/bin/env python3
"""Drive every CLI subcommand end to end and summarize exit codes.

Default settings finish in about a minute on one core; --full switches to
the production grids and replica counts used by the acceptance tests (takes
on the order of fifteen minutes, dominated by the moment study).
"""

import argparse
import sys
import time

from tcilab.cli import main

FAST_GRID = ["--grid.L", "5", "--grid.nx", "81", "--grid.T", "0.25", "--grid.nt", "21"]
STUDY_GRID = ["--grid.L", "4", "--grid.nx", "81", "--grid.T", "0.25", "--grid.nt", "30"]


def suite(full):
    if full:
        return [
            ("verify-kernels", []),
            ("ito-isometry", []),
            ("convolution-check", ["--run.replicas", "8"]),
            ("moments", ["--moments.p_l2", "2,10", "--moments.p_sup", "2,12",
                         "--run.replicas", "2048"]),
            ("tci", []),
            ("lipschitz", []),
            ("simulate", []),
        ]
    return [
        ("verify-kernels", FAST_GRID),
        ("ito-isometry", ["--grid.L", "5", "--grid.nx", "205", "--grid.T", "1",
                          "--grid.nt", "400", "--run.replicas", "128"]),
        ("convolution-check", ["--run.replicas", "2"]),
        ("moments", STUDY_GRID + ["--moments.p_l2", "2", "--moments.p_sup", "2",
                                  "--moments.time_factor", "3",
                                  "--run.replicas", "256"]),
        ("tci", FAST_GRID + ["--run.replicas", "8", "--tci.amplitudes", "0.5,1"]),
        ("lipschitz", ["--run.replicas", "16"]),
        ("simulate", FAST_GRID + ["--run.replicas", "2"]),
    ]


def run(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--full", action="store_true",
                    help="production settings instead of the quick pass")
    ap.add_argument("--output-root", default="runs",
                    help="where run directories land (default: runs)")
    args = ap.parse_args(argv)

    rows = []
    for command, extra in suite(args.full):
        argv_cmd = [command, *extra, "--run.output_root", args.output_root]
        print(f"$ tcilab {' '.join(argv_cmd)}")
        t0 = time.monotonic()
        rc = main(argv_cmd)
        rows.append((command, rc, time.monotonic() - t0))
        print()

    width = max(len(r[0]) for r in rows)
    print(f"{'command':<{width}}  exit  seconds")
    for command, rc, dt in rows:
        print(f"{command:<{width}}  {rc:>4}  {dt:7.1f}")
    return max(rc for _, rc, _ in rows)


if __name__ == "__main__":
    sys.exit(run())
