#!/usr/bin/env python3
"""Desk-scale pipeline: ensemble -> histogram -> summary (and figures).

Produces the qualitative picture at n = 1000: the ok-record densities
span hundreds of decades and the (E, M) mass concentrates in a handful
of cells.
"""

import argparse
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np

from heliumrr.cli import main as heliumrr_main
from heliumrr.ensemble import read_records


def run(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-points", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--out-dir", default="results")
    args = ap.parse_args(argv)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = out / "records.csv"
    histogram = out / "histogram.csv"

    cmd = ["ensemble", "--n-points", str(args.n_points),
           "--seed", str(args.seed), "--out", str(records)]
    if args.workers is not None:
        cmd += ["--workers", str(args.workers)]
    if heliumrr_main(cmd) != 0:
        return 1
    if heliumrr_main(["histogram", "--records", str(records),
                      "--out", str(histogram)]) != 0:
        return 1

    recs = [r for _, r in read_records(str(records))]
    ok = [r for r in recs if r.status == "ok"]
    vals = np.array([r.log10_rho for r in ok])
    print(f"records: {len(recs)}  ok: {len(ok)} "
          f"({100 * len(ok) / len(recs):.1f}%)")
    statuses = {}
    for r in recs:
        statuses[r.status] = statuses.get(r.status, 0) + 1
    print(f"statuses: {statuses}")
    print(f"log10 density: min {vals.min():.1f}  max {vals.max():.1f}  "
          f"span {vals.max() - vals.min():.1f} decades")

    if shutil.which("render"):
        for kind in ("surface", "heatmap", "zoom"):
            png = out / f"{kind}.png"
            subprocess.run(["render", "--kind", kind, "--in",
                            str(histogram), "--out", str(png)], check=True)
            print(f"wrote {png}")
    else:
        print("heliumrr-figures not installed; skipping figures")
    return 0


if __name__ == "__main__":
    sys.exit(run())
