"""Command-line interface.

Subcommands: orbit (single-trajectory debugging), density (one point),
ensemble (the full experiment, resumable), histogram (reduction to the
(E, M) grid). Configuration precedence: built-in defaults, then the
--config JSON file, then command-line flags.

Exit codes: 0 success, 1 I/O failure, 2 dynamics failure (collision or
runaway), 3 degenerate input.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .dynamics import PhaseState, mechanical_energy, total_energy, \
    angular_momentum
from .ensemble import (EnsembleConfig, RECORD_HEADER, config_from_dict,
                       config_to_dict, format_record_row, iter_records,
                       load_resumable_records, read_records,
                       reduce_histogram, write_histogram_csv, write_manifest)
from .errors import CollisionError
from .integrator import Direction, StopReason, integrate
from .kepler import ManifoldPoint
from .measure import point_density

EXIT_OK = 0
EXIT_IO = 1
EXIT_DYNAMICS = 2
EXIT_DEGENERATE = 3

ORBIT_HEADER = ("t,r_x,r_y,v_x,v_y,xcm_x,xcm_y,vcm_x,vcm_y,acm_x,acm_y,"
                "E_mech,E_total,M")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _add_common(sp: argparse.ArgumentParser):
    sp.add_argument("--config", metavar="PATH", help="JSON config file")
    sp.add_argument("--seed", type=int, metavar="N")
    sp.add_argument("--n-points", type=int, metavar="N")
    sp.add_argument("--epsilon", type=float, metavar="X")
    sp.add_argument("--h0", type=float, metavar="X")
    sp.add_argument("--workers", type=int, metavar="N",
                    help="worker processes (default: available parallelism)")
    sp.add_argument("--out", metavar="PATH", help="output file")


def _vec(sp, name, help_, required=False, default=None):
    sp.add_argument(name, type=float, nargs=2, metavar=("X", "Y"),
                    help=help_, required=required, default=default)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="heliumrr",
        description="Two-electron atom with radiation reaction: trajectories "
                    "and invariant-density estimation.")
    sub = ap.add_subparsers(dest="command", required=True)

    orb = sub.add_parser("orbit", help="integrate one trajectory to CSV")
    _add_common(orb)
    _vec(orb, "--r0", "relative position", required=True)
    _vec(orb, "--v0", "relative velocity", required=True)
    _vec(orb, "--xcm", "cm position (default 0 0)")
    _vec(orb, "--vcm", "cm velocity (default 0 0)")
    _vec(orb, "--acm", "cm acceleration (default 0 0)")
    orb.add_argument("--duration", type=float, required=True)
    orb.add_argument("--direction", choices=["forward", "backward"],
                     default="forward")

    den = sub.add_parser("density",
                         help="density at one manifold point (one CSV row "
                              "on stdout)")
    _add_common(den)
    _vec(den, "--r0", "relative position", required=True)
    _vec(den, "--v0", "relative velocity", required=True)

    ens = sub.add_parser("ensemble",
                         help="run the full experiment (resumable)")
    _add_common(ens)

    his = sub.add_parser("histogram",
                         help="reduce a record file to the (E, M) histogram")
    _add_common(his)
    his.add_argument("--records", metavar="PATH", required=True)
    his.add_argument("--bins-e", type=int, metavar="N")
    his.add_argument("--bins-m", type=int, metavar="N")
    his.add_argument("--e-range", type=float, nargs=2, metavar=("A", "B"))
    his.add_argument("--m-range", type=float, nargs=2, metavar=("A", "B"))
    return ap


def resolve_config(args) -> EnsembleConfig:
    """defaults < config file < flags; raises ValueError on bad input."""
    doc = {}
    if args.config:
        with open(args.config) as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise ValueError("config file must hold a JSON object")
    for key, attr in (("seed", "seed"), ("n_points", "n_points"),
                      ("epsilon", "epsilon"), ("h0", "h0"),
                      ("workers", "workers")):
        val = getattr(args, attr.replace("-", "_"), None)
        if val is not None:
            doc[key] = val
    if getattr(args, "bins_e", None) is not None:
        doc["bins_e"] = args.bins_e
    if getattr(args, "bins_m", None) is not None:
        doc["bins_m"] = args.bins_m
    if getattr(args, "e_range", None) is not None:
        doc["e_range"] = list(args.e_range)
    if getattr(args, "m_range", None) is not None:
        doc["m_range"] = list(args.m_range)
    return config_from_dict(doc)


def cmd_orbit(args) -> int:
    cfg = resolve_config(args)
    p = cfg.params
    zero = [0.0, 0.0]
    s0 = PhaseState(np.array(args.r0), np.array(args.v0),
                    np.array(args.xcm or zero), np.array(args.vcm or zero),
                    np.array(args.acm or zero))
    direction = (Direction.FORWARD if args.direction == "forward"
                 else Direction.BACKWARD)
    out = args.out or "orbit.csv"
    try:
        fh = open(out, "w")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    with fh:
        fh.write(ORBIT_HEADER + "\n")
        if args.duration == 0.0:
            return EXIT_OK
        if args.duration < 0.0:
            print("error: duration must be >= 0", file=sys.stderr)
            return EXIT_DEGENERATE

        def sink(sample):
            y = sample.state
            try:
                em = mechanical_energy(y, p)
                et = total_energy(y, p)
            except CollisionError:
                em = et = math.nan
            row = [sample.t, *y.r, *y.v, *y.xcm, *y.vcm, *y.acm,
                   em, et, angular_momentum(y, p)]
            fh.write(",".join(_fmt(v) for v in row) + "\n")

        _, reason = integrate(s0, args.duration, direction, p, sink=sink)
    if reason is StopReason.COMPLETED:
        return EXIT_OK
    print(f"stopped early: {reason.value}", file=sys.stderr)
    return EXIT_DYNAMICS


def cmd_density(args) -> int:
    cfg = resolve_config(args)
    pt = ManifoldPoint(np.array(args.r0), np.array(args.v0))
    rec = point_density(pt, cfg.params, cfg.run)
    print(format_record_row(0, rec))
    if rec.status == "ok":
        return EXIT_OK
    print(f"status: {rec.status}", file=sys.stderr)
    return EXIT_DEGENERATE if rec.status == "degenerate" else EXIT_DYNAMICS


def _manifest_path(records_path: str) -> str:
    return records_path + ".manifest.json"


def cmd_ensemble(args) -> int:
    cfg = resolve_config(args)
    out = args.out or "records.csv"
    mpath = _manifest_path(out)
    start = 0
    try:
        if os.path.exists(out):
            if not os.path.exists(mpath):
                print(f"error: {out} exists but {mpath} is missing; "
                      "refusing to touch it", file=sys.stderr)
                return EXIT_IO
            with open(mpath) as fh:
                saved = json.load(fh)["config"]
            want = config_to_dict(cfg)
            saved.pop("workers", None)
            mine = dict(want)
            mine.pop("workers", None)
            if saved != mine:
                print(f"error: {mpath} was written with a different config; "
                      "not resuming", file=sys.stderr)
                return EXIT_IO
            records, clean = load_resumable_records(out)
            with open(out, "r+b") as fh:
                fh.truncate(clean)
            start = len(records)
            if start:
                print(f"resuming at index {start}", file=sys.stderr)
        else:
            with open(out, "w") as fh:
                fh.write(RECORD_HEADER + "\n")
            write_manifest(mpath, cfg, out)
        statuses: dict[str, int] = {}
        if start < cfg.n_points:
            with open(out, "a") as fh:
                for i, rec in iter_records(cfg, start):
                    fh.write(format_record_row(i, rec) + "\n")
                    fh.flush()
                    statuses[rec.status] = statuses.get(rec.status, 0) + 1
                    done = i + 1
                    if done % 25 == 0 or done == cfg.n_points:
                        print(f"\r{done}/{cfg.n_points}", end="",
                              file=sys.stderr)
                print(file=sys.stderr)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {out} ({cfg.n_points} records; new: {statuses})",
          file=sys.stderr)
    return EXIT_OK


def cmd_histogram(args) -> int:
    cfg = resolve_config(args)
    try:
        indexed = read_records(args.records)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    records = [rec for _, rec in indexed]
    ok = [r for r in records if r.status == "ok"]
    if not ok:
        print("error: no ok records to reduce", file=sys.stderr)
        return EXIT_DEGENERATE
    hist = reduce_histogram(records, cfg)
    out = args.out or "histogram.csv"
    try:
        write_histogram_csv(out, hist)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {out}: {len(ok)} ok records in "
          f"{int((hist.counts > 0).sum())} occupied cells, "
          f"{hist.overflow} overflow", file=sys.stderr)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "orbit":
            return cmd_orbit(args)
        if args.command == "density":
            return cmd_density(args)
        if args.command == "ensemble":
            return cmd_ensemble(args)
        if args.command == "histogram":
            return cmd_histogram(args)
    except (ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    raise AssertionError("unreachable")


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
