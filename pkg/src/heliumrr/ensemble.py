"""Ensemble driver: sample N manifold points, estimate the density at each,
reduce to the (E, M) histogram, and persist everything as CSV.

Work is partitioned by sample index. Each index derives its own
counter-based random stream and its density evaluation is a pure function,
so the record sequence is identical for any worker count and any
scheduling; workers recompute their own sample points from (seed, index)
instead of being shipped arrays.
"""

from __future__ import annotations

import json
import math
import multiprocessing
import os
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from . import __version__
from .dynamics import Params
from .kepler import R_RANGE, V_RANGE, sample_manifold_point
from .measure import DensityRecord, DensityRunConfig, point_density

__all__ = [
    "EnsembleConfig",
    "Histogram2D",
    "run_ensemble",
    "iter_records",
    "reduce_histogram",
    "RECORD_HEADER",
    "HISTOGRAM_HEADER",
    "format_record_row",
    "parse_record_row",
    "read_records",
    "load_resumable_records",
    "write_histogram_csv",
    "read_histogram_csv",
    "write_manifest",
    "config_to_dict",
    "config_from_dict",
]

RECORD_HEADER = "index,r_x,r_y,v_x,v_y,E,M,log10_rho,status"
HISTOGRAM_HEADER = "E_lo,E_hi,M_lo,M_hi,log10_mass,count"


@dataclass
class EnsembleConfig:
    """Full experiment configuration; defaults are the production values."""

    n_points: int = 100_000
    seed: int = 0
    params: Params = field(default_factory=Params)
    r_range: tuple = R_RANGE
    v_range: tuple = V_RANGE
    rng: str = "philox"
    bins_e: int = 100
    bins_m: int = 100
    e_range: Optional[tuple] = None   # None: bounding box of the ok records
    m_range: Optional[tuple] = None
    workers: Optional[int] = None     # None: available parallelism
    run: DensityRunConfig = field(default_factory=DensityRunConfig)

    def __post_init__(self):
        if self.n_points < 1:
            raise ValueError("n_points must be >= 1")
        if self.bins_e < 1 or self.bins_m < 1:
            raise ValueError("bin counts must be >= 1")
        for rng_ in (self.r_range, self.v_range):
            if not (rng_[0] < rng_[1]):
                raise ValueError("sampling ranges must be nonempty")

    def resolved_workers(self) -> int:
        if self.workers is not None:
            return max(1, int(self.workers))
        return os.cpu_count() or 1


@dataclass
class Histogram2D:
    """Reduced density on the (E, M) plane, kept in log10 domain."""

    e_edges: np.ndarray          # (bins_e + 1,)
    m_edges: np.ndarray          # (bins_m + 1,)
    log10_mass: np.ndarray       # (bins_e, bins_m); -inf for empty cells
    counts: np.ndarray           # (bins_e, bins_m) int64
    overflow: int                # ok records outside the binning ranges


# ---------------------------------------------------------------------------
# configuration <-> flat dict (the JSON config / manifest format)

def config_to_dict(cfg: EnsembleConfig) -> dict:
    p = cfg.params
    return {
        "m": p.m, "e": p.e, "epsilon": p.eps, "h0": p.h0,
        "r_min": p.r_min, "r_max": p.r_max, "cube_side": p.cube_side,
        "renorm_threshold": p.renorm_threshold,
        "collision_floor": p.collision_floor,
        "n_points": cfg.n_points, "seed": cfg.seed, "rng": cfg.rng,
        "r_range": list(cfg.r_range), "v_range": list(cfg.v_range),
        "bins_e": cfg.bins_e, "bins_m": cfg.bins_m,
        "e_range": None if cfg.e_range is None else list(cfg.e_range),
        "m_range": None if cfg.m_range is None else list(cfg.m_range),
        "workers": cfg.workers,
        "transient_factor": cfg.run.transient_factor,
        "horizon_periods": cfg.run.horizon_periods,
    }


def config_from_dict(d: dict) -> EnsembleConfig:
    known = {"m", "e", "epsilon", "h0", "r_min", "r_max", "cube_side",
             "renorm_threshold", "collision_floor", "n_points", "seed",
             "rng", "r_range", "v_range", "bins_e", "bins_m", "e_range",
             "m_range", "workers", "transient_factor", "horizon_periods"}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    base = config_to_dict(EnsembleConfig())
    base.update(d)
    params = Params(m=base["m"], e=base["e"], eps=base["epsilon"],
                    h0=base["h0"], r_min=base["r_min"], r_max=base["r_max"],
                    cube_side=base["cube_side"],
                    renorm_threshold=base["renorm_threshold"],
                    collision_floor=base["collision_floor"])
    run = DensityRunConfig(transient_factor=base["transient_factor"],
                           horizon_periods=base["horizon_periods"])
    return EnsembleConfig(
        n_points=int(base["n_points"]), seed=int(base["seed"]),
        params=params, rng=base["rng"],
        r_range=tuple(base["r_range"]), v_range=tuple(base["v_range"]),
        bins_e=int(base["bins_e"]), bins_m=int(base["bins_m"]),
        e_range=None if base["e_range"] is None else tuple(base["e_range"]),
        m_range=None if base["m_range"] is None else tuple(base["m_range"]),
        workers=base["workers"], run=run)


def write_manifest(path: str, cfg: EnsembleConfig, records_path: str):
    doc = {"version": __version__, "records": os.path.basename(records_path),
           "config": config_to_dict(cfg)}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# record computation

def _compute_record(cfg: EnsembleConfig, index: int) -> DensityRecord:
    pt = sample_manifold_point(cfg.seed, index, cfg.params,
                               cfg.r_range, cfg.v_range, cfg.rng)
    return point_density(pt, cfg.params, cfg.run)


_WORKER_CFG: Optional[EnsembleConfig] = None


def _init_worker(cfg_dict: dict):
    global _WORKER_CFG
    _WORKER_CFG = config_from_dict(cfg_dict)


def _worker_compute(index: int) -> DensityRecord:
    return _compute_record(_WORKER_CFG, index)


def iter_records(cfg: EnsembleConfig,
                 start_index: int = 0) -> Iterator[tuple[int, DensityRecord]]:
    """Records for indices start_index..n_points-1, in index order.

    The worker pool only changes scheduling; every index's record is a pure
    function of (config, index), so output is identical for any pool size.
    """
    indices = range(start_index, cfg.n_points)
    workers = cfg.resolved_workers()
    if workers <= 1 or len(indices) <= 1:
        for i in indices:
            yield i, _compute_record(cfg, i)
        return
    cfg_dict = config_to_dict(cfg)
    chunk = max(1, min(16, len(indices) // (4 * workers) or 1))
    with multiprocessing.Pool(workers, initializer=_init_worker,
                              initargs=(cfg_dict,)) as pool:
        for i, rec in zip(indices, pool.imap(_worker_compute, indices,
                                             chunksize=chunk)):
            yield i, rec


def run_ensemble(cfg: EnsembleConfig, progress=None) -> list[DensityRecord]:
    """One record per sampled point, in sample-index order."""
    out = []
    for i, rec in iter_records(cfg):
        out.append(rec)
        if progress is not None:
            progress(i + 1, cfg.n_points, rec)
    return out


# ---------------------------------------------------------------------------
# record CSV

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def format_record_row(index: int, rec: DensityRecord) -> str:
    return ",".join([str(index), _fmt(rec.r0[0]), _fmt(rec.r0[1]),
                     _fmt(rec.v0[0]), _fmt(rec.v0[1]), _fmt(rec.E),
                     _fmt(rec.M), _fmt(rec.log10_rho), rec.status])


def parse_record_row(line: str) -> tuple[int, DensityRecord]:
    parts = line.rstrip("\n").split(",")
    if len(parts) != 9:
        raise ValueError(f"malformed record row: {line!r}")
    idx = int(parts[0])
    vals = [float(x) for x in parts[1:8]]
    status = parts[8]
    if status not in ("ok", "collision", "degenerate", "failed"):
        raise ValueError(f"unknown record status {status!r}")
    rec = DensityRecord(r0=np.array(vals[0:2]), v0=np.array(vals[2:4]),
                        E=vals[4], M=vals[5], log10_rho=vals[6],
                        status=status)
    return idx, rec


def read_records(path: str) -> list[tuple[int, DensityRecord]]:
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        if header != RECORD_HEADER:
            raise ValueError(f"unexpected record header {header!r}")
        return [parse_record_row(line) for line in fh if line.strip()]


def load_resumable_records(path: str):
    """Longest clean prefix of a (possibly truncated) record file.

    Returns (records, clean_byte_length). Records must form the contiguous
    index sequence 0..k-1; a malformed or partial tail line is dropped, and
    clean_byte_length marks where appending may resume.
    """
    records = []
    with open(path, "rb") as fh:
        header = fh.readline()
        if header.decode("utf-8", "replace").rstrip("\n") != RECORD_HEADER:
            raise ValueError(f"{path}: unexpected record header")
        clean = fh.tell()
        for raw in fh:
            if not raw.endswith(b"\n"):
                break
            try:
                idx, rec = parse_record_row(raw.decode("utf-8"))
            except ValueError:
                break
            if idx != len(records):
                raise ValueError(
                    f"{path}: record indices not contiguous at {idx}")
            records.append(rec)
            clean = fh.tell()
    return records, clean


# ---------------------------------------------------------------------------
# histogram reduction

def _log10_sum(values: Sequence[float]) -> float:
    """log10 of a sum of 10**v terms, max-shifted; safe across 600 decades."""
    m = max(values)
    if math.isinf(m):
        return m
    return m + math.log10(sum(10.0 ** (v - m) for v in values))


def _bin_index(x: float, lo: float, hi: float, nbins: int) -> int:
    """Index in [0, nbins), right edge inclusive; -1 when outside."""
    if not (lo <= x <= hi):
        return -1
    i = int((x - lo) / (hi - lo) * nbins)
    return nbins - 1 if i >= nbins else i


def _padded(lo: float, hi: float):
    if lo < hi:
        return lo, hi
    pad = max(1.0, abs(lo)) * 1e-9
    return lo - pad, hi + pad


def reduce_histogram(records: Sequence[DensityRecord],
                     cfg: EnsembleConfig) -> Histogram2D:
    """Accumulate ok records into (E, M) cells, summing density in log10.

    Cell mass is log10(sum of 10**log10_rho) over the cell's records, so
    both the sum and the per-cell mean (via the retained counts) are
    recoverable. Records outside the ranges land in the overflow tally.
    """
    ok = [r for r in records if r.status == "ok"]
    if not ok:
        raise ValueError("no ok records to reduce")
    if cfg.e_range is not None:
        e_lo, e_hi = cfg.e_range
    else:
        e_lo, e_hi = _padded(min(r.E for r in ok), max(r.E for r in ok))
    if cfg.m_range is not None:
        m_lo, m_hi = cfg.m_range
    else:
        m_lo, m_hi = _padded(min(r.M for r in ok), max(r.M for r in ok))
    if not (e_lo < e_hi and m_lo < m_hi):
        raise ValueError("histogram ranges must be nonempty")

    cells: dict[tuple[int, int], list[float]] = {}
    counts = np.zeros((cfg.bins_e, cfg.bins_m), dtype=np.int64)
    overflow = 0
    for r in ok:
        ie = _bin_index(r.E, e_lo, e_hi, cfg.bins_e)
        im = _bin_index(r.M, m_lo, m_hi, cfg.bins_m)
        if ie < 0 or im < 0:
            overflow += 1
            continue
        cells.setdefault((ie, im), []).append(r.log10_rho)
        counts[ie, im] += 1
    log10_mass = np.full((cfg.bins_e, cfg.bins_m), -np.inf)
    for (ie, im), vals in cells.items():
        log10_mass[ie, im] = _log10_sum(vals)
    return Histogram2D(e_edges=np.linspace(e_lo, e_hi, cfg.bins_e + 1),
                       m_edges=np.linspace(m_lo, m_hi, cfg.bins_m + 1),
                       log10_mass=log10_mass, counts=counts,
                       overflow=overflow)


def write_histogram_csv(path: str, hist: Histogram2D):
    with open(path, "w") as fh:
        fh.write(HISTOGRAM_HEADER + "\n")
        ne, nm = hist.counts.shape
        for ie in range(ne):
            for im in range(nm):
                fh.write(",".join([
                    _fmt(hist.e_edges[ie]), _fmt(hist.e_edges[ie + 1]),
                    _fmt(hist.m_edges[im]), _fmt(hist.m_edges[im + 1]),
                    _fmt(hist.log10_mass[ie, im]),
                    str(int(hist.counts[ie, im]))]) + "\n")


def read_histogram_csv(path: str) -> Histogram2D:
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        if header != HISTOGRAM_HEADER:
            raise ValueError(f"unexpected histogram header {header!r}")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    if not rows:
        raise ValueError(f"{path}: empty histogram")
    e_los = sorted({float(r[0]) for r in rows})
    m_los = sorted({float(r[2]) for r in rows})
    ne, nm = len(e_los), len(m_los)
    if ne * nm != len(rows):
        raise ValueError(f"{path}: not a full grid")
    e_edges = np.array(e_los + [max(float(r[1]) for r in rows)])
    m_edges = np.array(m_los + [max(float(r[3]) for r in rows)])
    log10_mass = np.full((ne, nm), -np.inf)
    counts = np.zeros((ne, nm), dtype=np.int64)
    e_idx = {v: i for i, v in enumerate(e_los)}
    m_idx = {v: i for i, v in enumerate(m_los)}
    for r in rows:
        ie, im = e_idx[float(r[0])], m_idx[float(r[2])]
        log10_mass[ie, im] = float(r[4])
        counts[ie, im] = int(r[5])
    return Histogram2D(e_edges=e_edges, m_edges=m_edges,
                       log10_mass=log10_mass, counts=counts, overflow=0)
