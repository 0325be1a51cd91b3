"""Reader for the histogram CSV written by `heliumrr histogram`.

Format: header `E_lo,E_hi,M_lo,M_hi,log10_mass,count`, one row per grid
cell, E-major order; empty cells carry -inf mass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HEADER = "E_lo,E_hi,M_lo,M_hi,log10_mass,count"


@dataclass
class HistogramGrid:
    e_edges: np.ndarray       # (ne + 1,)
    m_edges: np.ndarray       # (nm + 1,)
    log10_mass: np.ndarray    # (ne, nm), -inf where empty
    counts: np.ndarray        # (ne, nm)

    @property
    def e_centers(self):
        return 0.5 * (self.e_edges[:-1] + self.e_edges[1:])

    @property
    def m_centers(self):
        return 0.5 * (self.m_edges[:-1] + self.m_edges[1:])


def read_histogram(path: str) -> HistogramGrid:
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        if header != HEADER:
            raise ValueError(f"{path}: expected header {HEADER!r}, "
                             f"got {header!r}")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    if not rows:
        raise ValueError(f"{path}: no cells")
    if any(len(r) != 6 for r in rows):
        raise ValueError(f"{path}: malformed row")
    e_los = sorted({float(r[0]) for r in rows})
    m_los = sorted({float(r[2]) for r in rows})
    ne, nm = len(e_los), len(m_los)
    if ne * nm != len(rows):
        raise ValueError(f"{path}: rows do not form a full grid")
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
    return HistogramGrid(e_edges, m_edges, log10_mass, counts)
