"""The three figure kinds rendered from a histogram grid.

surface  - linear density over the (E, M) rectangle; with the measure
           concentrated in a tiny region, this shows a single spike.
heatmap  - the whole rectangle with log10 density mapped linearly onto a
           gray scale spanning the data's full range (hundreds of decades).
zoom     - a restricted window with the ordinate in decimal log scale.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from typing import Optional

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .histogram import HistogramGrid, read_histogram  # noqa: E402

KINDS = ("surface", "heatmap", "zoom")


@dataclass
class FigureSpec:
    input_path: str
    kind: str
    output_path: str
    e_range: Optional[tuple] = None
    m_range: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}")


def gray_levels(log10_mass, vmin: float, vmax: float) -> np.ndarray:
    """Linear map of log10 mass onto [0, 1]; empty cells stay NaN.

    Linearity in the log is the whole point: cells 300 decades apart must
    land on distinct gray levels instead of saturating.
    """
    x = np.asarray(log10_mass, dtype=np.float64)
    out = np.full(x.shape, np.nan)
    finite = np.isfinite(x)
    if vmax > vmin:
        out[finite] = (x[finite] - vmin) / (vmax - vmin)
    else:
        out[finite] = 1.0
    return np.clip(out, 0.0, 1.0, out=out)


def _clip_range(requested, lo, hi, label):
    if requested is None:
        return lo, hi
    a, b = requested
    if a < lo or b > hi:
        print(f"warning: {label} range [{a}, {b}] clipped to data bounds "
              f"[{lo}, {hi}]", file=sys.stderr)
    a, b = max(a, lo), min(b, hi)
    if not (a < b):
        raise ValueError(f"{label} range does not intersect the data")
    return a, b


def _window(grid: HistogramGrid, spec: FigureSpec):
    e_lo, e_hi = _clip_range(spec.e_range, grid.e_edges[0], grid.e_edges[-1],
                             "E")
    m_lo, m_hi = _clip_range(spec.m_range, grid.m_edges[0], grid.m_edges[-1],
                             "M")
    ei = np.where((grid.e_centers >= e_lo) & (grid.e_centers <= e_hi))[0]
    mi = np.where((grid.m_centers >= m_lo) & (grid.m_centers <= m_hi))[0]
    if len(ei) == 0 or len(mi) == 0:
        raise ValueError("selected window contains no cells")
    return ei, mi


def render(spec: FigureSpec) -> str:
    """Write the requested figure; returns the output path."""
    grid = read_histogram(spec.input_path)
    ei, mi = _window(grid, spec)
    sub = grid.log10_mass[np.ix_(ei, mi)]
    ec = grid.e_centers[ei]
    mc = grid.m_centers[mi]
    finite = np.isfinite(sub)
    if not finite.any():
        raise ValueError("selected window holds no occupied cells")
    vmin = float(sub[finite].min())
    vmax = float(sub[finite].max())

    fig = plt.figure(figsize=(7, 5.5), dpi=150)
    if spec.kind == "surface":
        ax = fig.add_subplot(projection="3d")
        em, mm = np.meshgrid(ec, mc, indexing="ij")
        z = np.where(finite, 10.0 ** (sub - vmax), 0.0)
        ax.plot_surface(em, mm, z, cmap="viridis", linewidth=0,
                        antialiased=False)
        ax.set_xlabel("E")
        ax.set_ylabel("M")
        ax.set_zlabel("density (peak = 1)")
    elif spec.kind == "heatmap":
        ax = fig.add_subplot()
        g = gray_levels(sub, vmin, vmax)
        masked = np.ma.masked_invalid(g)
        cmap = matplotlib.colormaps["gray"].copy()
        cmap.set_bad("white")
        im = ax.imshow(masked.T, origin="lower", aspect="auto", cmap=cmap,
                       vmin=0.0, vmax=1.0,
                       extent=(grid.e_edges[ei[0]], grid.e_edges[ei[-1] + 1],
                               grid.m_edges[mi[0]], grid.m_edges[mi[-1] + 1]))
        fig.colorbar(im, ax=ax,
                     label=f"log10 density, gray-coded over "
                           f"[{vmin:.3g}, {vmax:.3g}]")
        ax.set_xlabel("E")
        ax.set_ylabel("M")
    else:  # zoom
        ax = fig.add_subplot(projection="3d")
        em, mm = np.meshgrid(ec, mc, indexing="ij")
        z = np.where(finite, sub, vmin)
        ax.plot_surface(em, mm, z, cmap="viridis", linewidth=0,
                        antialiased=False)
        ax.set_xlabel("E")
        ax.set_ylabel("M")
        ax.set_zlabel("log10 density")
    fig.tight_layout()
    fig.savefig(spec.output_path)
    plt.close(fig)
    return spec.output_path
