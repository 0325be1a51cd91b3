"""Analytic theory of the zero-dipole manifold.

With the cm block pinned at zero the relative motion is a pure two-body
Coulomb problem with effective mass mu = m/2 and effective coupling
k = 7 e^2, so bound states are Kepler ellipses. This module provides the
(E, M) orbit elements used as reduced coordinates, an eccentric-anomaly
propagator that serves as the integration oracle, and the sampler that
draws initial conditions from the measurement cube.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import Params, PhaseState
from .errors import DegenerateOrbit, NoConvergence, UnboundOrbit

__all__ = [
    "ManifoldPoint",
    "OrbitElements",
    "manifold_reduction_constants",
    "elements_from_state",
    "analytic_orbit",
    "sample_initial_conditions",
    "R_RANGE",
    "V_RANGE",
]

R_RANGE = (0.5, 4.0)    # sampling cube, relative-position components
V_RANGE = (-1.5, 1.5)   # sampling cube, relative-velocity components


@dataclass
class ManifoldPoint:
    """Coordinates (r, v) on the zero-dipole manifold; cm block implicit."""

    r: np.ndarray
    v: np.ndarray

    def lift(self) -> PhaseState:
        """Full phase-space state with a bitwise-zero cm block."""
        return PhaseState.zero_dipole(self.r, self.v)


@dataclass
class OrbitElements:
    """Reduced coordinates (E, M) plus the ellipse geometry.

    For unbound states (E >= 0) the geometric fields are NaN.
    """

    E: float
    M: float
    a: float
    ecc: float
    period: float


def manifold_reduction_constants(p: Params):
    """(mu, k) such that mu * r'' = -k r/|r|^3 on the manifold."""
    return p.m / 2.0, 7.0 * p.e * p.e


def elements_from_state(pt: ManifoldPoint, p: Params,
                        require_bound: bool = False) -> OrbitElements:
    """Orbit elements of a manifold point.

    E = (mu/2)|v|^2 - k/|r|, M = mu (r x v); a, ecc, period follow from the
    standard two-body relations when E < 0. With require_bound, E >= 0
    raises UnboundOrbit instead of returning NaN geometry.
    """
    mu, k = manifold_reduction_constants(p)
    r = np.asarray(pt.r, dtype=np.float64)
    v = np.asarray(pt.v, dtype=np.float64)
    rn = math.hypot(r[0], r[1])
    if rn == 0.0:
        raise ValueError("relative position must be nonzero")
    energy = 0.5 * mu * (v[0] * v[0] + v[1] * v[1]) - k / rn
    mom = mu * (r[0] * v[1] - r[1] * v[0])
    if energy >= 0.0:
        if require_bound:
            raise UnboundOrbit(f"E = {energy:.6g} >= 0")
        return OrbitElements(energy, mom, math.nan, math.nan, math.nan)
    a = k / (2.0 * -energy)
    ecc_sq = 1.0 + 2.0 * energy * mom * mom / (mu * k * k)
    ecc = math.sqrt(max(ecc_sq, 0.0))
    period = 2.0 * math.pi * math.sqrt(mu * a ** 3 / k)
    return OrbitElements(energy, mom, a, ecc, period)


def _solve_kepler(mean_anom: float, ecc: float, tol: float = 1e-14,
                  max_iter: int = 100) -> float:
    """Eccentric anomaly solving E - ecc*sin(E) = mean_anom.

    Newton iteration safeguarded by bisection on the bracket
    [m - ecc, m + ecc] (the residual is strictly increasing), with the
    input reduced mod 2*pi and the removed turns restored afterwards.
    """
    turns = math.floor((mean_anom + math.pi) / (2.0 * math.pi))
    m = mean_anom - 2.0 * math.pi * turns  # in [-pi, pi)
    lo, hi = m - ecc, m + ecc
    E = m + ecc * math.sin(m)
    for _ in range(max_iter):
        s = ecc * math.sin(E)
        f = E - s - m
        if f > 0.0:
            hi = E
        else:
            lo = E
        d = f / (1.0 - ecc * math.cos(E))
        E_new = E - d
        if not (lo < E_new < hi):
            E_new = 0.5 * (lo + hi)
        if abs(E_new - E) <= tol * max(1.0, abs(E)):
            return E_new + 2.0 * math.pi * turns
        E = E_new
    raise NoConvergence(
        f"Kepler iteration stalled at m={mean_anom!r}, ecc={ecc!r}")


def analytic_orbit(pt: ManifoldPoint, t: float, p: Params) -> ManifoldPoint:
    """Propagate a bound, non-radial manifold point by time t (may be < 0).

    Uses the Gauss f and g functions in the eccentric anomaly, so the
    result is exact up to the 1e-14 anomaly tolerance; this is the oracle
    the numerical integrator is checked against.
    """
    mu, k = manifold_reduction_constants(p)
    gm = k / mu
    r0_vec = np.asarray(pt.r, dtype=np.float64)
    v0_vec = np.asarray(pt.v, dtype=np.float64)
    elems = elements_from_state(pt, p, require_bound=True)
    if elems.M == 0.0:
        raise DegenerateOrbit("M = 0: radial orbit")
    a = elems.a
    r0 = math.hypot(r0_vec[0], r0_vec[1])
    n = math.sqrt(gm / a ** 3)
    e_cos = 1.0 - r0 / a
    e_sin = float(r0_vec @ v0_vec) / (n * a * a)
    ecc = math.hypot(e_cos, e_sin)
    E0 = math.atan2(e_sin, e_cos)
    m0 = E0 - e_sin
    E1 = _solve_kepler(m0 + n * t, ecc)
    dE = E1 - E0
    cos_dE = math.cos(dE)
    sin_dE = math.sin(dE)
    r1 = a * (1.0 - ecc * math.cos(E1))
    f = 1.0 - (a / r0) * (1.0 - cos_dE)
    g = t + (sin_dE - dE) / n
    fdot = -math.sqrt(gm * a) * sin_dE / (r1 * r0)
    gdot = 1.0 - (a / r1) * (1.0 - cos_dE)
    return ManifoldPoint(r=f * r0_vec + g * v0_vec,
                         v=fdot * r0_vec + gdot * v0_vec)


def _index_generator(seed: int, index: int, rng: str) -> np.random.Generator:
    """Counter-based per-index stream: identical regardless of scheduling."""
    if rng != "philox":
        raise ValueError(f"unsupported rng {rng!r}; only 'philox' is wired in")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(index,))
    return np.random.Generator(np.random.Philox(ss))


def sample_manifold_point(seed: int, index: int, p: Params,
                          r_range=R_RANGE, v_range=V_RANGE,
                          rng: str = "philox",
                          max_tries: int = 100) -> ManifoldPoint:
    """The index-th sampled point: uniform on the cube, rejected to E < 0."""
    gen = _index_generator(seed, index, rng)
    mu, k = manifold_reduction_constants(p)
    r_lo, r_hi = r_range
    v_lo, v_hi = v_range
    for _ in range(max_tries):
        u = gen.random(4)
        rx = r_lo + (r_hi - r_lo) * u[0]
        ry = r_lo + (r_hi - r_lo) * u[1]
        vx = v_lo + (v_hi - v_lo) * u[2]
        vy = v_lo + (v_hi - v_lo) * u[3]
        energy = 0.5 * mu * (vx * vx + vy * vy) - k / math.hypot(rx, ry)
        if energy < 0.0:
            return ManifoldPoint(r=np.array([rx, ry]), v=np.array([vx, vy]))
    raise RuntimeError(
        f"rejection sampling exhausted {max_tries} tries at index {index}; "
        "the configured cube has almost no bound states")


def sample_initial_conditions(n: int, seed: int, p: Params,
                              r_range=R_RANGE, v_range=V_RANGE,
                              rng: str = "philox"):
    """n manifold points with negative energy, deterministic in (seed, index)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return [sample_manifold_point(seed, i, p, r_range, v_range, rng)
            for i in range(n)]
