"""Invariant-density estimation on the zero-dipole manifold.

A 10-dimensional hypercube anchored at a manifold point is evolved backward
in time together with its 10 vertex trajectories. Backward evolution damps
the two runaway directions exponentially, squeezing the cube onto the
8-dimensional tangent plane of the nonrunaway manifold; the area of the
tangent face is the square root of the product of the 8 largest eigenvalues
of the Gram matrix of the offset vectors. The density at the anchor point
is the time average of (face area / initial face area) along one orbital
period, taken after a transient that completes the squeeze.

Everything is accumulated in natural-log domain: the area ratios routinely
span hundreds of decades, far beyond what a linear double can hold. The
conversion to log10 happens only at the output boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .dynamics import FieldMode, Params, PhaseState
from .errors import CollisionError, DegenerateFace, NoConvergence
from .integrator import _step_once, _rk4_block
from .kepler import ManifoldPoint, elements_from_state

__all__ = [
    "Hypercube",
    "SpectralResult",
    "DensityRecord",
    "DensityRunConfig",
    "make_cube",
    "evolve_cube",
    "gram_matrix",
    "symmetric_eigen",
    "face_log_area",
    "renormalize",
    "point_density",
    "run_phase",
    "transient_eigenvalues",
]

# phase-kernel status codes
OK = 0
COLLIDED = 1
OVERFLOWED = 2
UNDERFLOWED = 3
EIGEN_STUCK = 4
FACE_DEGENERATE = 5

_RATES0 = np.zeros(10)


@dataclass
class Hypercube:
    """Anchor state plus 10 offset vectors and the renormalization log."""

    center: PhaseState
    offsets: np.ndarray          # (10, 10), row j = delta x_j
    log_area_accum: float        # sum of log area ratios absorbed so far
    initial_side: float

    def vertices(self) -> np.ndarray:
        """(11, 10) block: row 0 the center, rows 1..10 the vertices."""
        y0 = self.center.flatten()
        block = np.empty((11, 10))
        block[0] = y0
        block[1:] = y0 + self.offsets
        return block


@dataclass
class SpectralResult:
    eigenvalues: np.ndarray      # ascending, shape (10,)
    eigenvectors: np.ndarray     # orthonormal columns, eigenvectors[:, i]


@dataclass
class DensityRecord:
    """Outcome of one density evaluation; log10_rho is NaN unless ok."""

    r0: np.ndarray
    v0: np.ndarray
    E: float
    M: float
    log10_rho: float
    status: str                  # ok | collision | degenerate | failed


@dataclass
class DensityRunConfig:
    """Knobs of the averaging run; defaults follow the measurement recipe."""

    transient_factor: float = 10.0    # transient length in units of 2*eps
    horizon_periods: float = 1.0      # averaging horizon in orbital periods
    field_mode: FieldMode = FieldMode.FULL


def make_cube(x: PhaseState, p: Params) -> Hypercube:
    """Fresh cube: axis-aligned offsets of length cube_side, empty log."""
    offsets = np.eye(10) * p.cube_side
    return Hypercube(center=PhaseState.from_flat(x.flatten()),
                     offsets=offsets, log_area_accum=0.0,
                     initial_side=p.cube_side)


@njit(cache=True)
def _gram(O, B):
    for i in range(10):
        for j in range(i, 10):
            s = 0.0
            for k in range(10):
                s += O[i, k] * O[j, k]
            B[i, j] = s
            B[j, i] = s


@njit(cache=True)
def _jacobi(A, w, V, want_vectors, init_v):
    """Cyclic Jacobi diagonalization of symmetric A (destroyed in place).

    Sweeps until the off-diagonal Frobenius norm drops below 1e-14 of the
    input norm, then sorts ascending. Eigenvectors accumulate into the
    columns of V only when requested; with init_v False the rotations
    compose onto the caller's V, which is how the evolution loop carries
    its warm eigenbasis. Returns 0, or 1 if 100 sweeps were not enough.
    """
    n = A.shape[0]
    if want_vectors and init_v:
        for i in range(n):
            for j in range(n):
                V[i, j] = 1.0 if i == j else 0.0
    norm2 = 0.0
    for i in range(n):
        for j in range(n):
            norm2 += A[i, j] * A[i, j]
    tol2 = 1e-28 * norm2
    # entries this small cannot lift the off-norm above tolerance even if
    # every pair carries one, so rotating them is wasted work
    skip2 = tol2 / (2.0 * n * n)
    converged = False
    for _ in range(100):
        off2 = 0.0
        for i in range(n - 1):
            for j in range(i + 1, n):
                off2 += 2.0 * A[i, j] * A[i, j]
        if off2 <= tol2:
            converged = True
            break
        for pp in range(n - 1):
            for qq in range(pp + 1, n):
                apq = A[pp, qq]
                if apq * apq <= skip2:
                    continue
                tau = (A[qq, qq] - A[pp, pp]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                for i in range(n):
                    aip = A[i, pp]
                    aiq = A[i, qq]
                    A[i, pp] = c * aip - s * aiq
                    A[i, qq] = s * aip + c * aiq
                for i in range(n):
                    api = A[pp, i]
                    aqi = A[qq, i]
                    A[pp, i] = c * api - s * aqi
                    A[qq, i] = s * api + c * aqi
                if want_vectors:
                    for i in range(n):
                        vip = V[i, pp]
                        viq = V[i, qq]
                        V[i, pp] = c * vip - s * viq
                        V[i, qq] = s * vip + c * viq
    if not converged:
        return 1
    for i in range(n):
        w[i] = A[i, i]
    # insertion sort, ascending, carrying eigenvector columns along
    col = np.empty(n)
    for i in range(1, n):
        key = w[i]
        if want_vectors:
            for row in range(n):
                col[row] = V[row, i]
        j = i - 1
        while j >= 0 and w[j] > key:
            w[j + 1] = w[j]
            if want_vectors:
                for row in range(n):
                    V[row, j + 1] = V[row, j]
            j -= 1
        w[j + 1] = key
        if want_vectors:
            for row in range(n):
                V[row, j + 1] = col[row]
    return 0


@njit(cache=True)
def _project(O, Q, P):
    """P = O^T Q; the offsets expressed against the carried basis."""
    n = O.shape[0]
    for c in range(n):
        for j in range(n):
            s = 0.0
            for l in range(n):
                s += O[l, c] * Q[l, j]
            P[c, j] = s


@njit(cache=True)
def _gram_cols(P, B):
    """B = P^T P, i.e. the Gram matrix of P's columns."""
    n = P.shape[0]
    for i in range(n):
        for j in range(i, n):
            s = 0.0
            for c in range(n):
                s += P[c, i] * P[c, j]
            B[i, j] = s
            B[j, i] = s


@njit(cache=True)
def _orthonormalize_columns(Q):
    """Modified Gram-Schmidt; Q stays near its input, exactly orthonormal."""
    n = Q.shape[0]
    for j in range(n):
        for i in range(j):
            dot = 0.0
            for k in range(n):
                dot += Q[k, i] * Q[k, j]
            for k in range(n):
                Q[k, j] -= dot * Q[k, i]
        nrm = 0.0
        for k in range(n):
            nrm += Q[k, j] * Q[k, j]
        nrm = np.sqrt(nrm)
        for k in range(n):
            Q[k, j] /= nrm


def gram_matrix(c: Hypercube) -> np.ndarray:
    """B with B_ij = delta x_i . delta x_j."""
    B = np.empty((10, 10))
    _gram(np.ascontiguousarray(c.offsets), B)
    return B


def symmetric_eigen(B) -> SpectralResult:
    """Full ascending spectrum of a symmetric matrix via cyclic Jacobi."""
    B = np.asarray(B, dtype=np.float64)
    A = np.ascontiguousarray(B).copy()
    n = A.shape[0]
    w = np.empty(n)
    V = np.empty((n, n))
    if _jacobi(A, w, V, True, True):
        raise NoConvergence("Jacobi sweeps did not reduce the off-diagonal")
    return SpectralResult(eigenvalues=w, eigenvectors=V)


def face_log_area(sr: SpectralResult) -> float:
    """(1/2) sum of ln of the 8 largest eigenvalues; the tangent-face area.

    The two smallest eigenvalues belong to the squeezed runaway directions
    and are excluded. Raises DegenerateFace when the third eigenvalue is
    not positive, since then no 8-face exists.
    """
    w = sr.eigenvalues
    if w[2] <= 0.0:
        raise DegenerateFace(f"lambda_3 = {w[2]!r} <= 0")
    return 0.5 * float(np.sum(np.log(w[2:])))


def evolve_cube(c: Hypercube, h: float, p: Params,
                mode: FieldMode = FieldMode.FULL, rates=None) -> Hypercube:
    """One backward RK4 step of size h > 0 for the center and all vertices."""
    if not (h > 0):
        raise ValueError("h must be positive (backward step)")
    Y = c.vertices()
    rr = _RATES0 if rates is None else np.asarray(rates, dtype=np.float64)
    scratch = (np.empty((11, 10)), np.empty((11, 10)), np.empty((11, 10)),
               np.empty((11, 10)), np.empty((11, 10)))
    if _rk4_block(Y, -h, p.e * p.e / p.m, 0.5 / p.eps, p.collision_floor,
                  int(mode), rr, *scratch):
        raise CollisionError("collision while evolving the hypercube")
    return Hypercube(center=PhaseState.from_flat(Y[0]),
                     offsets=Y[1:] - Y[0],
                     log_area_accum=c.log_area_accum,
                     initial_side=c.initial_side)


def renormalize(c: Hypercube, p: Params) -> Hypercube:
    """Replace the offsets by cube_side times the Gram eigenvectors.

    The current face area (relative to a fresh cube's) is absorbed into
    log_area_accum first, so instantaneous area ratios compose continuously
    across the renormalization.
    """
    sr = symmetric_eigen(gram_matrix(c))
    gained = face_log_area(sr) - 8.0 * math.log(p.cube_side)
    offsets = (p.cube_side * sr.eigenvectors).T.copy()
    return Hypercube(center=c.center, offsets=offsets,
                     log_area_accum=c.log_area_accum + gained,
                     initial_side=c.initial_side)


@njit(cache=True)
def _cube_phase(Y, accum, duration, h0, rmin, rmax, ee, inv2eps, floor,
                side, thresh, mode, rates, record):
    """Drive the 11-trajectory block backward for `duration`.

    Renormalizes whenever an offset outgrows `thresh`. With `record`, the
    instantaneous log area ratio is folded into a running max-shifted
    exponential sum with the step size as quadrature weight.

    The Gram matrix changes little between steps, so the Jacobi solve is
    warm-started through a carried orthogonal basis Q (the previous step's
    eigenvectors): B is congruence-transformed into that basis, where it is
    nearly diagonal and one or two sweeps suffice. Q is re-orthonormalized
    periodically to keep the transform a similarity; the basis columns are
    exactly the current eigenvectors, which is what renormalization needs.

    Returns (status, accum, lse_max, lse_sum, h_sum, steps, renorms).
    """
    K1 = np.empty((11, 10))
    K2 = np.empty((11, 10))
    K3 = np.empty((11, 10))
    K4 = np.empty((11, 10))
    YT = np.empty((11, 10))
    O = np.empty((10, 10))
    P = np.empty((10, 10))
    B2 = np.empty((10, 10))
    w = np.empty(10)
    Q = np.eye(10)
    since_mgs = 0
    log_side8 = 8.0 * np.log(side)
    thresh2 = thresh * thresh
    lse_max = -np.inf
    lse_sum = 0.0
    h_sum = 0.0
    steps = 0
    renorms = 0
    t = 0.0
    while t < duration:
        status, h, hit_cap = _step_once(
            Y, -1.0, duration - t, h0, rmin, rmax, ee, inv2eps, floor,
            mode, rates, K1, K2, K3, K4, YT)
        if status != 0:
            return status, accum, lse_max, lse_sum, h_sum, steps, renorms
        t = duration if hit_cap else t + h
        steps += 1
        max_s2 = 0.0
        for j in range(10):
            s2 = 0.0
            for k in range(10):
                d = Y[1 + j, k] - Y[0, k]
                O[j, k] = d
                s2 += d * d
            if s2 > max_s2:
                max_s2 = s2
        need_renorm = max_s2 > thresh2
        if record or need_renorm:
            # Gram spectrum through the carried basis: Q^T (O O^T) Q is
            # nearly diagonal, so the Jacobi solve is one or two sweeps,
            # and its rotations keep Q equal to the current eigenvectors.
            _project(O, Q, P)
            _gram_cols(P, B2)
            if _jacobi(B2, w, Q, True, False):
                return EIGEN_STUCK, accum, lse_max, lse_sum, h_sum, steps, renorms
            since_mgs += 1
            if w[2] <= 0.0:
                return FACE_DEGENERATE, accum, lse_max, lse_sum, h_sum, steps, renorms
            fla = 0.0
            for i in range(2, 10):
                fla += np.log(w[i])
            fla *= 0.5
            if record:
                val = np.log(h) + accum + fla - log_side8
                if val <= lse_max:
                    lse_sum += np.exp(val - lse_max)
                else:
                    lse_sum = lse_sum * np.exp(lse_max - val) + 1.0
                    lse_max = val
                h_sum += h
            if need_renorm:
                accum += fla - log_side8
                renorms += 1
                _orthonormalize_columns(Q)
                since_mgs = 0
                for j in range(10):
                    for k in range(10):
                        Y[1 + j, k] = Y[0, k] + side * Q[k, j]
            elif since_mgs >= 512:
                _orthonormalize_columns(Q)
                since_mgs = 0
    return OK, accum, lse_max, lse_sum, h_sum, steps, renorms


@njit(cache=True)
def _offset_eigenvalues(Y, w):
    """Ascending Gram eigenvalues of the block's offsets; 0 on success."""
    O = np.empty((10, 10))
    B = np.empty((10, 10))
    V = np.empty((10, 10))
    for j in range(10):
        for k in range(10):
            O[j, k] = Y[1 + j, k] - Y[0, k]
    _gram(O, B)
    return _jacobi(B, w, V, False, True)


@dataclass
class PhaseResult:
    status: int
    accum: float
    lse_max: float
    lse_sum: float
    h_sum: float
    steps: int
    renorms: int


def run_phase(Y: np.ndarray, accum: float, duration: float, p: Params,
              mode: FieldMode = FieldMode.FULL, rates=None,
              record: bool = False) -> PhaseResult:
    """Python-facing wrapper around the fused backward cube loop.

    Mutates Y in place and returns the bookkeeping; never raises for
    dynamics failures (they come back as status codes).
    """
    rr = _RATES0 if rates is None else np.asarray(rates, dtype=np.float64)
    out = _cube_phase(Y, accum, duration, p.h0, p.r_min, p.r_max,
                      p.e * p.e / p.m, 0.5 / p.eps, p.collision_floor,
                      p.cube_side, p.renorm_threshold, int(mode), rr,
                      record)
    return PhaseResult(*out)


def transient_eigenvalues(pt: ManifoldPoint, p: Params,
                          transient: float | None = None):
    """Gram spectrum of the cube after the backward squeeze transient.

    Returns (status, eigenvalues); eigenvalues is None unless status is OK.
    Used to check that the two runaway directions have collapsed.
    """
    if transient is None:
        transient = 10.0 * 2.0 * p.eps
    Y = make_cube(pt.lift(), p).vertices()
    res = run_phase(Y, 0.0, transient, p, record=False)
    if res.status != OK:
        return res.status, None
    w = np.empty(10)
    if _offset_eigenvalues(Y, w):
        return EIGEN_STUCK, None
    return OK, w


def _finish_average(res: PhaseResult) -> float:
    """log10 of the time-weighted mean of the accumulated area ratios."""
    log_rho = res.lse_max + math.log(res.lse_sum) - math.log(res.h_sum)
    return log_rho / math.log(10.0)


def point_density(pt: ManifoldPoint, p: Params,
                  run_cfg: DensityRunConfig = DensityRunConfig()) -> DensityRecord:
    """Density estimate at one manifold point; failures become statuses.

    Backward transient of transient_factor * 2 * eps squeezes the cube onto
    the nonrunaway tangent plane; the average then runs over horizon_periods
    analytic orbital periods.
    """
    r0 = np.asarray(pt.r, dtype=np.float64).copy()
    v0 = np.asarray(pt.v, dtype=np.float64).copy()
    elems = elements_from_state(pt, p)
    if elems.M == 0.0:
        return DensityRecord(r0, v0, elems.E, elems.M, math.nan, "degenerate")
    if not (elems.E < 0.0) or not math.isfinite(elems.period):
        return DensityRecord(r0, v0, elems.E, elems.M, math.nan, "failed")

    Y = make_cube(pt.lift(), p).vertices()
    transient = run_cfg.transient_factor * 2.0 * p.eps
    mode = run_cfg.field_mode
    if transient > 0.0:
        res = run_phase(Y, 0.0, transient, p, mode=mode, record=False)
        if res.status != OK:
            status = "collision" if res.status == COLLIDED else "failed"
            return DensityRecord(r0, v0, elems.E, elems.M, math.nan, status)
        accum = res.accum
    else:
        accum = 0.0

    horizon = run_cfg.horizon_periods * elems.period
    res = run_phase(Y, accum, horizon, p, mode=mode, record=True)
    if res.status != OK:
        status = "collision" if res.status == COLLIDED else "failed"
        return DensityRecord(r0, v0, elems.E, elems.M, math.nan, status)
    if res.h_sum <= 0.0 or res.lse_sum <= 0.0:
        return DensityRecord(r0, v0, elems.E, elems.M, math.nan, "failed")
    log10_rho = _finish_average(res)
    if not math.isfinite(log10_rho):
        return DensityRecord(r0, v0, elems.E, elems.M, math.nan, "failed")
    return DensityRecord(r0, v0, elems.E, elems.M, log10_rho, "ok")
