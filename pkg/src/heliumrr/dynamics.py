"""Phase-space types and the planar two-electron vector field.

The nucleus (charge +2e) is fixed at the origin; the two electrons move in
a plane. In center-of-mass/relative coordinates the state is the 10-vector

    (r, v, xcm, vcm, acm)        r = x2 - x1,  v = dr/dt,
                                 xcm = (x1 + x2)/2, vcm, acm its derivatives,

flattened in exactly that order (indices 0..9). Radiation reaction enters
only the center-of-mass equation, as a third-derivative term on the 2*eps
timescale, which is what produces runaway solutions and makes backward-time
integration the stable direction.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import CollisionError

__all__ = [
    "Params",
    "PhaseState",
    "LabState",
    "FieldMode",
    "vec2",
    "coulomb_pair_terms",
    "vector_field",
    "mechanical_energy",
    "total_energy",
    "angular_momentum",
    "cm_from_lab",
    "lab_from_cm",
    "distances",
]

_NO_RATES = np.zeros(10)


def vec2(x, y):
    """A planar vector as a float64 array of shape (2,)."""
    return np.array([x, y], dtype=np.float64)


@dataclass(frozen=True)
class Params:
    """Physical constants and integration controls (atomic units)."""

    m: float = 1.0
    e: float = 1.0
    eps: float = 1e-2              # radiation-reaction timescale
    h0: float = 1e-4               # base integration step
    r_min: float = 0.001           # step floor factor
    r_max: float = 1.0             # step cap factor
    cube_side: float = 1e-4        # initial hypercube side
    renorm_threshold: float = 1e-3 # renormalize when any side exceeds this
    collision_floor: float = 1e-6  # minimum admissible inter-particle distance

    def __post_init__(self):
        if not (self.eps > 0):
            raise ValueError("eps must be positive")
        if not (self.h0 > 0):
            raise ValueError("h0 must be positive")
        if not (0 < self.r_min < self.r_max):
            raise ValueError("need 0 < r_min < r_max")
        if not (0 < self.cube_side < self.renorm_threshold):
            raise ValueError("need 0 < cube_side < renorm_threshold")
        if not (self.m > 0 and self.e > 0):
            raise ValueError("m and e must be positive")
        if not (self.collision_floor > 0):
            raise ValueError("collision_floor must be positive")


class FieldMode(enum.IntEnum):
    """Vector-field variants; the non-FULL ones exist for oracle tests."""

    FULL = 0        # Coulomb forces plus radiation reaction
    NO_COULOMB = 1  # Coulomb terms forced to zero (pure runaway dynamics)
    FROZEN = 2      # zero field: nothing moves
    LINEAR = 3      # decoupled linear flow dy_j/dt = rates_j * y_j


@dataclass
class PhaseState:
    """Planar state in cm/relative coordinates; each field is shape (2,)."""

    r: np.ndarray
    v: np.ndarray
    xcm: np.ndarray
    vcm: np.ndarray
    acm: np.ndarray

    def flatten(self) -> np.ndarray:
        """10-vector in the fixed order (r, v, xcm, vcm, acm)."""
        return np.concatenate([self.r, self.v, self.xcm, self.vcm, self.acm])

    @classmethod
    def from_flat(cls, y) -> "PhaseState":
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (10,):
            raise ValueError(f"expected a 10-vector, got shape {y.shape}")
        return cls(y[0:2].copy(), y[2:4].copy(), y[4:6].copy(),
                   y[6:8].copy(), y[8:10].copy())

    @classmethod
    def zero_dipole(cls, r, v) -> "PhaseState":
        """Lift manifold coordinates (r, v) with a bitwise-zero cm block."""
        return cls(np.asarray(r, dtype=np.float64).copy(),
                   np.asarray(v, dtype=np.float64).copy(),
                   np.zeros(2), np.zeros(2), np.zeros(2))


@dataclass
class LabState:
    """Electron positions/velocities relative to the fixed nucleus."""

    x1: np.ndarray
    v1: np.ndarray
    x2: np.ndarray
    v2: np.ndarray


def cm_from_lab(ls: LabState):
    """(r, v, xcm, vcm) from lab coordinates; linear, inverse of lab_from_cm."""
    r = ls.x2 - ls.x1
    v = ls.v2 - ls.v1
    xcm = (ls.x1 + ls.x2) / 2.0
    vcm = (ls.v1 + ls.v2) / 2.0
    return r, v, xcm, vcm


def lab_from_cm(s: PhaseState) -> LabState:
    """Lab coordinates of a cm/relative state (acm has no lab counterpart)."""
    return LabState(x1=s.xcm - s.r / 2.0, v1=s.vcm - s.v / 2.0,
                    x2=s.xcm + s.r / 2.0, v2=s.vcm + s.v / 2.0)


@njit(cache=True)
def _distances(y):
    """(r1, r2, r12): electron-nucleus distances and electron separation."""
    hx = 0.5 * y[0]
    hy = 0.5 * y[1]
    ux = y[4] - hx
    uy = y[5] - hy
    wx = y[4] + hx
    wy = y[5] + hy
    r1 = np.sqrt(ux * ux + uy * uy)
    r2 = np.sqrt(wx * wx + wy * wy)
    r12 = np.sqrt(y[0] * y[0] + y[1] * y[1])
    return r1, r2, r12


@njit(cache=True)
def _field(y, out, ee, inv2eps, floor, mode, rates):
    """Time derivative of the flat state into out; returns 0, or 1 on collision.

    ee = e^2/m and inv2eps = 1/(2 eps) arrive precomputed (this runs 44
    times per integration step). The two nucleus terms are evaluated
    symmetrically so that with a bitwise zero cm block their sum cancels
    exactly and the zero-dipole manifold is invariant in floating point,
    not just analytically.
    """
    if mode == 2:  # FROZEN
        for i in range(10):
            out[i] = 0.0
        return 0
    if mode == 3:  # LINEAR
        for i in range(10):
            out[i] = rates[i] * y[i]
        return 0

    out[0] = y[2]
    out[1] = y[3]
    out[4] = y[6]
    out[5] = y[7]
    out[6] = y[8]
    out[7] = y[9]

    if mode == 1:  # NO_COULOMB
        out[2] = 0.0
        out[3] = 0.0
        out[8] = y[8] * inv2eps
        out[9] = y[9] * inv2eps
        return 0

    hx = 0.5 * y[0]
    hy = 0.5 * y[1]
    ux = y[4] - hx          # x1 = xcm - r/2
    uy = y[5] - hy
    wx = y[4] + hx          # x2 = xcm + r/2
    wy = y[5] + hy
    d1 = ux * ux + uy * uy
    d2 = wx * wx + wy * wy
    d12 = y[0] * y[0] + y[1] * y[1]
    floor2 = floor * floor
    if d1 < floor2 or d2 < floor2 or d12 < floor2:
        return 1

    c1 = 1.0 / (d1 * np.sqrt(d1))
    c2 = 1.0 / (d2 * np.sqrt(d2))
    gmx = ux * c1 - wx * c2
    gmy = uy * c1 - wy * c2
    gpx = ux * c1 + wx * c2
    gpy = uy * c1 + wy * c2

    c12 = 1.0 / (d12 * np.sqrt(d12))
    out[2] = 2.0 * ee * (y[0] * c12 + gmx)
    out[3] = 2.0 * ee * (y[1] * c12 + gmy)
    out[8] = (y[8] + ee * gpx) * inv2eps
    out[9] = (y[9] + ee * gpy) * inv2eps
    return 0


def distances(s: PhaseState):
    """(r1, r2, r12) for a state; no floor check."""
    return _distances(s.flatten())


def coulomb_pair_terms(xcm, r, p: Params = Params()):
    """The two nucleus-attraction brackets of the cm/relative equations.

    Returns (g_minus, g_plus) with

        g_minus = (xcm - r/2)/|xcm - r/2|^3 - (xcm + r/2)/|xcm + r/2|^3
        g_plus  = (xcm - r/2)/|xcm - r/2|^3 + (xcm + r/2)/|xcm + r/2|^3

    Raises CollisionError if either electron-nucleus distance is below
    the collision floor.
    """
    xcm = np.asarray(xcm, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    u = xcm - r / 2.0
    w = xcm + r / 2.0
    d1 = np.sqrt(u[0] * u[0] + u[1] * u[1])
    d2 = np.sqrt(w[0] * w[0] + w[1] * w[1])
    if d1 < p.collision_floor or d2 < p.collision_floor:
        raise CollisionError(
            f"electron-nucleus distance below floor: r1={d1:.3e} r2={d2:.3e}")
    t1 = u / d1**3
    t2 = w / d2**3
    return t1 - t2, t1 + t2


def vector_field(s: PhaseState, p: Params, mode: FieldMode = FieldMode.FULL,
                 rates=None) -> np.ndarray:
    """Flat 10-vector derivative (dr, dv, dxcm, dvcm, dacm)/dt."""
    y = s.flatten()
    out = np.empty(10)
    rr = _NO_RATES if rates is None else np.asarray(rates, dtype=np.float64)
    status = _field(y, out, p.e * p.e / p.m, 0.5 / p.eps, p.collision_floor,
                    int(mode), rr)
    if status:
        r1, r2, r12 = _distances(y)
        raise CollisionError(
            f"inter-particle distance below floor: "
            f"r1={r1:.3e} r2={r2:.3e} r12={r12:.3e}")
    return out


def _check_distances(s: PhaseState, p: Params):
    r1, r2, r12 = distances(s)
    if r1 < p.collision_floor or r2 < p.collision_floor or r12 < p.collision_floor:
        raise CollisionError(
            f"inter-particle distance below floor: "
            f"r1={r1:.3e} r2={r2:.3e} r12={r12:.3e}")
    return r1, r2, r12


def mechanical_energy(s: PhaseState, p: Params) -> float:
    """E = T + V in lab coordinates.

    On the zero-dipole manifold this reduces to (m/4)|v|^2 - 7 e^2/|r|.
    """
    r1, r2, r12 = _check_distances(s, p)
    ls = lab_from_cm(s)
    t = 0.5 * p.m * (ls.v1 @ ls.v1 + ls.v2 @ ls.v2)
    e2 = p.e * p.e
    v = -2.0 * e2 / r1 - 2.0 * e2 / r2 + e2 / r12
    return t + v


def total_energy(s: PhaseState, p: Params) -> float:
    """E_total = T + V - 4 m eps (acm . vcm); the dot term is the Schott term.

    Non-increasing along forward motion: d(E_total)/dt = -4 m eps |acm|^2.
    """
    return mechanical_energy(s, p) - 4.0 * p.m * p.eps * float(s.acm @ s.vcm)


def angular_momentum(s: PhaseState, p: Params) -> float:
    """Scalar planar M = m (x1 x v1 + x2 x v2), evaluated in lab coordinates."""
    ls = lab_from_cm(s)
    c1 = ls.x1[0] * ls.v1[1] - ls.x1[1] * ls.v1[0]
    c2 = ls.x2[0] * ls.v2[1] - ls.x2[1] * ls.v2[0]
    return p.m * (c1 + c2)
