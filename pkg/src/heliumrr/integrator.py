"""Adaptive RK4 integration, forward or backward in time.

Backward integration negates the vector field, which exponentially damps
the runaway component of the cm acceleration; it is the numerically stable
direction and the one every measurement run uses. The step size follows

    h = h0 * max(min(r1, r2, r12, r_max), r_min)

recomputed each step from the current state.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numba import njit

from .dynamics import FieldMode, Params, PhaseState, _distances, _field
from .errors import CollisionError

__all__ = [
    "Direction",
    "TrajectorySample",
    "StopReason",
    "ACM_OVERFLOW",
    "H_UNDERFLOW",
    "adaptive_step",
    "adaptive_step_from_distances",
    "rk4_step",
    "integrate",
]

ACM_OVERFLOW = 1e8   # |acm| beyond this counts as a runaway blow-up
H_UNDERFLOW = 1e-12  # adaptive steps below this abort the run


class Direction(enum.Enum):
    FORWARD = 1
    BACKWARD = -1

    @property
    def sign(self) -> float:
        return float(self.value)


class StopReason(enum.Enum):
    COMPLETED = "completed"
    COLLISION = "collision"
    RUNAWAY_OVERFLOW = "runaway_overflow"
    STEP_UNDERFLOW = "step_underflow"


@dataclass
class TrajectorySample:
    t: float            # elapsed integration time, >= 0 in both directions
    state: PhaseState


def adaptive_step_from_distances(r1: float, r2: float, r12: float,
                                 p: Params) -> float:
    """The step rule as a pure function of the three distances."""
    return p.h0 * max(min(r1, r2, r12, p.r_max), p.r_min)


def adaptive_step(s: PhaseState, p: Params) -> float:
    """Step size for the current state, in [h0*r_min, h0*r_max]."""
    r1, r2, r12 = _distances(s.flatten())
    return adaptive_step_from_distances(r1, r2, r12, p)


@njit(cache=True)
def _rk4_block(Y, h, ee, inv2eps, floor, mode, rates, K1, K2, K3, K4, YT):
    """One RK4 step of signed size h applied to every row of Y in place.

    All rows share the same h (the hypercube contract). Y is only written
    after every stage of every row evaluated cleanly, so a collision leaves
    the caller's state untouched. Returns 0, or 1 on collision.
    """
    n = Y.shape[0]
    for i in range(n):
        if _field(Y[i], K1[i], ee, inv2eps, floor, mode, rates):
            return 1
    for i in range(n):
        for j in range(10):
            YT[i, j] = Y[i, j] + 0.5 * h * K1[i, j]
    for i in range(n):
        if _field(YT[i], K2[i], ee, inv2eps, floor, mode, rates):
            return 1
    for i in range(n):
        for j in range(10):
            YT[i, j] = Y[i, j] + 0.5 * h * K2[i, j]
    for i in range(n):
        if _field(YT[i], K3[i], ee, inv2eps, floor, mode, rates):
            return 1
    for i in range(n):
        for j in range(10):
            YT[i, j] = Y[i, j] + h * K3[i, j]
    for i in range(n):
        if _field(YT[i], K4[i], ee, inv2eps, floor, mode, rates):
            return 1
    c = h / 6.0
    for i in range(n):
        for j in range(10):
            Y[i, j] = Y[i, j] + c * (K1[i, j] + 2.0 * K2[i, j]
                                     + 2.0 * K3[i, j] + K4[i, j])
    return 0


@njit(cache=True)
def _adaptive_h(y, h0, rmin, rmax, mode):
    if mode >= 2:  # FROZEN / LINEAR flows have no geometry to adapt to
        return h0
    r1, r2, r12 = _distances(y)
    d = min(min(r1, r2), min(r12, rmax))
    if d < rmin:
        d = rmin
    return h0 * d


@njit(cache=True)
def _step_once(Y, sign, h_cap, h0, rmin, rmax, ee, inv2eps, floor, mode, rates,
               K1, K2, K3, K4, YT):
    """Advance Y (rows in lockstep, h from row 0) by min(adaptive, h_cap).

    Returns (status, h_used, hit_cap) with status 0 ok, 1 collision,
    2 runaway overflow, 3 step underflow.
    """
    h_ad = _adaptive_h(Y[0], h0, rmin, rmax, mode)
    if h_ad < H_UNDERFLOW:
        return 3, 0.0, False
    hit_cap = h_cap <= h_ad
    h = h_cap if hit_cap else h_ad
    if _rk4_block(Y, sign * h, ee, inv2eps, floor, mode, rates,
                  K1, K2, K3, K4, YT):
        return 1, 0.0, False
    for i in range(Y.shape[0]):
        if Y[i, 8] * Y[i, 8] + Y[i, 9] * Y[i, 9] > ACM_OVERFLOW * ACM_OVERFLOW:
            return 2, h, hit_cap
    return 0, h, hit_cap


_RATES0 = np.zeros(10)


def _scratch(n):
    return (np.empty((n, 10)), np.empty((n, 10)), np.empty((n, 10)),
            np.empty((n, 10)), np.empty((n, 10)))


def rk4_step(s: PhaseState, h: float, direction: Direction, p: Params,
             mode: FieldMode = FieldMode.FULL, rates=None) -> PhaseState:
    """Classical RK4 update over step h >= 0 (h = 0 is the identity)."""
    if h < 0:
        raise ValueError("h must be nonnegative; use direction for time sense")
    Y = s.flatten().reshape(1, 10)
    rr = _RATES0 if rates is None else np.asarray(rates, dtype=np.float64)
    if _rk4_block(Y, direction.sign * h, p.e * p.e / p.m, 0.5 / p.eps,
                  p.collision_floor, int(mode), rr, *_scratch(1)):
        raise CollisionError("collision during an RK4 stage evaluation")
    return PhaseState.from_flat(Y[0])


def integrate(s0: PhaseState, duration: float, direction: Direction,
              p: Params, sink: Optional[Callable[[TrajectorySample], None]] = None,
              mode: FieldMode = FieldMode.FULL, rates=None):
    """Step until the accumulated time reaches duration exactly.

    The final step is truncated to land on duration. Samples (including the
    initial state at t = 0) stream to sink when given. Returns the final
    state together with the stop reason; collisions and runaway overflow
    terminate the run early rather than raise.
    """
    if not (duration > 0):
        raise ValueError("duration must be positive")
    Y = s0.flatten().reshape(1, 10)
    rr = _RATES0 if rates is None else np.asarray(rates, dtype=np.float64)
    scratch = _scratch(1)
    sign = direction.sign
    ee = p.e * p.e / p.m
    inv2eps = 0.5 / p.eps
    t = 0.0
    if sink is not None:
        sink(TrajectorySample(t, PhaseState.from_flat(Y[0])))
    while True:
        status, h, hit_cap = _step_once(
            Y, sign, duration - t, p.h0, p.r_min, p.r_max,
            ee, inv2eps, p.collision_floor, int(mode), rr, *scratch)
        if status == 1:
            return PhaseState.from_flat(Y[0]), StopReason.COLLISION
        if status == 3:
            return PhaseState.from_flat(Y[0]), StopReason.STEP_UNDERFLOW
        t = duration if hit_cap else t + h
        if sink is not None:
            sink(TrajectorySample(t, PhaseState.from_flat(Y[0])))
        if status == 2:
            return PhaseState.from_flat(Y[0]), StopReason.RUNAWAY_OVERFLOW
        if hit_cap:
            return PhaseState.from_flat(Y[0]), StopReason.COMPLETED
