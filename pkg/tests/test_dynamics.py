import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from heliumrr.dynamics import (LabState, Params, PhaseState,
                               angular_momentum, cm_from_lab,
                               coulomb_pair_terms, lab_from_cm,
                               mechanical_energy, total_energy, vec2,
                               vector_field)
from heliumrr.errors import CollisionError
from heliumrr.integrator import Direction, rk4_step

P = Params()

coords = st.floats(-5.0, 5.0, allow_nan=False)


def manifold_state(rx, ry, vx, vy):
    return PhaseState.zero_dipole(vec2(rx, ry), vec2(vx, vy))


# --- coulomb_pair_terms ----------------------------------------------------

def test_pair_sum_cancels_on_symmetric_configuration():
    g_minus, g_plus = coulomb_pair_terms(vec2(0, 0), vec2(2, 0), P)
    assert g_plus[0] == 0.0 and g_plus[1] == 0.0


def test_pair_difference_is_minus_eight_r_over_r_cubed():
    g_minus, _ = coulomb_pair_terms(vec2(0, 0), vec2(2, 0), P)
    # (-r/2)/|r/2|^3 - (r/2)/|r/2|^3 with |r| = 2
    np.testing.assert_allclose(g_minus, [-2.0, 0.0], rtol=0, atol=0)


def test_pair_terms_collision_floor():
    with pytest.raises(CollisionError):
        coulomb_pair_terms(vec2(1e-7, 0), vec2(0, 0), P)


# --- vector_field ----------------------------------------------------------

def test_field_on_manifold_matches_effective_two_body():
    s = manifold_state(2, 0, 0, 1)
    d = vector_field(s, P)
    np.testing.assert_allclose(d[2:4], [-3.5, 0.0], rtol=1e-15)
    assert np.all(d[4:] == 0.0)


def test_field_acm_relaxation_rate():
    s = PhaseState(vec2(2, 0), vec2(0, 0), vec2(0, 0), vec2(0, 0), vec2(1, 0))
    d = vector_field(s, P)
    np.testing.assert_allclose(d[8:10], [50.0, 0.0], rtol=0)


def test_field_electron_electron_collision():
    s = PhaseState(vec2(0, 0), vec2(0, 0), vec2(10, 0), vec2(0, 0), vec2(0, 0))
    with pytest.raises(CollisionError):
        vector_field(s, P)


@given(rx=coords, ry=coords, vx=coords, vy=coords)
def test_zero_dipole_block_is_bitwise_invariant(rx, ry, vx, vy):
    if math.hypot(rx, ry) < 0.01:
        return
    d = vector_field(manifold_state(rx, ry, vx, vy), P)
    assert np.all(d[4:] == 0.0)


# --- energies and angular momentum ----------------------------------------

def test_mechanical_energy_at_rest():
    assert mechanical_energy(manifold_state(2, 0, 0, 0), P) == pytest.approx(
        -3.5, rel=1e-15)


def test_mechanical_energy_circular():
    s = manifold_state(2, 0, 0, math.sqrt(7))
    assert mechanical_energy(s, P) == pytest.approx(-1.75, rel=1e-14)


@given(rx=coords, ry=coords, vx=coords, vy=coords)
def test_manifold_energy_reduction_identity(rx, ry, vx, vy):
    r = math.hypot(rx, ry)
    if r < 0.01:
        return
    s = manifold_state(rx, ry, vx, vy)
    expected = 0.25 * (vx * vx + vy * vy) - 7.0 / r
    assert mechanical_energy(s, P) == pytest.approx(expected, rel=1e-13,
                                                    abs=1e-13)


def test_schott_term_shift():
    s = PhaseState(vec2(2, 0), vec2(0, 0), vec2(0, 0), vec2(1, 0), vec2(1, 0))
    assert total_energy(s, P) == pytest.approx(
        mechanical_energy(s, P) - 0.04, rel=1e-14)


def test_schott_term_vanishes_for_perpendicular_acm():
    s = PhaseState(vec2(2, 0), vec2(0, 0), vec2(0, 0), vec2(1, 0), vec2(0, 3))
    assert total_energy(s, P) == mechanical_energy(s, P)


def test_angular_momentum_circular_and_reversed():
    up = manifold_state(2, 0, 0, math.sqrt(7))
    dn = manifold_state(2, 0, 0, -math.sqrt(7))
    assert angular_momentum(up, P) == pytest.approx(math.sqrt(7), rel=1e-14)
    assert angular_momentum(dn, P) == pytest.approx(-math.sqrt(7), rel=1e-14)


def test_angular_momentum_parallel_velocity_is_zero():
    assert angular_momentum(manifold_state(2, 0, 3, 0), P) == 0.0


# --- coordinate maps -------------------------------------------------------

def test_cm_from_lab_definition():
    ls = LabState(x1=vec2(-1, 0), v1=vec2(0, 0), x2=vec2(1, 0), v2=vec2(0, 0))
    r, v, xcm, vcm = cm_from_lab(ls)
    np.testing.assert_array_equal(r, [2, 0])
    np.testing.assert_array_equal(xcm, [0, 0])


def test_lab_from_cm_inversion():
    s = PhaseState(vec2(2, 0), vec2(0, 0), vec2(1, 1), vec2(0, 0), vec2(0, 0))
    ls = lab_from_cm(s)
    np.testing.assert_array_equal(ls.x1, [0, 1])
    np.testing.assert_array_equal(ls.x2, [2, 1])


@given(a=coords, b=coords, c=coords, d=coords, e=coords, f=coords,
       g=coords, h=coords)
def test_cm_lab_round_trip_within_ulps(a, b, c, d, e, f, g, h):
    s = PhaseState(vec2(a, b), vec2(c, d), vec2(e, f), vec2(g, h),
                   np.zeros(2))
    r, v, xcm, vcm = cm_from_lab(lab_from_cm(s))
    # the maps mix r with xcm (and v with vcm), so per-component round-off
    # lives at the ulp of the larger of the mixed pair
    for got, want, other in ((r, s.r, s.xcm), (v, s.v, s.vcm),
                             (xcm, s.xcm, s.r), (vcm, s.vcm, s.v)):
        for gi, wi, oi in zip(got, want, other):
            scale = max(abs(wi), abs(oi), 1e-300)
            assert abs(gi - wi) <= 4 * math.ulp(scale)


@given(vals=st.lists(st.floats(-10, 10, allow_nan=False),
                     min_size=10, max_size=10))
def test_flatten_round_trip_exact(vals):
    y = np.array(vals)
    assert np.array_equal(PhaseState.from_flat(y).flatten(), y)


# --- parameter validation ---------------------------------------------------

@pytest.mark.parametrize("kwargs", [
    dict(eps=0.0), dict(h0=-1.0), dict(r_min=0.5, r_max=0.1),
    dict(cube_side=2e-3), dict(m=0.0), dict(collision_floor=0.0),
])
def test_params_validation(kwargs):
    with pytest.raises(ValueError):
        Params(**kwargs)


# --- energy dissipation identity -------------------------------------------

def _dissipation_error(h):
    s0 = PhaseState(vec2(3, 0), vec2(0, 0.8), vec2(0.2, 0.1),
                    vec2(0.05, -0.02), vec2(0.5, 0.3))
    s1 = rk4_step(s0, h, Direction.FORWARD, P)
    mid = rk4_step(s0, h / 2, Direction.FORWARD, P)
    de = total_energy(s1, P) - total_energy(s0, P)
    quad = -4.0 * P.m * P.eps * float(mid.acm @ mid.acm) * h
    return abs(de - quad)


def test_energy_dissipation_identity_third_order():
    e1 = _dissipation_error(1e-3)
    e2 = _dissipation_error(5e-4)
    assert e1 < 1e-8
    assert 4.0 < e1 / e2 < 16.0  # midpoint quadrature: O(h^3) local error
