import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heliumrr.dynamics import FieldMode, Params, PhaseState, vec2
from heliumrr.errors import DegenerateFace
from heliumrr.integrator import adaptive_step
from heliumrr.kepler import ManifoldPoint, elements_from_state, \
    sample_initial_conditions
from heliumrr.measure import (OK, DensityRunConfig, Hypercube,
                              evolve_cube, face_log_area, gram_matrix,
                              make_cube, point_density, renormalize,
                              run_phase, symmetric_eigen,
                              transient_eigenvalues)

P = Params()
CIRC = ManifoldPoint(vec2(2, 0), vec2(0, math.sqrt(7)))


def zero_centered_cube(p=P):
    return make_cube(PhaseState.from_flat(np.zeros(10)), p)


def finish(res):
    return (res.lse_max + math.log(res.lse_sum) - math.log(res.h_sum)) \
        / math.log(10.0)


# --- cube construction -------------------------------------------------------

def test_make_cube_axis_aligned():
    c = make_cube(CIRC.lift(), P)
    np.testing.assert_array_equal(c.offsets, np.eye(10) * P.cube_side)
    assert c.log_area_accum == 0.0


def test_fresh_cube_gram_is_scaled_identity():
    c = make_cube(CIRC.lift(), P)
    np.testing.assert_array_equal(gram_matrix(c), np.eye(10) * P.cube_side ** 2)


def test_fresh_cube_face_ratio_is_one():
    c = make_cube(CIRC.lift(), P)
    fla = face_log_area(symmetric_eigen(gram_matrix(c)))
    assert fla == pytest.approx(8 * math.log(P.cube_side), rel=1e-14)


# --- cube evolution ----------------------------------------------------------

def test_zero_offset_stays_zero():
    c = make_cube(CIRC.lift(), P)
    c.offsets[3] = 0.0
    out = evolve_cube(c, 1e-4, P)
    assert np.all(out.offsets[3] == 0.0)


def test_acm_offset_decays_at_runaway_rate():
    c = make_cube(CIRC.lift(), P)
    h = 1e-4
    out = evolve_cube(c, h, P)
    ratio = np.linalg.norm(out.offsets[8]) / P.cube_side
    assert ratio == pytest.approx(math.exp(-h / (2 * P.eps)), rel=1e-6)


def test_position_offset_moves_slowly():
    c = make_cube(CIRC.lift(), P)
    h = 1e-4
    out = evolve_cube(c, h, P)
    change = np.linalg.norm(out.offsets[0] - c.offsets[0])
    assert change < 10 * h * P.cube_side


# --- gram + eigen ------------------------------------------------------------

def test_gram_of_orthogonal_offsets_is_diagonal():
    lengths = np.linspace(1e-5, 1e-3, 10)
    c = Hypercube(center=CIRC.lift(), offsets=np.diag(lengths),
                  log_area_accum=0.0, initial_side=P.cube_side)
    np.testing.assert_allclose(gram_matrix(c), np.diag(lengths ** 2),
                               rtol=0, atol=0)


def test_gram_rank_deficiency():
    offs = np.eye(10) * 1e-4
    offs[1] = offs[0]
    c = Hypercube(center=CIRC.lift(), offsets=offs, log_area_accum=0.0,
                  initial_side=P.cube_side)
    w = symmetric_eigen(gram_matrix(c)).eigenvalues
    assert w[0] <= 1e-12 * w[-1]


def test_eigen_diagonal_matrix():
    sr = symmetric_eigen(np.diag(np.arange(1.0, 11.0)))
    np.testing.assert_allclose(sr.eigenvalues, np.arange(1.0, 11.0),
                               rtol=1e-14)


def test_eigen_similarity_invariance(rng):
    d = np.diag(rng.uniform(0.1, 5.0, size=10))
    q, _ = np.linalg.qr(rng.standard_normal((10, 10)))
    sr = symmetric_eigen(q @ d @ q.T)
    np.testing.assert_allclose(sr.eigenvalues, np.sort(np.diag(d)),
                               rtol=1e-10)


@given(seed=st.integers(0, 2 ** 31))
@settings(max_examples=30)
def test_eigen_reconstruction_and_oracle(seed):
    rng = np.random.default_rng(seed)
    r = rng.standard_normal((10, 10))
    b = r @ r.T
    sr = symmetric_eigen(b)
    q, lam = sr.eigenvectors, sr.eigenvalues
    assert np.all(np.diff(lam) >= 0)
    rec_err = np.linalg.norm(q @ np.diag(lam) @ q.T - b)
    assert rec_err <= 1e-10 * np.linalg.norm(b)
    np.testing.assert_allclose(q.T @ q, np.eye(10), atol=1e-12)
    # independent LAPACK evaluation of the spectrum
    np.testing.assert_allclose(lam, np.linalg.eigvalsh(b),
                               rtol=1e-10, atol=1e-10 * lam[-1])


# --- face area ---------------------------------------------------------------

def test_face_area_excludes_two_smallest():
    lengths = np.full(10, 1e-4)
    lengths[:2] = 1e-9
    c = Hypercube(center=CIRC.lift(), offsets=np.diag(lengths),
                  log_area_accum=0.0, initial_side=P.cube_side)
    fla = face_log_area(symmetric_eigen(gram_matrix(c)))
    assert fla == pytest.approx(8 * math.log(1e-4), rel=1e-13)


def test_face_area_degenerate():
    lengths = np.full(10, 1e-4)
    lengths[:3] = 0.0
    c = Hypercube(center=CIRC.lift(), offsets=np.diag(lengths),
                  log_area_accum=0.0, initial_side=P.cube_side)
    with pytest.raises(DegenerateFace):
        face_log_area(symmetric_eigen(gram_matrix(c)))


# --- renormalization ---------------------------------------------------------

def test_renormalize_fresh_cube_keeps_accum():
    out = renormalize(make_cube(CIRC.lift(), P), P)
    assert abs(out.log_area_accum) < 1e-12


def test_renormalize_uniform_scaling_gains_eight_log_ten():
    c = make_cube(CIRC.lift(), P)
    c.offsets *= 10.0
    out = renormalize(c, P)
    assert out.log_area_accum == pytest.approx(8 * math.log(10), rel=1e-12)


def test_renormalizations_compose_additively():
    c = make_cube(CIRC.lift(), P)
    c.offsets *= 10.0
    once = renormalize(c, P)
    once.offsets *= 5.0
    twice = renormalize(once, P)
    assert twice.log_area_accum == pytest.approx(
        8 * (math.log(10) + math.log(5)), rel=1e-12)


def test_renormalize_restores_orthonormal_sides():
    c = make_cube(CIRC.lift(), P)
    c.offsets *= np.linspace(1, 30, 10)[:, None]
    out = renormalize(c, P)
    lengths = np.linalg.norm(out.offsets, axis=1)
    np.testing.assert_allclose(lengths, P.cube_side, rtol=1e-12)
    g = out.offsets @ out.offsets.T
    np.testing.assert_allclose(g, np.eye(10) * P.cube_side ** 2,
                               atol=1e-12 * P.cube_side ** 2)


# --- fused loop vs public operations ----------------------------------------

def test_phase_kernel_matches_public_operations():
    duration = 0.05
    log_side8 = 8 * math.log(P.cube_side)

    cube = make_cube(CIRC.lift(), P)
    t = 0.0
    vals, steps = [], []
    while t < duration:
        h = min(adaptive_step(cube.center, P), duration - t)
        cube = evolve_cube(cube, h, P)
        t += h
        fla = face_log_area(symmetric_eigen(gram_matrix(cube)))
        vals.append(cube.log_area_accum + fla - log_side8)
        steps.append(h)
        if np.max(np.linalg.norm(cube.offsets, axis=1)) > P.renorm_threshold:
            cube = renormalize(cube, P)
    vals, steps = np.array(vals), np.array(steps)
    shift = vals.max()
    ref = (shift + math.log(np.sum(steps * np.exp(vals - shift)))
           - math.log(steps.sum())) / math.log(10)

    y = make_cube(CIRC.lift(), P).vertices()
    res = run_phase(y, 0.0, duration, P, record=True)
    assert res.status == OK
    assert finish(res) == pytest.approx(ref, abs=1e-9)


# --- synthetic linear flows --------------------------------------------------

MIXED_RATES = np.array([30.0, 25.0, 2.0, 1.5, -1.0, -1.5, 0.7, -0.3, 0.2,
                        -2.0])


def test_renormalization_neutrality_on_linear_flow():
    horizon = 3.0
    y1 = zero_centered_cube().vertices()
    res1 = run_phase(y1, 0.0, horizon, P, mode=FieldMode.LINEAR,
                     rates=MIXED_RATES, record=True)
    loose = Params(renorm_threshold=math.inf)
    y2 = zero_centered_cube(loose).vertices()
    res2 = run_phase(y2, 0.0, horizon, loose, mode=FieldMode.LINEAR,
                     rates=MIXED_RATES, record=True)
    assert res1.status == OK and res2.status == OK
    assert res1.renorms > 0 and res2.renorms == 0
    assert abs(finish(res1) - finish(res2)) < 1e-6


@pytest.mark.parametrize("g", [10.0, -10.0])
def test_log_domain_safety_against_known_exponents(g):
    # all rates equal g: backward, the 8 kept directions contract at rate
    # g each, so the instantaneous area ratio is exp(-8 g t) and the time
    # average has the closed form (1 - exp(-8 g T)) / (8 g T)
    horizon = 8.625           # |8 g T| = 690: ratios sweep ~300 decades
    rates = np.full(10, g)
    y = zero_centered_cube().vertices()
    res = run_phase(y, 0.0, horizon, P, mode=FieldMode.LINEAR, rates=rates,
                    record=True)
    assert res.status == OK
    got = finish(res)
    assert math.isfinite(got)
    big = 8.0 * g * horizon
    # log10 of (1 - exp(-big)) / big, stable for either sign of big
    if big > 0:
        expected = (math.log1p(-math.exp(-big)) - math.log(big)) \
            / math.log(10)
    else:
        expected = (-big + math.log1p(-math.exp(big)) - math.log(-big)) \
            / math.log(10)
    # discretization bias of the step-weighted average is O(8 g h0)
    assert got == pytest.approx(expected, abs=0.01)


def test_frozen_flow_density_is_one():
    rec = point_density(CIRC, P, DensityRunConfig(field_mode=FieldMode.FROZEN))
    assert rec.status == "ok"
    assert abs(rec.log10_rho) < 1e-10


# --- squeeze and point density ----------------------------------------------

def test_transient_squeezes_two_directions():
    for pt in sample_initial_conditions(3, 99, P):
        status, w = transient_eigenvalues(pt, P)
        assert status == OK
        assert w[0] <= 1e-6 * w[2]
        assert w[1] <= 1e-6 * w[2]


def test_point_density_deterministic():
    a = point_density(CIRC, P)
    b = point_density(CIRC, P)
    assert a.status == "ok" and math.isfinite(a.log10_rho)
    assert a.log10_rho == b.log10_rho
    assert a.E == b.E and a.M == b.M


def test_point_density_elements_match_kepler():
    el = elements_from_state(CIRC, P)
    rec = point_density(CIRC, P)
    assert rec.E == pytest.approx(el.E, rel=1e-14)
    assert rec.M == pytest.approx(el.M, rel=1e-14)


def test_center_stays_on_manifold_bitwise():
    y = make_cube(CIRC.lift(), P).vertices()
    res = run_phase(y, 0.0, 0.5, P, record=True)
    assert res.status == OK
    assert np.all(y[0, 4:] == 0.0)


def test_point_density_degenerate_status():
    rec = point_density(ManifoldPoint(vec2(2, 0), vec2(0.5, 0)), P)
    assert rec.status == "degenerate"
    assert math.isnan(rec.log10_rho)


def test_point_density_unbound_status():
    rec = point_density(ManifoldPoint(vec2(1, 0), vec2(0, 10)), P)
    assert rec.status == "failed"


def test_point_density_collision_status():
    # highly radial orbit plus a raised collision floor the periapsis
    # violates; the failure is recorded, not thrown
    tight = Params(collision_floor=0.2)
    rec = point_density(ManifoldPoint(vec2(2, 0), vec2(0.1, 0.1)), tight)
    assert rec.status == "collision"
    assert math.isnan(rec.log10_rho)
