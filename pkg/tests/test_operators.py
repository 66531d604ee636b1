import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from needlelab.operators import (OverflowGuardError, PhysicsParams, beta_eff, big_b, curvature,
                                 flat_background, ivantsov_background, q1, q4, q5, q_decomposed,
                                 q_direct, reconstruct_interface, rhs, rhs_direct, rhs_n,
                                 smooth_window, tower)
from needlelab.spectral import GridError, RealField, SpectralGrid, random_bandlimited


def _rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def _small_field(g, rng, kmax=8, h5=0.5):
    u = random_bandlimited(g, kmax, rng)
    return u * (h5 / g.sobolev_norm_(u.samples, 5))


@pytest.mark.parametrize("tau,gamma,eps", [(-1.0, 0.0, 0.0), (1.0, 1.0, 0.0), (1.0, -0.1, 0.0),
                                           (1.0, 0.0, -1e-3), (np.inf, 0.0, 0.0)])
def test_params_validation(tau, gamma, eps):
    with pytest.raises(ValueError):
        PhysicsParams(tau, gamma, eps)


def test_beta():
    assert PhysicsParams(2.0, 0.25).beta == pytest.approx(1.5)


def test_window_plateaus(grid):
    chi = smooth_window(grid, 0.6).samples
    x = np.abs(grid.nodes)
    assert np.all(chi[x <= 0.6 * 20] == 1.0)
    assert np.all(chi[x >= 0.9 * 20] == 0.0)
    assert np.all(np.diff(chi[grid.n // 2:]) <= 0)


def test_ivantsov_background_rejects_bad_fraction(grid):
    with pytest.raises(ValueError):
        ivantsov_background(grid, 0.95)


def test_flat_zero_state_is_steady(grid):
    p = PhysicsParams(1.0, 0.4)
    zero = RealField.zeros(grid)
    assert np.all(rhs(zero, flat_background(grid), p).samples == 0.0)
    assert beta_eff(zero, flat_background(grid), p) == pytest.approx(p.beta, abs=1e-15)


def test_isotropic_q1_is_exponential(grid, rng):
    u = _small_field(grid, rng)
    assert np.allclose(q1(u, flat_background(grid), PhysicsParams(1.0, 0.0)).samples,
                       np.exp(-u.samples), atol=1e-15)


def test_big_b_formula(grid, rng):
    u = _small_field(grid, rng)
    p = PhysicsParams(0.7, 0.3)
    hu = grid.hilbert_(u.samples)
    expected = 0.7 * (1 - 0.3 * np.cos(4 * hu)) * np.exp(-3 * u.samples)
    assert np.allclose(big_b(u, flat_background(grid), p).samples, expected, atol=1e-14)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.0, 0.9), st.floats(0.1, 3.0))
def test_route_equivalence_flat(seed, gamma, tau):
    g = SpectralGrid(128, 40.0)
    u = _small_field(g, np.random.default_rng(seed))
    bg, p = flat_background(g), PhysicsParams(tau, gamma)
    qd = q_direct(u, bg, p).samples
    assert _rel(q_decomposed(u, bg, p).samples, qd) <= 1e-9
    assert _rel(rhs(u, bg, p).samples, rhs_direct(u, bg, p).samples) <= 1e-9


def test_derivative_identities_flat(grid, rng):
    bg, p = flat_background(grid), PhysicsParams(1.0, 0.3)
    for _ in range(5):
        u = _small_field(grid, rng)
        tw = tower(u, bg, p)
        dq = grid.deriv_(tw.q, 1)
        assert _rel(tw.q4 - tw.b * grid.deriv_(u.samples, 3), dq) <= 1e-9
        assert _rel(tw.q5 - tw.b * tw.h3u, grid.hilbert_(dq)) <= 1e-9


def test_ivantsov_identities_resolved_grid(rng):
    g = SpectralGrid(512, 40.0)
    bg, p = ivantsov_background(g, 0.6), PhysicsParams(1.0, 0.3)
    for _ in range(3):
        u = _small_field(g, rng)
        qd = q_direct(u, bg, p).samples
        tw = tower(u, bg, p)
        assert _rel(tw.q, qd) <= 1e-9
        assert _rel(q4(u, bg, p).samples - tw.b * g.deriv_(u.samples, 3), g.deriv_(tw.q, 1)) <= 1e-9
        assert _rel(q5(u, bg, p).samples - tw.b * tw.h3u, g.hilbert_deriv_(tw.q, 1)) <= 1e-9


def test_rhs_splits_into_dispersive_and_remainder(grid, rng):
    u = _small_field(grid, rng)
    bg, p = flat_background(grid), PhysicsParams(1.0, 0.2)
    b = big_b(u, bg, p).samples
    split = -b * grid.hilbert_deriv_(u.samples, 3) + rhs_n(u, bg, p).samples
    assert np.allclose(split, rhs(u, bg, p).samples, atol=1e-13)


def test_linearisation_about_flat_zero(grid):
    # rhs(delta sin) = delta (|D| - tau |D|^3) sin + O(delta^2)
    k = 2 * np.pi * 3 / grid.length
    s = np.sin(k * grid.nodes)
    p = PhysicsParams(1.0, 0.0)
    errs = []
    for delta in (1e-3, 5e-4):
        r = rhs(RealField(grid, delta * s), flat_background(grid), p).samples
        errs.append(np.max(np.abs(r - delta * (k - k**3) * s)))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_ivantsov_tau_zero_residual_shrinks_with_length():
    res = []
    for length, n in ((40.0, 256), (80.0, 512)):
        g = SpectralGrid(n, length)
        r = rhs(RealField.zeros(g), ivantsov_background(g, 0.6), PhysicsParams(tau=0.0)).samples
        res.append(np.max(np.abs(r[np.abs(g.nodes) <= 0.3 * length])))
    assert res[1] < res[0]


def test_hold_far_field_reduces_residual():
    g = SpectralGrid(256, 40.0)
    inner = np.abs(g.nodes) <= 12
    p = PhysicsParams(tau=0.0)
    zero = RealField.zeros(g)
    r_zero = rhs(zero, ivantsov_background(g, 0.6, "zero"), p).samples[inner]
    r_hold = rhs(zero, ivantsov_background(g, 0.6, "hold"), p).samples[inner]
    assert np.max(np.abs(r_hold)) < 0.1 * np.max(np.abs(r_zero))


def test_ivantsov_reconstruction_is_the_parabola(grid):
    bg = ivantsov_background(grid, 0.6)
    x, y = reconstruct_interface(RealField.zeros(grid), bg)
    inside = bg.window.samples == 1.0
    xi = grid.nodes[inside]
    assert np.allclose(x[inside], xi, atol=1e-12)
    assert np.allclose(y[inside], -0.5 * xi**2, atol=1e-12)


def test_flat_reconstruction_of_zero_is_the_line(grid):
    x, y = reconstruct_interface(RealField.zeros(grid), flat_background(grid))
    assert np.allclose(x, grid.nodes - grid.nodes[0] + grid.nodes[0], atol=1e-12)
    assert np.allclose(y, 0.0, atol=1e-12)


def test_curvature_of_ivantsov_tip_is_positive(grid):
    kappa = curvature(RealField.zeros(grid), ivantsov_background(grid, 0.6)).samples
    assert 0.75 < kappa[grid.n // 2] < 1.25


def test_overflow_guard(grid):
    with pytest.raises(OverflowGuardError):
        rhs(RealField.constant(grid, 60.0), flat_background(grid), PhysicsParams())


def test_grid_mismatch(grid):
    other = SpectralGrid(128, 40.0)
    with pytest.raises(GridError):
        rhs(RealField.zeros(other), flat_background(grid), PhysicsParams())
