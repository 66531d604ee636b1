import numpy as np
import pytest

from needlelab.linear import (BlowUpError, LinearProblem, StabilityGuardError, check_stability,
                              energy_ledger_check, heat6_step, linstep_constant_b, phi1,
                              solve_linear_ivp, solve_linear_iterative, split_step)
from needlelab.operators import EllipticityLossError
from needlelab.spectral import RealField, SpectralGrid, random_bandlimited


def test_phi1_limits():
    z = np.array([0.0, 1e-12, -1.0, 2.0])
    out = phi1(z)
    assert out[0] == 1.0
    assert out[1] == pytest.approx(1.0)
    assert out[2] == pytest.approx(1 - np.exp(-1.0))
    assert out[3] == pytest.approx((np.exp(2.0) - 1) / 2)


@pytest.mark.parametrize("bbar", [0.4, 1.0])
@pytest.mark.parametrize("eps", [0.0, 1e-3])
@pytest.mark.parametrize("k", [1, 2, 4])
def test_single_mode_decay_law(grid, bbar, eps, k):
    lam = 2 * np.pi * k / grid.length
    u = RealField(grid, np.sin(lam * grid.nodes))
    for _ in range(100):
        u = linstep_constant_b(u, None, bbar, eps, 1e-3)
    expected = np.exp(-(bbar * lam**3 + eps * lam**6) * 0.1) * np.sin(lam * grid.nodes)
    assert np.max(np.abs(u.samples - expected)) <= 1e-8


def test_heat6_constant_forcing_gives_linear_mean_growth(grid):
    u = heat6_step(RealField.zeros(grid), RealField.constant(grid, 2.0), 0.1, 0.5)
    assert np.allclose(u.samples, 1.0)


def test_heat6_rejects_negative_viscosity(grid):
    with pytest.raises(ValueError):
        heat6_step(RealField.zeros(grid), RealField.zeros(grid), -1.0, 0.1)


def test_constant_b_rejects_nonpositive(grid):
    with pytest.raises(ValueError):
        linstep_constant_b(RealField.zeros(grid), None, 0.0, 0.0, 0.1)


def test_stability_guard(grid):
    b = 1.0 + 0.5 * np.cos(2 * np.pi * grid.nodes / grid.length)
    assert check_stability(grid, b, 1e-4) < 0.5
    with pytest.raises(StabilityGuardError):
        check_stability(grid, b, 1e-2)


def test_split_step_with_constant_b_matches_exact_step(grid, rng):
    u = random_bandlimited(grid, 10, rng)
    f = random_bandlimited(grid, 5, rng)
    b = np.full(grid.n, 0.8)
    stepped, _ = split_step(grid, u.samples, b, f.samples, 1e-4, 1e-3)
    exact = linstep_constant_b(u, f, 0.8, 1e-4, 1e-3)
    assert np.allclose(stepped, exact.samples, atol=1e-15)


def test_energy_ledger_closes_for_constant_b(grid, rng):
    prob = LinearProblem(RealField.constant(grid, 0.6), random_bandlimited(grid, 12, rng), 0.02, 1e-4)
    _, ledger = solve_linear_ivp(prob, s=5)
    report = energy_ledger_check(ledger)
    assert report["passed"]
    assert report["max_relative_residual"] <= 1e-12
    assert report["implicit_nonnegative"] and report["dissipation_nonnegative"]


def test_energy_ledger_variable_b_is_first_order(grid, rng):
    u0 = random_bandlimited(grid, 6, rng, amplitude=0.1)
    b = RealField(grid, 1.0 + 0.2 * np.cos(2 * np.pi * grid.nodes / grid.length))
    residuals = []
    for dt in (2e-4, 1e-4):
        _, ledger = solve_linear_ivp(LinearProblem(b, u0, 0.02, dt), s=0)
        residuals.append(np.sum(np.abs(ledger.as_arrays()["residual"])))
    assert residuals[1] < residuals[0]


def test_norm_is_nonincreasing_without_forcing(grid, rng):
    b = RealField(grid, 1.0 + 0.1 * np.sin(2 * np.pi * grid.nodes / grid.length))
    traj, _ = solve_linear_ivp(LinearProblem(b, random_bandlimited(grid, 8, rng), 0.05, 1e-4))
    l2 = np.asarray(traj.l2)
    assert np.all(np.diff(l2) <= 1e-12 * l2[0])


def test_viscosity_orders_solutions(grid, rng):
    u0 = random_bandlimited(grid, 30, rng)
    norms = []
    for eps in (0.0, 1e-6, 1e-5):
        traj, _ = solve_linear_ivp(LinearProblem(RealField.constant(grid, 1.0), u0, 0.01, 1e-3, epsilon=eps))
        norms.append(traj.l2[-1])
    assert norms[0] > norms[1] > norms[2]


def test_time_dependent_coefficients_and_forcing(grid):
    u0 = RealField.zeros(grid)
    f = lambda t: RealField.constant(grid, 1.0)
    b = [RealField.constant(grid, 1.0)] * 10
    traj, _ = solve_linear_ivp(LinearProblem(b, u0, 0.01, 1e-3, f=f))
    assert np.allclose(traj.final.samples, 0.01)
    assert traj.times[-1] == pytest.approx(0.01)


def test_ellipticity_loss(grid):
    b = RealField(grid, np.cos(2 * np.pi * grid.nodes / grid.length))
    with pytest.raises(EllipticityLossError):
        solve_linear_ivp(LinearProblem(b, RealField.zeros(grid), 0.01, 1e-3))


def test_blowup_guard_with_growing_forcing(small_grid):
    f = lambda t: RealField.constant(small_grid, 1e12)
    prob = LinearProblem(RealField.constant(small_grid, 1.0), RealField.zeros(small_grid), 1.0, 0.1, f=f)
    with pytest.raises(BlowUpError):
        solve_linear_ivp(prob)


def test_problem_validation(grid):
    with pytest.raises(ValueError):
        LinearProblem(RealField.constant(grid, 1.0), RealField.zeros(grid), 0.01, 0.0)
    with pytest.raises(ValueError):
        LinearProblem(RealField.constant(grid, 1.0), RealField.zeros(grid), 1e-4, 1e-3)


def test_iterative_cross_check_agrees_to_first_order():
    g = SpectralGrid(32, 2 * np.pi)
    b = RealField(g, 1.0 + 0.2 * np.cos(g.nodes))
    u0 = RealField(g, np.sin(g.nodes) + 0.3 * np.cos(2 * g.nodes))
    gaps = []
    for dt in (5e-4, 2.5e-4):
        prob = LinearProblem(b, u0, 0.05, dt, epsilon=0.05)
        split, _ = solve_linear_ivp(prob)
        iterated, dist = solve_linear_iterative(prob, tol=1e-13)
        assert dist[-1] < 1e-13
        gaps.append(g.l2_(split.final.samples - iterated.samples))
    assert gaps[1] < 0.7 * gaps[0]


def test_iterative_needs_viscosity(grid):
    prob = LinearProblem(RealField.constant(grid, 1.0), RealField.zeros(grid), 0.01, 1e-3)
    with pytest.raises(ValueError):
        solve_linear_iterative(prob)
