"""Linear dispersive-dissipative solvers.

Two model problems on the periodic grid:

* ``u_t - eps d^6 u = f``, solved exactly per Fourier mode;
* ``u_t + b(xi, t) H[d^3 u] - eps d^6 u = f``, solved by freezing the mean
  ``bbar`` of ``b``: the symbol ``bbar |lam|^3 + eps lam^6`` is integrated
  exactly and ``(b - bbar) H[d^3 u]`` is moved to the forcing.

Forcing is sampled at the start of each step (first-order ``phi1`` weighting).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .operators import EllipticityLossError, NumericalAbort
from .spectral import RealField, SpectralGrid
from .trajectory import EnergyLedger, Trajectory

STABILITY_LIMIT = 0.5
BLOWUP_FACTOR = 1e6

TimeField = Union[RealField, Callable[[float], RealField], Sequence[RealField]]


class StabilityGuardError(ValueError):
    """Time step too large for the explicit variable-coefficient remainder."""


class BlowUpError(NumericalAbort):
    pass


def phi1(z: np.ndarray) -> np.ndarray:
    """``(exp(z) - 1) / z`` with the removable singularity filled in."""
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    nz = z != 0
    out[nz] = np.expm1(z[nz]) / z[nz]
    return out


def dispersive_symbol(grid: SpectralGrid, bbar: float, eps: float) -> np.ndarray:
    """Symbol of ``bbar H d^3 - eps d^6`` on the rfft layout (Nyquist kept only in ``eps lam^6``)."""
    lam = grid.lam
    disp = np.abs(lam) ** 3
    disp[-1] = 0.0
    return bbar * disp + eps * lam**6


def _exact_update(grid, u_hat, f_hat, symbol, dt):
    z = -symbol * dt
    return np.exp(z) * u_hat + phi1(z) * dt * f_hat


def heat6_step(u: RealField, f: RealField, eps: float, dt: float) -> RealField:
    """One exact step of ``u_t - eps d^6 u = f`` with ``f`` frozen."""
    if eps < 0 or dt <= 0:
        raise ValueError(f"need eps >= 0 and dt > 0, got eps={eps}, dt={dt}")
    g = u.grid
    sym = eps * g.lam**6
    return RealField(g, g.ifft(_exact_update(g, g.fft(u.samples), g.fft(f.samples), sym, dt)))


def linstep_constant_b(u: RealField, f: RealField | None, bbar: float, eps: float,
                       dt: float) -> RealField:
    """One exact step of ``u_t + bbar H[d^3 u] - eps d^6 u = f``."""
    if bbar <= 0:
        raise ValueError(f"bbar must be positive, got {bbar}")
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    g = u.grid
    f_hat = np.zeros(g.n // 2 + 1, dtype=complex) if f is None else g.fft(f.samples)
    sym = dispersive_symbol(g, bbar, eps)
    return RealField(g, g.ifft(_exact_update(g, g.fft(u.samples), f_hat, sym, dt)))


def check_stability(grid: SpectralGrid, b: np.ndarray, dt: float) -> float:
    """Return ``dt max|b - bbar| lam_max^3``; raise if it exceeds the limit."""
    measure = dt * float(np.max(np.abs(b - b.mean()))) * grid.lam_max**3
    if measure > STABILITY_LIMIT:
        raise StabilityGuardError(
            f"dt*max|b-bbar|*lam_max^3 = {measure:.3g} exceeds {STABILITY_LIMIT}; reduce dt")
    return measure


def split_step(grid: SpectralGrid, u: np.ndarray, b: np.ndarray, f: np.ndarray,
               eps: float, dt: float, s: float | None = None) -> tuple[np.ndarray, dict]:
    """Advance ``u_t + b H[d^3 u] - eps d^6 u = f`` by one mean-frozen step.

    Returns the new samples and the ledger row for the step (``L^2`` balance,
    plus the ``H^{s+1/2}`` balance when ``s`` is given).
    """
    bbar = float(b.mean())
    h3u = grid.hilbert_deriv_(u, 3)
    remainder = (b - bbar) * h3u
    sym = dispersive_symbol(grid, bbar, eps)
    u_hat = grid.fft(u)
    f_hat = grid.fft(f)
    rem_hat = grid.fft(remainder)
    new_hat = _exact_update(grid, u_hat, f_hat - rem_hat, sym, dt)
    decay_sq = np.exp(-2.0 * sym * dt)

    def balance(w):
        before = np.sum(w * np.abs(u_hat) ** 2)
        after = np.sum(w * np.abs(new_hat) ** 2)
        implicit = np.sum(w * np.abs(u_hat) ** 2 * (1.0 - decay_sq))
        forcing = 2.0 * dt * np.sum(w * np.real(u_hat * np.conj(f_hat)))
        rem_work = 2.0 * dt * np.sum(w * np.real(u_hat * np.conj(rem_hat)))
        dissipation = implicit + rem_work
        return before, implicit, dissipation, forcing, after - before + dissipation - forcing

    l2_sq, implicit, dissipation, forcing, residual = balance(grid.sobolev_weights(0.0))
    row = dict(l2_sq=l2_sq, dissipation_implicit=implicit, dissipation=dissipation,
               forcing_work=forcing, residual=residual)
    if s is not None:
        hs_sq, _, diss_hs, forcing_hs, residual_hs = balance(grid.sobolev_weights(s + 0.5))
        row.update(hs_sq=hs_sq, dissipation_hs=diss_hs, forcing_work_hs=forcing_hs,
                   residual_hs=residual_hs)
    return grid.ifft(new_hat), row


def _at(source: TimeField | None, t: float, step: int, grid: SpectralGrid) -> np.ndarray:
    if source is None:
        return np.zeros(grid.n)
    if isinstance(source, RealField):
        return source.samples
    if callable(source):
        value = source(t)
        return value.samples if isinstance(value, RealField) else np.asarray(value, dtype=float)
    return source[step].samples


@dataclass(frozen=True, eq=False)
class LinearProblem:
    """``u_t + b H[d^3 u] - eps d^6 u = f`` on ``[0, t_final]``.

    ``b`` and ``f`` may be fixed fields, callables of ``t``, or per-step sequences.
    """

    b: TimeField
    u0: RealField
    t_final: float
    dt: float
    f: TimeField | None = None
    epsilon: float = 0.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.t_final < self.dt * (1 - 1e-12):
            raise ValueError(f"t_final={self.t_final} is shorter than dt={self.dt}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be nonnegative, got {self.epsilon}")

    @property
    def grid(self) -> SpectralGrid:
        return self.u0.grid

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_final / self.dt)))


def solve_linear_ivp(prob: LinearProblem, s: float = 0.0,
                     output_stride: int = 1) -> tuple[Trajectory, EnergyLedger]:
    """March ``prob`` with :func:`split_step`; snapshots every ``output_stride`` steps."""
    g = prob.grid
    n_steps = prob.n_steps
    dt = prob.t_final / n_steps
    traj = Trajectory(s=s)
    ledger = EnergyLedger(s=s)
    u = prob.u0.samples.copy()
    # growth is measured against the initial norm, or unity for zero data
    ceiling = BLOWUP_FACTOR * max(g.l2_(u), 1.0)
    for step in range(n_steps):
        t = step * dt
        b = _at(prob.b, t, step, g)
        if b.min() <= 0:
            raise EllipticityLossError(f"min b = {b.min():.3g} <= 0 at t = {t:.6g}")
        check_stability(g, b, dt)
        f = _at(prob.f, t, step, g)
        if step % output_stride == 0:
            traj.record(t, RealField(g, u), beta_eff=b.min())
        u_next, row = split_step(g, u, b, f, prob.epsilon, dt, s)
        ledger.append(t=t, smoothing_term=b.min() * smoothing_norm_sq(g, u, s),
                      viscous_term=prob.epsilon * g.sobolev_norm_(u, s + 3.5) ** 2, **row)
        if not np.all(np.isfinite(u_next)) or g.l2_(u_next) > ceiling:
            raise BlowUpError(f"solution blew up at t = {t + dt:.6g}")
        u = u_next
    # coefficient sequences stop at the last step start; reuse its floor
    traj.record(prob.t_final, RealField(g, u), beta_eff=b.min())
    return traj, ledger


def smoothing_norm_sq(grid: SpectralGrid, u: np.ndarray, s: float) -> float:
    """``||d^{s+2} u||^2_{L^2}`` via the ``|lam|^{s+2}`` multiplier."""
    return grid.l2_(grid.frac_deriv_(u, s + 2)) ** 2


def energy_ledger_check(ledger: EnergyLedger, tol: float = 1e-10) -> dict:
    """Summarise the discrete energy balance recorded during a solve."""
    if len(ledger) == 0:
        return {"steps": 0, "max_residual": 0.0, "max_relative_residual": 0.0,
                "max_residual_hs": 0.0, "cumulative_dissipation": 0.0,
                "dissipation_nonnegative": True, "passed": True}
    a = ledger.as_arrays()
    scale = np.maximum(a["l2_sq"], 1e-300)
    rel = np.abs(a["residual"]) / scale
    cumulative = np.cumsum(a["dissipation"])
    res_hs = a["residual_hs"] if len(a["residual_hs"]) else np.zeros(1)
    return {
        "steps": len(ledger),
        "max_residual": float(np.max(np.abs(a["residual"]))),
        "max_relative_residual": float(np.max(rel)),
        "max_residual_hs": float(np.max(np.abs(res_hs))),
        "cumulative_dissipation": float(cumulative[-1]),
        "dissipation_nonnegative": bool(np.all(cumulative >= -tol * np.max(scale))),
        "implicit_nonnegative": bool(np.all(a["dissipation_implicit"] >= 0)),
        "passed": bool(np.max(rel) <= tol),
    }


def solve_linear_iterative(prob: LinearProblem, tol: float = 1e-12,
                           max_iter: int = 200) -> tuple[RealField, list[float]]:
    """Cross-check solver iterating ``u^{k+1}_t - eps d^6 u^{k+1} = f - b H[d^3 u^k]``.

    Needs ``eps > 0``; the contraction constant grows like ``||b|| / eps`` so this
    is only meant for moderate viscosity.  Returns the final field and the
    sup-in-time ``L^2`` distances between iterates.
    """
    if prob.epsilon <= 0:
        raise ValueError("the iterative cross-check needs epsilon > 0")
    g = prob.grid
    n_steps = prob.n_steps
    dt = prob.t_final / n_steps
    sym = prob.epsilon * g.lam**6
    history = np.zeros((n_steps + 1, g.n))
    history[0] = prob.u0.samples
    distances = []
    for _ in range(max_iter):
        new = np.empty_like(history)
        new[0] = prob.u0.samples
        for step in range(n_steps):
            t = step * dt
            forcing = _at(prob.f, t, step, g) - _at(prob.b, t, step, g) * g.hilbert_deriv_(history[step], 3)
            new[step + 1] = g.ifft(_exact_update(g, g.fft(new[step]), g.fft(forcing), sym, dt))
        dist = max(g.l2_(a) for a in new - history)
        distances.append(dist)
        history = new
        if not np.isfinite(dist):
            raise BlowUpError("iterative linear solve diverged")
        if dist < tol:
            break
    return RealField(g, history[-1]), distances
