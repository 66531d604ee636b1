"""Time integration of ``u_t + B[u] H[d^3 u] = N[u]``.

Two schemes share the mean-frozen linear step of :mod:`needlelab.linear`:

``imex``
    each step freezes ``b = B[u_n]`` and ``f = N[u_n]``.
``picard``
    slabs of several steps; on a slab the iterates solve
    ``v^{k+1}_t + B[v^k] H[d^3 v^{k+1}] = N[v^k]`` from the slab's initial
    value until successive iterates agree in ``H^{s-1/2}``.  Slabs halve on
    non-convergence and double after a run of cheap slabs.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

from .linear import BlowUpError, check_stability, split_step, BLOWUP_FACTOR
from .operators import (Background, EllipticityLossError, NumericalAbort, PhysicsParams,
                        tower)
from .spectral import RealField
from .trajectory import Trajectory

log = logging.getLogger(__name__)

FAST_SLAB_ITERS = 5
FAST_SLABS_TO_GROW = 5


class PicardDivergenceError(NumericalAbort):
    """Picard iteration on a slab did not meet its tolerance."""


@dataclass(frozen=True, eq=False)
class EvolveConfig:
    params: PhysicsParams
    bg: Background
    s: int = 5
    dt: float = 1e-4
    t_final: float = 0.1
    scheme: Literal["picard", "imex"] = "imex"
    picard_tol: float = 1e-10
    picard_max_iter: int = 50
    output_stride: int = 1
    slab_dt: float | None = None    # picard only; defaults to 10 dt
    max_slab_dt: float | None = None
    adapt_slab: bool = True

    def __post_init__(self):
        if self.scheme not in ("picard", "imex"):
            raise ValueError(f"scheme must be 'picard' or 'imex', got {self.scheme!r}")
        if self.dt <= 0 or self.t_final <= 0:
            raise ValueError("dt and t_final must be positive")
        if self.picard_tol <= 0:
            raise ValueError("picard_tol must be positive")
        if self.picard_max_iter < 1 or self.output_stride < 1:
            raise ValueError("picard_max_iter and output_stride must be at least 1")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_final / self.dt)))

    @property
    def slab_steps(self) -> int:
        slab = self.slab_dt if self.slab_dt is not None else 10 * self.dt
        return max(1, int(round(slab / self.dt)))


def _frozen_coefficients(u: np.ndarray, cfg: EvolveConfig):
    g = cfg.bg.grid
    tw = tower(RealField(g, u), cfg.bg, cfg.params)
    if tw.beta_eff <= 0:
        raise EllipticityLossError(f"min B[u] = {tw.beta_eff:.3g} <= 0")
    return tw.b, tw.n, tw.beta_eff


def _advance(u: np.ndarray, b: np.ndarray, f: np.ndarray, cfg: EvolveConfig, dt: float):
    g = cfg.bg.grid
    check_stability(g, b, dt)
    u_next, row = split_step(g, u, b, f, cfg.params.epsilon, dt)
    if not np.all(np.isfinite(u_next)):
        raise BlowUpError("non-finite values in the solution")
    return u_next, row


def step_imex(u_n: RealField, cfg: EvolveConfig, dt: float | None = None) -> RealField:
    """One step with ``B`` and ``N`` frozen at ``u_n``."""
    b, f, _ = _frozen_coefficients(u_n.samples, cfg)
    u_next, _ = _advance(u_n.samples, b, f, cfg, cfg.dt if dt is None else dt)
    return RealField(u_n.grid, u_next)


@dataclass
class SlabResult:
    states: list          # samples at each step of the slab, first is the initial value
    distances: list       # sup over the slab of ||v^{k+1} - v^k||_{H^{s-1/2}}
    beta_eff: list
    ledger_res: list
    converged: bool
    noise_floor: float = 0.0   # distances below this are roundoff

    @property
    def iterations(self) -> int:
        return len(self.distances)

    @property
    def ratios(self) -> list[float]:
        """``d[k+1] / d[k]`` for the pairs where both distances clear the noise floor."""
        d = self.distances
        return [d[k + 1] / d[k] for k in range(len(d) - 1)
                if d[k + 1] > self.noise_floor and d[k] > 0]


def picard_slab(u_n: RealField, cfg: EvolveConfig, n_sub: int, dt: float | None = None,
                raise_on_failure: bool = True) -> SlabResult:
    """Picard iteration on a slab of ``n_sub`` steps starting from ``u_n``."""
    g = u_n.grid
    dt = cfg.dt if dt is None else dt
    s_norm = cfg.s - 0.5
    # roundoff in the samples is amplified by the H^{s-1/2} weight at the top mode
    floor = 10 * np.finfo(float).eps * (1 + g.lam_max) ** s_norm * g.sobolev_norm_(u_n.samples, s_norm)
    v = [u_n.samples] * (n_sub + 1)
    distances: list[float] = []
    for _ in range(cfg.picard_max_iter):
        coeffs = [_frozen_coefficients(v[j], cfg) for j in range(n_sub)]
        new = [u_n.samples]
        res = []
        for j in range(n_sub):
            b, f, _ = coeffs[j]
            nxt, row = _advance(new[j], b, f, cfg, dt)
            new.append(nxt)
            res.append(row["residual"])
        dist = max(g.sobolev_norm_(a - c, s_norm) for a, c in zip(new, v))
        distances.append(dist)
        v = new
        if dist < cfg.picard_tol:
            beta = [c[2] for c in coeffs]
            return SlabResult(v, distances, beta, res, True, floor)
        if not np.isfinite(dist):
            break
    if raise_on_failure:
        raise PicardDivergenceError(
            f"no convergence in {cfg.picard_max_iter} iterations over {n_sub} steps "
            f"(last distance {distances[-1]:.3g})")
    beta = [_frozen_coefficients(v[j], cfg)[2] for j in range(n_sub)]
    return SlabResult(v, distances, beta, res, False, floor)


def step_picard_slab(u_n: RealField, cfg: EvolveConfig,
                     slab_dt: float) -> tuple[RealField, list[float]]:
    """Converged slab end state and the sequence of iterate distances."""
    n_sub = max(1, int(round(slab_dt / cfg.dt)))
    result = picard_slab(u_n, cfg, n_sub)
    return RealField(u_n.grid, result.states[-1]), result.distances


def evolve(u0: RealField, cfg: EvolveConfig) -> Trajectory:
    """Integrate to ``cfg.t_final`` or to the first numerical abort.

    An abort is recorded on the returned trajectory (``abort_time`` and
    ``abort_reason``) rather than raised.
    """
    if u0.grid != cfg.bg.grid:
        raise ValueError("initial field and background live on different grids")
    g = u0.grid
    n_steps = cfg.n_steps
    dt = cfg.t_final / n_steps
    traj = Trajectory(s=cfg.s, meta={"scheme": cfg.scheme, "dt": dt})
    ceiling = BLOWUP_FACTOR * max(g.l2_(u0.samples), 1.0)
    u = u0.samples
    step = 0
    pending = []  # (step index, samples, beta_eff, picard iterations, ledger residual)

    def flush(entries):
        for k, samples, beta, iters, res in entries:
            if k % cfg.output_stride == 0:
                traj.record(k * dt, RealField(g, samples), beta, iters, res)

    slab = cfg.slab_steps
    max_slab = int(round(cfg.max_slab_dt / dt)) if cfg.max_slab_dt else 64 * slab
    fast_run = 0
    try:
        while step < n_steps:
            if cfg.scheme == "imex":
                b, f, beta = _frozen_coefficients(u, cfg)
                u_next, row = _advance(u, b, f, cfg, dt)
                flush([(step, u, beta, 0, row["residual"])])
                u, step = u_next, step + 1
            else:
                n_sub = min(slab, n_steps - step)
                result = picard_slab(RealField(g, u), cfg, n_sub, dt, raise_on_failure=False)
                if not result.converged:
                    if not cfg.adapt_slab or n_sub == 1:
                        raise PicardDivergenceError(
                            f"slab of {n_sub} steps did not converge at t = {step * dt:.6g}")
                    slab = max(1, n_sub // 2)
                    fast_run = 0
                    log.debug("halving slab to %d steps at t=%g", slab, step * dt)
                    continue
                flush([(step + j, result.states[j], result.beta_eff[j], result.iterations,
                        result.ledger_res[j]) for j in range(n_sub)])
                u, step = result.states[-1], step + n_sub
                if cfg.adapt_slab:
                    fast_run = fast_run + 1 if result.iterations < FAST_SLAB_ITERS else 0
                    if fast_run >= FAST_SLABS_TO_GROW:
                        slab, fast_run = min(2 * slab, max_slab), 0
            if g.l2_(u) > ceiling:
                raise BlowUpError(f"norm growth beyond {BLOWUP_FACTOR:g} at t = {step * dt:.6g}")
    except NumericalAbort as exc:
        traj.abort_time = step * dt
        traj.abort_reason = f"{type(exc).__name__}: {exc}"
        log.warning("run aborted at t=%g: %s", traj.abort_time, exc)
        if not traj.times or traj.times[-1] < step * dt:
            traj.record(step * dt, RealField(g, u), float("nan"), 0, 0.0)
        return traj
    try:
        _, _, beta = _frozen_coefficients(u, cfg)
    except NumericalAbort:
        beta = float("nan")
    if not traj.times or traj.times[-1] < cfg.t_final - 0.5 * dt:
        traj.record(cfg.t_final, RealField(g, u), beta, 0, 0.0)
    return traj


def viscosity_sweep(u0: RealField, cfg: EvolveConfig, eps_list) -> dict:
    """Final states for each viscosity and their ``H^{s+1/2}`` distances.

    ``distances`` are to the smallest-viscosity run; ``successive`` compare
    neighbours in ``eps_list`` and ``rates`` are ratios of successive
    distances (about 2 under halving when the error is first order in eps).
    """
    eps = [float(e) for e in eps_list]
    if not eps:
        raise ValueError("eps_list is empty")
    if any(b >= a for a, b in zip(eps, eps[1:])) or eps[-1] < 0:
        raise ValueError("eps_list must be strictly decreasing and nonnegative")
    g = u0.grid
    finals, aborted = [], []
    for e in eps:
        run_cfg = replace(cfg, params=replace(cfg.params, epsilon=e))
        traj = evolve(u0, run_cfg)
        finals.append(traj.final)
        if not traj.completed:
            aborted.append(e)
    norm = lambda a, b: g.sobolev_norm_(a.samples - b.samples, cfg.s + 0.5)
    distances = [norm(f, finals[-1]) for f in finals[:-1]]
    successive = [norm(a, b) for a, b in zip(finals, finals[1:])]
    rates = [a / b for a, b in zip(successive, successive[1:]) if b > 0]
    fit = None
    if len(distances) >= 2 and all(d > 0 for d in distances):
        gaps = np.array(eps[:-1]) - eps[-1]
        fit = float(np.polyfit(np.log(gaps), np.log(distances), 1)[0])
    return {"eps": eps, "distances": distances, "successive": successive,
            "rates": rates, "fitted_order": fit, "aborted": aborted,
            "partial": bool(aborted), "finals": finals}
