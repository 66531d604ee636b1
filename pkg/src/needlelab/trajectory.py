"""Time-indexed records shared by the linear and nonlinear solvers."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.integrate import trapezoid

from .spectral import RealField


@dataclass
class EnergyLedger:
    """Per-step measurable pieces of the energy balance of one linear step.

    Over a step from ``t`` the ledger records, for both the ``L^2`` norm and
    the ``H^{s+1/2}`` norm, the exact dissipation of the frozen mean operator
    and the explicit work terms, so that

        norm_after - norm_before + dissipation - forcing_work = residual.

    ``dissipation`` includes the explicit variable-coefficient remainder and
    may be negative step by step; ``dissipation_implicit`` never is.
    """

    s: float
    t: list = field(default_factory=list)
    l2_sq: list = field(default_factory=list)
    hs_sq: list = field(default_factory=list)
    smoothing_term: list = field(default_factory=list)   # beta_eff ||d^{s+2} u||^2
    viscous_term: list = field(default_factory=list)     # eps ||u||^2_{H^{s+7/2}}
    dissipation_implicit: list = field(default_factory=list)
    dissipation: list = field(default_factory=list)
    forcing_work: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    dissipation_hs: list = field(default_factory=list)
    forcing_work_hs: list = field(default_factory=list)
    residual_hs: list = field(default_factory=list)

    def append(self, **row):
        for key, value in row.items():
            getattr(self, key).append(float(value))

    def __len__(self):
        return len(self.t)

    def as_arrays(self) -> dict[str, np.ndarray]:
        return {k: np.asarray(v) for k, v in vars(self).items() if isinstance(v, list)}


@dataclass
class Trajectory:
    """Snapshots and per-time diagnostics of one run.

    ``dxs2_l2`` is ``||d^{s+2} u||_{L^2}``; ``hs_half`` is ``||u||_{H^{s+1/2}}``.
    """

    s: float
    times: list = field(default_factory=list)
    fields: list = field(default_factory=list)
    l2: list = field(default_factory=list)
    hs_half: list = field(default_factory=list)
    dxs2_l2: list = field(default_factory=list)
    beta_eff: list = field(default_factory=list)
    picard_iters: list = field(default_factory=list)
    ledger_res: list = field(default_factory=list)
    abort_time: float | None = None
    abort_reason: str | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    def record(self, t: float, u: RealField, beta_eff: float = float("nan"),
               picard_iters: int = 0, ledger_res: float = 0.0) -> None:
        g = u.grid
        if self.times and t <= self.times[-1]:
            raise ValueError(f"times must increase: {t} after {self.times[-1]}")
        self.times.append(float(t))
        self.fields.append(u)
        self.l2.append(g.l2_(u.samples))
        self.hs_half.append(g.sobolev_norm_(u.samples, self.s + 0.5))
        self.dxs2_l2.append(g.l2_(g.deriv_(u.samples, int(self.s) + 2))
                            if float(self.s).is_integer()
                            else g.l2_(g.frac_deriv_(u.samples, self.s + 2)))
        self.beta_eff.append(float(beta_eff))
        self.picard_iters.append(int(picard_iters))
        self.ledger_res.append(float(ledger_res))

    def __len__(self):
        return len(self.times)

    @property
    def final(self) -> RealField:
        return self.fields[-1]

    @property
    def completed(self) -> bool:
        return self.abort_time is None

    @property
    def m0(self) -> float:
        return self.hs_half[0]

    def uniform_bound(self) -> dict[str, float | bool]:
        """Check ``sup ||u||^2_{H^{s+1/2}} + beta_eff int ||d^{s+2}u||^2 <= 8 M0^2``."""
        t = np.asarray(self.times)
        sup_sq = float(np.max(np.square(self.hs_half)))
        beta = float(np.nanmin(self.beta_eff)) if np.any(np.isfinite(self.beta_eff)) else 0.0
        integral = float(trapezoid(np.square(self.dxs2_l2), t)) if len(t) > 1 else 0.0
        lhs = sup_sq + beta * integral
        bound = 8.0 * self.m0**2
        return {"lhs": lhs, "bound": bound, "passed": bool(lhs <= bound)}
