"""Experiment layer: smoothing functional, contraction and Lipschitz studies, file output."""
from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .evolution import EvolveConfig, evolve, picard_slab
from .operators import Background, NumericalAbort, curvature, flat_background, reconstruct_interface
from .spectral import RealField
from .trajectory import Trajectory

NORMS_HEADER = ["t", "l2", "hs_half", "dxs2_l2", "smooth_cum", "b_min", "ledger_res"]
FIELD_HEADER = ["xi", "u", "hu", "kappa", "x", "y"]
MIN_SAMPLES = 20
CONTRACTION_LIMIT = 0.5
LIPSCHITZ_SPREAD = 0.2


@dataclass
class NormSeries:
    """Columnar per-time diagnostics of a trajectory."""

    t: np.ndarray
    l2: np.ndarray
    hs_half: np.ndarray
    dxs2_l2: np.ndarray
    smooth_cum: np.ndarray
    b_min: np.ndarray
    ledger_res: np.ndarray

    @classmethod
    def from_trajectory(cls, traj: Trajectory) -> "NormSeries":
        t = np.asarray(traj.times)
        dxs2 = np.asarray(traj.dxs2_l2)
        cum = (cumulative_trapezoid(dxs2**2, t, initial=0.0) if len(t) > 1
               else np.zeros_like(t))
        return cls(t, np.asarray(traj.l2), np.asarray(traj.hs_half), dxs2, cum,
                   np.asarray(traj.beta_eff), np.asarray(traj.ledger_res))

    def rows(self):
        cols = [getattr(self, name) for name in NORMS_HEADER]
        return zip(*cols)


def smoothing_integral(traj: Trajectory, min_samples: int = MIN_SAMPLES) -> tuple[float, NormSeries]:
    """Trapezoid-in-time value of ``int_0^T ||d^{s+2} u||^2_{L^2} dt``."""
    if len(traj) < min_samples:
        raise ValueError(f"need at least {min_samples} samples in time, got {len(traj)}")
    series = NormSeries.from_trajectory(traj)
    return float(series.smooth_cum[-1]), series


def smoothing_ratio(traj: Trajectory) -> float:
    """Smoothing functional divided by ``M0^2 = ||u0||^2_{H^{s+1/2}}``."""
    value, _ = smoothing_integral(traj)
    m0 = traj.m0
    return value / m0**2 if m0 > 0 else 0.0


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    op: str = "<="

    @property
    def passed(self) -> bool:
        if not np.isfinite(self.value):
            return False
        if self.op == "<=":
            return self.value <= self.threshold
        if self.op == ">=":
            return self.value >= self.threshold
        if self.op == "<":
            return self.value < self.threshold
        if self.op == ">":
            return self.value > self.threshold
        raise ValueError(f"unknown comparison {self.op!r}")

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name}: {self.value:.3e} {self.op} {self.threshold:.3e}"


@dataclass
class StudyReport:
    kind: str
    inputs_digest: str
    measured: dict[str, Any] = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, value: float, threshold: float, op: str = "<=") -> Check:
        check = Check(name, float(value), float(threshold), op)
        self.checks.append(check)
        return check

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "inputs_digest": self.inputs_digest,
            "passed": self.passed,
            "checks": [dict(asdict(c), passed=c.passed) for c in self.checks],
            "measured": _jsonable(self.measured),
            "metadata": _jsonable(self.metadata),
        }

    def summary(self) -> str:
        lines = [f"[{self.kind}] " + ("PASS" if self.passed else "FAIL")]
        lines += ["  " + c.line() for c in self.checks]
        return "\n".join(lines)


def digest(*parts) -> str:
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, RealField):
            h.update(part.samples.tobytes())
        elif isinstance(part, np.ndarray):
            h.update(np.ascontiguousarray(part).tobytes())
        else:
            h.update(json.dumps(_jsonable(part), sort_keys=True).encode())
    return h.hexdigest()[:16]


def _cfg_metadata(cfg: EvolveConfig) -> dict:
    g = cfg.bg.grid
    return {"n": g.n, "length": g.length, "tau": cfg.params.tau, "gamma": cfg.params.gamma,
            "epsilon": cfg.params.epsilon, "background": cfg.bg.kind, "scheme": cfg.scheme,
            "dt": cfg.dt, "t_final": cfg.t_final, "s": cfg.s}


def contraction_study(u0: RealField, cfg: EvolveConfig, slab_dt: float | None = None,
                      adapt: bool = True) -> StudyReport:
    """Successive Picard distances on the first slab and their ratios.

    Starting from ``slab_dt`` (default ``cfg.slab_dt``), the slab is halved
    while the iteration fails to converge or the largest ratio exceeds 0.5,
    unless ``adapt`` is off.
    """
    n_sub = max(1, int(round((slab_dt or cfg.slab_steps * cfg.dt) / cfg.dt)))
    attempts = []
    while True:
        result = picard_slab(u0, cfg, n_sub, raise_on_failure=False)
        max_ratio = max(result.ratios, default=0.0)
        attempts.append({"slab_steps": n_sub, "max_ratio": max_ratio,
                         "converged": result.converged, "iterations": result.iterations})
        if not adapt or n_sub == 1 or (result.converged and max_ratio <= CONTRACTION_LIMIT):
            break
        n_sub //= 2
    report = StudyReport("contraction", digest(u0, _cfg_metadata(cfg), slab_dt, adapt),
                         metadata=_cfg_metadata(cfg))
    report.measured.update(slab_steps=n_sub, slab_dt=n_sub * cfg.dt,
                           distances=result.distances, ratios=result.ratios,
                           max_ratio=max_ratio, noise_floor=result.noise_floor,
                           attempts=attempts)
    report.add("max Picard ratio on first slab", max_ratio, CONTRACTION_LIMIT)
    report.add("slab converged", float(result.converged), 1.0, ">=")
    return report


def contraction_profile(u0: RealField, cfg: EvolveConfig, slab_steps) -> list[float]:
    """Largest Picard ratio for each forced slab length."""
    return [max(picard_slab(u0, cfg, m, raise_on_failure=False).ratios, default=0.0)
            for m in slab_steps]


def lipschitz_study(u0: RealField, perturbation: RealField, deltas, cfg: EvolveConfig) -> StudyReport:
    """Measured data-dependence constant ``R(delta)`` for ``u0 + delta * perturbation``.

    ``R = (sup_t ||u - v||^2_{H^{s+1/2}} + beta_eff int ||u - v||^2_{H^{s+2}} dt)
    / ||u0 - v0||^2_{H^{s+1/2}}`` with ``beta_eff`` the smallest ``min B`` seen on
    the base run.
    """
    deltas = [float(d) for d in deltas]
    if len(deltas) < 3:
        raise ValueError("need at least three deltas")
    if any(b >= a for a, b in zip(deltas, deltas[1:])) or deltas[-1] <= 0:
        raise ValueError("deltas must be positive and strictly decreasing")
    g = u0.grid
    s = cfg.s
    base = evolve(u0, cfg)
    if not base.completed:
        raise NumericalAbort(f"base run aborted: {base.abort_reason}")
    beta = float(np.nanmin(base.beta_eff))
    t = np.asarray(base.times)
    ratios = []
    for d in deltas:
        pert = evolve(u0 + d * perturbation, cfg)
        if not pert.completed:
            raise NumericalAbort(f"perturbed run (delta={d}) aborted: {pert.abort_reason}")
        diffs = [a.samples - b.samples for a, b in zip(base.fields, pert.fields)]
        sup_sq = max(g.sobolev_norm_(x, s + 0.5) ** 2 for x in diffs)
        integral = trapezoid([g.sobolev_norm_(x, s + 2) ** 2 for x in diffs], t)
        denom = g.sobolev_norm_(d * perturbation.samples, s + 0.5) ** 2
        ratios.append((sup_sq + beta * integral) / denom)
    pair = [ratios[k] / ratios[k + 1] for k in range(len(ratios) - 1)]
    spread = abs(ratios[-1] - ratios[-2]) / max(abs(ratios[-1]), 1e-300)
    report = StudyReport("lipschitz", digest(u0, perturbation, deltas, _cfg_metadata(cfg)),
                         metadata=_cfg_metadata(cfg))
    report.measured.update(deltas=deltas, R=ratios, pair_ratios=pair, beta_eff=beta,
                           spread=spread)
    report.add("R variation over two smallest deltas", spread, LIPSCHITZ_SPREAD, "<")
    return report


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_norms_csv(traj: Trajectory, path: Path) -> None:
    series = NormSeries.from_trajectory(traj)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(NORMS_HEADER)
        for row in series.rows():
            w.writerow([_fmt(v) for v in row])


def write_field_csv(u: RealField, bg: Background, path: Path) -> None:
    g = u.grid
    try:
        kappa = curvature(u, bg).samples
        x, y = reconstruct_interface(u, bg)
    except NumericalAbort:
        # an aborted state past the overflow guard has no usable geometry
        kappa = x = y = np.full(g.n, np.nan)
    hu = g.hilbert_(u.samples)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIELD_HEADER)
        for row in zip(g.nodes, u.samples, hu, kappa, x, y):
            w.writerow([_fmt(v) for v in row])


def snapshot_indices(count: int, snapshots: int) -> list[int]:
    if count == 0:
        return []
    if snapshots >= count:
        return list(range(count))
    return sorted(set(int(round(k)) for k in np.linspace(0, count - 1, snapshots)))


def emit_outputs(result: Trajectory | StudyReport, out_dir: str | os.PathLike,
                 config: dict | None = None, bg: Background | None = None,
                 checks: list[Check] | None = None, wall_time: float | None = None,
                 snapshots: int = 11) -> list[Path]:
    """Write ``norms.csv``, ``field_<index>.csv`` and ``run.json`` (or ``report.json``).

    All floats carry 17 significant digits; CSV content depends only on the
    inputs, so repeated runs are byte-identical.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written: list[Path] = []
    run: dict[str, Any] = {"config": config or {}, "wall_time": wall_time}
    try:
        if isinstance(result, Trajectory):
            norms = out / "norms.csv"
            write_norms_csv(result, norms)
            written.append(norms)
            grid = result.fields[0].grid if result.fields else None
            background = bg or (flat_background(grid) if grid is not None else None)
            for idx in snapshot_indices(len(result), snapshots):
                path = out / f"field_{idx}.csv"
                write_field_csv(result.fields[idx], background, path)
                written.append(path)
            run.update(
                grid={"n": grid.n, "length": grid.length} if grid else None,
                scheme=result.meta.get("scheme"),
                completed=result.completed,
                abort_time=result.abort_time,
                abort_reason=result.abort_reason,
                t_final=result.times[-1] if result.times else None,
                uniform_bound=result.uniform_bound() if result.times else None,
            )
            all_checks = list(checks or [])
        else:
            report_path = out / "report.json"
            report_path.write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n")
            written.append(report_path)
            run.update(study=result.kind, grid=result.metadata.get("n") and {
                "n": result.metadata["n"], "length": result.metadata["length"]},
                scheme=result.metadata.get("scheme"))
            all_checks = list(result.checks) + list(checks or [])
        run["checks"] = [{"name": c.name, "value": c.value, "threshold": c.threshold,
                          "op": c.op, "passed": c.passed} for c in all_checks]
        run["passed"] = all(c.passed for c in all_checks)
        run_path = out / "run.json"
        run_path.write_text(json.dumps(_jsonable(run), indent=2, sort_keys=True) + "\n")
        written.append(run_path)
    except OSError as exc:
        raise OSError(f"failed writing outputs under {out}: {exc}") from exc
    return written


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, RealField):
        return obj.samples.tolist()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj
