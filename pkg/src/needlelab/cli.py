"""Command-line entry point: ``needlelab <subcommand> [--config FILE] [--out DIR]``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical abort,
3 a verification or study threshold failed.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace

import numpy as np

from . import diagnostics as dg
from .config import ConfigError, RunConfig, emit_config, load_config, parse_config
from .evolution import evolve, viscosity_sweep
from .linear import (LinearProblem, StabilityGuardError, energy_ledger_check, heat6_step,
                     linstep_constant_b, solve_linear_ivp)
from .operators import (NumericalAbort, PhysicsParams, big_b, curvature, flat_background,
                        ivantsov_background, q1, q_direct, rhs, rhs_direct, tower)
from .spectral import RealField, SpectralGrid, random_bandlimited

log = logging.getLogger("needlelab")

EXIT_OK, EXIT_USAGE, EXIT_ABORT, EXIT_THRESHOLD = 0, 1, 2, 3
VISCOSITY_RATE_WINDOW = (1.7, 2.3)
SMOOTHING_DRIFT = 0.05


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    scale = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / scale) if scale > 0 else float(np.linalg.norm(a))


def _route_residuals(g: SpectralGrid, bg, p: PhysicsParams, rng, count: int) -> tuple[float, float, float, float]:
    """Worst relative residuals: Q routes, the d Q and H d Q identities, and the two rhs routes."""
    worst = np.zeros(4)
    for _ in range(count):
        u = random_bandlimited(g, int(rng.integers(2, 12)), rng)
        u = u * (rng.uniform(0.2, 1.0) / g.sobolev_norm_(u.samples, 5))
        tw = tower(u, bg, p)
        qd = q_direct(u, bg, p).samples
        dq = g.deriv_(tw.q, 1)
        hdq = g.hilbert_(dq)
        worst = np.maximum(worst, [
            _rel(tw.q, qd),
            _rel(tw.q4 - tw.b * g.deriv_(u.samples, 3), dq),
            _rel(tw.q5 - tw.b * tw.h3u, hdq),
            _rel(rhs(u, bg, p).samples, rhs_direct(u, bg, p).samples),
        ])
    return tuple(float(w) for w in worst)


def _ivantsov_steady_residual(length: float, n: int, inner_fraction: float = 0.6) -> float:
    g = SpectralGrid(n, length)
    bg = ivantsov_background(g, inner_fraction)
    r = rhs(RealField.zeros(g), bg, PhysicsParams(tau=0.0)).samples
    inner = np.abs(g.nodes) <= inner_fraction * length / 2
    return float(np.max(np.abs(r[inner])))


def verify_suite(seed: int = 0, n: int = 256, length: float = 40.0, fields: int = 10) -> dg.StudyReport:
    """Operator identities, decay laws and steady states with measured residuals."""
    rng = np.random.default_rng(seed)
    g = SpectralGrid(n, length)
    report = dg.StudyReport("verify", dg.digest(seed, n, length, fields),
                            metadata={"seed": seed, "n": n, "length": length, "fields": fields})
    xi = g.nodes
    samples = [random_bandlimited(g, int(rng.integers(1, 20)), rng).samples for _ in range(fields)]

    inv = pair = trip = pars = 0.0
    for f, h in zip(samples, samples[1:] + samples[:1]):
        hf, hh = g.hilbert_(f), g.hilbert_(h)
        inv = max(inv, np.max(np.abs(g.hilbert_(hf) + f - g.mean_(f))))
        pair = max(pair, abs(g.inner_(h, hf) + g.inner_(f, hh)))
        trip = max(trip, np.max(np.abs(g.hilbert_(f * h - hf * hh) - (f * hh + h * hf))))
        pars = max(pars, abs(g.l2_(f) ** 2 - np.sum(f**2) * g.dx))
    report.add("hilbert involution H[H f] = -(f - mean f)", inv, 1e-12)
    report.add("hilbert pairing <g, Hf> = -<f, Hg>", pair, 1e-12)
    report.add("hilbert tripling H[fg - HfHg] = fHg + gHf", trip, 1e-10)
    report.add("Parseval for the L2 norm", pars, 1e-10)

    theta = 2 * np.pi * 3 * xi / length
    report.add("H[sin] = cos", np.max(np.abs(g.hilbert_(np.sin(theta)) - np.cos(theta))), 1e-12)
    report.add("H[cos] = -sin", np.max(np.abs(g.hilbert_(np.cos(theta)) + np.sin(theta))), 1e-12)
    f = samples[0]
    report.add("|D| f = -H[d f]", np.max(np.abs(g.frac_deriv_(f, 1) + g.hilbert_(g.deriv_(f, 1)))), 1e-10)
    report.add("H[d^3 f] = |D|^3 f", np.max(np.abs(g.hilbert_deriv_(f, 3) - g.frac_deriv_(f, 3))), 1e-9)
    analytic = np.fft.fft(f - 1j * g.hilbert_(f))
    neg = np.fft.fftfreq(n) < 0
    report.add("f - iH[f] has no negative frequencies", np.max(np.abs(analytic[neg])) / n, 1e-13)
    r, th = 0.5, 2 * np.pi * xi / length
    den = 1 - 2 * r * np.cos(th) + r * r
    poisson = (1 - r * r) / den - 1
    report.add("periodic Poisson kernel pair",
               np.max(np.abs(g.hilbert_(poisson) + 2 * r * np.sin(th) / den)), 1e-12)

    p = PhysicsParams(tau=1.0, gamma=0.3)
    flat = flat_background(g)
    e_route, e_49, e_412, e_rhs = _route_residuals(g, flat, p, rng, 5)
    report.add("route equivalence, flat", e_route, 1e-9)
    report.add("d Q identity, flat", e_49, 1e-9)
    report.add("H d Q identity, flat", e_412, 1e-9)
    report.add("rhs via direct route, flat", e_rhs, 1e-9)
    g2 = SpectralGrid(2 * n, length)
    e_route, e_49, e_412, e_rhs = _route_residuals(g2, ivantsov_background(g2, 0.6), p, rng, 3)
    report.add(f"route equivalence, ivantsov (n={2 * n})", e_route, 1e-9)
    report.add(f"d Q identity, ivantsov (n={2 * n})", e_49, 1e-9)
    report.add(f"H d Q identity, ivantsov (n={2 * n})", e_412, 1e-9)

    zero = RealField.zeros(g)
    report.add("flat steady state rhs(0) = 0", np.max(np.abs(rhs(zero, flat, p).samples)), 1e-14)
    report.add("ellipticity floor B(0) = tau (1 - gamma)", abs(big_b(zero, flat, p).samples.min() - p.beta), 1e-14)
    u = RealField(g, 0.1 * samples[1])
    q_iso = q1(u, flat, PhysicsParams(1.0, 0.0)).samples
    report.add("isotropic Q1 = exp(-h)", np.max(np.abs(q_iso - np.exp(-u.samples))), 1e-14)

    bg_iv = ivantsov_background(g, 0.6)
    kappa_tip = curvature(zero, bg_iv).samples[n // 2]
    # the windowed periodic background carries an O(1/L) offset (about 0.12 at L=40)
    report.add("Ivantsov tip curvature near 1", abs(kappa_tip - 1.0), 0.25)
    res40 = _ivantsov_steady_residual(length, n)
    res80 = _ivantsov_steady_residual(2 * length, 2 * n)
    report.measured.update(ivantsov_residual_L=res40, ivantsov_residual_2L=res80)
    report.add("Ivantsov tau=0 residual shrinks as L doubles", res80 / res40, 1.0, "<")

    worst = 0.0
    for bbar in (0.4, 1.0):
        for eps in (0.0, 1e-3):
            for k in (1, 2, 4):
                lam = 2 * np.pi * k / length
                v = RealField(g, np.cos(lam * xi))
                for _ in range(100):
                    v = linstep_constant_b(v, None, bbar, eps, 1e-3)
                exact = np.exp(-(bbar * lam**3 + eps * lam**6) * 0.1) * np.cos(lam * xi)
                worst = max(worst, np.max(np.abs(v.samples - exact)))
    report.add("dispersion decay law over 100 steps", worst, 1e-8)
    lam = 2 * np.pi * 2 / length
    v = RealField(g, np.sin(lam * xi))
    for _ in range(10):
        v = heat6_step(v, zero, 0.5, 0.01)
    report.add("sixth-order heat decay law",
               np.max(np.abs(v.samples - np.exp(-0.5 * lam**6 * 0.1) * np.sin(lam * xi))), 1e-12)
    prob = LinearProblem(RealField.constant(g, 0.7), RealField(g, samples[2]), 0.01, 1e-4)
    _, ledger = solve_linear_ivp(prob, s=5)
    report.add("energy ledger residual, constant b",
               energy_ledger_check(ledger)["max_relative_residual"], 1e-10)
    return report


# subcommands -----------------------------------------------------------------

def _finish(report: dg.StudyReport, config: RunConfig, out: str, started: float) -> int:
    dg.emit_outputs(report, out, config=config.to_dict(), wall_time=time.perf_counter() - started)
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_THRESHOLD


def cmd_simulate(config: RunConfig, args, out: str, started: float) -> int:
    g = config.grid()
    cfg = config.evolve_config(g)
    traj = evolve(config.initial_field(g), cfg)
    ub = traj.uniform_bound()
    checks = [dg.Check("uniform bound sup|u|^2 + beta int|d^{s+2}u|^2 <= 8 M0^2",
                       ub["lhs"], ub["bound"])]
    dg.emit_outputs(traj, out, config=config.to_dict(), bg=cfg.bg, checks=checks,
                    wall_time=time.perf_counter() - started)
    print(f"simulate: {len(traj)} records to t={traj.times[-1]:.6g}, "
          f"|u|_H^(s+1/2) {traj.hs_half[0]:.6g} -> {traj.hs_half[-1]:.6g}; outputs in {out}")
    for c in checks:
        print("  " + c.line())
    if not traj.completed:
        print(f"aborted at t={traj.abort_time:.6g}: {traj.abort_reason}", file=sys.stderr)
        return EXIT_ABORT
    return EXIT_OK


def cmd_verify(config: RunConfig, args, out: str, started: float) -> int:
    return _finish(verify_suite(seed=config.seed), config, out, started)


def cmd_smoothing(config: RunConfig, args, out: str, started: float) -> int:
    fine = replace(config, n=2 * config.n, dt=config.dt / 2)
    ratios, values = [], []
    for c in (config, fine):
        g = c.grid()
        traj = evolve(c.initial_field(g), c.evolve_config(g))
        if not traj.completed:
            raise NumericalAbort(f"smoothing run n={c.n} aborted: {traj.abort_reason}")
        value, _ = dg.smoothing_integral(traj)
        values.append(value)
        ratios.append(value / traj.m0**2 if traj.m0 > 0 else 0.0)
    drift = abs(values[1] - values[0]) / max(abs(values[1]), 1e-300)
    report = dg.StudyReport("smoothing", dg.digest(config.to_dict()),
                            measured={"values": values, "ratio_to_m0_sq": ratios, "drift": drift},
                            metadata=config.to_dict())
    report.add("smoothing integral drift under n-doubling and dt-halving", drift, SMOOTHING_DRIFT, "<")
    return _finish(report, config, out, started)


def cmd_viscosity(config: RunConfig, args, out: str, started: float) -> int:
    g = config.grid()
    sweep = viscosity_sweep(config.initial_field(g), config.evolve_config(g), args.eps_list)
    if sweep["partial"]:
        raise NumericalAbort(f"viscosity runs aborted for eps={sweep['aborted']}")
    measured = {k: v for k, v in sweep.items() if k != "finals"}
    report = dg.StudyReport("viscosity-limit", dg.digest(config.to_dict(), args.eps_list),
                            measured=measured, metadata=config.to_dict())
    lo, hi = VISCOSITY_RATE_WINDOW
    for i, rate in enumerate(sweep["rates"]):
        report.add(f"Richardson ratio {i} >= {lo}", rate, lo, ">=")
        report.add(f"Richardson ratio {i} <= {hi}", rate, hi)
    if not sweep["rates"]:
        report.add("at least three viscosities for a Richardson ratio", len(args.eps_list), 3, ">=")
    return _finish(report, config, out, started)


def cmd_lipschitz(config: RunConfig, args, out: str, started: float) -> int:
    g = config.grid()
    pert = random_bandlimited(g, 4, np.random.default_rng(config.seed + 1))
    pert = pert * (1.0 / g.sobolev_norm_(pert.samples, config.s + 0.5))
    report = dg.lipschitz_study(config.initial_field(g), pert, args.deltas, config.evolve_config(g))
    return _finish(report, config, out, started)


def cmd_contraction(config: RunConfig, args, out: str, started: float) -> int:
    g = config.grid()
    cfg = config.evolve_config(g, scheme="picard")
    forced = args.slab_dt is not None
    report = dg.contraction_study(config.initial_field(g), cfg, slab_dt=args.slab_dt, adapt=not forced)
    return _finish(report, config, out, started)


COMMANDS = {
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "smoothing": cmd_smoothing,
    "viscosity-limit": cmd_viscosity,
    "lipschitz": cmd_lipschitz,
    "contraction": cmd_contraction,
}


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="needlelab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="config file (key = value lines, or a run.json)")
        p.add_argument("--out", help="output directory (default: config out_dir, $NCL_OUT_DIR)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config entry; repeatable")
        if name == "contraction":
            p.add_argument("--slab-dt", type=float, help="force this slab length (no adaptation)")
        if name == "viscosity-limit":
            p.add_argument("--eps-list", type=_float_list, default=[1e-2, 5e-3, 2.5e-3])
        if name == "lipschitz":
            p.add_argument("--deltas", type=_float_list, default=[1e-2, 5e-3, 2.5e-3])
    return parser


def _override(cfg: RunConfig, entries: list[str]) -> RunConfig:
    """Apply ``KEY=VALUE`` entries on top of ``cfg``; later entries win."""
    keys = {e.split("=", 1)[0].strip() for e in entries}
    lines = [ln for ln in emit_config(cfg).splitlines()
             if ln.split("=", 1)[0].strip() not in keys]
    return parse_config("\n".join(lines + entries))


def dispatch(argv: list[str] | None = None) -> int:
    """Run one subcommand and return its exit code."""
    started = time.perf_counter()
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config) if args.config else RunConfig()
        if args.set:
            config = _override(config, args.set)
        out = config.resolved_out_dir(args.out)
        return COMMANDS[args.command](config, args, out, started)
    except (ConfigError, StabilityGuardError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalAbort as exc:
        print(f"numerical abort: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
