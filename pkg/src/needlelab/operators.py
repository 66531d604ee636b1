"""Needle-crystal operators in the log-derivative variable ``u``.

The interface is described through ``h + i q = log z_xi`` with the
perturbation ``u = h - h_I`` about a background ``(h_I, q_I)``.  This module
evaluates the curvature-driven flux ``Q[u]`` both literally and through its
quasilinear splitting

    Q = -B d^2 u + Q2 + Q3,   dQ = -B d^3 u + Q4,   H[dQ] = -B H[d^3 u] + Q5,

and the lower-order remainder ``N[u]`` of ``u_t + B[u] H[d^3 u] = N[u]``.

Every public operator takes ``(u, bg, params)``; :func:`tower` evaluates the
whole chain once and is what the integrators use.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.special import erfc

from .spectral import GridError, RealField, SpectralGrid

OVERFLOW_LIMIT = 50.0


class NumericalAbort(RuntimeError):
    """A run left the regime where the equation is well posed or representable."""


class OverflowGuardError(NumericalAbort):
    pass


class EllipticityLossError(NumericalAbort):
    pass


@dataclass(frozen=True)
class PhysicsParams:
    """Surface tension ``tau``, fourfold anisotropy ``gamma``, viscosity ``epsilon``."""

    tau: float = 1.0
    gamma: float = 0.0
    epsilon: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.tau) and self.tau >= 0):
            raise ValueError(f"tau must be nonnegative, got {self.tau}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if not (np.isfinite(self.epsilon) and self.epsilon >= 0):
            raise ValueError(f"epsilon must be nonnegative, got {self.epsilon}")

    @property
    def beta(self) -> float:
        return self.tau * (1.0 - self.gamma)


@dataclass(frozen=True, eq=False)
class Background:
    kind: Literal["flat", "ivantsov"]
    h_i: RealField
    q_i: RealField
    h_i_xi: RealField
    q_i_xi: RealField
    window: RealField
    inner_fraction: float = 0.0

    @property
    def grid(self) -> SpectralGrid:
        return self.h_i.grid


def flat_background(grid: SpectralGrid) -> Background:
    zero = RealField.zeros(grid)
    return Background("flat", zero, zero, zero, zero, RealField.constant(grid, 1.0), 0.0)


def smooth_window(grid: SpectralGrid, inner_fraction: float) -> RealField:
    """Even window equal to 1 on ``|xi| <= a`` and 0 on ``|xi| >= 0.9 L/2``.

    The transition is an erfc ramp whose width is a tenth of the band, which
    puts both plateaus within 1e-12 of their values.
    """
    half = 0.5 * grid.length
    a, b = inner_fraction * half, 0.9 * half
    centre, width = 0.5 * (a + b), (b - a) / 10.0
    chi = 0.5 * erfc((np.abs(grid.nodes) - centre) / width)
    chi[np.abs(grid.nodes) <= a] = 1.0
    chi[np.abs(grid.nodes) >= b] = 0.0
    return RealField(grid, chi)


def ivantsov_background(grid: SpectralGrid, inner_fraction: float = 0.6,
                        far_field: Literal["zero", "hold"] = "zero") -> Background:
    """Windowed Ivantsov profiles ``h_I = log(1+xi^2)/2``, ``q_I = -arctan(xi)``.

    ``far_field="zero"`` tapers ``h_I`` to zero with the window.  ``"hold"``
    instead blends it into the constant value it has mid-ramp, which keeps
    ``exp(-2 h_I)`` small outside the window; ``q_I`` is tapered either way.
    Derivatives are spectral derivatives of the stored profiles.
    """
    if not 0.0 < inner_fraction <= 0.8:
        raise ValueError(f"inner_fraction must lie in (0, 0.8], got {inner_fraction}")
    if far_field not in ("zero", "hold"):
        raise ValueError(f"far_field must be 'zero' or 'hold', got {far_field!r}")
    xi = grid.nodes
    chi = smooth_window(grid, inner_fraction)
    h_line = 0.5 * np.log1p(xi**2)
    h = chi.samples * h_line
    if far_field == "hold":
        centre = 0.5 * (inner_fraction + 0.9) * 0.5 * grid.length
        h = h + (1.0 - chi.samples) * 0.5 * np.log1p(centre**2)
    q = chi.samples * -np.arctan(xi)
    return Background(
        "ivantsov",
        RealField(grid, h),
        RealField(grid, q),
        RealField(grid, grid.deriv_(h, 1)),
        RealField(grid, grid.deriv_(q, 1)),
        chi,
        float(inner_fraction),
    )


@dataclass(frozen=True, eq=False)
class Tower:
    """All intermediate fields of the operator chain at one ``u`` (raw arrays)."""

    h: np.ndarray       # h_I + u
    h_xi: np.ndarray    # h_I' + u'
    hu: np.ndarray      # H[u]
    q1: np.ndarray
    b: np.ndarray
    q2: np.ndarray
    q3: np.ndarray
    q: np.ndarray       # decomposed route
    q4: np.ndarray
    q5: np.ndarray
    n: np.ndarray       # lower-order remainder N[u]
    h3u: np.ndarray     # H[d^3 u]

    @property
    def beta_eff(self) -> float:
        return float(self.b.min())

    @property
    def rhs(self) -> np.ndarray:
        return -self.b * self.h3u + self.n


def _check(u: RealField, bg: Background) -> SpectralGrid:
    if u.grid != bg.grid:
        raise GridError(f"field grid {u.grid} does not match background grid {bg.grid}")
    return u.grid


def _guarded_h(u: RealField, bg: Background) -> np.ndarray:
    h = bg.h_i.samples + u.samples
    peak = float(np.max(np.abs(h)))
    if peak > OVERFLOW_LIMIT:
        raise OverflowGuardError(f"max|h_I + u| = {peak:.3g} exceeds {OVERFLOW_LIMIT}")
    return h


def _q1(g: SpectralGrid, h: np.ndarray, hu: np.ndarray, bg: Background, p: PhysicsParams):
    return (1.0 - p.gamma * np.cos(4.0 * bg.q_i.samples - 4.0 * hu)) * np.exp(-h)


def tower(u: RealField, bg: Background, p: PhysicsParams) -> Tower:
    g = _check(u, bg)
    a = u.samples
    h = _guarded_h(u, bg)
    h_xi = bg.h_i_xi.samples + g.deriv_(a, 1)
    hu = g.hilbert_(a)
    e2 = np.exp(-2.0 * h)
    q1 = _q1(g, h, hu, bg, p)
    b = p.tau * e2 * q1
    d2u = g.deriv_(a, 2)
    d2h_i = g.deriv_(bg.h_i_xi.samples, 1)
    q2 = e2 * (1.0 + p.tau * g.hilbert_(q1 * g.hilbert_(d2h_i))
               + p.tau * g.hilbert_(g.deriv_(q1, 1) * g.hilbert_(h_xi)))
    q3 = p.tau * e2 * g.commutator_(q1, g.hilbert_(d2u))
    q = -b * d2u + q2 + q3
    # d(-B d^2 u) = -B d^3 u - (dB) d^2 u fixes the sign of the first term
    q4 = -g.deriv_(b, 1) * d2u + g.deriv_(q2 + q3, 1)
    d3u = g.deriv_(a, 3)
    q5 = -g.commutator_(b, d3u) + g.hilbert_(q4)
    # q = q_I - H[u], so its derivative (not q_I' - H[u]) multiplies Q
    q_xi = bg.q_i_xi.samples - g.deriv_(hu, 1)
    n = h_xi * g.hilbert_(q) - q_xi * q + q5
    return Tower(h, h_xi, hu, q1, b, q2, q3, q, q4, q5, n, g.hilbert_(d3u))


def q1(u: RealField, bg: Background, p: PhysicsParams) -> RealField:
    g = _check(u, bg)
    h = _guarded_h(u, bg)
    return RealField(g, _q1(g, h, g.hilbert_(u.samples), bg, p))


def big_b(u: RealField, bg: Background, p: PhysicsParams) -> RealField:
    """``tau (1 - gamma cos(4 q_I - 4 H[u])) exp(-3 (h_I + u))``."""
    g = _check(u, bg)
    h = _guarded_h(u, bg)
    return RealField(g, p.tau * np.exp(-2.0 * h) * _q1(g, h, g.hilbert_(u.samples), bg, p))


def beta_eff(u: RealField, bg: Background, p: PhysicsParams) -> float:
    """Measured ellipticity floor ``min B[u]``."""
    return float(big_b(u, bg, p).samples.min())


def q2(u: RealField, bg: Background, p: PhysicsParams) -> RealField:
    return RealField(u.grid, tower(u, bg, p).q2)


def q3(u: RealField, bg: Background, p: PhysicsParams) -> RealField:
    return RealField(u.grid, tower(u, bg, p).q3)


def q_direct(u: RealField, bg: Background, p: PhysicsParams) -> RealField:
    """Literal ``(1 + tau d H[Q1 H[h_xi]]) / exp(2 h)``, independent of the splitting."""
    g = _check(u, bg)
    h = _guarded_h(u, bg)
    h_xi = bg.h_i_xi.samples + g.deriv_(u.samples, 1)
    aniso = 1.0 - p.gamma * np.cos(4.0 * (bg.q_i.samples - g.hilbert_(u.samples)))
    inner = aniso * np.exp(-h) * g.hilbert_(h_xi)
    return RealField(g, (1.0 + p.tau * g.deriv_(g.hilbert_(inner), 1)) / np.exp(2.0 * h))


def q_decomposed(u: RealField, bg: Background, p: PhysicsParams) -> RealField:
    return RealField(u.grid, tower(u, bg, p).q)


def q4(u: RealField, bg: Background, p: PhysicsParams) -> RealField:
    return RealField(u.grid, tower(u, bg, p).q4)


def q5(u: RealField, bg: Background, p: PhysicsParams) -> RealField:
    return RealField(u.grid, tower(u, bg, p).q5)


def rhs_n(u: RealField, bg: Background, p: PhysicsParams) -> RealField:
    return RealField(u.grid, tower(u, bg, p).n)


def rhs(u: RealField, bg: Background, p: PhysicsParams) -> RealField:
    """Full right-hand side ``-B[u] H[d^3 u] + N[u]``."""
    return RealField(u.grid, tower(u, bg, p).rhs)


def rhs_direct(u: RealField, bg: Background, p: PhysicsParams) -> RealField:
    """``h_xi H[Q] - q_xi Q + d H[Q]`` straight from the literal ``Q``."""
    g = u.grid
    q = q_direct(u, bg, p).samples
    h_xi = bg.h_i_xi.samples + g.deriv_(u.samples, 1)
    q_xi = bg.q_i_xi.samples - g.hilbert_deriv_(u.samples, 1)
    hq = g.hilbert_(q)
    return RealField(g, h_xi * hq - q_xi * q + g.deriv_(hq, 1))


def curvature(u: RealField, bg: Background) -> RealField:
    """``kappa = H[h_xi] / exp(h)`` with ``h = h_I + u``."""
    g = _check(u, bg)
    h = _guarded_h(u, bg)
    h_xi = bg.h_i_xi.samples + g.deriv_(u.samples, 1)
    return RealField(g, g.hilbert_(h_xi) * np.exp(-h))


def _antiderivative(g: SpectralGrid, w: np.ndarray) -> np.ndarray:
    """Complex antiderivative vanishing at the left end of the domain."""
    w_hat = np.fft.fft(w)
    lam = 2.0 * np.pi * np.fft.fftfreq(g.n, d=g.dx)
    mean = w_hat[0].real / g.n + 1j * w_hat[0].imag / g.n
    with np.errstate(divide="ignore", invalid="ignore"):
        f_hat = np.where(lam != 0, w_hat / (1j * np.where(lam != 0, lam, 1.0)), 0.0)
    f_hat[g.n // 2] = 0.0
    periodic = np.fft.ifft(f_hat)
    f = periodic + mean * (g.nodes + 0.5 * g.length)
    return f - f[0]


def reconstruct_interface(u: RealField, bg: Background) -> tuple[np.ndarray, np.ndarray]:
    """Interface samples ``(x_j, y_j)`` from ``z_xi = exp(h_I + u + i (q_I - H[u]))``.

    The Ivantsov case returns ``z_I + int chi (1 - i xi)(exp(u - iH[u]) - 1)``
    with ``z_I = xi - i xi^2/2``; the flat case the same about the line ``z = xi``.
    """
    g = _check(u, bg)
    _guarded_h(u, bg)
    xi = g.nodes
    excess = np.exp(u.samples - 1j * g.hilbert_(u.samples)) - 1.0
    if bg.kind == "ivantsov":
        base = xi - 0.5j * xi**2
        w = bg.window.samples * (1.0 - 1j * xi) * excess
    else:
        base = xi.astype(complex)
        w = excess
    z = base + _antiderivative(g, w)
    return z.real.copy(), z.imag.copy()
