"""Periodic pseudospectral substrate.

Grids, real fields with a consistent Fourier representation, and the
Fourier-multiplier operators used throughout the package: the Hilbert
transform with symbol ``i*sgn(lam)``, integer derivatives ``(i*lam)**j``,
fractional derivatives ``|lam|**s``, the ``(1+|lam|)**(2s)`` Sobolev norm,
dealiased products and the Hilbert commutator.

Operators come in two layers.  Methods on :class:`SpectralGrid` act on raw
sample arrays and are what the physics code composes; the module-level
functions take and return :class:`RealField` values.

The Fourier convention is ``u(xi) = sum_k c_k exp(i lam_k xi)`` with
``lam_k = 2 pi k / L`` for ``k = -n/2+1 .. n/2``.  The lone Nyquist mode is
zeroed by every odd symbol.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

MIN_N = 16
MAX_N = 2**20
MAX_DERIVATIVE = 8


class GridError(ValueError):
    """Invalid grid parameters or mismatched grids."""


@dataclass(frozen=True)
class SpectralGrid:
    """Uniform periodic grid on ``[-L/2, L/2)`` with ``n`` samples."""

    n: int
    length: float

    def __post_init__(self):
        n = self.n
        if isinstance(n, bool) or int(n) != n:
            raise GridError(f"n must be an integer, got {n!r}")
        n = int(n)
        if n % 2:
            raise GridError(f"n must be even, got {n}")
        if not MIN_N <= n <= MAX_N:
            raise GridError(f"n must lie in [{MIN_N}, {MAX_N}], got {n}")
        if not (np.isfinite(self.length) and self.length > 0):
            raise GridError(f"length must be positive, got {self.length!r}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "length", float(self.length))

    @property
    def dx(self) -> float:
        return self.length / self.n

    @cached_property
    def nodes(self) -> np.ndarray:
        xi = -0.5 * self.length + np.arange(self.n) * self.dx
        xi.flags.writeable = False
        return xi

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """The ladder ``lam_k`` for ``k = -n/2+1 .. n/2`` in increasing order."""
        k = np.arange(-self.n // 2 + 1, self.n // 2 + 1)
        lam = 2.0 * np.pi * k / self.length
        lam.flags.writeable = False
        return lam

    # rfft layout: index k = 0 .. n/2, the last entry is the Nyquist mode
    @cached_property
    def lam(self) -> np.ndarray:
        lam = 2.0 * np.pi * np.arange(self.n // 2 + 1) / self.length
        lam.flags.writeable = False
        return lam

    @cached_property
    def _odd_mask(self) -> np.ndarray:
        mask = np.ones(self.n // 2 + 1)
        mask[-1] = 0.0
        return mask

    @property
    def lam_max(self) -> float:
        return float(self.lam[-1])

    # -- array layer ---------------------------------------------------------

    def fft(self, a: np.ndarray) -> np.ndarray:
        return np.fft.rfft(a)

    def ifft(self, a_hat: np.ndarray) -> np.ndarray:
        return np.fft.irfft(a_hat, self.n)

    def multiply(self, a: np.ndarray, symbol: np.ndarray) -> np.ndarray:
        """Apply a Fourier multiplier given on the rfft layout."""
        return np.fft.irfft(symbol * np.fft.rfft(a), self.n)

    @cached_property
    def hilbert_symbol(self) -> np.ndarray:
        sym = 1j * np.sign(self.lam) * self._odd_mask
        sym.flags.writeable = False
        return sym

    def derivative_symbol(self, j: int) -> np.ndarray:
        sym = (1j * self.lam) ** j
        if j % 2:
            sym = sym * self._odd_mask
        return sym

    def hilbert_(self, a: np.ndarray) -> np.ndarray:
        return self.multiply(a, self.hilbert_symbol)

    def deriv_(self, a: np.ndarray, j: int = 1) -> np.ndarray:
        if j == 0:
            return np.array(a, dtype=float)
        return self.multiply(a, self.derivative_symbol(j))

    def hilbert_deriv_(self, a: np.ndarray, j: int) -> np.ndarray:
        """``H[d^j a]`` through a single combined multiplier."""
        return self.multiply(a, self.hilbert_symbol * self.derivative_symbol(j))

    def frac_deriv_(self, a: np.ndarray, s: float) -> np.ndarray:
        return self.multiply(a, np.abs(self.lam) ** s)

    def commutator_(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        return self.hilbert_(f * g) - f * self.hilbert_(g)

    def mean_(self, a: np.ndarray) -> float:
        return float(np.mean(a))

    def sobolev_weights(self, s: float) -> np.ndarray:
        """Per-rfft-entry weights so that ``sum(w*|a_hat|**2)`` is ``||a||_{H^s}^2``.

        Interior entries stand for the +k and -k modes together.
        """
        w = (1.0 + self.lam) ** (2.0 * s)
        mult = np.full(self.n // 2 + 1, 2.0)
        mult[0] = 1.0
        mult[-1] = 1.0
        return self.length * mult * w / self.n**2

    def sobolev_norm_(self, a: np.ndarray, s: float) -> float:
        a_hat = np.fft.rfft(a)
        return float(np.sqrt(np.sum(self.sobolev_weights(s) * np.abs(a_hat) ** 2)))

    def l2_(self, a: np.ndarray) -> float:
        return float(np.sqrt(self.dx * np.sum(np.asarray(a) ** 2)))

    def inner_(self, a: np.ndarray, b: np.ndarray) -> float:
        """Trapezoid (exact for trig polynomials) approximation of ``int a b``."""
        return float(self.dx * np.dot(a, b))

    def product_(self, a: np.ndarray, b: np.ndarray, dealias: bool = False) -> np.ndarray:
        if not dealias:
            return a * b
        m = 3 * self.n // 2
        pa = _pad(np.fft.rfft(a), self.n, m)
        pb = _pad(np.fft.rfft(b), self.n, m)
        prod_hat = np.fft.rfft(np.fft.irfft(pa, m) * np.fft.irfft(pb, m))
        return np.fft.irfft(_truncate(prod_hat, self.n, m), self.n)

    def field(self, samples) -> "RealField":
        return RealField(self, samples)


def _pad(a_hat: np.ndarray, n: int, m: int) -> np.ndarray:
    out = np.zeros(m // 2 + 1, dtype=complex)
    out[: n // 2 + 1] = a_hat * (m / n)
    # the n-grid Nyquist entry stands for the +n/2 and -n/2 modes together
    out[n // 2] *= 0.5
    return out


def _truncate(a_hat: np.ndarray, n: int, m: int) -> np.ndarray:
    out = a_hat[: n // 2 + 1] * (n / m)
    out[-1] = 2.0 * out[-1].real
    return out


@dataclass(frozen=True, eq=False)
class RealField:
    """Real samples ``u(xi_j)`` on a grid; immutable."""

    grid: SpectralGrid
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.array(self.samples, dtype=float)
        if a.shape != (self.grid.n,):
            raise GridError(f"expected {self.grid.n} samples, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("field samples must be finite")
        a.flags.writeable = False
        object.__setattr__(self, "samples", a)

    @classmethod
    def from_function(cls, grid: SpectralGrid, func) -> "RealField":
        return cls(grid, func(grid.nodes))

    @classmethod
    def zeros(cls, grid: SpectralGrid) -> "RealField":
        return cls(grid, np.zeros(grid.n))

    @classmethod
    def constant(cls, grid: SpectralGrid, value: float) -> "RealField":
        return cls(grid, np.full(grid.n, float(value)))

    @property
    def coeffs(self) -> np.ndarray:
        """Complex ``c_k`` on the ladder ``k = -n/2+1 .. n/2``."""
        n = self.grid.n
        f_hat = np.fft.fft(self.samples) / n
        k = np.arange(-n // 2 + 1, n // 2 + 1)
        # nodes start at -L/2, which multiplies c_k by (-1)^k
        return f_hat[k % n] * np.where(k % 2, -1.0, 1.0)

    @classmethod
    def from_coeffs(cls, grid: SpectralGrid, coeffs: np.ndarray) -> "RealField":
        n = grid.n
        k = np.arange(-n // 2 + 1, n // 2 + 1)
        f_hat = np.zeros(n, dtype=complex)
        f_hat[k % n] = np.asarray(coeffs) * np.where(k % 2, -1.0, 1.0) * n
        return cls(grid, np.fft.ifft(f_hat).real)

    def map(self, func) -> "RealField":
        return RealField(self.grid, func(self.samples))

    def _other(self, other):
        if isinstance(other, RealField):
            _check_same_grid(self, other)
            return other.samples
        return other

    def __add__(self, other):
        return RealField(self.grid, self.samples + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return RealField(self.grid, self.samples - self._other(other))

    def __rsub__(self, other):
        return RealField(self.grid, self._other(other) - self.samples)

    def __mul__(self, other):
        return RealField(self.grid, self.samples * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return RealField(self.grid, self.samples / self._other(other))

    def __neg__(self):
        return RealField(self.grid, -self.samples)

    def __len__(self):
        return self.grid.n


def _check_same_grid(f: RealField, g: RealField) -> None:
    if f.grid != g.grid:
        raise GridError(f"grid mismatch: {f.grid} vs {g.grid}")


def make_grid(n: int, length: float) -> SpectralGrid:
    return SpectralGrid(n, length)


def hilbert(f: RealField) -> RealField:
    """Hilbert transform, multiplier ``i*sgn(lam)`` with ``sgn(0) = 0``."""
    return RealField(f.grid, f.grid.hilbert_(f.samples))


def derivative(f: RealField, j: int = 1) -> RealField:
    if not 0 <= j <= MAX_DERIVATIVE or int(j) != j:
        raise ValueError(f"derivative order must be an integer in [0, {MAX_DERIVATIVE}], got {j}")
    return RealField(f.grid, f.grid.deriv_(f.samples, int(j)))


def frac_derivative(f: RealField, s: float) -> RealField:
    """``|D|^s``, multiplier ``|lam|**s``."""
    if s < 0:
        raise ValueError(f"s must be nonnegative, got {s}")
    return RealField(f.grid, f.grid.frac_deriv_(f.samples, s))


def sobolev_norm(f: RealField, s: float) -> float:
    """Discrete ``(L * sum_k (1+|lam_k|)**(2s) |c_k|**2) ** 0.5``."""
    if s < 0:
        raise ValueError(f"Sobolev index must be nonnegative, got {s}")
    return f.grid.sobolev_norm_(f.samples, s)


def product(f: RealField, g: RealField, dealias: bool = False) -> RealField:
    """Pointwise product; with ``dealias`` the 3/2-padded, truncated product."""
    _check_same_grid(f, g)
    return RealField(f.grid, f.grid.product_(f.samples, g.samples, dealias))


def commutator_h(f: RealField, g: RealField, dealias: bool = False) -> RealField:
    """``[H, f] g = H[f g] - f H[g]``."""
    _check_same_grid(f, g)
    grid = f.grid
    fg = grid.product_(f.samples, g.samples, dealias)
    f_hg = grid.product_(f.samples, grid.hilbert_(g.samples), dealias)
    return RealField(grid, grid.hilbert_(fg) - f_hg)


def mean(f: RealField) -> float:
    return f.grid.mean_(f.samples)


def inner(f: RealField, g: RealField) -> float:
    _check_same_grid(f, g)
    return f.grid.inner_(f.samples, g.samples)


def l2_norm(f: RealField) -> float:
    return f.grid.l2_(f.samples)


def random_bandlimited(grid: SpectralGrid, kmax: int, rng: np.random.Generator,
                       amplitude: float = 1.0, zero_mean: bool = True) -> RealField:
    """Random trig polynomial with modes ``1..kmax`` and max coefficient modulus ``amplitude``.

    Coefficients decay like ``1/k`` so the fields stay smooth for large ``kmax``.
    """
    if not 1 <= kmax < grid.n // 2:
        raise ValueError(f"kmax must lie in [1, {grid.n // 2 - 1}], got {kmax}")
    k = np.arange(1, kmax + 1)
    c = (rng.standard_normal(kmax) + 1j * rng.standard_normal(kmax)) / k
    c *= amplitude / np.max(np.abs(c))
    f_hat = np.zeros(grid.n // 2 + 1, dtype=complex)
    f_hat[1: kmax + 1] = c * grid.n / 2
    if not zero_mean:
        f_hat[0] = rng.standard_normal() * amplitude * grid.n
    return RealField(grid, np.fft.irfft(f_hat, grid.n))
