"""Periodic grids, Fourier transforms and Fourier multipliers.

Fields live on the box ``[0, L)^d`` sampled at ``n`` points per axis.  The
forward transform divides by ``n**d`` so that ``coeffs[k]`` is the mean of
``u * exp(-i k.x)``; a single mode ``sin(y)`` therefore has coefficients
``-i/2`` and ``+i/2`` at ``k = (0, 1)`` and ``(0, -1)``.

Spectral arrays use the standard FFT ordering on every axis and keep the full
complex spectrum (no half-spectrum storage).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.fft

from .exceptions import ConfigurationError, DomainError, UnsupportedScaleError

# relative tolerance below which the zero mode counts as absent
MEAN_ZERO_RTOL = 1e-12

_workers = 1


def set_threads(n: int) -> None:
    """Number of worker threads used by every FFT in the package."""
    global _workers
    _workers = max(1, int(n))


def _fftn(a, axes=None):
    return scipy.fft.fftn(a, axes=axes, workers=_workers)


def _ifftn(a, axes=None):
    return scipy.fft.ifftn(a, axes=axes, workers=_workers)


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with ``n`` points per axis on a box of side ``length``."""

    n: int
    length: float = 2 * math.pi
    d: int = 2

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or not _is_power_of_two(int(self.n)):
            raise ConfigurationError(f"n must be a power of two, got {self.n!r}")
        if self.n < 16:
            raise ConfigurationError(f"n must be at least 16, got {self.n}")
        if self.d not in (1, 2):
            raise ConfigurationError(f"only d=1 or d=2 is supported, got d={self.d}")
        if not self.length > 0:
            raise ConfigurationError(f"box length must be positive, got {self.length}")

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def spacing(self) -> float:
        return self.length / self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.d

    @property
    def k0(self) -> float:
        """Fundamental wavenumber ``2*pi/L``."""
        return 2 * math.pi / self.length

    @cached_property
    def integer_wavenumbers(self) -> np.ndarray:
        """Integer lattice indices in FFT order, shape ``(d, n, ..., n)``."""
        m = np.rint(np.fft.fftfreq(self.n) * self.n).astype(np.int64)
        return np.array(np.meshgrid(*([m] * self.d), indexing="ij"))

    @cached_property
    def wavevectors(self) -> np.ndarray:
        """Physical wavevectors ``k0 * m``, shape ``(d, n, ..., n)``."""
        out = self.integer_wavenumbers * self.k0
        out.setflags(write=False)
        return out

    @cached_property
    def abs_k(self) -> np.ndarray:
        out = np.sqrt(np.sum(self.wavevectors**2, axis=0))
        out.setflags(write=False)
        return out

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True where any component sits on the unpaired Nyquist index ``-n/2``."""
        return np.any(self.integer_wavenumbers == -(self.n // 2), axis=0)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Two-thirds rule: keep modes with every ``|m_i| < n/3``."""
        return np.all(3 * np.abs(self.integer_wavenumbers) < self.n, axis=0)

    @cached_property
    def coordinates(self) -> np.ndarray:
        x = np.arange(self.n) * self.spacing
        return np.array(np.meshgrid(*([x] * self.d), indexing="ij"))

    @property
    def k_max_radial(self) -> float:
        return math.sqrt(self.d) * (self.n // 2) * self.k0

    def to_dict(self) -> dict:
        return {"n": int(self.n), "length": float(self.length), "d": int(self.d)}


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PhysicalField:
    """Real samples of a field on ``grid`` (row-major, axis 0 is ``x``)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != self.grid.shape:
            raise ConfigurationError(
                f"values have shape {values.shape}, grid expects {self.grid.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise DomainError("field contains NaN or Inf")
        object.__setattr__(self, "values", _frozen(values))

    def __add__(self, other):
        return PhysicalField(self.grid, self.values + other.values)

    def __sub__(self, other):
        return PhysicalField(self.grid, self.values - other.values)

    def __mul__(self, scalar):
        return PhysicalField(self.grid, self.values * scalar)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients of a field, indexed like ``grid.wavevectors``."""

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if coeffs.shape != self.grid.shape:
            raise ConfigurationError(
                f"coeffs have shape {coeffs.shape}, grid expects {self.grid.shape}"
            )
        if not np.all(np.isfinite(coeffs)):
            raise DomainError("spectrum contains NaN or Inf")
        object.__setattr__(self, "coeffs", _frozen(coeffs))

    @property
    def mean(self) -> complex:
        return complex(self.coeffs.flat[0])

    @property
    def mean_zero(self) -> bool:
        scale = float(np.max(np.abs(self.coeffs)))
        return abs(self.coeffs.flat[0]) <= MEAN_ZERO_RTOL * scale

    def without_mean(self) -> "SpectralField":
        c = np.array(self.coeffs)
        c.flat[0] = 0.0
        return SpectralField(self.grid, c)

    def hermitian_defect(self) -> float:
        """Max of ``|c(-k) - conj(c(k))|`` over the lattice, Nyquist modes excluded."""
        c = self.coeffs
        flipped = c
        for ax in range(c.ndim):
            flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
        defect = np.abs(flipped - np.conj(c))
        defect[self.grid.nyquist_mask] = 0.0
        return float(defect.max())

    def l2_norm(self) -> float:
        """``L^2`` norm of the represented field (Parseval)."""
        return math.sqrt(self.grid.length**self.grid.d * float(np.sum(np.abs(self.coeffs) ** 2)))

    def __add__(self, other):
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return SpectralField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__


def forward(u: PhysicalField) -> SpectralField:
    return SpectralField(u.grid, _fftn(u.values) / u.grid.n**u.grid.d)


def inverse(u: SpectralField) -> PhysicalField:
    return PhysicalField(u.grid, to_physical(u.coeffs, u.grid))


def to_physical(coeffs: np.ndarray, grid: Grid, axes=None) -> np.ndarray:
    """Real part of the inverse transform of raw coefficient arrays.

    ``coeffs`` may carry leading batch axes; the transform acts on the last
    ``grid.d`` axes.
    """
    if axes is None:
        axes = tuple(range(-grid.d, 0))
    return np.real(_ifftn(coeffs, axes=axes)) * grid.n**grid.d


def to_spectral(values: np.ndarray, grid: Grid) -> np.ndarray:
    axes = tuple(range(-grid.d, 0))
    return _fftn(values, axes=axes) / grid.n**grid.d


def dealias(u: SpectralField) -> SpectralField:
    return SpectralField(u.grid, np.where(u.grid.dealias_mask, u.coeffs, 0.0))


@dataclass(frozen=True)
class Multiplier:
    """Fourier multiplier given by a symbol evaluated on physical wavevectors.

    ``symbol`` receives the ``(d, n, ..., n)`` wavevector array and returns the
    symbol on the lattice.  Mean-zero-only multipliers are singular at the
    origin; their value there is defined as 0 and they refuse fields with a
    nonzero mean.  Odd symbols are zeroed on the unpaired Nyquist modes so that
    real fields map to real fields.
    """

    symbol: Callable[[np.ndarray], np.ndarray]
    name: str = "multiplier"
    mean_zero_only: bool = False
    odd: bool = False
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def evaluate(self, grid: Grid) -> np.ndarray:
        cached = self._cache.get(grid)
        if cached is not None:
            return cached
        K = grid.wavevectors
        with np.errstate(divide="ignore", invalid="ignore"):
            values = np.asarray(self.symbol(K), dtype=np.complex128)
        values = np.broadcast_to(values, grid.shape).copy()
        if self.mean_zero_only:
            values.flat[0] = 0.0
        if self.odd:
            values[grid.nyquist_mask] = 0.0
        if not np.all(np.isfinite(values)):
            raise DomainError(f"symbol of {self.name} is not finite on the lattice")
        values.setflags(write=False)
        self._cache[grid] = values
        return values


def apply_multiplier(u: SpectralField, m: Multiplier) -> SpectralField:
    if m.mean_zero_only and not u.mean_zero:
        raise DomainError(f"{m.name} is defined only on mean-zero fields")
    return SpectralField(u.grid, m.evaluate(u.grid) * u.coeffs)


def _safe_abs(K):
    r = np.sqrt(np.sum(K**2, axis=0))
    return np.where(r == 0, 1.0, r)


def frac_laplacian_multiplier(alpha: float) -> Multiplier:
    """``|D|^alpha``; the zero mode maps to zero (also for ``alpha = 0``)."""

    def symbol(K):
        r = np.sqrt(np.sum(K**2, axis=0))
        return np.where(r == 0, 0.0, _safe_abs(K) ** alpha)

    return Multiplier(symbol, name=f"|D|^{alpha:g}")


def inverse_abs_d_multiplier() -> Multiplier:
    return Multiplier(lambda K: 1.0 / _safe_abs(K), name="|D|^-1", mean_zero_only=True)


def riesz_multiplier(j: int) -> Multiplier:
    """Riesz transform ``R_j`` with symbol ``i xi_j / |xi|`` (1-based ``j``)."""
    return Multiplier(
        lambda K: 1j * K[j - 1] / _safe_abs(K),
        name=f"R_{j}",
        mean_zero_only=True,
        odd=True,
    )


def derivative_multiplier(j: int) -> Multiplier:
    """Partial derivative along axis ``j`` (1-based)."""
    return Multiplier(lambda K: 1j * K[j - 1], name=f"d_{j}", odd=True)


def semigroup_multiplier(alpha: float, t: float) -> Multiplier:
    """Dissipative semigroup ``exp(-t |D|^alpha)``."""

    def symbol(K):
        r = np.sqrt(np.sum(K**2, axis=0))
        return np.exp(-t * np.where(r == 0, 0.0, r**alpha))

    return Multiplier(symbol, name=f"exp(-{t:g}|D|^{alpha:g})")


def riesz_velocity(theta: SpectralField) -> tuple[SpectralField, SpectralField]:
    """Velocity ``v = (-R_2 theta, R_1 theta)`` of a mean-zero scalar."""
    if theta.grid.d != 2:
        raise ConfigurationError("the Riesz velocity is defined for d=2")
    if not theta.mean_zero:
        raise DomainError("riesz_velocity requires a mean-zero field")
    v1 = apply_multiplier(theta, riesz_multiplier(2)) * -1.0
    v2 = apply_multiplier(theta, riesz_multiplier(1))
    return v1, v2


def divergence(v1: SpectralField, v2: SpectralField) -> SpectralField:
    d1 = apply_multiplier(v1, derivative_multiplier(1))
    d2 = apply_multiplier(v2, derivative_multiplier(2))
    return d1 + d2


def rescale(theta: PhysicalField, lam: float, alpha: float, tol: float = 1e-13) -> PhysicalField:
    """Critical rescaling ``x -> lam**(alpha-1) * theta(lam * x)`` on the torus.

    ``lam`` must be ``2**j``.  For ``j > 0`` the rescaled spectrum must stay
    below Nyquist; for ``j < 0`` the field must be ``2**-j`` times periodic so
    the result is again periodic on the box.
    """
    if not lam > 0:
        raise UnsupportedScaleError(f"scale must be positive, got {lam}")
    j = math.log2(lam)
    if abs(j - round(j)) > 1e-12:
        raise UnsupportedScaleError(f"scale must be a power of two, got {lam}")
    j = int(round(j))
    grid = theta.grid
    if j == 0:
        return PhysicalField(grid, theta.values * lam ** (alpha - 1))

    c = forward(theta).coeffs
    m = grid.integer_wavenumbers
    scale = float(np.max(np.abs(c)))
    significant = np.abs(c) > tol * scale
    out = np.zeros_like(c)
    n = grid.n
    if j > 0:
        factor = 2**j
        fits = np.all(np.abs(factor * m) < n // 2, axis=0)
        if np.any(significant & ~fits):
            raise UnsupportedScaleError(
                f"rescaling by {lam} pushes the spectrum past Nyquist on n={n}"
            )
        target = tuple((factor * m[ax][fits]) % n for ax in range(grid.d))
        out[target] = c[fits]
    else:
        factor = 2 ** (-j)
        divisible = np.all(m % factor == 0, axis=0)
        if np.any(significant & ~divisible):
            raise UnsupportedScaleError(
                f"rescaling by {lam} needs a {factor}-fold periodic field"
            )
        target = tuple((m[ax][divisible] // factor) % n for ax in range(grid.d))
        out[target] = c[divisible]
    out *= lam ** (alpha - 1)
    return PhysicalField(grid, to_physical(out, grid))


def lp_norm(values: np.ndarray, p: float, grid: Grid) -> float:
    """``L^p`` norm by uniform-weight quadrature; ``p = inf`` is the grid max."""
    a = np.abs(values)
    if math.isinf(p):
        return float(a.max()) if a.size else 0.0
    if p == 1:
        return float(a.sum() * grid.cell_volume)
    if p == 2:
        return math.sqrt(float(np.sum(a * a)) * grid.cell_volume)
    return float((np.sum(a**p) * grid.cell_volume) ** (1.0 / p))


def lp_norm_batch(values: np.ndarray, p: float, grid: Grid) -> np.ndarray:
    """Vectorised ``lp_norm`` over leading batch axes."""
    axes = tuple(range(-grid.d, 0))
    a = np.abs(values)
    if math.isinf(p):
        return a.max(axis=axes)
    if p == 1:
        return a.sum(axis=axes) * grid.cell_volume
    if p == 2:
        return np.sqrt(np.sum(a * a, axis=axes) * grid.cell_volume)
    return (np.sum(a**p, axis=axes) * grid.cell_volume) ** (1.0 / p)
