"""Fractional Laplacian, dissipative semigroup, measure-preserving maps and
the two commutator probes built on them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import gamma

from .exceptions import DomainError, UnsupportedMapError
from .littlewood_paley import BesovSpec, DyadicFamily, besov_norm, ring_cutoff_profile
from .spectral import (
    Grid,
    PhysicalField,
    SpectralField,
    apply_multiplier,
    forward,
    frac_laplacian_multiplier,
    inverse,
    lp_norm,
    semigroup_multiplier,
    to_physical,
    to_spectral,
)


def frac_laplacian_spectral(u: SpectralField, alpha: float) -> SpectralField:
    return apply_multiplier(u, frac_laplacian_multiplier(alpha))


def analytic_c_alpha(alpha: float, d: int = 2) -> float:
    """Normalising constant of the singular-integral form of ``|D|^alpha`` on R^d."""
    return (
        alpha
        * 2.0 ** (alpha - 1)
        * gamma((d + alpha) / 2.0)
        / (math.pi ** (d / 2.0) * gamma(1.0 - alpha / 2.0))
    )


def _singular_kernel(grid: Grid, alpha: float) -> np.ndarray:
    m = grid.integer_wavenumbers
    dist = np.sqrt(np.sum((m * grid.spacing) ** 2, axis=0))
    kernel = np.zeros(grid.shape)
    nz = dist > 0
    kernel[nz] = dist[nz] ** (-grid.d - alpha)
    return kernel


def frac_laplacian_singular_integral(u: PhysicalField, alpha: float, c_alpha: float = 1.0) -> PhysicalField:
    """Lattice quadrature of ``c_alpha * int (u(x) - u(y)) / |x - y|^{d+alpha} dy``.

    The sum runs over every grid point ``y != x`` of the fundamental cell with
    the periodic distance; the diagonal term is skipped.  The shift sum is a
    circular convolution and is evaluated with FFTs.
    """
    if not 0 < alpha < 1:
        raise DomainError(f"singular-integral form needs 0 < alpha < 1, got {alpha}")
    grid = u.grid
    kernel = _singular_kernel(grid, alpha)
    n_d = grid.n**grid.d
    conv = to_physical(to_spectral(kernel, grid) * to_spectral(u.values, grid) * n_d, grid)
    out = (u.values * kernel.sum() - conv) * grid.cell_volume * c_alpha
    return PhysicalField(grid, out)


def calibrate_c_alpha(fields: Sequence[PhysicalField], alpha: float) -> float:
    """Least-squares ``c_alpha`` matching the quadrature to the spectral operator."""
    num = 0.0
    den = 0.0
    for u in fields:
        target = inverse(frac_laplacian_spectral(forward(u), alpha)).values
        raw = frac_laplacian_singular_integral(u, alpha, 1.0).values
        num += float(np.sum(target * raw))
        den += float(np.sum(raw * raw))
    return num / den


def semigroup_spectral(u: SpectralField, alpha: float, t: float) -> SpectralField:
    """``exp(-t |D|^alpha) u``."""
    if t < 0:
        raise DomainError("semigroup time must be nonnegative")
    if not 0 <= alpha <= 2:
        raise DomainError("dissipation order must lie in [0, 2]")
    return apply_multiplier(u, semigroup_multiplier(alpha, t))


def fit_log_linear(t: np.ndarray, ratio: np.ndarray) -> tuple[float, float]:
    """Fit ``ratio ~ C exp(-rate t)``; returns ``(C, rate)``."""
    t = np.asarray(t, dtype=np.float64)
    y = np.log(np.asarray(ratio, dtype=np.float64))
    slope, intercept = np.polyfit(t, y, 1)
    return float(math.exp(intercept)), float(-slope)


@dataclass
class AuxiliaryKernelGrid:
    """Fine periodic box approximating R^2 for kernel ``L^1`` quadrature."""

    n: int = 512
    length: float = 128.0

    def wavevector_norm(self) -> np.ndarray:
        k = np.fft.fftfreq(self.n) * self.n * (2 * math.pi / self.length)
        kx, ky = np.meshgrid(k, k, indexing="ij")
        return np.sqrt(kx**2 + ky**2)


def semigroup_kernel_l1(alpha: float, t: float, q: int, aux: AuxiliaryKernelGrid | None = None) -> float:
    """``L^1`` norm of the inverse transform of ``phibar(xi) exp(-t 2^{q alpha} |xi|^alpha)``.

    ``phibar`` is a smooth ring cutoff equal to 1 on the support of ``phi``.
    """
    aux = aux or AuxiliaryKernelGrid()
    r = aux.wavevector_norm()
    lam_a = 2.0 ** (q * alpha)
    symbol = ring_cutoff_profile(r) * np.exp(-t * lam_a * r**alpha)
    # continuum inverse transform (2 pi)^-2 int F e^{ix.xi} dxi sampled on the box
    kernel = np.real(np.fft.ifft2(symbol)) * aux.n**2 / aux.length**2
    return float(np.sum(np.abs(kernel)) * (aux.length / aux.n) ** 2)


# ---------------------------------------------------------------- maps


def _shear_lipschitz(max_slope: float) -> float:
    """Largest singular value of ``[[1, s], [0, 1]]`` for ``|s| = max_slope``."""
    s = abs(max_slope)
    return (s + math.sqrt(s * s + 4.0)) / 2.0


@dataclass(frozen=True)
class MeasurePreservingMap:
    """Exactly measure-preserving grid-compatible map ``psi``.

    ``compose_with_map`` evaluates ``u(psi(x))``.  Shears move along ``axis``
    by ``profile`` of the other coordinate: for ``axis=0``,
    ``psi(x, y) = (x + g(y), y)``.  ``composed`` applies its parts right to
    left, so ``composed([a, b])`` is ``a o b``.
    """

    kind: str
    vector: tuple = ()
    quarter_turns: int = 0
    axis: int = 0
    profile: Callable | None = field(default=None, compare=False)
    max_slope: float = 0.0
    parts: tuple = ()
    label: str = ""

    @classmethod
    def identity(cls):
        return cls("identity", label="identity")

    @classmethod
    def translation(cls, vector):
        return cls("translation", vector=tuple(float(v) for v in vector), label=f"translation{tuple(vector)}")

    @classmethod
    def rotation(cls, angle: float):
        turns = angle / (math.pi / 2)
        if abs(turns - round(turns)) > 1e-12:
            raise UnsupportedMapError(
                f"rotation by {angle} is not a multiple of pi/2 on the square lattice"
            )
        return cls("rotation", quarter_turns=int(round(turns)) % 4, label=f"rotation{int(round(turns)) % 4}")

    @classmethod
    def shear(cls, axis: int, profile: Callable, max_slope: float | None = None):
        if max_slope is None:
            y = np.linspace(0, 2 * math.pi, 8192, endpoint=False)
            gy = profile(y)
            dy = y[1] - y[0]
            max_slope = float(np.max(np.abs((np.roll(gy, -1) - np.roll(gy, 1)) / (2 * dy))))
        return cls("shear", axis=axis, profile=profile, max_slope=float(max_slope), label=f"shear{axis}")

    @classmethod
    def sine_shear(cls, axis: int, amplitude: float, mode: int = 1):
        def prof(y):
            return amplitude * np.sin(mode * y)

        return cls(
            "shear",
            axis=axis,
            profile=prof,
            max_slope=abs(amplitude) * mode,
            label=f"shear{axis}(a={amplitude:g},m={mode})",
        )

    @classmethod
    def composed(cls, parts):
        return cls("composed", parts=tuple(parts), label="o".join(p.label for p in parts))

    @property
    def lip_forward(self) -> float:
        if self.kind == "shear":
            return _shear_lipschitz(self.max_slope)
        if self.kind == "composed":
            return float(np.prod([p.lip_forward for p in self.parts])) if self.parts else 1.0
        return 1.0

    @property
    def lip_inverse(self) -> float:
        if self.kind == "shear":
            return _shear_lipschitz(self.max_slope)
        if self.kind == "composed":
            return float(np.prod([p.lip_inverse for p in self.parts])) if self.parts else 1.0
        return 1.0

    def is_isometry(self) -> bool:
        if self.kind == "composed":
            return all(p.is_isometry() for p in self.parts)
        return self.kind in ("identity", "translation", "rotation") or self.max_slope == 0.0

    def apply_to_points(self, x: np.ndarray) -> np.ndarray:
        """Image ``psi(x)`` of points ``x`` of shape ``(d, ...)`` (not wrapped)."""
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "identity":
            return x.copy()
        if self.kind == "translation":
            return x + np.asarray(self.vector).reshape((-1,) + (1,) * (x.ndim - 1))
        if self.kind == "rotation":
            out = x.copy()
            for _ in range(self.quarter_turns):
                out = np.stack([-out[1], out[0]])
            return out
        if self.kind == "shear":
            out = x.copy()
            other = 1 - self.axis
            out[self.axis] = x[self.axis] + self.profile(x[other])
            return out
        out = x
        for p in reversed(self.parts):
            out = p.apply_to_points(out)
        return out


def jacobian_determinant(psi: MeasurePreservingMap, grid: Grid, h: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian determinant of ``psi`` at the grid points."""
    x = grid.coordinates
    cols = []
    for ax in range(grid.d):
        e = np.zeros((grid.d,) + (1,) * grid.d)
        e[ax] = h
        cols.append((psi.apply_to_points(x + e) - psi.apply_to_points(x - e)) / (2 * h))
    J = np.stack(cols, axis=1)  # J[i, j] = d psi_i / d x_j
    if grid.d == 1:
        return J[0, 0]
    return J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]


def _fourier_shift_along(values: np.ndarray, axis: int, shifts: np.ndarray, grid: Grid) -> np.ndarray:
    """``u(x + s e_axis)`` with ``s`` varying along the other axis."""
    k = np.fft.fftfreq(grid.n) * grid.n * grid.k0
    spec = np.fft.fft(values, axis=axis)
    if axis == 0:
        phase = np.exp(1j * k[:, None] * shifts[None, :])
    else:
        phase = np.exp(1j * shifts[:, None] * k[None, :])
    return np.real(np.fft.ifft(spec * phase, axis=axis))


def compose_with_map(u: PhysicalField, psi: MeasurePreservingMap) -> PhysicalField:
    """Grid samples of ``u o psi`` by trigonometric interpolation of ``u``."""
    grid = u.grid
    vals = u.values
    if psi.kind == "identity":
        return PhysicalField(grid, vals)
    if psi.kind == "translation":
        a = np.asarray(psi.vector, dtype=np.float64)
        steps = a / grid.spacing
        if np.allclose(steps, np.round(steps), rtol=0, atol=1e-12):
            shift = tuple(-int(round(s)) for s in steps)
            return PhysicalField(grid, np.roll(vals, shift, axis=tuple(range(grid.d))))
        phase = np.exp(1j * np.tensordot(a, grid.wavevectors, axes=1))
        return PhysicalField(grid, to_physical(to_spectral(vals, grid) * phase, grid))
    if psi.kind == "rotation":
        if grid.d != 2:
            raise UnsupportedMapError("rotations need d=2")
        out = vals
        idx = (-np.arange(grid.n)) % grid.n
        for _ in range(psi.quarter_turns):
            # (u o R)(x_i, y_j) = u(-y_j, x_i)
            out = out[idx, :].T
        return PhysicalField(grid, np.ascontiguousarray(out))
    if psi.kind == "shear":
        if grid.d != 2:
            raise UnsupportedMapError("shears need d=2")
        y = np.arange(grid.n) * grid.spacing
        return PhysicalField(grid, _fourier_shift_along(vals, psi.axis, psi.profile(y), grid))
    if psi.kind == "composed":
        out = u
        for p in psi.parts:
            out = compose_with_map(out, p)
        return out
    raise UnsupportedMapError(f"unknown map kind {psi.kind!r}")


def commutator_frac_composition(
    u: PhysicalField, psi: MeasurePreservingMap, alpha: float, p: float, fam: DyadicFamily
) -> tuple[float, float]:
    """``|| |D|^a (u o psi) - (|D|^a u) o psi ||_{L^p}`` and the Lipschitz bound with ``C = 1``.

    The bound is
    ``max(|1 - lip_inv^{d+a}|, |1 - lip^{-d-a}|) * lip^a * ||u||_{B^a_{p,1}}``.
    """
    if not 0 <= alpha < 1:
        raise DomainError(f"commutator estimate needs 0 <= alpha < 1, got {alpha}")
    grid = u.grid
    uc = forward(u).without_mean()
    u0 = inverse(uc)
    comp = compose_with_map(u0, psi)
    left = inverse(frac_laplacian_spectral(forward(comp).without_mean(), alpha))
    right = compose_with_map(inverse(frac_laplacian_spectral(uc, alpha)), psi)
    lhs = lp_norm(left.values - right.values, p, grid)
    d = grid.d
    lip, lip_inv = psi.lip_forward, psi.lip_inverse
    factor = max(abs(1 - lip_inv ** (d + alpha)), abs(1 - lip ** (-d - alpha)))
    bound = factor * lip**alpha * besov_norm(uc, BesovSpec(alpha, p, 1.0), fam)
    return lhs, bound


def vishik_block_transfer(
    f: SpectralField, psi: MeasurePreservingMap, j: int, q: int, p: float, fam: DyadicFamily
) -> float:
    """``||Delta_j((Delta_q f) o psi)||_{L^p}``."""
    grid = f.grid
    if psi.kind == "identity":
        # stay spectral so disjoint rings give an exact zero
        return lp_norm(to_physical(fam.phi(j) * fam.phi(q) * f.coeffs, grid), p, grid)
    block = PhysicalField(grid, to_physical(fam.phi(q) * f.coeffs, grid))
    moved = compose_with_map(block, psi)
    out = to_physical(fam.phi(j) * to_spectral(moved.values, grid), grid)
    return lp_norm(out, p, grid)


def vishik_bound(f: SpectralField, psi: MeasurePreservingMap, j: int, q: int, p: float, fam: DyadicFamily) -> float:
    """``2^{-|j-q|} ||grad psi^{sign(j-q)}||_inf ||Delta_q f||_{L^p}``."""
    grid = f.grid
    base = lp_norm(to_physical(fam.phi(q) * f.coeffs, grid), p, grid)
    if j > q:
        lip = psi.lip_forward
    elif j < q:
        lip = psi.lip_inverse
    else:
        lip = 1.0
    return 2.0 ** (-abs(j - q)) * lip * base
