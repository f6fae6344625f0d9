"""Dyadic partition of unity, Besov norms and paraproducts on the torus.

The low-frequency profile ``chi`` is a radial C-infinity cutoff equal to 1 for
``|xi| <= 3/4`` and 0 for ``|xi| >= 4/3``; the ring profile is
``phi(xi) = chi(xi/2) - chi(xi)``, supported in ``3/4 <= |xi| <= 8/3``.
Every block multiplier is built as a difference of two ``chi`` evaluations,
so sums over consecutive blocks telescope to within rounding.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Iterable, Mapping

import numpy as np

from .exceptions import DomainError, IncompleteLedgerError, UndefinedRatioError
from .spectral import (
    Grid,
    PhysicalField,
    SpectralField,
    dealias,
    lp_norm,
    lp_norm_batch,
    to_physical,
    to_spectral,
)

RING_INNER = 3.0 / 4.0
RING_OUTER = 8.0 / 3.0
_CHI_FLAT = 3.0 / 4.0
_CHI_ZERO = 4.0 / 3.0

P_VALUES = (1.0, 2.0, math.inf)


def _psi(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def smooth_step(t):
    """C-infinity step: 1 for ``t <= 0``, 0 for ``t >= 1``."""
    t = np.clip(np.asarray(t, dtype=np.float64), 0.0, 1.0)
    a = _psi(1.0 - t)
    b = _psi(t)
    return a / (a + b)


def chi_profile(r):
    return smooth_step((np.asarray(r, dtype=np.float64) - _CHI_FLAT) / (_CHI_ZERO - _CHI_FLAT))


def phi_profile(r):
    r = np.asarray(r, dtype=np.float64)
    return chi_profile(r / 2.0) - chi_profile(r)


def ring_cutoff_profile(r, inner=0.6, outer=3.2):
    """Radial cutoff equal to 1 on ``[3/4, 8/3]``, supported in ``[inner, outer]``."""
    r = np.asarray(r, dtype=np.float64)
    up = 1.0 - smooth_step((r - inner) / (RING_INNER - inner))
    down = smooth_step((r - RING_OUTER) / (outer - RING_OUTER))
    return up * down


@dataclass(frozen=True)
class BesovSpec:
    """Selects the norm ``(2^{qs} ||Delta_q u||_{L^p})_{l^m}``."""

    s: float
    p: float = 2.0
    m: float = 1.0
    homogeneous: bool = True

    def __post_init__(self):
        for name in ("p", "m"):
            value = float(getattr(self, name))
            if not value >= 1:
                raise DomainError(f"{name} must lie in [1, inf], got {value}")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "s", float(self.s))

    def to_dict(self) -> dict:
        def enc(x):
            return "inf" if math.isinf(x) else x

        return {"s": self.s, "p": enc(self.p), "m": enc(self.m), "homogeneous": self.homogeneous}

    @classmethod
    def from_dict(cls, d: Mapping) -> "BesovSpec":
        return cls(
            s=float(d["s"]),
            p=float(d.get("p", 2.0)),
            m=float(d.get("m", 1.0)),
            homogeneous=bool(d.get("homogeneous", d.get("hom", True))),
        )


def ell_norm(seq: Iterable[float], m: float) -> float:
    a = np.abs(np.asarray(list(seq), dtype=np.float64))
    if a.size == 0:
        return 0.0
    if math.isinf(m):
        return float(a.max())
    if m == 1:
        return float(a.sum())
    top = a.max()
    if top == 0.0:
        return 0.0
    # scale first so tiny or huge entries neither underflow nor overflow
    return float(top * np.sum((a / top) ** m) ** (1.0 / m))


@dataclass(frozen=True, eq=False)
class DyadicFamily:
    """Block multipliers active on one grid.

    Homogeneous blocks run over ``q_min..q_max``; inhomogeneous blocks are
    ``-1`` (the ``chi`` ball) followed by ``0..q_max``.
    """

    grid: Grid
    q_min: int
    q_max: int
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def chi_at_scale(self, q: int) -> np.ndarray:
        """``chi(2^{-q} k)`` on the lattice."""
        key = ("chi", q)
        if key not in self._cache:
            a = chi_profile(self.grid.abs_k * 2.0 ** (-q))
            a.setflags(write=False)
            self._cache[key] = a
        return self._cache[key]

    def phi(self, q: int) -> np.ndarray:
        """``phi(2^{-q} k)`` on the lattice (zero at ``k = 0``)."""
        key = ("phi", q)
        if key not in self._cache:
            a = self.chi_at_scale(q + 1) - self.chi_at_scale(q)
            a.setflags(write=False)
            self._cache[key] = a
        return self._cache[key]

    def chi(self) -> np.ndarray:
        return self.chi_at_scale(0)

    def blocks(self, homogeneous: bool = True) -> list[int]:
        if homogeneous:
            return list(range(self.q_min, self.q_max + 1))
        return list(range(-1, self.q_max + 1))

    def block_multiplier(self, q: int, homogeneous: bool = True) -> np.ndarray:
        if not homogeneous and q == -1:
            return self.chi()
        if not homogeneous and q < -1:
            raise DomainError("inhomogeneous blocks start at q = -1")
        return self.phi(q)

    def multiplier_stack(self, homogeneous: bool = True) -> np.ndarray:
        key = ("stack", homogeneous)
        if key not in self._cache:
            a = np.stack([self.block_multiplier(q, homogeneous) for q in self.blocks(homogeneous)])
            a.setflags(write=False)
            self._cache[key] = a
        return self._cache[key]

    def low_pass(self, q: int, homogeneous: bool = False) -> np.ndarray:
        """``S_q``: inhomogeneous ``chi(2^{-q}D)``; homogeneous drops the zero mode."""
        a = np.array(self.chi_at_scale(q))
        if homogeneous:
            a.flat[0] = 0.0
        return a

    def partition_residual(self, homogeneous: bool = False) -> float:
        """Max lattice residual of the partition-of-unity identity."""
        total = np.zeros(self.grid.shape)
        for q in self.blocks(homogeneous):
            total = total + self.block_multiplier(q, homogeneous)
        if homogeneous:
            nonzero = self.grid.abs_k > 0
            return float(np.max(np.abs(1.0 - total[nonzero])))
        return float(np.max(np.abs(1.0 - total)))


def build_family(grid: Grid) -> DyadicFamily:
    """Dyadic family whose blocks cover every nonzero resolved lattice point."""
    k_min = grid.k0
    q_min = math.floor(math.log2(k_min * RING_INNER / 2.0))
    q_max = math.ceil(math.log2(grid.k_max_radial / RING_INNER))
    return DyadicFamily(grid, q_min, q_max)


@dataclass(frozen=True, eq=False)
class DyadicDecomposition:
    blocks: dict
    low: SpectralField | None
    mean: complex
    mode: str

    def reconstruct(self) -> SpectralField:
        blocks = list(self.blocks.values())
        grid = blocks[0].grid
        c = np.sum([b.coeffs for b in blocks], axis=0)
        if self.mode == "inhomogeneous" and self.low is not None:
            c = c + self.low.coeffs
        if self.mode == "homogeneous":
            c = np.array(c)
            c.flat[0] += self.mean
        return SpectralField(grid, c)


def _mode_flag(mode) -> bool:
    if mode in ("homogeneous", True):
        return True
    if mode in ("inhomogeneous", False):
        return False
    raise DomainError(f"unknown decomposition mode {mode!r}")


def decompose(u: SpectralField, fam: DyadicFamily, mode="homogeneous") -> DyadicDecomposition:
    """Split ``u`` into its dyadic blocks.

    In homogeneous mode the zero mode is not part of any block; it is reported
    as ``mean``.  In inhomogeneous mode block ``-1`` is returned as ``low``.
    """
    hom = _mode_flag(mode)
    blocks = {}
    low = None
    for q in fam.blocks(hom):
        b = SpectralField(u.grid, fam.block_multiplier(q, hom) * u.coeffs)
        if not hom and q == -1:
            low = b
        else:
            blocks[q] = b
    mean = u.mean if hom else 0j
    return DyadicDecomposition(blocks, low, mean, "homogeneous" if hom else "inhomogeneous")


def block_values(u: SpectralField, fam: DyadicFamily, homogeneous: bool = True) -> np.ndarray:
    """Physical samples of every block, stacked in ``fam.blocks(homogeneous)`` order."""
    return to_physical(fam.multiplier_stack(homogeneous) * u.coeffs, u.grid)


def block_norms(u: SpectralField, fam: DyadicFamily, p: float, homogeneous: bool = True) -> dict:
    norms = lp_norm_batch(block_values(u, fam, homogeneous), p, u.grid)
    return dict(zip(fam.blocks(homogeneous), (float(x) for x in norms)))


def besov_from_block_norms(norms: Mapping[int, float], s: float, m: float) -> float:
    return ell_norm((2.0 ** (q * s) * a for q, a in norms.items()), m)


def besov_norm(u: SpectralField, spec: BesovSpec, fam: DyadicFamily) -> float:
    if spec.homogeneous and not u.mean_zero:
        raise DomainError("homogeneous Besov norms are taken on mean-zero fields")
    norms = block_norms(u, fam, spec.p, spec.homogeneous)
    return besov_from_block_norms(norms, spec.s, spec.m)


def _periodic_shift_lengths(grid: Grid) -> np.ndarray:
    m = grid.integer_wavenumbers  # FFT ordering doubles as signed shift indices
    return np.sqrt(np.sum((m * grid.spacing) ** 2, axis=0))


def difference_norms(u: PhysicalField, p: float) -> np.ndarray:
    """``||u(. - x) - u||_{L^p}`` for every lattice shift ``x`` (FFT-ordered)."""
    grid = u.grid
    vals = u.values
    out = np.zeros(grid.shape)
    if p == 2:
        # Parseval: ||u(.-x)-u||^2 = 2 L^d sum |c_k|^2 (1 - cos k.x)
        power = np.abs(to_spectral(vals, grid)) ** 2
        total = float(power.sum())
        corr = np.real(to_physical(power, grid))
        out = np.sqrt(np.maximum(2.0 * grid.length**grid.d * (total - corr), 0.0))
        out.flat[0] = 0.0
        return out
    for idx in np.ndindex(*grid.shape):
        if not any(idx):
            continue
        shifted = np.roll(vals, idx, axis=tuple(range(grid.d)))
        out[idx] = lp_norm(shifted - vals, p, grid)
    return out


def besov_norm_finite_difference(u: PhysicalField, s: float, p: float, m: float) -> float:
    """Difference-quotient Besov norm summed over all nonzero lattice shifts."""
    if not 0 < s < 1:
        raise DomainError(f"finite-difference characterisation needs 0 < s < 1, got {s}")
    grid = u.grid
    diffs = difference_norms(u, float(p))
    lengths = _periodic_shift_lengths(grid)
    mask = lengths > 0
    d = grid.d
    if math.isinf(m):
        return float(np.max(diffs[mask] / lengths[mask] ** s))
    integrand = diffs[mask] ** m * lengths[mask] ** (-s * m - d)
    return float((integrand.sum() * grid.cell_volume) ** (1.0 / m))


@dataclass
class TimeSeriesLedger:
    """Per-timestep norm records of a run; appended by a single writer."""

    times: list = field(default_factory=list)
    lp: dict = field(default_factory=dict)
    per_block_lp: dict = field(default_factory=dict)
    grad_v_inf: list = field(default_factory=list)
    forcing_norm: list = field(default_factory=list)

    def append(self, t: float, lp: Mapping, per_block: Mapping, grad_v_inf: float, forcing_norm=None):
        if self.times and t <= self.times[-1]:
            raise IncompleteLedgerError(f"time {t} does not increase past {self.times[-1]}")
        k = len(self.times)
        for key in set(self.lp) | set(lp):
            seq = self.lp.setdefault(key, [])
            if len(seq) != k or key not in lp:
                raise IncompleteLedgerError(f"L^{key} record missing at step {k}")
            seq.append(float(lp[key]))
        for key in set(self.per_block_lp) | set(per_block):
            seq = self.per_block_lp.setdefault(key, [])
            if len(seq) != k or key not in per_block:
                raise IncompleteLedgerError(f"block record {key} missing at step {k}")
            seq.append(float(per_block[key]))
        self.times.append(float(t))
        self.grad_v_inf.append(float(grad_v_inf))
        if forcing_norm is not None:
            self.forcing_norm.append(float(forcing_norm))

    def __len__(self):
        return len(self.times)

    def V(self) -> np.ndarray:
        """Accumulated velocity Lipschitz norm by the trapezoid rule."""
        g = np.asarray(self.grad_v_inf)
        t = np.asarray(self.times)
        out = np.zeros(len(t))
        if len(t) > 1:
            out[1:] = np.cumsum(0.5 * (g[1:] + g[:-1]) * np.diff(t))
        return out

    def blocks(self) -> list[int]:
        return sorted({q for q, _ in self.per_block_lp})

    def block_series(self, p: float) -> dict:
        p = float(p)
        out = {q: np.asarray(seq) for (q, pp), seq in self.per_block_lp.items() if pp == p}
        if not out:
            raise IncompleteLedgerError(f"ledger has no block data for p={p}")
        return dict(sorted(out.items()))

    def besov_series(self, spec: BesovSpec) -> np.ndarray:
        """Instantaneous homogeneous Besov norm at every recorded time."""
        series = self.block_series(spec.p)
        weights = {q: 2.0 ** (q * spec.s) for q in series}
        mat = np.stack([weights[q] * series[q] for q in series])
        if math.isinf(spec.m):
            return mat.max(axis=0)
        return np.sum(mat**spec.m, axis=0) ** (1.0 / spec.m)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "p", "lp_norm", "q", "block_norm", "grad_v_inf"])
        ps = sorted(float(p) for p in self.lp)
        qs = self.blocks()
        for i, t in enumerate(self.times):
            for q in qs:
                for p in ps:
                    block = self.per_block_lp.get((q, p))
                    w.writerow([
                        repr(t),
                        _fmt_p(p),
                        repr(self.lp[p][i]),
                        q,
                        repr(block[i]) if block is not None else "",
                        repr(self.grad_v_inf[i]),
                    ])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TimeSeriesLedger":
        rows = list(csv.DictReader(io.StringIO(text)))
        led = cls()
        by_time: dict = {}
        for r in rows:
            t = float(r["time"])
            rec = by_time.setdefault(t, {"lp": {}, "blocks": {}, "g": float(r["grad_v_inf"])})
            p = float(r["p"])
            rec["lp"][p] = float(r["lp_norm"])
            if r["block_norm"] != "":
                rec["blocks"][(int(r["q"]), p)] = float(r["block_norm"])
        for t in sorted(by_time):
            rec = by_time[t]
            led.append(t, rec["lp"], rec["blocks"], rec["g"])
        return led


def _fmt_p(p: float) -> str:
    return "inf" if math.isinf(p) else repr(float(p))


def _time_lr(values: np.ndarray, times: np.ndarray, r: float) -> float:
    values = np.abs(values)
    if math.isinf(r):
        return float(values.max())
    if len(times) == 1:
        return 0.0
    return float(np.trapezoid(values**r, times) ** (1.0 / r))


def mixed_time_norm(ledger: TimeSeriesLedger, spec: BesovSpec, r: float, T: float, tilde: bool) -> float:
    """Space-time Besov norm over ``[0, T]`` from recorded block norms.

    ``tilde=True`` takes the time ``L^r`` norm of every block before the
    ``l^m`` sum; ``tilde=False`` takes the time ``L^r`` norm of the
    instantaneous Besov norm.  Time integrals use the trapezoid rule.
    """
    if not spec.homogeneous:
        raise IncompleteLedgerError("the ledger records homogeneous blocks only")
    times = np.asarray(ledger.times)
    if len(times) == 0 or times[0] > 1e-12 or times[-1] < T - 1e-9 * max(1.0, abs(T)):
        raise IncompleteLedgerError(f"ledger does not cover [0, {T}]")
    keep = times <= T + 1e-9 * max(1.0, abs(T))
    times = times[keep]
    series = {q: seq[keep] for q, seq in ledger.block_series(spec.p).items()}
    r = float(r)
    if tilde:
        return ell_norm((2.0 ** (q * spec.s) * _time_lr(a, times, r) for q, a in series.items()), spec.m)
    inst = np.stack([2.0 ** (q * spec.s) * a for q, a in series.items()])
    if math.isinf(spec.m):
        inst = inst.max(axis=0)
    else:
        inst = np.sum(inst**spec.m, axis=0) ** (1.0 / spec.m)
    return _time_lr(inst, times, r)


def _derivative_arrays(u_coeffs: np.ndarray, grid: Grid, k: int, fractional: bool) -> list:
    if fractional:
        sym = np.where(grid.abs_k == 0, 0.0, grid.abs_k) ** k
        return [sym * u_coeffs]
    out = []
    K = grid.wavevectors
    for combo in combinations_with_replacement(range(grid.d), int(k)):
        sym = np.ones(grid.shape, dtype=np.complex128)
        for ax in combo:
            sym = sym * (1j * K[ax])
        if k % 2 == 1:
            sym = np.where(grid.nyquist_mask, 0.0, sym)
        out.append(sym * u_coeffs)
    return out


def bernstein_ratio(
    u: SpectralField, q: int, k: float, a: float, b: float, fam: DyadicFamily, fractional: bool = False
) -> float:
    """``sup_|beta|=k ||d^beta Delta_q u||_b / (2^{q(k + d(1/a - 1/b))} ||Delta_q u||_a)``.

    With ``fractional=True`` the derivative is replaced by ``|D|^k``.
    """
    if b < a:
        raise DomainError("Bernstein ratios need b >= a")
    grid = u.grid
    block = fam.phi(q) * u.coeffs
    base = lp_norm(to_physical(block, grid), a, grid)
    # blocks at round-off level relative to the field count as empty
    if base == 0.0 or np.abs(block).max() <= 1e-13 * np.abs(u.coeffs).max():
        raise UndefinedRatioError(f"block {q} of the field vanishes")
    if not fractional and float(k) != int(k):
        raise DomainError("classical derivatives need an integer order")
    derivs = _derivative_arrays(block, grid, k, fractional)
    top = max(lp_norm(to_physical(c, grid), b, grid) for c in derivs)
    inv = lambda x: 0.0 if math.isinf(x) else 1.0 / x  # noqa: E731
    scale = 2.0 ** (q * (k + grid.d * (inv(a) - inv(b))))
    return top / (scale * base)


def bony_decompose(u: SpectralField, v: SpectralField, fam: DyadicFamily):
    """Paraproducts ``T_u v``, ``T_v u`` and remainder ``R(u, v)``.

    ``T_u v = sum_q S_{q-1}u * Delta_q v`` and
    ``R(u, v) = sum_q sum_{|i|<=1} Delta_q u * Delta_{q+i} v``, with products
    formed in physical space and each result passed through the two-thirds
    dealiasing filter.
    """
    if not (u.mean_zero and v.mean_zero):
        raise DomainError("Bony decomposition is taken on mean-zero fields")
    grid = u.grid
    qs = fam.blocks(True)
    bu = block_values(u, fam)
    bv = block_values(v, fam)
    # S_{q-1} = sum_{j <= q-2} Delta_j
    cu = np.cumsum(bu, axis=0)
    cv = np.cumsum(bv, axis=0)
    zero = np.zeros(grid.shape)

    def low(cum, i):
        return cum[i - 2] if i >= 2 else zero

    t_uv = np.zeros(grid.shape)
    t_vu = np.zeros(grid.shape)
    rem = np.zeros(grid.shape)
    nq = len(qs)
    for i in range(nq):
        t_uv += low(cu, i) * bv[i]
        t_vu += low(cv, i) * bu[i]
        for j in (i - 1, i, i + 1):
            if 0 <= j < nq:
                rem += bu[i] * bv[j]

    def spec(vals):
        return dealias(SpectralField(grid, to_spectral(vals, grid)))

    return spec(t_uv), spec(t_vu), spec(rem)


def dealiased_product(u: SpectralField, v: SpectralField) -> SpectralField:
    grid = u.grid
    prod = to_physical(u.coeffs, grid) * to_physical(v.coeffs, grid)
    return dealias(SpectralField(grid, to_spectral(prod, grid)))
