"""Seeded random fields.

Every generator draws from ``numpy.random.Generator(Philox(seed))``: a
counter-based bit generator whose streams are fixed by the seed alone, so
corpora are reproducible across platforms.
"""

from __future__ import annotations

import math

import numpy as np

from .littlewood_paley import BesovSpec, besov_norm
from .spectral import Grid, SpectralField, to_physical, to_spectral


def rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))


def child_seed(seed: int, index: int) -> int:
    """Deterministic per-item seed derived from a corpus seed."""
    return int(np.random.SeedSequence([int(seed) & (2**64 - 1), index]).generate_state(1, np.uint64)[0])


def random_spectral(grid: Grid, gen: np.random.Generator, envelope) -> SpectralField:
    """Real mean-zero field with Gaussian coefficients shaped by ``envelope(|k|)``.

    The Hermitian projection is taken through a real round trip, so odd
    Nyquist modes are dropped.
    """
    kk = grid.abs_k
    amp = np.where(kk > 0, envelope(kk), 0.0)
    z = gen.standard_normal(grid.shape) + 1j * gen.standard_normal(grid.shape)
    c = to_spectral(to_physical(amp * z, grid), grid)
    c.flat[0] = 0.0
    return SpectralField(grid, c)


def band_field(grid: Grid, gen, k_lo: float, k_hi: float) -> SpectralField:
    """Flat spectrum on the annulus ``k_lo <= |k| <= k_hi``."""
    return random_spectral(grid, gen, lambda k: ((k >= k_lo) & (k <= k_hi)).astype(float))


def block_field(grid: Grid, gen, fam, q: int) -> SpectralField:
    """Random data living in block ``q`` (one Littlewood-Paley ring)."""
    u = band_field(grid, gen, 0.75 * 2.0**q, 8.0 / 3.0 * 2.0**q)
    return SpectralField(grid, fam.phi(q) * u.coeffs)


def smooth_field(grid: Grid, gen, width: float = 1.5, k_cut: float = 4.0) -> SpectralField:
    """Gaussian envelope ``exp(-(|k|/width)^2)`` truncated to ``|k| <= k_cut``."""
    return random_spectral(grid, gen, lambda k: np.exp(-((k / width) ** 2)) * (k <= k_cut))


def normalize(u: SpectralField, spec: BesovSpec, fam, target: float) -> SpectralField:
    norm = besov_norm(u, spec, fam)
    if norm == 0:
        return u
    return u * (target / norm)


def small_data_corpus(grid: Grid, fam, alpha: float, seed: int, count: int = 10, lo: float = 0.01, hi: float = 0.05):
    """Seeded data with ``||theta0||_{B^{1-alpha}_{inf,1}}`` uniform in ``[lo, hi]``."""
    spec = BesovSpec(1.0 - alpha, math.inf, 1.0)
    out = []
    for i in range(count):
        gen = rng(child_seed(seed, i))
        target = gen.uniform(lo, hi)
        out.append(normalize(smooth_field(grid, gen), spec, fam, target))
    return out
