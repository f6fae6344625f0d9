"""scikit-learn transformers over batches of grid fields.

Each row of ``X`` is one real field on an ``n x n`` periodic grid, flattened
row-major, so ``X`` has shape ``(n_samples, n * n)``.  The transformers wrap
the dyadic toolkit and the solvers so they compose with ``Pipeline`` and
``FunctionTransformer``-style tooling.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .evolution import SolverConfig, run_qg
from .exceptions import ConfigurationError
from .fractional import semigroup_spectral
from .littlewood_paley import BesovSpec, besov_from_block_norms, build_family
from .spectral import Grid, SpectralField, lp_norm_batch, to_physical, to_spectral


class _GridTransformer(TransformerMixin, BaseEstimator):
    """Shared validation: rows are flattened fields on one grid."""

    def _grid(self) -> Grid:
        return Grid(int(self.n), float(self.length))

    def _validate(self, X, reset: bool):
        X = check_array(X, dtype=np.float64, ensure_all_finite=True)
        if reset:
            grid = self._grid()
            if X.shape[1] != grid.n**2:
                raise ConfigurationError(f"rows must hold {grid.n}x{grid.n} fields, got {X.shape[1]} features")
            self.grid_ = grid
            self.n_features_in_ = X.shape[1]
        elif X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X

    def _spectra(self, X) -> np.ndarray:
        g = self.grid_
        c = to_spectral(X.reshape((-1,) + g.shape), g)
        c[:, 0, 0] = 0.0
        return c

    def fit(self, X, y=None):
        self._validate(X, reset=True)
        return self


class LittlewoodPaleyTransformer(_GridTransformer):
    """Per-block ``L^p`` norms ``||Delta_q u||_{L^p}`` as features.

    The zero mode is dropped before the homogeneous decomposition.
    ``blocks_`` lists the block index of each output column.
    """

    def __init__(self, n=64, length=2 * math.pi, p=2.0, homogeneous=True):
        self.n = n
        self.length = length
        self.p = p
        self.homogeneous = homogeneous

    def fit(self, X, y=None):
        self._validate(X, reset=True)
        self.family_ = build_family(self.grid_)
        self.blocks_ = np.asarray(self.family_.blocks(self.homogeneous))
        return self

    def transform(self, X):
        check_is_fitted(self, "family_")
        X = self._validate(X, reset=False)
        g = self.grid_
        c = self._spectra(X) if self.homogeneous else to_spectral(X.reshape((-1,) + g.shape), g)
        stack = self.family_.multiplier_stack(self.homogeneous)
        out = np.empty((X.shape[0], len(self.blocks_)))
        for i, ci in enumerate(c):
            out[i] = lp_norm_batch(to_physical(stack * ci, g), float(self.p), g)
        return out

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "blocks_")
        return np.asarray([f"block_{q}" for q in self.blocks_], dtype=object)


class BesovNormTransformer(_GridTransformer):
    """Homogeneous Besov norm of every row, shape ``(n_samples, 1)``."""

    def __init__(self, n=64, length=2 * math.pi, s=0.0, p=2.0, m=1.0):
        self.n = n
        self.length = length
        self.s = s
        self.p = p
        self.m = m

    def fit(self, X, y=None):
        BesovSpec(self.s, self.p, self.m)
        self.block_transformer_ = LittlewoodPaleyTransformer(self.n, self.length, self.p).fit(X)
        self.n_features_in_ = self.block_transformer_.n_features_in_
        self.grid_ = self.block_transformer_.grid_
        return self

    def transform(self, X):
        check_is_fitted(self, "block_transformer_")
        blocks = self.block_transformer_.transform(X)
        qs = self.block_transformer_.blocks_
        vals = [besov_from_block_norms(dict(zip(qs, row)), float(self.s), float(self.m)) for row in blocks]
        return np.asarray(vals).reshape(-1, 1)


class FractionalSemigroup(_GridTransformer):
    """Apply ``exp(-t |D|^alpha)`` to every row."""

    def __init__(self, n=64, length=2 * math.pi, alpha=0.5, t=1.0):
        self.n = n
        self.length = length
        self.alpha = alpha
        self.t = t

    def transform(self, X):
        check_is_fitted(self, "grid_")
        X = self._validate(X, reset=False)
        g = self.grid_
        c = to_spectral(X.reshape((-1,) + g.shape), g)
        out = [to_physical(semigroup_spectral(SpectralField(g, ci), self.alpha, self.t).coeffs, g) for ci in c]
        return np.asarray(out).reshape(X.shape[0], -1)


class QGEvolver(_GridTransformer):
    """Evolve every row under the dissipative QG equation to ``t_end``.

    Rows are projected to mean zero (and dealiased) first.  ``ledgers_``
    holds the diagnostics of the most recent ``transform`` call.
    """

    def __init__(self, n=64, length=2 * math.pi, alpha=0.5, dt=0.01, t_end=1.0, cfl=0.4, integrator="IF-RK4"):
        self.n = n
        self.length = length
        self.alpha = alpha
        self.dt = dt
        self.t_end = t_end
        self.cfl = cfl
        self.integrator = integrator

    def fit(self, X, y=None):
        self._validate(X, reset=True)
        self.config_ = SolverConfig(self.alpha, self.dt, self.t_end, self.cfl, True, self.integrator)
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        X = self._validate(X, reset=False)
        g = self.grid_
        out = np.empty_like(X)
        self.ledgers_ = []
        for i, ci in enumerate(self._spectra(X)):
            st = run_qg(SpectralField(g, ci), self.config_)
            self.ledgers_.append(st.ledger)
            out[i] = to_physical(st.theta.coeffs, g).ravel()
        return out


__all__ = ["LittlewoodPaleyTransformer", "BesovNormTransformer", "FractionalSemigroup", "QGEvolver"]
