import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from sqglab import corpus
from sqglab.estimators import BesovNormTransformer, FractionalSemigroup, LittlewoodPaleyTransformer, QGEvolver
from sqglab.evolution import family_for
from sqglab.exceptions import ConfigurationError
from sqglab.littlewood_paley import BesovSpec, besov_norm, block_norms
from sqglab.spectral import Grid, inverse


@pytest.fixture
def batch():
    g = Grid(32)
    gen = corpus.rng(21)
    fields = [corpus.smooth_field(g, gen, k_cut=8) for _ in range(4)]
    X = np.stack([inverse(u).values.ravel() for u in fields])
    return g, fields, X


class TestTransformers:
    """scikit-learn wrappers around the dyadic toolkit."""

    def test_block_norm_features(self, batch):
        g, fields, X = batch
        tr = LittlewoodPaleyTransformer(n=32).fit(X)
        out = tr.transform(X)
        expected = block_norms(fields[0], family_for(g), 2.0)
        assert out.shape == (4, len(tr.blocks_))
        assert out[0] == pytest.approx([expected[q] for q in tr.blocks_], rel=1e-10, abs=1e-14)
        assert tr.get_feature_names_out()[0] == f"block_{tr.blocks_[0]}"

    def test_besov_feature(self, batch):
        g, fields, X = batch
        out = BesovNormTransformer(n=32, s=0.5, p=math.inf, m=1).fit_transform(X)
        expected = [besov_norm(u, BesovSpec(0.5, math.inf, 1), family_for(g)) for u in fields]
        assert out.ravel() == pytest.approx(expected, rel=1e-10)

    def test_semigroup_rows(self, batch):
        _, _, X = batch
        out = FractionalSemigroup(n=32, alpha=0.5, t=0.0).fit_transform(X)
        assert np.allclose(out, X, atol=1e-13)

    def test_evolver_in_pipeline(self, batch):
        _, _, X = batch
        pipe = make_pipeline(QGEvolver(n=32, alpha=0.5, dt=0.05, t_end=0.1), LittlewoodPaleyTransformer(n=32))
        feats = pipe.fit_transform(X * 0.01)
        before = LittlewoodPaleyTransformer(n=32).fit_transform(X * 0.01)
        assert feats.shape == before.shape
        assert feats.sum() < before.sum()
        assert len(pipe[0].ledgers_) == 4

    def test_wrong_width(self, batch):
        _, _, X = batch
        with pytest.raises(ConfigurationError):
            LittlewoodPaleyTransformer(n=64).fit(X)
        tr = LittlewoodPaleyTransformer(n=32).fit(X)
        with pytest.raises(ValueError):
            tr.transform(X[:, :100])

    def test_not_fitted(self, batch):
        with pytest.raises(NotFittedError):
            LittlewoodPaleyTransformer(n=32).transform(batch[2])

    def test_rejects_nan(self, batch):
        X = batch[2].copy()
        X[0, 0] = np.nan
        with pytest.raises(ValueError):
            LittlewoodPaleyTransformer(n=32).fit(X)

    def test_clone_keeps_params(self):
        est = QGEvolver(n=32, alpha=0.3, dt=0.02)
        assert clone(est).get_params() == est.get_params()
