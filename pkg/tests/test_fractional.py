import math

import numpy as np
import pytest

from conftest import P_VALUES, field_from, random_field
from sqglab import corpus
from sqglab.evolution import family_for
from sqglab.exceptions import DomainError, UnsupportedMapError
from sqglab.fractional import (
    AuxiliaryKernelGrid,
    MeasurePreservingMap,
    analytic_c_alpha,
    calibrate_c_alpha,
    commutator_frac_composition,
    compose_with_map,
    fit_log_linear,
    frac_laplacian_singular_integral,
    frac_laplacian_spectral,
    jacobian_determinant,
    semigroup_kernel_l1,
    semigroup_spectral,
    vishik_block_transfer,
    vishik_bound,
)
from sqglab.littlewood_paley import BesovSpec, besov_norm
from sqglab.spectral import PhysicalField, forward, inverse, lp_norm


class TestSpectralLaplacian:
    """Multiplier form of ``|D|^alpha``."""

    @pytest.mark.parametrize("alpha", [0.2, 0.5, 1.0, 1.9])
    def test_unit_mode_fixed(self, grid32, alpha):
        u = field_from(grid32, lambda x, y: np.sin(y))
        assert np.allclose(frac_laplacian_spectral(u, alpha).coeffs, u.coeffs, atol=1e-14)

    def test_symbol_at_two(self, grid32):
        u = field_from(grid32, lambda x, y: np.sin(2 * x))
        x, _ = grid32.coordinates
        assert np.allclose(inverse(frac_laplacian_spectral(u, 1.0)).values, 2 * np.sin(2 * x), atol=1e-13)

    def test_zero_order_is_identity(self, grid64, gen):
        u = random_field(grid64, gen)
        assert np.allclose(frac_laplacian_spectral(u, 0.0).coeffs, u.coeffs, atol=1e-15)


class TestSingularIntegral:
    """Lattice quadrature of the singular-integral form."""

    def test_constant_maps_to_zero(self, grid32):
        u = PhysicalField(grid32, np.full(grid32.shape, 4.0))
        out = frac_laplacian_singular_integral(u, 0.5, 2.3).values
        assert np.abs(out).max() <= 1e-9

    @pytest.mark.parametrize("alpha", [0.0, 1.0, 1.5])
    def test_rejects_alpha_outside_unit_interval(self, grid32, alpha):
        with pytest.raises(DomainError):
            frac_laplacian_singular_integral(PhysicalField(grid32, np.zeros(grid32.shape)), alpha)

    def test_linearity(self, grid32, gen):
        u = inverse(random_field(grid32, gen))
        v = inverse(random_field(grid32, gen))
        both = frac_laplacian_singular_integral(PhysicalField(grid32, 2 * u.values - 0.5 * v.values), 0.4).values
        split = 2 * frac_laplacian_singular_integral(u, 0.4).values - 0.5 * frac_laplacian_singular_integral(v, 0.4).values
        assert np.abs(both - split).max() <= 1e-12 * np.abs(split).max()

    def test_calibration_on_held_out_field(self, grid128):
        gen = corpus.rng(2024)
        train = [inverse(corpus.band_field(grid128, gen, 8, 24)) for _ in range(10)]
        c = calibrate_c_alpha(train, 0.5)
        held = inverse(corpus.band_field(grid128, gen, 8, 24))
        target = inverse(frac_laplacian_spectral(forward(held), 0.5)).values
        approx = frac_laplacian_singular_integral(held, 0.5, c).values
        gap = np.linalg.norm(approx - target) / np.linalg.norm(target)
        assert gap <= 0.05
        assert c > 0

    def test_analytic_constant_is_positive_and_increasing(self):
        vals = [analytic_c_alpha(a) for a in (0.3, 0.5, 0.7)]
        assert all(v > 0 for v in vals)
        assert vals == sorted(vals)


class TestSemigroup:
    """Dissipative semigroup ``exp(-t |D|^alpha)``."""

    def test_zero_time_identity(self, grid64, gen):
        u = random_field(grid64, gen)
        assert np.array_equal(semigroup_spectral(u, 0.7, 0.0).coeffs, u.coeffs)

    @pytest.mark.parametrize("p", P_VALUES)
    def test_single_mode_decay(self, grid32, p):
        u = field_from(grid32, lambda x, y: np.cos(4 * x))
        w = semigroup_spectral(u, 0.5, 0.8)
        before = lp_norm(inverse(u).values, p, grid32)
        after = lp_norm(inverse(w).values, p, grid32)
        assert after / before == pytest.approx(math.exp(-0.8 * 2.0), rel=1e-12)

    def test_ring_data_decay_rate_positive(self, grid128):
        fam = family_for(grid128)
        gen = corpus.rng(5)
        ts = np.linspace(0.0, 2.0, 11)
        for q in (1, 2, 3):
            u = corpus.block_field(grid128, gen, fam, q)
            base = lp_norm(inverse(u).values, math.inf, grid128)
            ratios = [lp_norm(inverse(semigroup_spectral(u, 0.5, t)).values, math.inf, grid128) / base for t in ts]
            C, c = fit_log_linear(ts * 2.0 ** (0.5 * q), ratios)
            assert c > 0 and C > 0

    def test_rejects_negative_time(self, grid32):
        with pytest.raises(DomainError):
            semigroup_spectral(field_from(grid32, lambda x, y: np.sin(y)), 0.5, -1.0)

    def test_rejects_order_above_two(self, grid32):
        with pytest.raises(DomainError):
            semigroup_spectral(field_from(grid32, lambda x, y: np.sin(y)), 2.5, 1.0)

    def test_fit_log_linear_recovers_exponential(self):
        t = np.linspace(0, 3, 20)
        C, rate = fit_log_linear(t, 1.7 * np.exp(-0.9 * t))
        assert C == pytest.approx(1.7) and rate == pytest.approx(0.9)


class TestKernel:
    """``L^1`` norm of the ring-localised heat kernel."""

    aux = AuxiliaryKernelGrid(n=256, length=64.0)

    def test_zero_time_independent_of_q(self):
        a = semigroup_kernel_l1(0.5, 0.0, 1, self.aux)
        b = semigroup_kernel_l1(0.5, 0.0, 3, self.aux)
        assert a == pytest.approx(b, rel=1e-12)
        assert a >= 1.0  # the symbol equals 1 somewhere, so the L^1 norm is at least 1

    def test_monotone_in_time(self):
        vals = [semigroup_kernel_l1(0.5, t, 2, self.aux) for t in np.linspace(0, 2, 9)]
        assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))
        assert vals[-1] < vals[0]


class TestMaps:
    """Measure-preserving maps and composition."""

    def test_identity(self, grid32, gen):
        u = inverse(random_field(grid32, gen))
        assert np.array_equal(compose_with_map(u, MeasurePreservingMap.identity()).values, u.values)

    def test_lattice_translation_is_a_roll(self, grid32, gen):
        u = inverse(random_field(grid32, gen))
        h = grid32.spacing
        out = compose_with_map(u, MeasurePreservingMap.translation((3 * h, -2 * h))).values
        assert np.array_equal(out, np.roll(u.values, (-3, 2), axis=(0, 1)))

    def test_off_lattice_translation(self, grid32):
        u = inverse(field_from(grid32, lambda x, y: np.sin(x + 2 * y)))
        x, y = grid32.coordinates
        out = compose_with_map(u, MeasurePreservingMap.translation((0.3, 0.1))).values
        assert np.allclose(out, np.sin(x + 0.3 + 2 * (y + 0.1)), atol=1e-12)

    def test_quarter_rotation(self, grid32):
        u = inverse(field_from(grid32, lambda x, y: np.sin(x) + 0.5 * np.cos(2 * y)))
        x, y = grid32.coordinates
        out = compose_with_map(u, MeasurePreservingMap.rotation(math.pi / 2)).values
        # u(R x) with R(x, y) = (-y, x)
        assert np.allclose(out, np.sin(-y) + 0.5 * np.cos(2 * x), atol=1e-12)

    def test_full_turn_is_identity(self):
        assert MeasurePreservingMap.rotation(2 * math.pi).quarter_turns == 0

    @pytest.mark.parametrize("angle", [0.3, math.pi / 3])
    def test_rejects_off_lattice_rotation(self, angle):
        with pytest.raises(UnsupportedMapError):
            MeasurePreservingMap.rotation(angle)

    def test_shear_preserves_l2(self, grid128, gen):
        u = inverse(random_field(grid128, gen, k_cut=8))
        psi = MeasurePreservingMap.sine_shear(0, 0.3)
        out = compose_with_map(u, psi)
        gap = abs(lp_norm(out.values, 2, grid128) / lp_norm(u.values, 2, grid128) - 1)
        assert gap <= 1e-3

    def test_shear_matches_pointwise(self, grid64):
        u = inverse(field_from(grid64, lambda x, y: np.cos(x) * np.sin(y)))
        x, y = grid64.coordinates
        out = compose_with_map(u, MeasurePreservingMap.sine_shear(0, 0.3)).values
        assert np.allclose(out, np.cos(x + 0.3 * np.sin(y)) * np.sin(y), atol=1e-12)

    @pytest.mark.parametrize("axis", [0, 1])
    def test_shear_jacobian_is_one(self, grid64, axis):
        psi = MeasurePreservingMap.sine_shear(axis, 0.3)
        assert np.abs(jacobian_determinant(psi, grid64) - 1).max() <= 1e-10

    def test_composed_jacobian_is_one(self, grid64):
        psi = MeasurePreservingMap.composed(
            [MeasurePreservingMap.sine_shear(0, 0.3), MeasurePreservingMap.sine_shear(1, 0.2, 2)]
        )
        # central differences of a composition carry O(h^2) truncation error
        assert np.abs(jacobian_determinant(psi, grid64) - 1).max() <= 1e-9

    def test_lipschitz_constants(self):
        psi = MeasurePreservingMap.sine_shear(0, 0.4)
        assert psi.lip_forward >= 1 and psi.lip_inverse >= 1
        assert psi.lip_forward == pytest.approx((0.4 + math.sqrt(0.16 + 4)) / 2)
        assert MeasurePreservingMap.identity().lip_forward == 1.0
        assert not psi.is_isometry()
        assert MeasurePreservingMap.rotation(math.pi).is_isometry()

    def test_profile_slope_estimate(self):
        psi = MeasurePreservingMap.shear(0, lambda y: 0.25 * np.sin(2 * y))
        assert psi.max_slope == pytest.approx(0.5, rel=1e-5)


class TestCommutator:
    """``|D|^alpha`` against composition with a measure-preserving map."""

    @pytest.mark.parametrize(
        "psi",
        [
            MeasurePreservingMap.identity(),
            MeasurePreservingMap.translation((2 * math.pi / 64 * 5, 0.0)),
            MeasurePreservingMap.rotation(math.pi / 2),
            MeasurePreservingMap.rotation(math.pi),
        ],
        ids=lambda p: p.label,
    )
    def test_isometries_commute(self, grid64, gen, psi):
        fam = family_for(grid64)
        u = inverse(random_field(grid64, gen))
        scale = besov_norm(forward(u), BesovSpec(0.5, 2, 1), fam)
        lhs, bound = commutator_frac_composition(u, psi, 0.5, 2.0, fam)
        assert lhs <= 1e-9 * scale
        assert bound == 0.0

    def test_shear_ratio_bounded(self, grid64):
        fam = family_for(grid64)
        gen = corpus.rng(17)
        u = inverse(corpus.smooth_field(grid64, gen, k_cut=6))
        ratios = []
        for a in (0.05, 0.1, 0.2, 0.4):
            lhs, bound = commutator_frac_composition(u, MeasurePreservingMap.sine_shear(0, a), 0.5, 2.0, fam)
            assert lhs > 0
            ratios.append(lhs / bound)
        assert max(ratios) < 1.0

    def test_rejects_alpha_one(self, grid32):
        u = inverse(field_from(grid32, lambda x, y: np.sin(y)))
        with pytest.raises(DomainError):
            commutator_frac_composition(u, MeasurePreservingMap.identity(), 1.0, 2.0, family_for(grid32))


class TestVishik:
    """Block transfer under composition."""

    def test_identity_disjoint_rings_vanish(self, grid64, gen):
        fam = family_for(grid64)
        u = random_field(grid64, gen)
        psi = MeasurePreservingMap.identity()
        for q in range(1, 4):
            for j in (q - 3, q - 2, q + 2, q + 3):
                assert vishik_block_transfer(u, psi, j, q, 2.0, fam) == 0.0

    def test_identity_same_block_bounded(self, grid64, gen):
        fam = family_for(grid64)
        u = random_field(grid64, gen)
        for q in range(0, 4):
            same = vishik_block_transfer(u, MeasurePreservingMap.identity(), q, q, 2.0, fam)
            assert same <= vishik_bound(u, MeasurePreservingMap.identity(), q, q, 2.0, fam) * (1 + 1e-12)

    def test_shear_decays_away_from_diagonal(self, grid128):
        fam = family_for(grid128)
        u = corpus.block_field(grid128, corpus.rng(3), fam, 3)
        psi = MeasurePreservingMap.sine_shear(0, 0.3)
        vals = [vishik_block_transfer(u, psi, 3 + k, 3, 2.0, fam) for k in range(0, 3)]
        assert vals[0] > vals[1] > vals[2]
        for k in range(0, 3):
            assert vals[k] <= 1.9 * vishik_bound(u, psi, 3 + k, 3, 2.0, fam)
