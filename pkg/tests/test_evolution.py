import math

import numpy as np
import pytest

from conftest import field_from, random_field
from sqglab import corpus
from sqglab.evolution import (
    PrescribedVelocity,
    SolverConfig,
    critical_index,
    family_for,
    initial_state,
    local_existence_time,
    local_time_functional,
    nonlinear_term,
    required_dt,
    run_iterative_scheme,
    run_qg,
    run_td,
    smallness_report,
    smoothing_estimate_probe,
    step_qg,
    step_td,
    td_initial_state,
    velocity_samples,
)
from sqglab.exceptions import BlowupError, CFLError, ConfigurationError, DomainError
from sqglab.fractional import frac_laplacian_spectral
from sqglab.littlewood_paley import BesovSpec, besov_norm, phi_profile
from sqglab.spectral import Grid, SpectralField, inverse, lp_norm


def _zero(grid):
    return SpectralField(grid, np.zeros(grid.shape))


class TestSolverConfig:
    """Parameter validation."""

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(alpha=1.0, dt=0.1, t_end=1),
            dict(alpha=-0.1, dt=0.1, t_end=1),
            dict(alpha=0.5, dt=0.0, t_end=1),
            dict(alpha=0.5, dt=0.1, t_end=1, cfl=1.5),
            dict(alpha=0.5, dt=0.1, t_end=-1),
            dict(alpha=0.5, dt=0.1, t_end=1, integrator="euler"),
        ],
    )
    def test_rejects(self, kwargs):
        with pytest.raises(ConfigurationError):
            SolverConfig(**kwargs)

    def test_step_count(self):
        assert SolverConfig(0.5, 0.01, 2.0).n_steps == 200
        with pytest.raises(ConfigurationError):
            SolverConfig(0.5, 0.3, 1.0).n_steps


class TestNonlinearTerm:
    """Dealiased advection ``v . grad theta``."""

    def test_shear_profile_is_steady(self, grid32):
        out = nonlinear_term(field_from(grid32, lambda x, y: np.sin(y)))
        assert np.abs(out.coeffs).max() <= 1e-15

    def test_zero(self, grid32):
        assert np.abs(nonlinear_term(_zero(grid32)).coeffs).max() == 0.0

    def test_skew_symmetry(self, grid64, gen):
        for _ in range(5):
            th = random_field(grid64, gen, k_cut=20)
            th = initial_state(th).theta
            n = nonlinear_term(th)
            pairing = abs(np.sum(np.conj(th.coeffs) * n.coeffs))
            assert pairing <= 1e-10 * th.l2_norm() ** 3

    def test_mean_removed(self, grid32, gen):
        assert nonlinear_term(random_field(grid32, gen)).coeffs[0, 0] == 0.0


class TestQG:
    """Dissipative QG integration."""

    def test_shear_solution_decays_exactly(self):
        g = Grid(64)
        cfg = SolverConfig(0.5, 1e-3, 0.5)
        st = run_qg(field_from(g, lambda x, y: np.sin(y)), cfg)
        _, y = g.coordinates
        assert np.abs(inverse(st.theta).values - math.exp(-0.5) * np.sin(y)).max() <= 1e-12

    def test_zero_stays_zero(self, grid32):
        st = run_qg(_zero(grid32), SolverConfig(0.5, 0.1, 1.0))
        assert np.abs(st.theta.coeffs).max() == 0.0
        assert len(st.ledger.times) == 11

    @pytest.mark.parametrize("integrator", ["IF-RK2", "IF-RK4"])
    def test_max_principle(self, grid64, integrator):
        th0 = corpus.smooth_field(grid64, corpus.rng(4))
        th0 = th0 * (1.0 / lp_norm(inverse(th0).values, math.inf, grid64))
        st = run_qg(th0, SolverConfig(0.5, 0.01, 1.0, integrator=integrator))
        sup = st.ledger.lp[math.inf]
        assert max(sup) <= sup[0] * (1 + 1e-6)
        assert np.all(np.diff(sup) <= 1e-6 * sup[0])

    def test_energy_identity(self, grid32):
        alpha = 0.5
        th0 = corpus.smooth_field(grid32, corpus.rng(8))
        th0 = th0 * (0.5 / th0.l2_norm())
        dissipation = []
        cfg = SolverConfig(alpha, 1e-3, 0.2)

        def grab(state, _i):
            dissipation.append(frac_laplacian_spectral(state.theta, alpha / 2).l2_norm() ** 2)

        state0 = initial_state(th0)
        d0 = frac_laplacian_spectral(state0.theta, alpha / 2).l2_norm() ** 2
        st = run_qg(th0, cfg, callback=grab)
        lost = -2 * np.trapezoid([d0] + dissipation, dx=cfg.dt)
        change = st.theta.l2_norm() ** 2 - state0.theta.l2_norm() ** 2
        assert abs(change - lost) <= 1e-4 * abs(lost)

    def test_mean_stays_zero(self, grid32, gen):
        st = run_qg(random_field(grid32, gen) * 0.01, SolverConfig(0.3, 0.01, 0.1))
        assert abs(st.theta.coeffs[0, 0]) <= 1e-14

    def test_ledger_rows_per_step(self, grid32, gen):
        st = run_qg(random_field(grid32, gen) * 0.01, SolverConfig(0.3, 0.05, 0.5))
        assert st.ledger.times == pytest.approx([0.05 * i for i in range(11)])
        assert np.all(np.diff(st.ledger.V()) >= 0)

    def test_cfl_violation(self, grid32, gen):
        th = random_field(grid32, gen) * 50.0
        st = initial_state(th)
        need = required_dt(velocity_samples(st.theta), grid32, 0.4)
        with pytest.raises(CFLError) as err:
            step_qg(st, SolverConfig(0.5, 2 * need, 4 * need))
        assert err.value.required_dt == pytest.approx(need)

    def test_callback_sees_every_step(self, grid32):
        seen = []
        run_qg(_zero(grid32), SolverConfig(0.5, 0.1, 0.5), callback=lambda s, i: seen.append(i))
        assert seen == [1, 2, 3, 4, 5]


class TestTransportDiffusion:
    """Linear transport-diffusion with prescribed velocity and forcing."""

    def test_pure_diffusion_single_mode(self, grid32):
        th0 = field_from(grid32, lambda x, y: np.cos(4 * x))
        st = run_td(th0, SolverConfig(0.5, 0.01, 1.0))
        assert np.allclose(st.theta.coeffs, math.exp(-2.0) * th0.coeffs, atol=1e-14)

    def test_forced_steady_state(self, grid32):
        _, y = grid32.coordinates
        st = run_td(_zero(grid32), SolverConfig(0.5, 0.05, 20.0), f=lambda t: np.sin(y), record=False)
        assert np.abs(inverse(st.theta).values - np.sin(y)).max() <= 1e-6

    def test_divergent_velocity_rejected(self, grid32):
        x, _ = grid32.coordinates
        with pytest.raises(ConfigurationError):
            run_td(_zero(grid32), SolverConfig(0.5, 0.01, 0.01), v_prescribed=lambda t: np.stack([np.sin(x), 0 * x]))

    def test_forcing_needs_mean_zero(self, grid32):
        with pytest.raises(DomainError):
            run_td(_zero(grid32), SolverConfig(0.5, 0.01, 0.01), f=lambda t: np.ones(grid32.shape))

    def test_shear_transport_conserves_l2_without_dissipation(self, grid64):
        x, y = grid64.coordinates
        th0 = field_from(grid64, lambda x, y: np.cos(2 * x) * np.sin(y))
        vel = lambda t: np.stack([0.3 * np.sin(y), 0 * x])  # noqa: E731
        st = run_td(th0, SolverConfig(0.0, 0.01, 0.5), v_prescribed=vel)
        # alpha = 0 damps every nonzero mode by exactly e^{-t}
        assert st.theta.l2_norm() == pytest.approx(math.exp(-0.5) * th0.l2_norm(), rel=1e-8)

    def test_forcing_norm_recorded(self, grid32):
        _, y = grid32.coordinates
        spec = BesovSpec(0.0, 2, 1)
        st = run_td(_zero(grid32), SolverConfig(0.5, 0.1, 0.3), f=lambda t: np.sin(y), forcing_spec=spec)
        assert len(st.ledger.forcing_norm) == 4
        assert st.ledger.forcing_norm[0] == pytest.approx(math.pi * math.sqrt(2), rel=1e-12)

    def test_blowup_keeps_last_state(self, grid32):
        cfg = SolverConfig(0.5, 0.1, 1.0)
        state = td_initial_state(_zero(grid32), cfg)
        with pytest.raises(BlowupError) as err:
            step_td(state, cfg, f=lambda t: np.full(grid32.shape, np.nan))
        assert err.value.state is state

    def test_runaway_growth_is_blowup(self, grid32):
        _, y = grid32.coordinates
        cfg = SolverConfig(0.5, 0.1, 1.0)
        state = td_initial_state(field_from(grid32, lambda x, y: 1e-3 * np.sin(y)), cfg)
        with pytest.raises(BlowupError):
            step_td(state, cfg, f=lambda t: 1e6 * np.sin(y))


class TestIterativeScheme:
    """Successive linearisation of the QG equation."""

    def test_zero_data(self, grid32):
        res = run_iterative_scheme(_zero(grid32), SolverConfig(0.5, 0.05, 0.5), 3, 0.5)
        assert res.diffs == [0.0, 0.0, 0.0]
        assert not res.aborted

    def test_first_iterate_is_a_linear_solve(self, grid32, gen):
        th0 = initial_state(random_field(grid32, gen) * 0.01).theta
        cfg = SolverConfig(0.5, 0.05, 0.5)
        res = run_iterative_scheme(th0, cfg, 1, 0.5)
        fam = family_for(grid32)
        data = SpectralField(grid32, fam.low_pass(0, homogeneous=True) * th0.coeffs)
        direct = run_td(data, cfg, record=False)
        assert np.abs(res.iterates[1][-1] - direct.theta.coeffs).max() <= 1e-12

    def test_requires_mean_zero(self, grid32):
        with pytest.raises(DomainError):
            run_iterative_scheme(field_from(grid32, lambda x, y: 1 + np.sin(y)), SolverConfig(0.5, 0.1, 1), 2, 1.0)

    def test_small_data_contracts(self, grid32):
        fam = family_for(grid32)
        th0 = corpus.small_data_corpus(grid32, fam, 0.5, seed=11, count=1, lo=0.01, hi=0.01)[0]
        res = run_iterative_scheme(th0, SolverConfig(0.5, 0.02, 0.5), 6, 0.5)
        ratios = [r for r, d in zip(res.ratios()[1:], res.diffs[2:]) if d > 1e-12]
        assert ratios and max(ratios) <= 0.8

    def test_sample_times(self, grid32):
        res = run_iterative_scheme(_zero(grid32), SolverConfig(0.5, 0.1, 1.0), 1, 2.5, sample_every=10)
        assert res.sample_times == pytest.approx([0.0, 1.0, 2.0, 2.5])


class TestDiagnostics:
    """Smallness, local-time and smoothing diagnostics."""

    def test_critical_index(self):
        assert critical_index(2.0, 0.5) == 1.5
        assert critical_index(math.inf, 0.5) == 0.5

    def test_smallness_zero(self, grid32):
        rep = smallness_report(_zero(grid32), 0.5)
        assert rep["b_inf_1_1_minus_alpha"] == 0.0
        assert all(v["norm"] == 0.0 for v in rep["critical"].values())
        assert set(rep["critical"]) == {"1.0", "2.0", "inf"}

    def test_smallness_is_homogeneous(self, grid32, gen):
        th = random_field(grid32, gen)
        a, b = smallness_report(th, 0.4), smallness_report(th * 3.0, 0.4)
        assert b["b_inf_1_1_minus_alpha"] == pytest.approx(3 * a["b_inf_1_1_minus_alpha"], rel=1e-12)
        for key in a["critical"]:
            assert b["critical"][key]["norm"] == pytest.approx(3 * a["critical"][key]["norm"], rel=1e-12)

    def test_local_time_functional(self, grid32, gen):
        th = random_field(grid32, gen)
        sat = besov_norm(th, BesovSpec(0.5, math.inf, 1), family_for(grid32))
        assert local_time_functional(th, 0.5, 1.0, 0.0) == 0.0
        vals = [local_time_functional(th, 0.5, 1.0, t) for t in (0.01, 0.1, 1.0, 10.0, 1e4)]
        assert vals == sorted(vals)
        assert vals[-1] == pytest.approx(sat, rel=1e-9)

    def test_local_time_functional_rejects_bad_rate(self, grid32, gen):
        with pytest.raises(DomainError):
            local_time_functional(random_field(grid32, gen), 0.5, 0.0, 1.0)

    def test_local_existence_time(self, grid32, gen):
        th = random_field(grid32, gen)
        sat = besov_norm(th, BesovSpec(0.5, math.inf, 1), family_for(grid32))
        assert local_existence_time(th, 0.5, 1.0, 2 * sat) == math.inf
        T = local_existence_time(th, 0.5, 1.0, 0.3 * sat)
        assert 0 < T < math.inf
        assert local_time_functional(th, 0.5, 1.0, T) == pytest.approx(0.3 * sat, rel=1e-9)

    def test_smoothing_probe_single_mode(self, grid32):
        alpha, dt, T = 0.5, 0.01, 1.0
        th0 = field_from(grid32, lambda x, y: np.cos(4 * x))
        ledger = run_td(th0, SolverConfig(alpha, dt, T)).ledger
        lam = 4.0**alpha
        fam = family_for(grid32)
        weights = {q: phi_profile(4.0 / 2**q) for q in fam.blocks()}
        amp = 2 * math.pi / math.sqrt(2)  # L^2 norm of cos(4x)
        for s in (-0.5, 0.0, 0.5):
            out = smoothing_estimate_probe(ledger, alpha, s, 2.0, 1.0)
            expected = sum(2 ** (q * (s + alpha)) * w for q, w in weights.items()) * amp * (1 - math.exp(-lam * T)) / lam
            assert out["lhs"] == pytest.approx(expected, rel=1e-4)
            assert out["V"] == 0.0
            sup = smoothing_estimate_probe(ledger, alpha, s, 2.0, math.inf)
            assert sup["ratio"] == pytest.approx(1.0, rel=1e-12)

    def test_smoothing_probe_zero(self, grid32):
        ledger = run_td(_zero(grid32), SolverConfig(0.5, 0.1, 1.0)).ledger
        out = smoothing_estimate_probe(ledger, 0.5, 0.0, 2.0, 1.0)
        assert out["lhs"] == 0.0 and out["ratio"] == 0.0

    def test_smoothing_probe_rejects_s(self, grid32):
        ledger = run_td(_zero(grid32), SolverConfig(0.5, 0.1, 0.1)).ledger
        with pytest.raises(DomainError):
            smoothing_estimate_probe(ledger, 0.5, 1.0, 2.0, 1.0)


def test_prescribed_velocity_shape_check(grid32):
    vel = PrescribedVelocity(lambda t: np.zeros((3,) + grid32.shape), grid32)
    with pytest.raises(ConfigurationError):
        vel(0.0)
