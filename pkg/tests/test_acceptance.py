"""Acceptance criteria, one test per criterion.

Each test prints a ``criterion N [PASS|FAIL]`` line (collected again in the
terminal summary) before asserting, so a failing criterion still reports its
measured values.  Suites run with their default parameters and seed.
"""

import math
import time

import numpy as np
import pytest

from conftest import field_from, record_acceptance
from sqglab.evolution import SolverConfig, run_qg
from sqglab.experiments import DEFAULT_SEED, ExperimentPlan, write_outputs
from sqglab.littlewood_paley import build_family
from sqglab.spectral import Grid, inverse

_CACHE: dict = {}


def _run(name):
    """Run a suite once per session; returns ``(result, seconds)``."""
    if name not in _CACHE:
        t0 = time.perf_counter()
        res = ExperimentPlan(name, seed=DEFAULT_SEED).run()
        _CACHE[name] = (res, time.perf_counter() - t0)
    return _CACHE[name]


def _select(res, prefixes):
    return [a for a in res.assertions if a["name"].startswith(tuple(prefixes))]


def _verdict(number, title, checks, seconds, limit, extra=""):
    passed = bool(checks) and all(a["passed"] for a in checks) and seconds < limit
    failed = [a["name"] for a in checks if not a["passed"]]
    detail = f"{len(checks)} checks, {seconds:.1f}s (limit {limit:g}s)"
    if extra:
        detail += f", {extra}"
    if failed:
        detail += f", failed: {failed}"
    record_acceptance(number, title, passed, detail)
    return passed


def _worst(checks):
    return max(a["value"] for a in checks)


class TestAcceptance:
    """The eleven acceptance criteria."""

    def test_01_partition_of_unity(self):
        t0 = time.perf_counter()
        residuals = []
        for n in (32, 64, 128):
            fam = build_family(Grid(n))
            residuals += [fam.partition_residual(False), fam.partition_residual(True)]
        seconds = time.perf_counter() - t0
        checks = [{"name": f"residual {i}", "passed": r <= 1e-12, "value": r} for i, r in enumerate(residuals)]
        assert _verdict(1, "partition of unity", checks, seconds, 1.0, f"max residual {max(residuals):.2e}")

    def test_02_dyadic_reconstruction(self):
        res, seconds = _run("partition")
        checks = _select(res, ["reconstruction"])
        assert _verdict(2, "dyadic reconstruction", checks, seconds, 10.0, f"max rel error {_worst(checks):.2e}")

    def test_03_singular_integral_equivalence(self):
        res, seconds = _run("e1calibration")
        checks = _select(res, ["held-out discrepancy"])
        assert len(checks) == 3
        assert _verdict(3, "singular-integral equivalence", checks, seconds, 120.0, f"max discrepancy {_worst(checks):.4f}")

    def test_04_semigroup_decay(self):
        res, seconds = _run("semigroup")
        checks = _select(res, ["fitted rate constant positive", "per-block decay within tolerance"])
        assert len(checks) == 4
        worst = max(a["value"] for a in checks if a["name"].startswith("per-block"))
        assert _verdict(4, "semigroup ring decay", checks, seconds, 60.0, f"max deviation {worst:.3f}")

    def test_05_maximum_principle(self):
        res, seconds = _run("maxprinciple")
        checks = _select(res, ["no maximum-principle violations"])
        runs = res.constants["runs"]
        assert _verdict(5, "maximum principle", checks, seconds, 300.0, f"{runs} runs, {checks[0]['value']} violations")

    def test_06_exact_shear_solution(self):
        grid = Grid(32)
        t0 = time.perf_counter()
        st = run_qg(field_from(grid, lambda x, y: np.sin(y)), SolverConfig(0.5, 1e-3, 1.0, integrator="IF-RK4"))
        seconds = time.perf_counter() - t0
        _, y = grid.coordinates
        err = float(np.abs(inverse(st.theta).values - math.exp(-1.0) * np.sin(y)).max())
        checks = [{"name": "max error at t=1", "passed": err <= 1e-8, "value": err}]
        assert _verdict(6, "exact sin(y) solution", checks, seconds, 30.0, f"max error {err:.2e}")

    def test_07_commutators(self):
        com, s1 = _run("commutator")
        vis, s2 = _run("vishik")
        checks = _select(com, ["commutator vanishes", "shear ratios"]) + _select(vis, ["geometric decay", "ratio to bound"])
        rate = next(a["value"] for a in checks if a["name"].startswith("geometric"))
        assert _verdict(7, "commutator suite", checks, s1 + s2, 300.0, f"min decay rate {rate:.3f}")

    @pytest.mark.slow
    def test_08_small_data_corpus(self):
        res, seconds = _run("smalldata")
        checks = _select(res, ["no blowup aborts", "V converges", "critical-norm amplification"])
        amp = next(a["value"] for a in checks if a["name"].startswith("critical"))
        assert _verdict(8, "small-data global runs", checks, seconds, 1800.0, f"max amplification {amp:.3f}")

    @pytest.mark.slow
    def test_09_iterative_scheme(self):
        res, seconds = _run("scheme")
        checks = _select(res, ["no aborted iterates", "diff ratios contract"])
        assert _verdict(9, "iterative scheme contraction", checks, seconds, 1800.0,
                        f"max ratio {res.constants['max_ratio_n_ge_2']:.3f}")

    def test_10_scaling(self):
        res, seconds = _run("scaling")
        checks = _select(res, ["scaling ratio within envelope"])
        assert len(checks) == 2
        assert _verdict(10, "critical scaling", checks, seconds, 60.0)

    def test_11_determinism(self, tmp_path):
        t0 = time.perf_counter()
        identical = []
        for name in ("partition", "bernstein"):
            first, _ = _run(name)
            again = ExperimentPlan(name, seed=DEFAULT_SEED).run()
            write_outputs(first, tmp_path / "a")
            write_outputs(again, tmp_path / "b")
            for fname in first.tables:
                same = (tmp_path / "a" / fname).read_bytes() == (tmp_path / "b" / fname).read_bytes()
                identical.append({"name": fname, "passed": same, "value": same})
        seconds = time.perf_counter() - t0
        assert _verdict(11, "determinism", identical, seconds, 60.0, f"{len(identical)} CSV files compared")
