"""``sqglab`` command line: simulate, verify, diagnose.

Exit codes: 0 success, 1 configuration or input error, 2 blowup abort (or a
failed verification suite).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import corpus
from .evolution import (
    SolverConfig,
    family_for,
    initial_state,
    required_dt,
    smallness_report,
    step_qg,
    velocity_samples,
)
from .exceptions import BlowupError, CFLError, ConfigurationError, SnapshotError, SQGLabError
from .experiments import DEFAULT_SEED, SUITES, ExperimentPlan, to_jsonable, write_outputs
from .littlewood_paley import BesovSpec, besov_norm
from .snapshots import atomic_write_text, read_snapshot, write_snapshot
from .spectral import Grid, PhysicalField, forward, inverse, lp_norm, set_threads, to_physical

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP = 0, 1, 2
OUT_ENV = "SQGLAB_OUT_DIR"

CONFIG_KEYS = {"n", "length", "alpha", "dt", "t_end", "cfl", "integrator", "dealias", "initial", "outputs"}


def _out_dir(arg: str | None) -> Path:
    return Path(arg or os.environ.get(OUT_ENV) or "sqglab_out")


def _parse_p(p) -> float:
    if isinstance(p, str) and p.lower() in ("inf", "infinity"):
        return math.inf
    return float(p)


def _spec_from_json(d: dict) -> BesovSpec:
    try:
        return BesovSpec(float(d["s"]), _parse_p(d.get("p", 2)), _parse_p(d.get("m", 1)), bool(d.get("hom", True)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad Besov spec {d!r}: {exc}") from exc


def load_run_config(path) -> dict:
    """Parse and validate a run configuration file."""
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigurationError("config must be a JSON object")
    unknown = set(cfg) - CONFIG_KEYS
    if unknown:
        raise ConfigurationError(f"unknown config keys {sorted(unknown)}")
    for key in ("n", "alpha", "dt", "t_end", "initial"):
        if key not in cfg:
            raise ConfigurationError(f"config is missing {key!r}")
    cfg["_base"] = str(path.parent)
    return cfg


def _solver_config(cfg: dict) -> SolverConfig:
    try:
        return SolverConfig(
            alpha=float(cfg["alpha"]),
            dt=float(cfg["dt"]),
            t_end=float(cfg["t_end"]),
            cfl=float(cfg.get("cfl", 0.4)),
            dealias=bool(cfg.get("dealias", True)),
            integrator=str(cfg.get("integrator", "IF-RK4")),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(str(exc)) from exc


def build_initial(cfg: dict, grid: Grid, alpha: float, seed: int | None):
    """Initial field from the ``initial`` block of a run config."""
    init = cfg["initial"]
    if not isinstance(init, dict) or "kind" not in init:
        raise ConfigurationError("initial must be an object with a kind")
    kind = init["kind"]
    params = init.get("params", {})
    if kind == "modes":
        x = grid.coordinates
        vals = np.zeros(grid.shape)
        modes = params.get("modes", [])
        if not modes:
            raise ConfigurationError("modes initial data needs at least one mode")
        for m in modes:
            k = np.asarray(m["k"], dtype=np.float64) * grid.k0
            if k.shape != (grid.d,):
                raise ConfigurationError(f"mode wavevector {m['k']} has the wrong dimension")
            vals += float(m.get("amp", 1.0)) * np.cos(np.tensordot(k, x, axes=1) + float(m.get("phase", 0.0)))
        return forward(PhysicalField(grid, vals))
    if kind == "random_seeded":
        s = params.get("seed", seed if seed is not None else DEFAULT_SEED)
        gen = corpus.rng(int(s))
        u = corpus.smooth_field(grid, gen, float(params.get("width", 1.5)), float(params.get("k_cut", 4.0)))
        if "norm" in params:
            spec = BesovSpec(1.0 - alpha, math.inf, 1.0)
            u = corpus.normalize(u, spec, family_for(grid), float(params["norm"]))
        elif "amplitude" in params:
            u = u * (float(params["amplitude"]) / np.abs(to_physical(u.coeffs, grid)).max())
        return u
    if kind == "file":
        path = Path(cfg["_base"]) / params.get("path", "")
        try:
            field, meta = read_snapshot(path)
        except SnapshotError as exc:
            raise ConfigurationError(str(exc)) from exc
        if field.grid != grid:
            raise ConfigurationError(f"snapshot grid {meta} does not match the config grid")
        return forward(field)
    raise ConfigurationError(f"unknown initial kind {kind!r}")


def _norm_records(theta, specs, fam) -> list:
    out = []
    for spec in specs:
        u = theta.without_mean() if spec.homogeneous else theta
        out.append({"spec": spec.to_dict(), "value": besov_norm(u, spec, fam)})
    return out


def cmd_simulate(args) -> int:
    cfg = load_run_config(args.config)
    scfg = _solver_config(cfg)
    grid = Grid(int(cfg["n"]), float(cfg.get("length", 2 * math.pi)))
    outputs = cfg.get("outputs", {})
    specs = [_spec_from_json(d) for d in outputs.get("besov_specs", [])]
    every = int(outputs.get("snapshot_every", 0))
    ledger_name = outputs.get("ledger_csv", "ledger.csv")
    n_steps = scfg.n_steps
    theta0 = build_initial(cfg, grid, scfg.alpha, args.seed)
    fam = family_for(grid)
    out = _out_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)

    state = initial_state(theta0, scfg.dealias)
    start = state.theta
    need = required_dt(velocity_samples(start), grid, scfg.cfl)
    if scfg.dt > need * (1 + 1e-12):
        raise CFLError(scfg.dt, need)

    snap_dir = out / "snapshots"

    def snapshot(st, step):
        write_snapshot(snap_dir / f"theta_{step:06d}.bin", inverse(st.theta), st.t, "theta")

    if every:
        snapshot(state, 0)
    status, message, step = "completed", "", 0
    try:
        for step in range(1, n_steps + 1):
            state = step_qg(state, scfg)
            if every and step % every == 0:
                snapshot(state, step)
    except (BlowupError, CFLError) as exc:
        status, message = "blowup", str(exc)
        step -= 1
        if isinstance(exc, BlowupError) and exc.state is not None:
            state = exc.state
        snapshot(state, step)

    atomic_write_text(out / ledger_name, state.ledger.to_csv())
    summary = {
        "status": status,
        "message": message,
        "steps": step,
        "t": state.t,
        "grid": grid.to_dict(),
        "solver": {"alpha": scfg.alpha, "dt": scfg.dt, "t_end": scfg.t_end, "cfl": scfg.cfl,
                   "dealias": scfg.dealias, "integrator": scfg.integrator},
        "ledger_rows": len(state.ledger),
        "V": float(state.ledger.V()[-1]),
        "initial_smallness": smallness_report(start, scfg.alpha),
        "final_norms": _norm_records(state.theta, specs, fam),
    }
    atomic_write_text(out / "summary.json", json.dumps(to_jsonable(summary), indent=2, sort_keys=True) + "\n")
    if status != "completed":
        print(f"sqglab: blowup abort: {message}; partial outputs in {out}", file=sys.stderr)
        return EXIT_BLOWUP
    print(f"sqglab: completed {step} steps; outputs in {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    plan_arg = args.plan
    if plan_arg in SUITES:
        plan = ExperimentPlan(plan_arg)
    else:
        path = Path(plan_arg)
        if not path.exists():
            raise ConfigurationError(f"unknown plan {plan_arg!r}; choose from {sorted(SUITES)} or give a plan file")
        try:
            plan = ExperimentPlan.from_dict(json.loads(path.read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"plan {path} is not valid JSON: {exc}") from exc
    if args.seed is not None:
        plan = ExperimentPlan(plan.name, plan.params, args.seed, plan.out_dir)
    out = _out_dir(args.out or plan.out_dir)
    result = plan.run()
    write_outputs(result, out)
    for a in result.assertions:
        print(f"{'PASS' if a['passed'] else 'FAIL'}  {result.name}: {a['name']}")
    print(f"sqglab: {result.name} {'passed' if result.passed else 'failed'}; report in {out}")
    return EXIT_OK if result.passed else EXIT_BLOWUP


def cmd_diagnose(args) -> int:
    try:
        field, meta = read_snapshot(args.snapshot)
    except SnapshotError as exc:
        raise ConfigurationError(str(exc)) from exc
    grid = field.grid
    u = forward(field)
    fam = family_for(grid)
    report = {"snapshot": str(args.snapshot), "grid": grid.to_dict(), "time": meta.get("time"),
              "mean": float(np.real(u.mean)), "norms": []}
    lps = [_parse_p(p) for p in (args.lp or [])]
    specs = [_parse_spec_arg(s) for s in (args.besov or [])]
    if not lps and not specs:
        lps = [1.0, 2.0, math.inf]
    for p in lps:
        report["norms"].append({"spec": {"lp": "inf" if math.isinf(p) else p}, "value": lp_norm(field.values, p, grid),
                                "mode": "lebesgue"})
    for spec in specs:
        v = u.without_mean() if spec.homogeneous else u
        report["norms"].append({"spec": spec.to_dict(), "value": besov_norm(v, spec, fam),
                                "mode": "homogeneous" if spec.homogeneous else "inhomogeneous"})
    print(json.dumps(to_jsonable(report), indent=2, sort_keys=True))
    return EXIT_OK


def _parse_spec_arg(text: str) -> BesovSpec:
    """``s:p:m`` with an optional ``:inhom`` suffix."""
    parts = text.split(":")
    if len(parts) not in (3, 4) or (len(parts) == 4 and parts[3] not in ("hom", "inhom")):
        raise ConfigurationError(f"Besov spec {text!r} must read s:p:m[:hom|inhom]")
    try:
        return BesovSpec(float(parts[0]), _parse_p(parts[1]), _parse_p(parts[2]), len(parts) == 3 or parts[3] == "hom")
    except ValueError as exc:
        raise ConfigurationError(f"bad Besov spec {text!r}: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sqglab", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./sqglab_out)")
    common.add_argument("--seed", type=int, help="RNG seed override")
    common.add_argument("--threads", type=int, default=1, help="FFT worker threads")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", parents=[common], help="run the QG solver from a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("verify", parents=[common], help="run a named verification suite")
    p.add_argument("--plan", required=True, help=f"one of {', '.join(SUITES)} or a plan JSON file")
    p.set_defaults(func=cmd_verify)
    p = sub.add_parser("diagnose", parents=[common], help="print norms of a snapshot as JSON")
    p.add_argument("snapshot")
    p.add_argument("--lp", action="append", help="Lebesgue exponent (repeatable)")
    p.add_argument("--besov", action="append", help="Besov spec s:p:m[:hom|inhom] (repeatable)")
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigurationError("--threads must be at least 1")
        set_threads(args.threads)
        return args.func(args)
    except (SQGLabError, ValueError, KeyError, TypeError) as exc:
        print(f"sqglab: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
