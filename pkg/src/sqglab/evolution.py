"""Time integration of the dissipative QG and transport-diffusion equations.

Both equations are advanced with integrating-factor Runge-Kutta schemes: the
dissipation ``|D|^alpha`` is integrated exactly through ``exp(-dt |k|^alpha)``
and only the advection (and forcing) is explicit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .exceptions import BlowupError, CFLError, ConfigurationError, DomainError
from .littlewood_paley import (
    P_VALUES,
    BesovSpec,
    DyadicFamily,
    TimeSeriesLedger,
    besov_from_block_norms,
    besov_norm,
    block_norms,
    build_family,
    mixed_time_norm,
)
from .spectral import (
    Grid,
    SpectralField,
    derivative_multiplier,
    lp_norm_batch,
    riesz_multiplier,
    to_physical,
    to_spectral,
)

INTEGRATORS = ("IF-RK2", "IF-RK4")
BLOWUP_GROWTH = 1e6


@lru_cache(maxsize=16)
def family_for(grid: Grid) -> DyadicFamily:
    return build_family(grid)


@dataclass(frozen=True)
class SolverConfig:
    alpha: float
    dt: float
    t_end: float
    cfl: float = 0.4
    dealias: bool = True
    integrator: str = "IF-RK4"

    def __post_init__(self):
        if not 0 <= self.alpha < 1:
            raise ConfigurationError(f"alpha must lie in [0, 1), got {self.alpha}")
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if not 0 < self.cfl < 1:
            raise ConfigurationError(f"cfl must lie in (0, 1), got {self.cfl}")
        if self.t_end < 0:
            raise ConfigurationError(f"t_end must be nonnegative, got {self.t_end}")
        if self.integrator not in INTEGRATORS:
            raise ConfigurationError(f"integrator must be one of {INTEGRATORS}, got {self.integrator!r}")

    @property
    def n_steps(self) -> int:
        steps = self.t_end / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ConfigurationError(f"t_end={self.t_end} is not a multiple of dt={self.dt}")
        return int(round(steps))


@dataclass
class SimulationState:
    t: float
    theta: SpectralField
    ledger: TimeSeriesLedger = field(default_factory=TimeSeriesLedger)

    @property
    def grid(self) -> Grid:
        return self.theta.grid


class _Operators:
    """Cached spectral arrays for one grid and dissipation order."""

    def __init__(self, grid: Grid, alpha: float, dealias: bool):
        if grid.d != 2:
            raise ConfigurationError("the evolution equations are two-dimensional")
        self.grid = grid
        self.alpha = alpha
        kk = grid.abs_k
        self.lin = np.where(kk == 0, 0.0, kk**alpha)
        self.r1 = riesz_multiplier(1).evaluate(grid)
        self.r2 = riesz_multiplier(2).evaluate(grid)
        self.d1 = derivative_multiplier(1).evaluate(grid)
        self.d2 = derivative_multiplier(2).evaluate(grid)
        self.mask = grid.dealias_mask if dealias else np.ones(grid.shape, dtype=bool)
        self._exp = {}

    def expo(self, h: float) -> np.ndarray:
        e = self._exp.get(h)
        if e is None:
            e = np.exp(-h * self.lin)
            self._exp[h] = e
        return e

    def velocity(self, c: np.ndarray) -> np.ndarray:
        return to_physical(np.stack([-self.r2 * c, self.r1 * c]), self.grid)

    def gradient(self, c: np.ndarray) -> np.ndarray:
        return to_physical(np.stack([self.d1 * c, self.d2 * c]), self.grid)

    def advection(self, c: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Dealiased spectrum of ``v . grad(theta)`` with the zero mode removed."""
        grad = self.gradient(c)
        prod = v[0] * grad[0] + v[1] * grad[1]
        out = to_spectral(prod, self.grid)
        out = np.where(self.mask, out, 0.0)
        out.flat[0] = 0.0
        return out

    def velocity_gradient_inf(self, v_hat: np.ndarray) -> float:
        """``max_x |grad v(x)|`` with the pointwise Frobenius norm."""
        parts = np.stack([self.d1 * v_hat[0], self.d2 * v_hat[0], self.d1 * v_hat[1], self.d2 * v_hat[1]])
        g = to_physical(parts, self.grid)
        return float(np.sqrt(np.sum(g * g, axis=0)).max())


@lru_cache(maxsize=32)
def _operators(grid: Grid, alpha: float, dealias: bool) -> _Operators:
    return _Operators(grid, alpha, dealias)


def _if_step(c, t, h, ops: _Operators, rhs, integrator: str):
    """One integrating-factor RK step for ``c' = -|k|^a c + rhs(c, t)``."""
    e_full = ops.expo(h)
    k1 = rhs(c, t)
    if integrator == "IF-RK2":
        k2 = rhs(e_full * (c + h * k1), t + h)
        return e_full * c + 0.5 * h * (e_full * k1 + k2)
    e_half = ops.expo(0.5 * h)
    k2 = rhs(e_half * (c + 0.5 * h * k1), t + 0.5 * h)
    k3 = rhs(e_half * c + 0.5 * h * k2, t + 0.5 * h)
    k4 = rhs(e_full * c + h * e_half * k3, t + h)
    return e_full * c + (h / 6.0) * (e_full * k1 + 2.0 * e_half * (k2 + k3) + k4)


def nonlinear_term(theta: SpectralField, dealias: bool = True) -> SpectralField:
    """Dealiased ``v . grad(theta)`` with ``v = (-R_2 theta, R_1 theta)``."""
    if not theta.mean_zero:
        raise DomainError("the QG nonlinearity is defined for mean-zero fields")
    ops = _operators(theta.grid, 0.0, dealias)
    c = theta.without_mean().coeffs
    return SpectralField(theta.grid, ops.advection(c, ops.velocity(c)))


def _record(ledger, t, c, ops: _Operators, fam: DyadicFamily, grad_v_inf, forcing=None):
    grid = ops.grid
    phys = to_physical(c, grid)
    blocks = to_physical(fam.multiplier_stack(True) * c, grid)
    lp = {}
    per_block = {}
    qs = fam.blocks(True)
    for p in P_VALUES:
        lp[p] = float(lp_norm_batch(phys, p, grid))
        for q, val in zip(qs, lp_norm_batch(blocks, p, grid)):
            per_block[(q, p)] = float(val)
    ledger.append(t, lp, per_block, grad_v_inf, forcing)


def initial_state(theta0: SpectralField, dealias: bool = True, v_hat=None, forcing_norm=None) -> SimulationState:
    """State at ``t = 0`` with its first ledger row recorded.

    The initial field is projected onto the mean-zero (and, when requested,
    dealiased) subspace the solver evolves.  ``v_hat`` defaults to the Riesz
    velocity of the data.
    """
    grid = theta0.grid
    c = np.array(theta0.coeffs)
    if dealias:
        c = np.where(grid.dealias_mask, c, 0.0)
    c.flat[0] = 0.0
    ops = _operators(grid, 0.0, dealias)
    if v_hat is None:
        v_hat = np.stack([-ops.r2 * c, ops.r1 * c])
    ledger = TimeSeriesLedger()
    _record(ledger, 0.0, c, ops, family_for(grid), ops.velocity_gradient_inf(v_hat), forcing_norm)
    return SimulationState(0.0, SpectralField(grid, c), ledger)


def velocity_samples(theta: SpectralField) -> np.ndarray:
    """Grid samples of ``(-R_2 theta, R_1 theta)``, shape ``(2, n, n)``."""
    return _operators(theta.grid, 0.0, False).velocity(theta.coeffs)


def max_speed(v: np.ndarray) -> float:
    return float(np.sqrt(np.sum(v * v, axis=0)).max())


def required_dt(v: np.ndarray, grid: Grid, cfl: float) -> float:
    speed = max_speed(v)
    return math.inf if speed == 0 else cfl * grid.spacing / speed


def _check_finite(c_new, state: SimulationState, what: str):
    if not np.all(np.isfinite(c_new)):
        raise BlowupError(f"{what}: non-finite values at t={state.t:.6g}", state=state)
    ledger = state.ledger
    initial = ledger.lp[math.inf][0] if ledger.lp else 0.0
    current = float(np.abs(to_physical(c_new, state.grid)).max())
    if initial > 0 and current > BLOWUP_GROWTH * initial:
        raise BlowupError(
            f"{what}: sup norm grew by more than {BLOWUP_GROWTH:g}x by t={state.t:.6g}", state=state
        )


def step_qg(state: SimulationState, cfg: SolverConfig, record: bool = True) -> SimulationState:
    """Advance the QG equation by one step of size ``cfg.dt``."""
    grid = state.grid
    ops = _operators(grid, cfg.alpha, cfg.dealias)
    c = state.theta.coeffs
    v = ops.velocity(c)
    need = required_dt(v, grid, cfg.cfl)
    if cfg.dt > need * (1 + 1e-12):
        raise CFLError(cfg.dt, need)

    def rhs(cc, _t):
        return -ops.advection(cc, ops.velocity(cc))

    c_new = _if_step(c, state.t, cfg.dt, ops, rhs, cfg.integrator)
    c_new.flat[0] = 0.0
    _check_finite(c_new, state, "QG step")
    t_new = state.t + cfg.dt
    if record:
        v_hat = np.stack([-ops.r2 * c_new, ops.r1 * c_new])
        _record(state.ledger, t_new, c_new, ops, family_for(grid), ops.velocity_gradient_inf(v_hat))
    return SimulationState(t_new, SpectralField(grid, c_new), state.ledger)


class PrescribedVelocity:
    """Wraps a callable ``t -> (v1, v2)`` of physical arrays and checks it once."""

    def __init__(self, func: Callable, grid: Grid, tol: float = 1e-8):
        self.func = func
        self.grid = grid
        self.tol = tol
        self._checked = False

    def __call__(self, t: float) -> np.ndarray:
        v = np.asarray(self.func(t), dtype=np.float64)
        if v.shape != (2,) + self.grid.shape:
            raise ConfigurationError(f"velocity must have shape (2, n, n), got {v.shape}")
        if not self._checked:
            ops = _operators(self.grid, 0.0, False)
            vh = to_spectral(v, self.grid)
            div = ops.d1 * vh[0] + ops.d2 * vh[1]
            scale = max(1.0, float(np.abs(vh).max()))
            if float(np.abs(div).max()) > self.tol * scale:
                raise ConfigurationError("prescribed velocity is not divergence free")
            self._checked = True
        return v


def _zero_velocity(grid):
    z = np.zeros((2,) + grid.shape)
    return lambda t: z


def step_td(
    state: SimulationState,
    cfg: SolverConfig,
    v_prescribed: Optional[Callable] = None,
    f: Optional[Callable] = None,
    forcing_spec: Optional[BesovSpec] = None,
    record: bool = True,
) -> SimulationState:
    """Advance the linear transport-diffusion equation by one step.

    ``v_prescribed(t)`` returns the velocity samples, shape ``(2, n, n)``;
    ``f(t)`` returns forcing samples.  ``None`` means zero.
    """
    grid = state.grid
    ops = _operators(grid, cfg.alpha, cfg.dealias)
    if v_prescribed is None:
        vel = _zero_velocity(grid)
    elif isinstance(v_prescribed, PrescribedVelocity):
        vel = v_prescribed
    else:
        vel = PrescribedVelocity(v_prescribed, grid)

    def forcing_hat(t):
        if f is None:
            return None
        fh = to_spectral(np.asarray(f(t), dtype=np.float64), grid)
        if abs(fh.flat[0]) > 1e-12 * max(1.0, float(np.abs(fh).max())):
            raise DomainError("forcing must be mean-zero")
        fh.flat[0] = 0.0
        return fh

    c = state.theta.coeffs
    v0 = vel(state.t)
    need = required_dt(v0, grid, cfg.cfl)
    if cfg.dt > need * (1 + 1e-12):
        raise CFLError(cfg.dt, need)

    def rhs(cc, t):
        out = -ops.advection(cc, vel(t))
        fh = forcing_hat(t)
        if fh is not None:
            out = out + fh
        return out

    c_new = _if_step(c, state.t, cfg.dt, ops, rhs, cfg.integrator)
    c_new.flat[0] = 0.0
    _check_finite(c_new, state, "TD step")
    t_new = state.t + cfg.dt
    if record:
        v1 = vel(t_new)
        g = ops.velocity_gradient_inf(to_spectral(v1, grid))
        fnorm = None
        if f is not None and forcing_spec is not None:
            fnorm = besov_norm(SpectralField(grid, forcing_hat(t_new)), forcing_spec, family_for(grid))
        _record(state.ledger, t_new, c_new, ops, family_for(grid), g, fnorm)
    return SimulationState(t_new, SpectralField(grid, c_new), state.ledger)


def td_initial_state(theta0, cfg, v_prescribed=None, f=None, forcing_spec=None) -> SimulationState:
    grid = theta0.grid
    v_hat = np.zeros((2,) + grid.shape, dtype=np.complex128)
    if v_prescribed is not None:
        v_hat = to_spectral(np.asarray(v_prescribed(0.0), dtype=np.float64), grid)
    fnorm = None
    if f is not None and forcing_spec is not None:
        fh = to_spectral(np.asarray(f(0.0), dtype=np.float64), grid)
        fh.flat[0] = 0.0
        fnorm = besov_norm(SpectralField(grid, fh), forcing_spec, family_for(grid))
    return initial_state(theta0, cfg.dealias, v_hat, fnorm)


def run_qg(theta0: SpectralField, cfg: SolverConfig, callback=None) -> SimulationState:
    """Integrate the QG equation to ``cfg.t_end``.

    ``callback(state, step_index)`` runs after every step.  On blowup the
    raised ``BlowupError`` carries the last valid state.
    """
    state = initial_state(theta0, cfg.dealias)
    for i in range(cfg.n_steps):
        state = step_qg(state, cfg)
        if callback is not None:
            callback(state, i + 1)
    return state


def run_td(theta0, cfg, v_prescribed=None, f=None, forcing_spec=None, record=True) -> SimulationState:
    vel = PrescribedVelocity(v_prescribed, theta0.grid) if v_prescribed is not None else None
    state = td_initial_state(theta0, cfg, vel, f, forcing_spec)
    for _ in range(cfg.n_steps):
        state = step_td(state, cfg, vel, f, forcing_spec, record=record)
    return state


# ------------------------------------------------------------ iterative scheme


class TrajectoryVelocity:
    """Riesz velocity of a stored trajectory, linear in time between steps."""

    def __init__(self, coeffs: list, dt: float, grid: Grid):
        self.coeffs = coeffs
        self.dt = dt
        self.ops = _operators(grid, 0.0, False)
        self._cache = {}

    def __call__(self, t: float) -> np.ndarray:
        key = round(t / self.dt * 2)
        if key in self._cache:
            return self._cache[key]
        s = t / self.dt
        i = min(int(math.floor(s + 1e-9)), len(self.coeffs) - 1)
        w = s - i
        c = self.coeffs[i]
        if w > 1e-9 and i + 1 < len(self.coeffs):
            c = (1 - w) * c + w * self.coeffs[i + 1]
        v = self.ops.velocity(c)
        if len(self._cache) > 4:
            self._cache.clear()
        self._cache[key] = v
        return v


@dataclass
class SchemeState:
    sample_times: list
    iterates: list = field(default_factory=list)
    diffs: list = field(default_factory=list)
    aborted: bool = False
    message: str = ""

    def ratios(self) -> list:
        return [b / a if a > 0 else math.inf for a, b in zip(self.diffs[:-1], self.diffs[1:])]


def _besov_0_inf_1(c: np.ndarray, grid: Grid, fam: DyadicFamily) -> float:
    blocks = to_physical(fam.multiplier_stack(True) * c, grid)
    return float(np.sum(lp_norm_batch(blocks, math.inf, grid)))


def run_iterative_scheme(
    theta0: SpectralField, cfg: SolverConfig, n_max: int, T: float, sample_every: int = 10
) -> SchemeState:
    """Successive linear solves ``theta_{n+1}`` transported by ``v_n = (-R_2 theta_n, R_1 theta_n)``.

    Iterate ``n+1`` starts from ``S_n theta0`` (inhomogeneous low-pass).  The
    recorded diff is ``sup_t ||theta_{n+1} - theta_n||_{B^0_{inf,1}}`` over
    every ``sample_every``-th step and the final time.
    """
    if not theta0.mean_zero:
        raise DomainError("the iterative scheme needs mean-zero data")
    grid = theta0.grid
    fam = family_for(grid)
    run_cfg = SolverConfig(cfg.alpha, cfg.dt, T, cfg.cfl, cfg.dealias, cfg.integrator)
    n_steps = run_cfg.n_steps
    sample_idx = sorted(set(range(0, n_steps + 1, sample_every)) | {n_steps})
    result = SchemeState(sample_times=[i * cfg.dt for i in sample_idx])
    zero_samples = [np.zeros(grid.shape, dtype=np.complex128) for _ in sample_idx]
    result.iterates.append(zero_samples)
    prev_traj = None
    base = theta0.without_mean().coeffs
    for n in range(n_max):
        data = SpectralField(grid, fam.low_pass(n, homogeneous=True) * base)
        vel = None if prev_traj is None else PrescribedVelocity(TrajectoryVelocity(prev_traj, cfg.dt, grid), grid)
        state = initial_state(data, cfg.dealias)
        traj = [state.theta.coeffs]
        try:
            for _ in range(n_steps):
                state = step_td(state, run_cfg, vel, None, record=False)
                traj.append(state.theta.coeffs)
        except BlowupError as exc:
            result.aborted = True
            result.message = f"iterate {n + 1}: {exc}"
            return result
        samples = [traj[i] for i in sample_idx]
        prev_samples = result.iterates[-1]
        diff = max(_besov_0_inf_1(a - b, grid, fam) for a, b in zip(samples, prev_samples))
        result.iterates.append(samples)
        result.diffs.append(diff)
        prev_traj = traj
    return result


# ------------------------------------------------------------ diagnostics


def critical_index(p: float, alpha: float) -> float:
    """``1 + 2/p - alpha``."""
    return 1.0 + (0.0 if math.isinf(p) else 2.0 / p) - alpha


def smallness_report(theta0: SpectralField, alpha: float) -> dict:
    fam = family_for(theta0.grid)
    th = theta0.without_mean()
    out = {"alpha": alpha, "b_inf_1_1_minus_alpha": besov_norm(th, BesovSpec(1 - alpha, math.inf, 1), fam)}
    crit = {}
    for p in P_VALUES:
        s = critical_index(p, alpha)
        crit["inf" if math.isinf(p) else repr(p)] = {"s": s, "norm": besov_norm(th, BesovSpec(s, p, 1), fam)}
    out["critical"] = crit
    return out


def local_time_functional(theta0: SpectralField, alpha: float, c: float, t: float) -> float:
    """``sum_q (1 - exp(-c t 2^{q alpha}))^{1/2} 2^{q(1-alpha)} ||Delta_q theta0||_inf``."""
    if not c > 0:
        raise DomainError("the rate constant must be positive")
    fam = family_for(theta0.grid)
    norms = block_norms(theta0.without_mean(), fam, math.inf)
    total = 0.0
    for q, a in norms.items():
        w = -math.expm1(-c * t * 2.0 ** (q * alpha))
        total += math.sqrt(max(w, 0.0)) * 2.0 ** (q * (1 - alpha)) * a
    return total


def local_existence_time(theta0: SpectralField, alpha: float, c: float, eta: float, t_max: float = 1e12) -> float:
    """``sup{t : functional(t) <= eta}`` by bisection; ``inf`` if never exceeded."""
    fam = family_for(theta0.grid)
    sat = besov_norm(theta0.without_mean(), BesovSpec(1 - alpha, math.inf, 1), fam)
    if sat <= eta:
        return math.inf
    lo, hi = 0.0, 1.0
    while local_time_functional(theta0, alpha, c, hi) <= eta:
        lo, hi = hi, hi * 2
        if hi > t_max:
            return math.inf
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if local_time_functional(theta0, alpha, c, mid) <= eta:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * hi:
            break
    return lo


def smoothing_estimate_probe(ledger: TimeSeriesLedger, alpha: float, s: float, p: float, r: float, T: float | None = None) -> dict:
    """Both sides of the transport-diffusion smoothing estimate with ``C = 1``.

    ``lhs = ||theta||`` in the time-first mixed space with regularity
    ``s + alpha/r``; ``rhs = exp(V(T)) (||theta0||_{B^s_{p,1}} + int ||f||_{B^s_{p,1}})``.
    Forcing norms are read from ``ledger.forcing_norm``; an empty record means
    the run was unforced.
    """
    if not -1 < s < 1:
        raise DomainError("the estimate is stated for -1 < s < 1")
    if T is None:
        T = ledger.times[-1]
    r = float(r)
    alpha_r = 0.0 if math.isinf(r) else alpha / r
    lhs = mixed_time_norm(ledger, BesovSpec(s + alpha_r, p, 1), r, T, tilde=True)
    series = ledger.block_series(p)
    theta0_norm = besov_from_block_norms({q: a[0] for q, a in series.items()}, s, 1.0)
    times = np.asarray(ledger.times)
    keep = times <= T + 1e-12
    f_l1 = 0.0
    if ledger.forcing_norm:
        f_l1 = float(np.trapezoid(np.asarray(ledger.forcing_norm)[keep], times[keep]))
    V = float(ledger.V()[keep][-1])
    data = theta0_norm + f_l1
    rhs = math.exp(V) * data
    return {
        "s": s,
        "p": "inf" if math.isinf(p) else p,
        "r": "inf" if math.isinf(r) else r,
        "T": T,
        "V": V,
        "lhs": lhs,
        "data": data,
        "rhs": rhs,
        "ratio": lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf),
    }


def critical_norm_series(ledger: TimeSeriesLedger, alpha: float, p: float) -> np.ndarray:
    return ledger.besov_series(BesovSpec(critical_index(p, alpha), p, 1.0))


__all__ = [
    "SolverConfig",
    "SimulationState",
    "SchemeState",
    "nonlinear_term",
    "velocity_samples",
    "step_qg",
    "step_td",
    "run_qg",
    "run_td",
    "run_iterative_scheme",
    "smallness_report",
    "local_time_functional",
    "local_existence_time",
    "smoothing_estimate_probe",
    "critical_index",
    "critical_norm_series",
    "initial_state",
    "td_initial_state",
    "family_for",
]
