"""Closed-loop simulation of the tracking task with safety filtering.

Each loop instant: evaluate the obstacle barriers, build the constraint rows
the active mode calls for, solve the input filter, then advance the plant one
RK4 step under the held input while the estimator integrates the data stored
in its history stack. Adaptive modes offer one measurement per control update
to the stack (thinned by ``sample_stride`` when configured).

Runs are deterministic for a fixed config: the only randomness is the
measurement noise, drawn from a single generator seeded per run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import plant as plant_mod
from .regression import EstimatorState, HistoryStack, initial_state, propagate
from .safety_filter import (
    GAUSSIAN,
    OFF,
    ROBUST,
    ROBUST_FIXED,
    ConstraintRow,
    FilterResult,
    gracbf_constraint,
    racbf_constraint,
    solve_filter_qp,
)
from .scenario import Mode, ScenarioConfig
from .uncertainty import (
    Zonotope,
    contains_point,
    estimator_zonotope,
    gaussian_posterior,
)

FE_THRESHOLD = 1e-6
SAFETY_SLACK = 1e-6  # tolerated barrier undershoot in the safety certificate


@dataclass
class Metrics:
    """Summary numbers for one run."""

    min_h: float
    rms_tracking_error: float
    final_param_error: float
    time_to_fe: Optional[float]
    containment_violations: int
    qp_infeasible_count: int
    safety_certificate_ok: bool

    def as_dict(self) -> dict:
        return {
            "min_h": self.min_h,
            "rms_tracking_error": self.rms_tracking_error,
            "final_param_error": self.final_param_error,
            "time_to_fe": self.time_to_fe,
            "containment_violations": self.containment_violations,
            "qp_infeasible_count": self.qp_infeasible_count,
            "safety_certificate_ok": self.safety_certificate_ok,
        }


@dataclass
class RunLog:
    """Time series recorded at the logging stride, plus run metadata.

    ``metrics.min_h`` and the tracking error are accumulated at every
    integration step, not just at logged instants.
    """

    config: ScenarioConfig
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    k0: np.ndarray
    theta_hat: np.ndarray
    gamma: np.ndarray
    h: np.ndarray
    slack: np.ndarray
    du_norm: np.ndarray
    feasible: np.ndarray
    lambda_min: np.ndarray
    contains_truth: np.ndarray
    active_sets: list[tuple[int, ...]]
    metrics: Metrics
    final_stack: Optional[HistoryStack] = None

    def __len__(self) -> int:
        return int(self.t.shape[0])


@dataclass
class SimState:
    """Mutable state of one running simulation."""

    k: int
    t: float
    x: np.ndarray
    est: EstimatorState
    stack: HistoryStack
    rng: np.random.Generator
    noise_chol: Optional[np.ndarray]
    prior_zonotope: Zonotope
    # Values held between control updates (zero-order hold).
    u: np.ndarray = field(default_factory=lambda: np.zeros(2))
    k0: np.ndarray = field(default_factory=lambda: np.zeros(2))
    rows: list[ConstraintRow] = field(default_factory=list)
    result: Optional[FilterResult] = None
    h_now: np.ndarray = field(default_factory=lambda: np.zeros(0))
    slack_now: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lambda_min_now: float = 0.0
    # Metric accumulators.
    min_h: float = np.inf
    sq_err_sum: float = 0.0
    n_instants: int = 0
    qp_infeasible: int = 0
    containment_violations: int = 0


def init_sim(cfg: ScenarioConfig) -> SimState:
    """Fresh simulation state starting on the reference trajectory."""
    q0, qd0, _ = plant_mod.desired_trajectory(0.0)
    noise_chol = None
    if cfg.noise_on and np.any(cfg.plant.noise_cov):
        noise_chol = np.linalg.cholesky(cfg.plant.noise_cov)
    return SimState(
        k=0,
        t=0.0,
        x=np.concatenate([q0, qd0]),
        est=initial_state(cfg.prior),
        stack=HistoryStack(cfg.stack_capacity),
        rng=np.random.default_rng(cfg.seed),
        noise_chol=noise_chol,
        prior_zonotope=Zonotope(cfg.prior.theta_bar0, cfg.prior.sigma0),
    )


def update_controls(sim: SimState, cfg: ScenarioConfig) -> None:
    """Recompute barrier rows and the filtered input at the current instant."""
    evals = [
        plant_mod.barrier_eval(sim.x, obs, cfg.plant.mu) for obs in cfg.plant.obstacles
    ]
    sim.h_now = np.array([be.h for be in evals])
    sim.k0 = plant_mod.nominal_controller(sim.x, sim.t, sim.est.theta_hat, cfg.plant)

    fmode = cfg.filter.mode
    if fmode == OFF:
        rows: list[ConstraintRow] = []
    elif fmode == ROBUST_FIXED:
        rows = [racbf_constraint(be, sim.prior_zonotope, cfg.filter) for be in evals]
    elif fmode == ROBUST:
        zono = estimator_zonotope(sim.est)
        rows = [racbf_constraint(be, zono, cfg.filter) for be in evals]
    elif fmode == GAUSSIAN:
        belief = gaussian_posterior(cfg.prior, sim.est)
        rows = [
            gracbf_constraint(be, belief, cfg.prior, sim.est, cfg.filter)
            for be in evals
        ]
    else:  # pragma: no cover - FilterConfig validates its mode
        raise ValueError(f"unhandled filter mode {fmode!r}")

    sim.rows = rows
    result = solve_filter_qp(sim.k0, rows)
    sim.result = result
    sim.u = result.u
    if rows:
        u = result.u
        sim.slack_now = np.array(
            [float(r.a[0] * u[0] + r.a[1] * u[1]) - r.b for r in rows]
        )
    else:
        sim.slack_now = np.zeros(0)
    if not result.feasible:
        sim.qp_infeasible += 1


def _refresh_barriers(sim: SimState, cfg: ScenarioConfig) -> None:
    sim.h_now = np.array(
        [
            plant_mod.barrier_value(sim.x, obs, cfg.plant.mu)
            for obs in cfg.plant.obstacles
        ]
    )


def _accumulate(sim: SimState, cfg: ScenarioConfig) -> None:
    if sim.h_now.size:
        h_min = float(sim.h_now.min())
        if h_min < sim.min_h:
            sim.min_h = h_min
    qd1, qd2, _, _, _, _ = plant_mod._desired_scalars(sim.t)
    e0 = sim.x[0] - qd1
    e1 = sim.x[1] - qd2
    sim.sq_err_sum += e0 * e0 + e1 * e1
    sim.n_instants += 1


def _rk4_plant(x: np.ndarray, u: np.ndarray, theta: np.ndarray, dt: float) -> np.ndarray:
    # Scalar RK4 on the 4-state plant; the hot loop calls this every step.
    tanh = math.tanh
    x0, x1, x2, x3 = x
    u0, u1 = u[0], u[1]
    th0, th1 = theta[0], theta[1]

    t_ = tanh(x0 + x1)
    k1 = (x2, x3, u0 + t_ * x2 * th0, u1 + t_ * x3 * th1)
    h = 0.5 * dt
    y0, y1, y2, y3 = x0 + h * k1[0], x1 + h * k1[1], x2 + h * k1[2], x3 + h * k1[3]
    t_ = tanh(y0 + y1)
    k2 = (y2, y3, u0 + t_ * y2 * th0, u1 + t_ * y3 * th1)
    y0, y1, y2, y3 = x0 + h * k2[0], x1 + h * k2[1], x2 + h * k2[2], x3 + h * k2[3]
    t_ = tanh(y0 + y1)
    k3 = (y2, y3, u0 + t_ * y2 * th0, u1 + t_ * y3 * th1)
    y0, y1, y2, y3 = x0 + dt * k3[0], x1 + dt * k3[1], x2 + dt * k3[2], x3 + dt * k3[3]
    t_ = tanh(y0 + y1)
    k4 = (y2, y3, u0 + t_ * y2 * th0, u1 + t_ * y3 * th1)

    sixth = dt / 6.0
    return np.array(
        [
            x0 + sixth * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            x1 + sixth * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
            x2 + sixth * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
            x3 + sixth * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]),
        ]
    )


def _advance(sim: SimState, cfg: ScenarioConfig, offer_sample: bool) -> None:
    """Measurement, estimator propagation and one plant step."""
    if cfg.adaptive:
        if offer_sample:
            sample = plant_mod.measurement(
                sim.x,
                sim.u,
                sim.t,
                cfg.plant.theta_true,
                noise_chol=sim.noise_chol,
                rng=sim.rng,
            )
            sim.stack.record(sample)
            sim.lambda_min_now = sim.stack.excitation(FE_THRESHOLD, t=sim.t).lambda_min
        sim.est = propagate(sim.est, sim.stack, cfg.dt)

    sim.x = _rk4_plant(sim.x, sim.u, cfg.plant.theta_true, cfg.dt)
    sim.k += 1
    sim.t = sim.k * cfg.dt
    if not (
        math.isfinite(sim.x[0])
        and math.isfinite(sim.x[1])
        and math.isfinite(sim.x[2])
        and math.isfinite(sim.x[3])
    ):
        raise RuntimeError(f"state became non-finite at t={sim.t:.6f}; aborting run")


def _offers_sample(k: int, cfg: ScenarioConfig) -> bool:
    """Whether the loop offers a measurement to the stack at step index ``k``."""
    if k % cfg.control_divisor != 0:
        return False
    return (k // cfg.control_divisor) % cfg.sample_stride == 0


def step(sim: SimState, cfg: ScenarioConfig) -> SimState:
    """One loop instant: control update (at the control cadence), then advance."""
    is_control = sim.k % cfg.control_divisor == 0
    if is_control:
        update_controls(sim, cfg)
    else:
        _refresh_barriers(sim, cfg)
    _accumulate(sim, cfg)
    _advance(sim, cfg, offer_sample=cfg.adaptive and _offers_sample(sim.k, cfg))
    return sim


def _finalize_metrics(sim: SimState, cfg: ScenarioConfig) -> Metrics:
    rms = float(np.sqrt(sim.sq_err_sum / max(sim.n_instants, 1)))
    final_err = float(np.linalg.norm(sim.est.theta_hat - cfg.plant.theta_true))
    return Metrics(
        min_h=float(sim.min_h) if np.isfinite(sim.min_h) else float("inf"),
        rms_tracking_error=rms,
        final_param_error=final_err,
        time_to_fe=sim.stack.first_satisfied_at,
        containment_violations=sim.containment_violations,
        qp_infeasible_count=sim.qp_infeasible,
        safety_certificate_ok=(
            sim.qp_infeasible == 0 and sim.min_h >= -SAFETY_SLACK
        ),
    )


def run(cfg: ScenarioConfig) -> RunLog:
    """Simulate the scenario and return the recorded log with metrics."""
    sim = init_sim(cfg)
    n_steps = cfg.n_steps
    n_obs = len(cfg.plant.obstacles)
    p = cfg.prior.dim
    n_logs = n_steps // cfg.log_stride + 1

    log_t = np.zeros(n_logs)
    log_x = np.zeros((n_logs, 4))
    log_u = np.zeros((n_logs, 2))
    log_k0 = np.zeros((n_logs, 2))
    log_theta = np.zeros((n_logs, p))
    log_gamma = np.zeros((n_logs, p, p))
    log_h = np.zeros((n_logs, n_obs))
    log_slack = np.zeros((n_logs, n_obs))
    log_du = np.zeros(n_logs)
    log_feasible = np.zeros(n_logs, dtype=bool)
    log_lam = np.zeros(n_logs)
    log_contains = np.zeros(n_logs, dtype=bool)
    active_sets: list[tuple[int, ...]] = []
    log_idx = 0

    def log_record() -> None:
        nonlocal log_idx
        i = log_idx
        log_t[i] = sim.t
        log_x[i] = sim.x
        log_u[i] = sim.u
        log_k0[i] = sim.k0
        log_theta[i] = sim.est.theta_hat
        log_gamma[i] = sim.est.gamma
        log_h[i] = sim.h_now
        if sim.slack_now.size == n_obs:
            log_slack[i] = sim.slack_now
        log_du[i] = float(np.linalg.norm(sim.u - sim.k0))
        log_feasible[i] = sim.result.feasible if sim.result is not None else True
        log_lam[i] = sim.lambda_min_now
        zono = estimator_zonotope(sim.est) if cfg.adaptive else sim.prior_zonotope
        ok = contains_point(zono, cfg.plant.theta_true)
        log_contains[i] = ok
        if not ok:
            sim.containment_violations += 1
        active_sets.append(sim.result.active_set if sim.result is not None else ())
        log_idx += 1

    for k in range(n_steps):
        if k % cfg.control_divisor == 0:
            update_controls(sim, cfg)
        else:
            _refresh_barriers(sim, cfg)
        _accumulate(sim, cfg)
        if k % cfg.log_stride == 0:
            log_record()
        _advance(sim, cfg, offer_sample=cfg.adaptive and _offers_sample(k, cfg))

    # Final instant: compute controls for the closing record, no advance.
    update_controls(sim, cfg)
    _accumulate(sim, cfg)
    if n_steps % cfg.log_stride == 0:
        log_record()

    log = RunLog(
        config=cfg,
        t=log_t[:log_idx],
        x=log_x[:log_idx],
        u=log_u[:log_idx],
        k0=log_k0[:log_idx],
        theta_hat=log_theta[:log_idx],
        gamma=log_gamma[:log_idx],
        h=log_h[:log_idx],
        slack=log_slack[:log_idx],
        du_norm=log_du[:log_idx],
        feasible=log_feasible[:log_idx],
        lambda_min=log_lam[:log_idx],
        contains_truth=log_contains[:log_idx],
        active_sets=active_sets,
        metrics=_finalize_metrics(sim, cfg),
        final_stack=sim.stack,
    )
    return log


@dataclass
class Comparison:
    """Metrics of several runs plus the qualitative ordering flags."""

    modes: list[str]
    metrics: list[Metrics]
    ordering: dict[str, Optional[bool]]
    logs: list[RunLog]


def _same_geometry(a: ScenarioConfig, b: ScenarioConfig) -> bool:
    pa, pb = a.plant, b.plant
    if len(pa.obstacles) != len(pb.obstacles):
        return False
    for oa, ob in zip(pa.obstacles, pb.obstacles):
        if oa.radius != ob.radius or not np.array_equal(oa.center, ob.center):
            return False
    return bool(
        np.array_equal(pa.theta_true, pb.theta_true) and pa.mu == pb.mu
    )


def compare(configs: Sequence[ScenarioConfig]) -> Comparison:
    """Run several scenarios on the same plant and rank their outcomes.

    The ordering flags report whether the runs reproduce the expected
    qualitative picture: the unfiltered tracker violates safety, the filtered
    modes do not, and the adaptive filters track better than the fixed-set
    one. Flags that cannot be evaluated from the given modes are ``None``.
    """
    if len(configs) < 2:
        raise ValueError("compare needs at least two scenarios")
    for other in configs[1:]:
        if not _same_geometry(configs[0], other):
            raise ValueError("compared scenarios must share the plant geometry")

    logs = [run(cfg) for cfg in configs]
    metrics = [log.metrics for log in logs]
    modes = [cfg.mode.value for cfg in configs]

    by_mode: dict[str, list[Metrics]] = {}
    for mode, m in zip(modes, metrics):
        by_mode.setdefault(mode, []).append(m)

    aclf = by_mode.get(Mode.ACLF_ONLY.value, [])
    fixed = by_mode.get(Mode.ROBUST_FIXED.value, [])
    zono = by_mode.get(Mode.ZONOTOPE_ADAPTIVE.value, [])
    gauss = by_mode.get(Mode.GAUSSIAN_ADAPTIVE.value, [])
    filtered = fixed + zono + gauss

    ordering: dict[str, Optional[bool]] = {
        "tracking_only_violates_safety": (
            all(m.min_h < 0.0 for m in aclf) if aclf else None
        ),
        "filtered_modes_safe": (
            all(m.min_h >= -SAFETY_SLACK for m in filtered) if filtered else None
        ),
        "adaptive_beats_fixed_tracking": (
            max(m.rms_tracking_error for m in zono)
            < min(m.rms_tracking_error for m in fixed)
            if zono and fixed
            else None
        ),
    }
    return Comparison(modes=modes, metrics=metrics, ordering=ordering, logs=logs)
