"""Planar double integrator in a spatially varying wind field.

State ``x = (q1, q2, v1, v2)`` with commanded acceleration ``u``; the wind
adds an acceleration that is linear in the velocity and saturates with the
position through tanh. The wind is parameterized per axis so the true field
corresponds to coefficients ``(1, -1)``.

Obstacle avoidance uses the squared clearance to each disk, extended with a
braking term so the input shows up in the barrier's first derivative: while
closing in on an obstacle, the barrier discounts the clearance by the squared
approach rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .linalg import min_eig_sym, symmetrize
from .regression import Sample
from .safety_filter import BarrierEval


@dataclass
class PlantState:
    """Position/velocity pair, convertible to the flat state vector."""

    q: np.ndarray
    qdot: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.qdot])

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "PlantState":
        x = np.asarray(x, dtype=float)
        return cls(x[:2].copy(), x[2:].copy())


@dataclass
class ObstacleSpec:
    """Circular obstacle with center (m) and radius (m)."""

    center: np.ndarray
    radius: float

    def __post_init__(self) -> None:
        self.center = np.asarray(self.center, dtype=float)
        if self.radius <= 0.0:
            raise ValueError("obstacle radius must be positive")


def _default_obstacles() -> list[ObstacleSpec]:
    return [
        ObstacleSpec(np.array([-2.0, 1.2]), 1.0),
        ObstacleSpec(np.array([2.0, -1.2]), 1.0),
    ]


@dataclass
class PlantConfig:
    """Physical parameters, obstacle layout, noise level and tracking gains.

    The obstacle layout, ``mu`` and the gains are reconstructions chosen so
    the reference trajectory clips both disks while the start state is safe;
    all of them are expected to be overridden freely.

    ``mu`` trades how early the barrier reacts to approach speed against how
    much of the workspace it gives up: because the clearance is quadratic in
    distance, the braking discount ``mu * s**2`` scales with distance the
    same way, and closing speeds above ``1 / (2 sqrt(mu))`` empty the safe
    set along the whole approach ray. Keep ``4 * mu * v**2 < 1`` for the
    operating speeds ``v`` (the default covers speeds up to ~2.2 m/s).
    """

    theta_true: np.ndarray = field(default_factory=lambda: np.array([1.0, -1.0]))
    obstacles: list[ObstacleSpec] = field(default_factory=_default_obstacles)
    mu: float = 0.05
    noise_cov: np.ndarray = field(default_factory=lambda: 0.1 * np.eye(4))
    kp: np.ndarray = field(default_factory=lambda: 4.0 * np.eye(2))
    kd: np.ndarray = field(default_factory=lambda: 4.0 * np.eye(2))

    def __post_init__(self) -> None:
        self.theta_true = np.asarray(self.theta_true, dtype=float)
        self.noise_cov = np.asarray(self.noise_cov, dtype=float)
        self.kp = np.asarray(self.kp, dtype=float)
        self.kd = np.asarray(self.kd, dtype=float)
        if self.mu <= 0.0:
            raise ValueError("mu must be positive")
        if self.noise_cov.shape != (4, 4):
            raise ValueError("noise_cov must be 4x4")
        if min_eig_sym(symmetrize(self.noise_cov)) < -1e-12:
            raise ValueError("noise_cov must be positive semidefinite")
        for gain, name in ((self.kp, "kp"), (self.kd, "kd")):
            if gain.shape != (2, 2) or min_eig_sym(symmetrize(gain)) < -1e-12:
                raise ValueError(f"{name} must be a 2x2 positive-semidefinite matrix")


def wind_field(x: np.ndarray) -> np.ndarray:
    """True wind acceleration at state ``x``."""
    t = math.tanh(x[0] + x[1])
    return np.array([t * x[2], -t * x[3]])


def regressor(x: np.ndarray) -> np.ndarray:
    """Per-axis wind features: diag(tanh(q1+q2) v1, tanh(q1+q2) v2).

    The true wind is recovered as ``regressor(x) @ [1, -1]``.
    """
    t = math.tanh(x[0] + x[1])
    return np.array([[t * x[2], 0.0], [0.0, t * x[3]]])


def parameter_matrix(x: np.ndarray) -> np.ndarray:
    """How the wind coefficients enter the state derivative (4x2).

    Equals the input matrix composed with the regressor, so the uncertainty
    is matched to the input channel by construction.
    """
    t = math.tanh(x[0] + x[1])
    out = np.zeros((4, 2))
    out[2, 0] = t * x[2]
    out[3, 1] = t * x[3]
    return out


def input_matrix(x: np.ndarray) -> np.ndarray:
    """Acceleration input channel (4x2), constant for the double integrator."""
    out = np.zeros((4, 2))
    out[2, 0] = 1.0
    out[3, 1] = 1.0
    return out


def drift(x: np.ndarray) -> np.ndarray:
    """Unforced, wind-free state derivative."""
    return np.array([x[2], x[3], 0.0, 0.0])


def dynamics(x: np.ndarray, u: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Full state derivative under input ``u`` and wind coefficients ``theta``."""
    t = math.tanh(x[0] + x[1])
    return np.array(
        [x[2], x[3], u[0] + t * x[2] * theta[0], u[1] + t * x[3] * theta[1]]
    )


def measurement(
    x: np.ndarray,
    u: np.ndarray,
    t: float,
    theta_true: np.ndarray,
    noise_chol: Optional[np.ndarray] = None,
    rng: Optional[np.random.Generator] = None,
) -> Sample:
    """Observation pair for the estimator at the current instant.

    The regressor is the parameter channel at ``x`` and the target is the
    state derivative minus the known drift and input contributions, which
    reduces to the parameter channel acting on the true coefficients. Passing
    a Cholesky factor of the noise covariance together with ``rng`` adds one
    Gaussian draw to the target.
    """
    phi = parameter_matrix(x)
    y = np.array([0.0, 0.0, phi[2, 0] * theta_true[0], phi[3, 1] * theta_true[1]])
    if noise_chol is not None and rng is not None:
        y += noise_chol @ rng.standard_normal(4)
    return Sample(y=y, phi=phi, t=t)


_OMEGA = 0.1 * math.pi


def _desired_scalars(t: float) -> tuple[float, float, float, float, float, float]:
    """Reference position, velocity and acceleration as plain floats."""
    wt = _OMEGA * t
    s, c = math.sin(wt), math.cos(wt)
    s2, c2 = math.sin(2.0 * wt), math.cos(2.0 * wt)
    return (
        4.0 * s,
        4.0 * s * c,
        4.0 * _OMEGA * c,
        4.0 * _OMEGA * c2,
        -4.0 * _OMEGA * _OMEGA * s,
        -8.0 * _OMEGA * _OMEGA * s2,
    )


def desired_trajectory(t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Figure-eight reference: position, velocity and acceleration at ``t``."""
    q1, q2, v1, v2, a1, a2 = _desired_scalars(t)
    return np.array([q1, q2]), np.array([v1, v2]), np.array([a1, a2])


def _barrier_terms(x: np.ndarray, obs: ObstacleSpec, mu: float):
    dx0 = x[0] - obs.center[0]
    dx1 = x[1] - obs.center[1]
    d = dx0 * dx0 + dx1 * dx1 - obs.radius * obs.radius
    s = 2.0 * (dx0 * x[2] + dx1 * x[3])
    mn = s if s < 0.0 else 0.0
    h = d - mu * mn * s
    return dx0, dx1, d, s, mn, h


def barrier_value(x: np.ndarray, obs: ObstacleSpec, mu: float) -> float:
    """Barrier value at ``x``: clearance minus the approach-rate discount."""
    return _barrier_terms(x, obs, mu)[5]


def barrier_gradient(x: np.ndarray, obs: ObstacleSpec, mu: float) -> np.ndarray:
    """Analytic barrier gradient, continuous across the approach seam.

    The approach-rate discount ``min(0, s) * s`` is continuously
    differentiable with derivative ``2 min(0, s)``, so the gradient has no
    jump where the approach rate changes sign.
    """
    dx0, dx1, _, _, mn, _ = _barrier_terms(x, obs, mu)
    k = 4.0 * mu * mn
    return np.array(
        [
            2.0 * dx0 - k * x[2],
            2.0 * dx1 - k * x[3],
            -k * dx0,
            -k * dx1,
        ]
    )


def barrier_eval(x: np.ndarray, obs: ObstacleSpec, mu: float) -> BarrierEval:
    """Barrier value and directional derivatives at ``x`` for one obstacle."""
    dx0, dx1, _, s, mn, h = _barrier_terms(x, obs, mu)
    k = 4.0 * mu * mn
    lf_h = s - k * (x[2] * x[2] + x[3] * x[3])
    lg0 = -k * dx0
    lg1 = -k * dx1
    t = math.tanh(x[0] + x[1])
    return BarrierEval(
        h=h,
        lf_h=lf_h,
        lg_h=np.array([lg0, lg1]),
        lF_h=np.array([lg0 * t * x[2], lg1 * t * x[3]]),
    )


def nominal_controller(
    x: np.ndarray, t: float, theta_hat: np.ndarray, cfg: PlantConfig
) -> np.ndarray:
    """Tracking law: feedforward, PD feedback and estimated-wind cancellation.

    With a perfect estimate the closed-loop tracking error obeys the linear
    PD error dynamics; obstacles are ignored entirely.
    """
    q1, q2, v1, v2, a1, a2 = _desired_scalars(t)
    tq = math.tanh(x[0] + x[1])
    e0, e1 = q1 - x[0], q2 - x[1]
    ed0, ed1 = v1 - x[2], v2 - x[3]
    kp, kd = cfg.kp, cfg.kd
    return np.array(
        [
            a1
            + kp[0, 0] * e0
            + kp[0, 1] * e1
            + kd[0, 0] * ed0
            + kd[0, 1] * ed1
            - tq * x[2] * theta_hat[0],
            a2
            + kp[1, 0] * e0
            + kp[1, 1] * e1
            + kd[1, 0] * ed0
            + kd[1, 1] * ed1
            - tq * x[3] * theta_hat[1],
        ]
    )
