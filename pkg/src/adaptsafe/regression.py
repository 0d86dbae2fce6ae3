"""Recursive-batch least squares over a fixed-capacity history stack.

The estimator maintains a point estimate ``theta_hat`` and gain matrix
``gamma`` for a linear regression model ``y = phi @ theta``. Instead of using
only the instantaneous regressor, every update replays the samples stored in
a :class:`HistoryStack`, so the estimate keeps converging as long as the
stored data is collectively exciting, even after the live trajectory stops
being informative.

Two equivalent propagation routes are provided:

* ``information`` (default): integrates the information matrix
  ``info = gamma^{-1}`` and the data accumulator ``accum``, whose right-hand
  sides do not depend on the state. With a stack that is constant between
  control updates this route is exact, and ``gamma`` can never lose positive
  definiteness.
* ``ode``: integrates ``theta_hat`` and ``gamma`` directly with a fixed-step
  RK4 scheme. Kept for cross-checking the information route.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .linalg import inv_pd, min_eig_sym, min_eig_sym_batch, symmetrize


class EstimationError(RuntimeError):
    """Raised when the estimator state becomes numerically invalid."""


@dataclass
class Sample:
    """One stored observation: target vector ``y`` and regressor ``phi``.

    ``y`` has shape (n,), ``phi`` has shape (n, p) and ``t`` is the time the
    pair was measured.
    """

    y: np.ndarray
    phi: np.ndarray
    t: float

    def __post_init__(self) -> None:
        self.y = np.asarray(self.y, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float)
        if self.y.ndim != 1 or self.phi.ndim != 2:
            raise ValueError("y must be a vector and phi a matrix")
        if self.y.shape[0] != self.phi.shape[0]:
            raise ValueError(
                f"y has {self.y.shape[0]} rows but phi has {self.phi.shape[0]}"
            )


@dataclass
class Prior:
    """Prior guess ``theta_bar0`` with positive-definite weight ``sigma0``."""

    theta_bar0: np.ndarray
    sigma0: np.ndarray
    sigma0_inv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.theta_bar0 = np.asarray(self.theta_bar0, dtype=float)
        self.sigma0 = np.asarray(self.sigma0, dtype=float)
        p = self.theta_bar0.shape[0]
        if self.sigma0.shape != (p, p):
            raise ValueError("sigma0 must be square and match theta_bar0")
        if not np.allclose(self.sigma0, self.sigma0.T, atol=1e-10):
            raise ValueError("sigma0 must be symmetric")
        if min_eig_sym(symmetrize(self.sigma0)) <= 0.0:
            raise ValueError("sigma0 must be positive definite")
        self.sigma0_inv = inv_pd(self.sigma0)

    @property
    def dim(self) -> int:
        return self.theta_bar0.shape[0]


@dataclass
class RecordOutcome:
    """Result of offering a sample to the stack.

    ``action`` is one of ``"appended"``, ``"replaced"`` or ``"rejected"``;
    ``slot`` is the replaced slot index when ``action == "replaced"``.
    """

    action: str
    slot: Optional[int] = None


@dataclass
class FEReport:
    """Excitation status of a history stack."""

    lambda_min: float
    satisfied: bool
    first_satisfied_at: Optional[float]


class HistoryStack:
    """Fixed-capacity sample buffer with greedy excitation-maximizing recording.

    Below capacity every valid sample is appended. Once full, an offered
    sample replaces the slot whose replacement maximizes the smallest
    eigenvalue of ``sum_j phi_j.T @ phi_j``, and only if that maximum beats
    the current value by the relative margin ``improvement_margin``. The
    smallest eigenvalue is therefore non-decreasing across record calls once
    it is positive.
    """

    def __init__(self, capacity: int, improvement_margin: float = 0.01):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.capacity = int(capacity)
        self.improvement_margin = float(improvement_margin)
        self.slots: list[Sample] = []
        self.n: Optional[int] = None
        self.p: Optional[int] = None
        self.info_matrix_cache: Optional[np.ndarray] = None
        self.moment_cache: Optional[np.ndarray] = None
        self.first_satisfied_at: Optional[float] = None
        self._outers: Optional[np.ndarray] = None  # (capacity, p, p) per-slot phi.T phi
        self._moments: Optional[np.ndarray] = None  # (capacity, p) per-slot phi.T y

    def __len__(self) -> int:
        return len(self.slots)

    @property
    def full(self) -> bool:
        return len(self.slots) >= self.capacity

    def info_matrix(self) -> np.ndarray:
        """Current ``sum_j phi_j.T @ phi_j`` (zeros if the stack is empty)."""
        if self.info_matrix_cache is None:
            raise ValueError("stack has no samples yet")
        return self.info_matrix_cache.copy()

    def moment_vector(self) -> np.ndarray:
        """Current ``sum_j phi_j.T @ y_j`` (zeros if the stack is empty)."""
        if self.moment_cache is None:
            raise ValueError("stack has no samples yet")
        return self.moment_cache.copy()

    def record(self, sample: Sample) -> RecordOutcome:
        """Offer one sample; append, replace the best slot, or reject it."""
        if not (np.isfinite(sample.y).all() and np.isfinite(sample.phi).all()):
            raise ValueError("sample contains non-finite entries")
        n, p = sample.phi.shape
        if self.n is None:
            self.n, self.p = n, p
            self.info_matrix_cache = np.zeros((p, p))
            self.moment_cache = np.zeros(p)
            self._outers = np.zeros((self.capacity, p, p))
            self._moments = np.zeros((self.capacity, p))
        elif (n, p) != (self.n, self.p):
            raise ValueError(
                f"sample shape ({n}, {p}) does not match stack ({self.n}, {self.p})"
            )

        outer = sample.phi.T @ sample.phi
        moment = sample.phi.T @ sample.y

        if not self.full:
            idx = len(self.slots)
            self.slots.append(sample)
            self._outers[idx] = outer
            self._moments[idx] = moment
            self.info_matrix_cache = symmetrize(self.info_matrix_cache + outer)
            self.moment_cache = self.moment_cache + moment
            return RecordOutcome("appended")

        lam_cur = min_eig_sym(self.info_matrix_cache)
        threshold = lam_cur * (1.0 + self.improvement_margin)
        # Every replacement candidate is bounded above (in the PSD order, so
        # also in smallest eigenvalue) by adding the new sample without
        # removing anything; if even that bound fails, reject without the
        # per-slot scan.
        if min_eig_sym(self.info_matrix_cache + outer) <= threshold:
            return RecordOutcome("rejected")
        candidates = self.info_matrix_cache[None, :, :] - self._outers + outer
        lams = min_eig_sym_batch(candidates)
        best = int(np.argmax(lams))  # ties resolve to the lowest slot index
        if lams[best] <= threshold:
            return RecordOutcome("rejected")

        self.info_matrix_cache = symmetrize(candidates[best])
        self.moment_cache = self.moment_cache + moment - self._moments[best]
        self.slots[best] = sample
        self._outers[best] = outer
        self._moments[best] = moment
        return RecordOutcome("replaced", slot=best)

    def excitation(self, threshold: float = 1e-6, t: Optional[float] = None) -> FEReport:
        """Smallest eigenvalue of the info matrix and whether it clears ``threshold``.

        The first time the threshold is cleared the instant is latched; pass
        ``t`` to latch the caller's clock, otherwise the newest slot time is
        used.
        """
        if self.info_matrix_cache is None:
            lam = 0.0
        else:
            lam = max(min_eig_sym(self.info_matrix_cache), 0.0)
        satisfied = lam > threshold
        if satisfied and self.first_satisfied_at is None:
            if t is None:
                t = max(s.t for s in self.slots)
            self.first_satisfied_at = float(t)
        return FEReport(lam, satisfied, self.first_satisfied_at)


@dataclass
class EstimatorState:
    """Estimate ``theta_hat`` with gain ``gamma`` and its information form.

    ``info`` is ``gamma^{-1}`` and ``accum`` collects
    ``sigma0^{-1} @ theta_bar0`` plus the integrated data moments, so that
    ``theta_hat = gamma @ accum`` at all times.
    """

    theta_hat: np.ndarray
    gamma: np.ndarray
    info: np.ndarray
    accum: np.ndarray
    t: float


def initial_state(prior: Prior) -> EstimatorState:
    """Estimator state at time zero: the prior itself."""
    return EstimatorState(
        theta_hat=prior.theta_bar0.copy(),
        gamma=prior.sigma0.copy(),
        info=prior.sigma0_inv.copy(),
        accum=prior.sigma0_inv @ prior.theta_bar0,
        t=0.0,
    )


def propagate(
    state: EstimatorState,
    stack: HistoryStack,
    dt: float,
    method: str = "information",
    pd_tol: float = 1e-8,
) -> EstimatorState:
    """Advance the estimate by ``dt`` holding the stack contents fixed.

    ``method="information"`` integrates the linear information-form equations
    exactly and recovers ``(theta_hat, gamma)`` with one small solve.
    ``method="ode"`` runs RK4 directly on the gain and estimate equations;
    a loss of positive definiteness of ``gamma`` beyond ``pd_tol`` raises
    :class:`EstimationError` since it signals a misconfigured step size.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    p = state.theta_hat.shape[0]
    if stack.info_matrix_cache is None:
        a_mat = np.zeros((p, p))
        b_vec = np.zeros(p)
    else:
        a_mat = stack.info_matrix_cache
        b_vec = stack.moment_cache

    # info and the stack cache are maintained symmetric, so the sum is too.
    info_next = state.info + dt * a_mat
    accum_next = state.accum + dt * b_vec

    if method == "information":
        if p == 2:
            s00, s01, s11 = info_next[0, 0], info_next[0, 1], info_next[1, 1]
            det = s00 * s11 - s01 * s01
            gamma_next = np.array([[s11, -s01], [-s01, s00]]) / det
            theta_next = np.array(
                [
                    (s11 * accum_next[0] - s01 * accum_next[1]) / det,
                    (s00 * accum_next[1] - s01 * accum_next[0]) / det,
                ]
            )
        else:
            gamma_next = inv_pd(info_next)
            theta_next = gamma_next @ accum_next
    elif method == "ode":
        theta, gamma = state.theta_hat, state.gamma

        def rhs(th: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            return g @ (b_vec - a_mat @ th), -g @ a_mat @ g

        k1t, k1g = rhs(theta, gamma)
        k2t, k2g = rhs(theta + 0.5 * dt * k1t, gamma + 0.5 * dt * k1g)
        k3t, k3g = rhs(theta + 0.5 * dt * k2t, gamma + 0.5 * dt * k2g)
        k4t, k4g = rhs(theta + dt * k3t, gamma + dt * k3g)
        theta_next = theta + (dt / 6.0) * (k1t + 2.0 * k2t + 2.0 * k3t + k4t)
        gamma_next = symmetrize(gamma + (dt / 6.0) * (k1g + 2.0 * k2g + 2.0 * k3g + k4g))
        if min_eig_sym(gamma_next) < -pd_tol:
            raise EstimationError(
                "gain matrix lost positive definiteness; reduce the step size"
            )
    else:
        raise ValueError(f"unknown propagation method {method!r}")

    return EstimatorState(
        theta_hat=theta_next,
        gamma=gamma_next,
        info=info_next,
        accum=accum_next,
        t=state.t + dt,
    )


def solve_closed_form(
    prior: Prior, info_integral: np.ndarray, accum: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Batch solution from the integrated data moments.

    ``info_integral`` is the time integral of ``sum_j phi_j.T @ phi_j`` (it
    excludes the prior weight) and ``accum`` is the full accumulator
    including the prior term ``sigma0^{-1} @ theta_bar0``. Returns
    ``(theta_hat, gamma)``. Serves as the cross-check oracle for
    :func:`propagate`.
    """
    info_integral = np.asarray(info_integral, dtype=float)
    gamma = inv_pd(symmetrize(prior.sigma0_inv + info_integral))
    return gamma @ np.asarray(accum, dtype=float), gamma


def error_transform(
    state: EstimatorState, prior: Prior, theta_true: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Predicted versus realized estimation error (simulation diagnostic).

    The estimation error evolves as a linear image of its initial value,
    ``gamma(t) @ sigma0^{-1} @ (theta_true - theta_bar0)``; in noiseless
    operation the returned pair agrees to integration tolerance.
    """
    theta_true = np.asarray(theta_true, dtype=float)
    predicted = state.gamma @ (prior.sigma0_inv @ (theta_true - prior.theta_bar0))
    actual = theta_true - state.theta_hat
    return predicted, actual
