"""Barrier constraint assembly and the minimally invasive input filter.

The filter projects a nominal input onto the inputs that keep every barrier
nonnegative, solving ``min 0.5 ||u - k0||^2`` subject to stacked half-plane
constraints ``a_i @ u >= b_i``. Two constraint builders are provided: a
robust row that charges the worst case over a parameter zonotope, and a
probabilistic row that charges a confidence margin under a Gaussian belief.

With the few rows this problem ever carries, the QP is solved exactly by
enumerating active subsets; no external solver is involved.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from statistics import NormalDist
from typing import Callable, Optional, Sequence

import numpy as np

from .regression import EstimatorState, Prior
from .uncertainty import GaussianBelief, Zonotope, lie_sigma, support_inf

ROBUST = "Robust"
GAUSSIAN = "Gaussian"
OFF = "Off"
ROBUST_FIXED = "RobustFixed"
FILTER_MODES = (ROBUST, GAUSSIAN, OFF, ROBUST_FIXED)


@dataclass
class BarrierEval:
    """Barrier value and its directional derivatives at one state.

    ``h`` is the barrier value, ``lf_h`` its derivative along the drift,
    ``lg_h`` the row multiplying the input and ``lF_h`` the row multiplying
    the uncertain parameters.
    """

    h: float
    lf_h: float
    lg_h: np.ndarray
    lF_h: np.ndarray


@dataclass
class ConstraintRow:
    """Half-plane constraint ``a @ u >= b`` on the input."""

    a: np.ndarray
    b: float


@dataclass
class FilterConfig:
    """Safety-filter parameters.

    ``alpha_gain`` is the linear barrier gain (the constraint relaxes as
    ``alpha_gain * h`` away from the boundary), ``delta`` the allowed failure
    probability of the Gaussian route and ``c_delta`` the matching two-sided
    normal quantile, derived from ``delta`` when not given explicitly.
    """

    alpha_gain: float = 1.0
    delta: float = 0.05
    c_delta: Optional[float] = None
    mode: str = ROBUST

    def __post_init__(self) -> None:
        if self.alpha_gain <= 0.0:
            raise ValueError("alpha_gain must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.c_delta is None:
            self.c_delta = NormalDist().inv_cdf(1.0 - self.delta / 2.0)
        if self.c_delta <= 0.0:
            raise ValueError("c_delta must be positive")
        if self.mode not in FILTER_MODES:
            raise ValueError(f"mode must be one of {FILTER_MODES}")


@dataclass
class FilterResult:
    """Filtered input with the active constraint indices and dual variables."""

    u: np.ndarray
    active_set: tuple[int, ...]
    feasible: bool
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))


def racbf_constraint(be: BarrierEval, z: Zonotope, cfg: FilterConfig) -> ConstraintRow:
    """Robust row: the parameter term is charged at its worst case over ``z``."""
    worst = support_inf(z, be.lF_h)
    return ConstraintRow(
        a=np.asarray(be.lg_h, dtype=float),
        b=-cfg.alpha_gain * be.h - be.lf_h - worst,
    )


def gracbf_constraint(
    be: BarrierEval,
    belief: GaussianBelief,
    prior: Prior,
    state: EstimatorState,
    cfg: FilterConfig,
) -> ConstraintRow:
    """Probabilistic row: certainty equivalence plus a confidence margin.

    The parameter term enters at the posterior mean and the bound is
    stiffened by ``c_delta`` posterior standard deviations of the barrier's
    parameter direction.
    """
    sigma = lie_sigma(be.lF_h, state, prior)
    ce_term = float(np.asarray(be.lF_h, dtype=float) @ belief.mean)
    return ConstraintRow(
        a=np.asarray(be.lg_h, dtype=float),
        b=-cfg.alpha_gain * be.h - be.lf_h - ce_term + cfg.c_delta * sigma,
    )


def _least_violation(
    k0: np.ndarray, a_mat: np.ndarray, b_vec: np.ndarray
) -> np.ndarray:
    """Deterministic fallback input for an infeasible constraint system.

    Minimizes the sum of squared constraint violations with a tiny ridge
    toward ``k0``; candidates are enumerated over every violation support.
    """
    ridge = 1e-8
    m = k0.shape[0]
    n = a_mat.shape[0]

    def objective(u: np.ndarray) -> float:
        viol = np.maximum(b_vec - a_mat @ u, 0.0)
        return float(viol @ viol + ridge * (u - k0) @ (u - k0))

    best_u = k0.copy()
    best_val = objective(best_u)
    for size in range(1, n + 1):
        for subset in combinations(range(n), size):
            rows = a_mat[list(subset)]
            lhs = rows.T @ rows + ridge * np.eye(m)
            rhs = rows.T @ b_vec[list(subset)] + ridge * k0
            u = np.linalg.solve(lhs, rhs)
            val = objective(u)
            if val < best_val - 1e-15:
                best_val = val
                best_u = u
    return best_u


def solve_filter_qp(
    k0: np.ndarray, rows: Sequence[ConstraintRow], feas_tol: float = 1e-9
) -> FilterResult:
    """Exact projection of ``k0`` onto the stacked half planes.

    Enumerates every candidate active subset, solves the corresponding
    equality-constrained projection, and keeps the feasible candidate with
    the smallest cost; for the handful of rows a barrier stack produces this
    is exact. If no candidate is feasible (conflicting rows, or a zero row
    with a positive bound) the result carries ``feasible=False`` and a
    least-violation input.
    """
    k0 = np.asarray(k0, dtype=float)
    m = k0.shape[0]
    n = len(rows)
    if n == 0:
        return FilterResult(k0.copy(), (), True)
    if n > 16:
        raise ValueError("constraint stack too large for subset enumeration")

    a_mat = np.empty((n, m))
    b_vec = np.empty(n)
    for i, r in enumerate(rows):
        a_mat[i] = r.a
        b_vec[i] = r.b
    slack0 = a_mat @ k0 - b_vec

    if slack0.min() >= -feas_tol:
        return FilterResult(k0.copy(), (), True)

    best_u: Optional[np.ndarray] = None
    best_cost = np.inf
    best_subset: tuple[int, ...] = ()
    best_lam = np.zeros(0)
    for size in range(1, min(m, n) + 1):
        for subset in combinations(range(n), size):
            rows_s = a_mat[list(subset)]
            if size == 1:
                gram = float(rows_s[0] @ rows_s[0])
                if gram <= 0.0:
                    continue
                lam = np.array([-slack0[subset[0]] / gram])
            else:
                gram = rows_s @ rows_s.T
                try:
                    lam = np.linalg.solve(gram, -slack0[list(subset)])
                except np.linalg.LinAlgError:
                    continue
                if not np.isfinite(lam).all():
                    continue
            u = k0 + rows_s.T @ lam
            if (a_mat @ u - b_vec).min() >= -feas_tol:
                cost = float((u - k0) @ (u - k0))
                if cost < best_cost - 1e-15:
                    best_cost = cost
                    best_u = u
                    best_subset = subset
                    best_lam = lam

    if best_u is None:
        return FilterResult(_least_violation(k0, a_mat, b_vec), (), False)
    return FilterResult(best_u, best_subset, True, best_lam)


@dataclass
class MatchedReport:
    """Largest residual of the input-channel factorization over the samples."""

    max_residual: float
    worst_index: int
    n_states: int


def matched_check(
    states: Sequence[np.ndarray],
    param_matrix: Callable[[np.ndarray], np.ndarray],
    input_matrix: Callable[[np.ndarray], np.ndarray],
    regressor: Callable[[np.ndarray], np.ndarray],
) -> MatchedReport:
    """Verify the uncertainty enters through the input channel.

    Checks ``param_matrix(x) == input_matrix(x) @ regressor(x)`` at each
    sampled state and reports the worst Frobenius residual. Diagnostic only.
    """
    worst = -1.0
    worst_idx = 0
    for i, x in enumerate(states):
        residual = float(
            np.linalg.norm(param_matrix(x) - input_matrix(x) @ regressor(x))
        )
        if residual > worst:
            worst = residual
            worst_idx = i
    return MatchedReport(worst, worst_idx, len(states))


@dataclass
class CbfCriterionReport:
    """Outcome of the degenerate-direction barrier check."""

    n_states: int
    n_tested: int
    violations: list[int]

    @property
    def compliant(self) -> bool:
        return not self.violations


def cbf_criterion_check(
    states: Sequence[np.ndarray],
    barrier: Callable[[np.ndarray], BarrierEval],
    cfg: FilterConfig,
    lg_tol: float = 1e-9,
) -> CbfCriterionReport:
    """Check the barrier criterion where the input has no authority.

    At each sampled state with ``||lg_h|| < lg_tol`` the drift alone must
    satisfy ``lf_h > -alpha_gain * h``; states failing the strict inequality
    are reported. Diagnostic only.
    """
    tested = 0
    violations: list[int] = []
    for i, x in enumerate(states):
        be = barrier(x)
        if float(np.linalg.norm(be.lg_h)) < lg_tol:
            tested += 1
            if not be.lf_h > -cfg.alpha_gain * be.h:
                violations.append(i)
    return CbfCriterionReport(len(states), tested, violations)
