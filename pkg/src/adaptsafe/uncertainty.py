"""Zonotope and Gaussian representations of parameter uncertainty.

Both representations are closed under affine maps, and the least-squares
estimate at any time is an affine image of the initial guess. Pushing the
prior set (or prior distribution) through that map therefore yields, at every
instant, a set guaranteed to contain the true parameters (zonotope route) or
a calibrated posterior distribution (Gaussian route), without solving any
optimization problem online.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import min_eig_sym, psd_floor, symmetrize
from .regression import EstimatorState, Prior

# Generators with a singular value below this are treated as collapsed
# directions; the zonotope degenerates to its center for membership queries.
SINGLETON_TOL = 1e-10


@dataclass
class Zonotope:
    """Set ``{center + generator @ xi : max|xi_i| <= 1}``.

    ``generator`` has shape (p, q); q = 0 denotes the singleton ``{center}``.
    """

    center: np.ndarray
    generator: np.ndarray

    def __post_init__(self) -> None:
        self.center = np.asarray(self.center, dtype=float)
        self.generator = np.asarray(self.generator, dtype=float)
        if self.generator.ndim == 1:
            self.generator = self.generator.reshape(self.center.shape[0], -1)
        if self.generator.shape[0] != self.center.shape[0]:
            raise ValueError("generator rows must match center dimension")
        if not (np.isfinite(self.center).all() and np.isfinite(self.generator).all()):
            raise ValueError("zonotope entries must be finite")

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def order(self) -> int:
        return self.generator.shape[1]


@dataclass
class GaussianBelief:
    """Gaussian parameter distribution with PSD covariance."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self) -> None:
        self.mean = np.asarray(self.mean, dtype=float)
        self.covariance = np.asarray(self.covariance, dtype=float)
        if self.covariance.shape != (self.mean.shape[0],) * 2:
            raise ValueError("covariance must be square and match the mean")


@dataclass
class AffineMap:
    """Map ``theta -> a_matrix @ theta + b_vector``."""

    a_matrix: np.ndarray
    b_vector: np.ndarray


def estimator_affine_map(state: EstimatorState, prior: Prior) -> AffineMap:
    """Affine map sending the initial guess to the current estimate.

    ``a = gamma(t) @ sigma0^{-1}`` and ``b = theta_hat(t) - a @ theta_bar0``,
    so ``a @ theta_bar0 + b`` reconstructs ``theta_hat(t)`` exactly.
    """
    a = state.gamma @ prior.sigma0_inv
    b = state.theta_hat - a @ prior.theta_bar0
    return AffineMap(a, b)


def affine_image(m: AffineMap, z: Zonotope) -> Zonotope:
    """Image of a zonotope under an affine map: ``(a c + b, a G)``."""
    return Zonotope(m.a_matrix @ z.center + m.b_vector, m.a_matrix @ z.generator)


def estimator_zonotope(state: EstimatorState) -> Zonotope:
    """Parameter set carried by the estimator: center ``theta_hat``, generator ``gamma``."""
    return Zonotope(state.theta_hat, state.gamma)


def support_inf(z: Zonotope, direction: np.ndarray) -> float:
    """Minimum of ``direction @ theta`` over the zonotope, in closed form.

    Equals ``direction @ center - sum_i |direction @ G_i|``; no linear
    program is needed.
    """
    direction = np.asarray(direction, dtype=float)
    return float(direction @ z.center - np.abs(direction @ z.generator).sum())


def _require_square(z: Zonotope, role: str) -> None:
    if z.generator.shape[0] != z.generator.shape[1]:
        raise ValueError(
            f"{role} generator must be square and invertible for certified "
            "containment; use support-function checks for general generators"
        )


def _smallest_singular_value(g: np.ndarray) -> float:
    # sqrt of the smallest eigenvalue of g.T g; avoids a full SVD.
    gram = g.T @ g
    return math.sqrt(max(min_eig_sym(gram), 0.0))


def contains_point(z: Zonotope, point: np.ndarray, atol: float = 1e-9) -> bool:
    """Exact membership test for zonotopes with a square invertible generator.

    Membership holds iff ``max|generator^{-1} (center - point)| <= 1``. A
    generator with a singular value below ``SINGLETON_TOL`` (including the
    q = 0 case) collapses the test to point equality within ``atol``.
    """
    point = np.asarray(point, dtype=float)
    if z.order == 0:
        return bool(np.max(np.abs(z.center - point)) <= atol)
    _require_square(z, "the")
    if _smallest_singular_value(z.generator) < SINGLETON_TOL:
        return bool(np.max(np.abs(z.center - point)) <= atol)
    coeff = np.linalg.solve(z.generator, z.center - point)
    return bool(np.max(np.abs(coeff)) <= 1.0 + 1e-12)


def contains_zonotope(outer: Zonotope, inner: Zonotope) -> bool:
    """Sufficient containment certificate ``inner`` inside ``outer``.

    Solves ``outer.generator @ P = inner.generator`` and
    ``outer.generator @ zvec = outer.center - inner.center`` and certifies
    containment when the largest absolute row sum of ``[P, zvec]`` is at most
    one. A ``False`` return means "not certified", not "disjoint".
    """
    _require_square(outer, "the outer")
    if _smallest_singular_value(outer.generator) < SINGLETON_TOL:
        raise ValueError(
            "outer generator is numerically singular; certified containment "
            "needs an invertible outer generator"
        )
    p_mat = np.linalg.solve(outer.generator, inner.generator)
    z_vec = np.linalg.solve(outer.generator, outer.center - inner.center)
    row_sums = np.abs(p_mat).sum(axis=1) + np.abs(z_vec)
    return bool(row_sums.max() <= 1.0 + 1e-12)


def gaussian_posterior(prior: Prior, state: EstimatorState) -> GaussianBelief:
    """Posterior distribution implied by the estimator at its current time.

    Mean ``theta_hat(t)`` and covariance
    ``gamma(t) @ sigma0^{-1} @ gamma(t).T`` (the prior covariance pushed
    through the estimator's affine map), symmetrized with eigenvalues floored
    at zero.
    """
    gamma = state.gamma
    if gamma.shape[0] == 2:
        s = prior.sigma0_inv
        m00 = gamma[0, 0] * s[0, 0] + gamma[0, 1] * s[1, 0]
        m01 = gamma[0, 0] * s[0, 1] + gamma[0, 1] * s[1, 1]
        m10 = gamma[1, 0] * s[0, 0] + gamma[1, 1] * s[1, 0]
        m11 = gamma[1, 0] * s[0, 1] + gamma[1, 1] * s[1, 1]
        c00 = m00 * gamma[0, 0] + m01 * gamma[0, 1]
        c11 = m10 * gamma[1, 0] + m11 * gamma[1, 1]
        c01 = 0.5 * (
            (m00 * gamma[1, 0] + m01 * gamma[1, 1])
            + (m10 * gamma[0, 0] + m11 * gamma[0, 1])
        )
        cov = np.array([[c00, c01], [c01, c11]])
    else:
        cov = symmetrize(gamma @ prior.sigma0_inv @ gamma.T)
    return GaussianBelief(state.theta_hat.copy(), psd_floor(cov))


def lie_sigma(row: np.ndarray, state: EstimatorState, prior: Prior) -> float:
    """Standard deviation of ``row @ theta`` under the current posterior.

    ``row`` is typically the barrier's parameter-direction derivative at the
    current state. Tiny negative radicands from round-off clamp to zero;
    anything beyond tolerance indicates a broken covariance and raises.
    """
    row = np.asarray(row, dtype=float)
    gamma = state.gamma
    if row.shape[0] == 2:
        t0 = gamma[0, 0] * row[0] + gamma[1, 0] * row[1]
        t1 = gamma[0, 1] * row[0] + gamma[1, 1] * row[1]
        s = prior.sigma0_inv
        val = t0 * (s[0, 0] * t0 + s[0, 1] * t1) + t1 * (s[1, 0] * t0 + s[1, 1] * t1)
    else:
        tmp = gamma.T @ row
        val = float(tmp @ prior.sigma0_inv @ tmp)
    if val < -1e-8:
        raise ValueError(f"posterior covariance is not PSD (quadratic form {val})")
    return math.sqrt(max(val, 0.0))
