"""Zonotope and Gaussian uncertainty tests.

``support_brute`` enumerates all sign patterns of the generator coefficients
and is the independent oracle for the closed-form support function; the
containment tests verify certificates by sampling and by explicit vertex
checks.
"""

import itertools

import numpy as np
import pytest

from adaptsafe import (
    AffineMap,
    HistoryStack,
    Prior,
    Sample,
    Zonotope,
    affine_image,
    contains_point,
    contains_zonotope,
    estimator_affine_map,
    estimator_zonotope,
    gaussian_posterior,
    initial_state,
    lie_sigma,
    propagate,
    support_inf,
)


def support_brute(z: Zonotope, direction: np.ndarray) -> float:
    """Minimum of direction @ theta over the zonotope by full enumeration."""
    q = z.order
    best = np.inf
    for signs in itertools.product((-1.0, 1.0), repeat=q):
        val = float(direction @ (z.center + z.generator @ np.array(signs)))
        best = min(best, val)
    if q == 0:
        best = float(direction @ z.center)
    return best


def scalar_estimator(t_end=1.0, dt=1e-3):
    prior = Prior(np.array([0.0]), np.array([[1.0]]))
    stack = HistoryStack(capacity=1)
    stack.record(Sample(y=np.array([1.0]), phi=np.array([[1.0]]), t=0.0))
    state = initial_state(prior)
    for _ in range(int(round(t_end / dt))):
        state = propagate(state, stack, dt)
    return prior, state


def planar_estimator(n_steps=120, seed=2):
    rng = np.random.default_rng(seed)
    theta_true = np.array([1.0, -1.0])
    prior = Prior(np.array([-0.1, 0.1]), 2.0 * np.eye(2))
    stack = HistoryStack(capacity=4)
    state = initial_state(prior)
    for _ in range(n_steps):
        phi = rng.normal(size=(2, 2))
        stack.record(Sample(y=phi @ theta_true, phi=phi, t=state.t))
        state = propagate(state, stack, 5e-3)
    return prior, state, theta_true


class TestAffineMap:
    def test_initial_map_is_identity(self):
        prior = Prior(np.array([-0.1, 0.1]), 2.0 * np.eye(2))
        m = estimator_affine_map(initial_state(prior), prior)
        np.testing.assert_allclose(m.a_matrix, np.eye(2), atol=1e-14)
        np.testing.assert_allclose(m.b_vector, np.zeros(2), atol=1e-14)

    def test_scalar_map_at_unit_time(self):
        prior, state = scalar_estimator()
        m = estimator_affine_map(state, prior)
        assert m.a_matrix[0, 0] == pytest.approx(0.5, abs=1e-9)
        assert m.b_vector[0] == pytest.approx(0.5, abs=1e-9)

    def test_map_reconstructs_estimate(self):
        prior, state, _ = planar_estimator()
        m = estimator_affine_map(state, prior)
        np.testing.assert_allclose(
            m.a_matrix @ prior.theta_bar0 + m.b_vector, state.theta_hat, atol=1e-12
        )

    def test_prior_set_maps_to_estimator_set(self):
        # Pushing the prior zonotope through the estimator map must land
        # exactly on (theta_hat, gamma).
        prior, state, _ = planar_estimator()
        m = estimator_affine_map(state, prior)
        image = affine_image(m, Zonotope(prior.theta_bar0, prior.sigma0))
        target = estimator_zonotope(state)
        np.testing.assert_allclose(image.center, target.center, atol=1e-10)
        np.testing.assert_allclose(image.generator, target.generator, atol=1e-10)


class TestAffineImage:
    def test_identity_map(self):
        z = Zonotope(np.array([1.0, -2.0]), np.array([[1.0, 0.5], [0.0, 1.0]]))
        out = affine_image(AffineMap(np.eye(2), np.zeros(2)), z)
        np.testing.assert_allclose(out.center, z.center)
        np.testing.assert_allclose(out.generator, z.generator)

    def test_singleton_transforms_as_point(self):
        z = Zonotope(np.array([1.0, 2.0]), np.zeros((2, 0)))
        a = np.array([[2.0, 1.0], [0.0, 3.0]])
        b = np.array([-1.0, 0.5])
        out = affine_image(AffineMap(a, b), z)
        np.testing.assert_allclose(out.center, a @ z.center + b)
        assert out.order == 0

    def test_sampled_points_stay_inside_image(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            p, q = rng.integers(2, 4), rng.integers(0, 5)
            z = Zonotope(rng.normal(size=p), rng.normal(size=(p, q)))
            m = AffineMap(rng.normal(size=(p, p)), rng.normal(size=p))
            image = affine_image(m, z)
            directions = rng.normal(size=(64, p))
            for _ in range(25):
                xi = rng.uniform(-1.0, 1.0, size=q)
                point = m.a_matrix @ (z.center + z.generator @ xi) + m.b_vector
                for d in directions:
                    assert d @ point >= support_inf(image, d) - 1e-9


class TestSupport:
    def test_unit_box_diagonal_direction(self):
        z = Zonotope(np.zeros(2), np.eye(2))
        d = np.array([1.0, 1.0])
        assert support_inf(z, d) == pytest.approx(-2.0)
        assert support_inf(z, d) == pytest.approx(support_brute(z, d))

    def test_singleton(self):
        z = Zonotope(np.array([2.0, -1.0]), np.zeros((2, 0)))
        assert support_inf(z, np.array([3.0, 1.0])) == pytest.approx(5.0)

    def test_zero_direction(self):
        z = Zonotope(np.ones(2), np.eye(2))
        assert support_inf(z, np.zeros(2)) == 0.0

    def test_matches_brute_force(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            p = int(rng.integers(1, 4))
            q = int(rng.integers(0, 9))
            z = Zonotope(rng.normal(size=p), rng.normal(size=(p, q)))
            d = rng.normal(size=p)
            val = support_inf(z, d)
            ref = support_brute(z, d)
            assert val == pytest.approx(ref, abs=1e-10 * (1.0 + abs(ref)))


class TestContainsPoint:
    def test_center_is_inside(self):
        z = Zonotope(np.array([1.0, 2.0]), np.array([[0.5, 0.1], [0.0, 0.7]]))
        assert contains_point(z, z.center)

    def test_case_study_prior_contains_truth(self):
        z = Zonotope(np.array([-0.1, 0.1]), 2.0 * np.eye(2))
        coeff = np.linalg.solve(z.generator, z.center - np.array([1.0, -1.0]))
        assert np.max(np.abs(coeff)) == pytest.approx(0.55)
        assert contains_point(z, np.array([1.0, -1.0]))

    def test_point_outside_unit_box(self):
        assert not contains_point(Zonotope(np.zeros(2), np.eye(2)), np.array([1.5, 0.0]))

    def test_non_square_generator_rejected(self):
        z = Zonotope(np.zeros(2), np.ones((2, 3)))
        with pytest.raises(ValueError, match="square"):
            contains_point(z, np.zeros(2))

    def test_collapsed_generator_acts_as_singleton(self):
        z = Zonotope(np.array([1.0, -1.0]), 1e-13 * np.eye(2))
        assert contains_point(z, np.array([1.0, -1.0]))
        assert not contains_point(z, np.array([1.0, -0.9]))


class TestContainsZonotope:
    def test_reflexive(self):
        z = Zonotope(np.array([0.5, -0.5]), np.array([[1.0, 0.2], [0.0, 0.8]]))
        assert contains_zonotope(z, z)

    def test_scaled_box_nesting(self):
        outer = Zonotope(np.zeros(2), 2.0 * np.eye(2))
        inner = Zonotope(np.zeros(2), np.eye(2))
        assert contains_zonotope(outer, inner)
        # Vertex enumeration agrees with the certificate.
        for signs in itertools.product((-1.0, 1.0), repeat=2):
            vertex = inner.center + inner.generator @ np.array(signs)
            assert contains_point(outer, vertex)

    def test_shifted_box_not_certified(self):
        outer = Zonotope(np.zeros(2), np.eye(2))
        inner = Zonotope(np.array([1.0, 0.0]), np.eye(2))
        assert not contains_zonotope(outer, inner)
        # A witness vertex really does poke out.
        assert not contains_point(outer, np.array([2.0, 1.0]))

    def test_certified_pairs_pass_sampling(self):
        rng = np.random.default_rng(21)
        checked = 0
        while checked < 10:
            p = 2
            g2 = rng.normal(size=(p, p)) + 2.0 * np.eye(p)
            pmat = rng.uniform(-0.4, 0.4, size=(p, p))
            zvec = rng.uniform(-0.2, 0.2, size=p)
            outer = Zonotope(rng.normal(size=p), g2)
            inner = Zonotope(outer.center - g2 @ zvec, g2 @ pmat)
            if not contains_zonotope(outer, inner):
                continue
            checked += 1
            for _ in range(2000):
                xi = rng.uniform(-1.0, 1.0, size=inner.order)
                point = inner.center + inner.generator @ xi
                coeff = np.linalg.solve(outer.generator, outer.center - point)
                assert np.max(np.abs(coeff)) <= 1.0 + 1e-9

    def test_singular_outer_rejected(self):
        outer = Zonotope(np.zeros(2), np.zeros((2, 2)))
        with pytest.raises(ValueError, match="singular"):
            contains_zonotope(outer, Zonotope(np.zeros(2), np.eye(2)))


class TestGaussianPosterior:
    def test_initial_posterior_is_prior(self):
        prior = Prior(np.array([-0.1, 0.1]), 2.0 * np.eye(2))
        belief = gaussian_posterior(prior, initial_state(prior))
        np.testing.assert_allclose(belief.mean, prior.theta_bar0)
        np.testing.assert_allclose(belief.covariance, prior.sigma0, atol=1e-12)

    def test_scalar_value_at_unit_time(self):
        prior, state = scalar_estimator()
        belief = gaussian_posterior(prior, state)
        assert belief.mean[0] == pytest.approx(0.5, abs=1e-9)
        assert belief.covariance[0, 0] == pytest.approx(0.25, abs=1e-9)

    def test_covariance_shrinks_and_stays_psd(self):
        rng = np.random.default_rng(9)
        prior = Prior(np.array([-0.1, 0.1]), 2.0 * np.eye(2))
        stack = HistoryStack(capacity=4)
        state = initial_state(prior)
        theta_true = np.array([1.0, -1.0])
        last_trace = np.trace(prior.sigma0)
        for _ in range(80):
            phi = rng.normal(size=(2, 2))
            stack.record(Sample(y=phi @ theta_true, phi=phi, t=state.t))
            state = propagate(state, stack, 1e-2)
            belief = gaussian_posterior(prior, state)
            trace = float(np.trace(belief.covariance))
            assert trace <= last_trace + 1e-12
            assert np.linalg.eigvalsh(belief.covariance)[0] >= -1e-12
            last_trace = trace
        assert last_trace < 0.05


class TestLieSigma:
    def test_zero_row(self):
        prior = Prior(np.array([-0.1, 0.1]), 2.0 * np.eye(2))
        assert lie_sigma(np.zeros(2), initial_state(prior), prior) == 0.0

    def test_initial_unit_row(self):
        prior = Prior(np.array([-0.1, 0.1]), 2.0 * np.eye(2))
        sigma = lie_sigma(np.array([1.0, 0.0]), initial_state(prior), prior)
        assert sigma == pytest.approx(np.sqrt(2.0), abs=1e-12)

    def test_scalar_at_unit_time(self):
        prior, state = scalar_estimator()
        assert lie_sigma(np.array([1.0]), state, prior) == pytest.approx(0.5, abs=1e-9)

    def test_matches_posterior_quadratic_form(self):
        prior, state, _ = planar_estimator()
        row = np.array([0.3, -1.2])
        cov = gaussian_posterior(prior, state).covariance
        ref = np.sqrt(row @ cov @ row)
        assert lie_sigma(row, state, prior) == pytest.approx(ref, abs=1e-12)
