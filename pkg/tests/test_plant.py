"""Plant model tests: wind parameterization, barriers, reference, controller.

Gradient and derivative checks run against central finite differences; the
tracking-law check runs against the analytic critically damped error decay.
"""

import math

import numpy as np
import pytest

from adaptsafe import (
    ObstacleSpec,
    PlantConfig,
    PlantState,
    barrier_eval,
    barrier_gradient,
    barrier_value,
    desired_trajectory,
    dynamics,
    measurement,
    nominal_controller,
    parameter_matrix,
    regressor,
    wind_field,
)
from adaptsafe.plant import input_matrix

THETA_TRUE = np.array([1.0, -1.0])


class TestDynamics:
    def test_origin_is_equilibrium(self):
        np.testing.assert_array_equal(
            dynamics(np.zeros(4), np.zeros(2), THETA_TRUE), np.zeros(4)
        )

    def test_unit_state_acceleration(self):
        x = np.array([1.0, 1.0, 1.0, 1.0])
        xdot = dynamics(x, np.zeros(2), THETA_TRUE)
        assert xdot[2] == pytest.approx(math.tanh(2.0))
        assert xdot[3] == pytest.approx(-math.tanh(2.0))

    def test_wind_vanishes_at_rest(self):
        x = np.array([3.0, -2.0, 0.0, 0.0])
        xdot = dynamics(x, np.zeros(2), THETA_TRUE)
        np.testing.assert_array_equal(xdot, np.zeros(4))

    def test_straight_line_when_unforced(self):
        # Zero input, zero wind coefficients: RK4 keeps velocities constant
        # and positions exactly linear.
        x = np.array([0.3, -0.2, 0.7, 0.4])
        dt = 0.05
        from adaptsafe.simulate import _rk4_plant

        for k in range(1, 40):
            x = _rk4_plant(x, np.zeros(2), np.zeros(2), dt)
            np.testing.assert_allclose(x[2:], [0.7, 0.4], atol=1e-14)
            np.testing.assert_allclose(
                x[:2], [0.3 + 0.7 * k * dt, -0.2 + 0.4 * k * dt], atol=1e-12
            )


class TestRegressor:
    def test_zero_velocity_gives_zero_features(self):
        np.testing.assert_array_equal(
            regressor(np.array([2.0, 1.0, 0.0, 0.0])), np.zeros((2, 2))
        )

    def test_feature_values(self):
        phi = regressor(np.array([1.0, 1.0, 1.0, 1.0]))
        np.testing.assert_allclose(phi, math.tanh(2.0) * np.eye(2))
        np.testing.assert_allclose(phi @ THETA_TRUE, wind_field(np.array([1.0, 1.0, 1.0, 1.0])))

    def test_null_line(self):
        phi = regressor(np.array([1.5, -1.5, 2.0, -1.0]))
        np.testing.assert_array_equal(phi, np.zeros((2, 2)))

    def test_wind_identity_at_random_states(self):
        rng = np.random.default_rng(42)
        for _ in range(10000):
            x = rng.uniform(-5.0, 5.0, size=4)
            np.testing.assert_allclose(
                regressor(x) @ THETA_TRUE, wind_field(x), atol=1e-12
            )

    def test_parameter_matrix_factors_through_input_channel(self):
        rng = np.random.default_rng(43)
        for _ in range(100):
            x = rng.uniform(-5.0, 5.0, size=4)
            np.testing.assert_array_equal(
                parameter_matrix(x), input_matrix(x) @ regressor(x)
            )


class TestMeasurement:
    def test_noiseless_target_is_exact(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            x = rng.uniform(-4.0, 4.0, size=4)
            sample = measurement(x, rng.normal(size=2), 0.0, THETA_TRUE)
            np.testing.assert_array_equal(sample.y, sample.phi @ THETA_TRUE)

    def test_rest_state_is_uninformative(self):
        sample = measurement(np.array([1.0, 2.0, 0.0, 0.0]), np.zeros(2), 0.0, THETA_TRUE)
        np.testing.assert_array_equal(sample.phi, np.zeros((4, 2)))
        np.testing.assert_array_equal(sample.y, np.zeros(4))

    def test_noise_covariance_statistics(self):
        cov = 0.1 * np.eye(4)
        chol = np.linalg.cholesky(cov)
        rng = np.random.default_rng(2024)
        x = np.array([1.0, 1.0, 1.0, 1.0])
        u = np.zeros(2)
        clean = measurement(x, u, 0.0, THETA_TRUE).y
        n = 100_000
        resid = np.empty((n, 4))
        for i in range(n):
            resid[i] = measurement(x, u, 0.0, THETA_TRUE, noise_chol=chol, rng=rng).y - clean
        sample_cov = resid.T @ resid / n
        np.testing.assert_allclose(sample_cov, cov, atol=4e-3)


class TestDesiredTrajectory:
    def test_starts_at_origin(self):
        q, _, _ = desired_trajectory(0.0)
        np.testing.assert_array_equal(q, np.zeros(2))

    def test_quarter_period_point(self):
        q, _, _ = desired_trajectory(5.0)
        np.testing.assert_allclose(q, [4.0, 0.0], atol=1e-12)

    def test_derivatives_match_finite_differences(self):
        delta = 1e-5
        for t in np.arange(0.0, 20.0, 0.25):
            q_m, qd_m, _ = desired_trajectory(t - delta)
            q_p, qd_p, _ = desired_trajectory(t + delta)
            _, qd, qdd = desired_trajectory(t)
            np.testing.assert_allclose(qd, (q_p - q_m) / (2 * delta), atol=1e-6)
            np.testing.assert_allclose(qdd, (qd_p - qd_m) / (2 * delta), atol=1e-6)


class TestBarrier:
    OBS = ObstacleSpec(np.array([2.0, 0.0]), 1.0)

    def test_pinned_resting_state(self):
        x = np.array([4.0, 0.0, 0.0, 0.0])
        be = barrier_eval(x, self.OBS, mu=2.0)
        assert be.h == pytest.approx(3.0)
        assert be.lf_h == pytest.approx(0.0)
        np.testing.assert_array_equal(be.lg_h, np.zeros(2))
        np.testing.assert_array_equal(be.lF_h, np.zeros(2))

    def test_receding_motion_leaves_clearance(self):
        x = np.array([4.0, 0.0, 1.0, 0.5])
        be = barrier_eval(x, self.OBS, mu=2.0)
        d = 4.0 + 0.0 - 1.0
        assert be.h == pytest.approx(d)

    def test_approach_discount(self):
        x = np.array([4.0, 0.0, -1.0, 0.0])
        mu = 0.5
        be = barrier_eval(x, self.OBS, mu)
        s = 2.0 * (2.0 * -1.0)
        assert be.h == pytest.approx(3.0 - mu * s * s)

    def _fd_gradient(self, x, obs, mu, delta=1e-7):
        grad = np.zeros(4)
        for i in range(4):
            xp, xm = x.copy(), x.copy()
            xp[i] += delta
            xm[i] -= delta
            grad[i] = (barrier_value(xp, obs, mu) - barrier_value(xm, obs, mu)) / (
                2 * delta
            )
        return grad

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        obstacles = [self.OBS, ObstacleSpec(np.array([-2.0, 1.2]), 1.0)]
        mu = 0.05
        for k in range(1000):
            x = rng.uniform(-5.0, 5.0, size=4)
            obs = obstacles[k % 2]
            np.testing.assert_allclose(
                barrier_gradient(x, obs, mu), self._fd_gradient(x, obs, mu), atol=1e-5
            )

    def test_gradient_continuous_across_approach_seam(self):
        # States straddling the zero-approach-rate seam, including exactly on
        # it: the analytic gradient must agree with finite differences.
        obs = self.OBS
        mu = 0.05
        q = np.array([4.0, 0.5])
        radial = q - obs.center
        tangent = np.array([-radial[1], radial[0]]) / np.linalg.norm(radial)
        for eps in (-1e-9, 0.0, 1e-9):
            qdot = tangent + eps * radial
            x = np.concatenate([q, qdot])
            np.testing.assert_allclose(
                barrier_gradient(x, obs, mu), self._fd_gradient(x, obs, mu), atol=1e-5
            )

    def test_eval_consistent_with_gradient(self):
        rng = np.random.default_rng(8)
        mu = 0.05
        for _ in range(200):
            x = rng.uniform(-4.0, 4.0, size=4)
            be = barrier_eval(x, self.OBS, mu)
            grad = barrier_gradient(x, self.OBS, mu)
            lf_ref = grad[0] * x[2] + grad[1] * x[3]
            assert be.lf_h == pytest.approx(lf_ref, abs=1e-10)
            np.testing.assert_allclose(be.lg_h, grad[2:], atol=1e-12)
            np.testing.assert_allclose(be.lF_h, be.lg_h @ regressor(x), atol=1e-12)

    def test_boundary_gradient_nonzero(self):
        rng = np.random.default_rng(9)
        mu = 0.05
        for _ in range(200):
            angle = rng.uniform(0.0, 2 * math.pi)
            q = self.OBS.center + self.OBS.radius * np.array(
                [math.cos(angle), math.sin(angle)]
            )
            x = np.concatenate([q, rng.uniform(-2.0, 2.0, size=2)])
            if abs(barrier_value(x, self.OBS, mu)) < 1e-9:
                assert np.linalg.norm(barrier_gradient(x, self.OBS, mu)) > 1e-6


class TestNominalController:
    def test_pure_feedforward_on_reference(self):
        cfg = PlantConfig()
        t = 2.0
        q, qd, qdd = desired_trajectory(t)
        x = np.concatenate([q, qd])
        k0 = nominal_controller(x, t, np.zeros(2), cfg)
        np.testing.assert_allclose(k0, qdd, atol=1e-12)

    def test_perfect_estimate_gives_linear_error_decay(self):
        # With the true coefficients the wind cancels and the tracking error
        # obeys the critically damped law e(t) = (e0 + (ed0 + 2 e0) t) e^(-2t).
        cfg = PlantConfig()  # kp = kd = 4 I
        e0 = np.array([0.3, -0.2])
        q0, qd0, _ = desired_trajectory(0.0)
        x = np.concatenate([q0 + e0, qd0])
        dt = 1e-3
        for k in range(2000):
            t = k * dt

            def closed_loop(xs, ts):
                u = nominal_controller(xs, ts, THETA_TRUE, cfg)
                return dynamics(xs, u, THETA_TRUE)

            k1 = closed_loop(x, t)
            k2 = closed_loop(x + 0.5 * dt * k1, t + 0.5 * dt)
            k3 = closed_loop(x + 0.5 * dt * k2, t + 0.5 * dt)
            k4 = closed_loop(x + dt * k3, t + dt)
            x = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t_end = 2000 * dt
        q_d, _, _ = desired_trajectory(t_end)
        expected = (e0 + 2.0 * e0 * t_end) * math.exp(-2.0 * t_end)
        np.testing.assert_allclose(x[:2] - q_d, expected, atol=1e-6)

    def test_zero_gains_leave_feedforward_and_cancellation(self):
        cfg = PlantConfig(kp=np.zeros((2, 2)), kd=np.zeros((2, 2)))
        x = np.array([1.0, 1.0, 1.0, 1.0])
        theta_hat = np.array([0.5, -0.5])
        k0 = nominal_controller(x, 0.0, theta_hat, cfg)
        _, _, qdd = desired_trajectory(0.0)
        wind_hat = regressor(x) @ theta_hat
        np.testing.assert_allclose(k0, qdd - wind_hat, atol=1e-12)

    def test_feedforward_only_with_zero_estimate_and_gains(self):
        cfg = PlantConfig(kp=np.zeros((2, 2)), kd=np.zeros((2, 2)))
        x = np.array([0.5, -0.3, 0.2, 0.9])
        k0 = nominal_controller(x, 1.7, np.zeros(2), cfg)
        _, _, qdd = desired_trajectory(1.7)
        np.testing.assert_allclose(k0, qdd, atol=1e-12)


class TestConfigTypes:
    def test_plant_state_round_trip(self):
        st = PlantState(np.array([1.0, 2.0]), np.array([3.0, 4.0]))
        np.testing.assert_array_equal(st.vector(), [1.0, 2.0, 3.0, 4.0])
        st2 = PlantState.from_vector(st.vector())
        np.testing.assert_array_equal(st2.q, st.q)
        np.testing.assert_array_equal(st2.qdot, st.qdot)

    def test_obstacle_requires_positive_radius(self):
        with pytest.raises(ValueError):
            ObstacleSpec(np.zeros(2), 0.0)

    def test_plant_config_validation(self):
        with pytest.raises(ValueError):
            PlantConfig(mu=0.0)
        with pytest.raises(ValueError):
            PlantConfig(noise_cov=np.eye(3))
        with pytest.raises(ValueError):
            PlantConfig(kp=-np.eye(2))
