import os
import sys
import unittest
from unittest import mock

# Add project root to path
sys.path.append(os.path.join(os.path.dirname(__file__), ".."))

import numpy as np

from src.core.errors import InputError, SingularCovarianceError
from src.motion.ground_plane import GroundPlane
from src.motion.kinematics import (
    MotionFactor,
    MotionNoise,
    MotionRegime,
    Pose,
    classify,
    lower_median,
    motion_residual,
    predict,
    predict_jacobian,
    propagate_covariance,
    state_difference,
    wrap_angle,
)

ROAD = GroundPlane.horizontal(1.65, 0.05**2)


def numeric_jacobian(fn, x, h=1e-7):
    x = np.asarray(x, dtype=np.float64)
    base = np.asarray(fn(x))
    jac = np.zeros((base.size, x.size))
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = h
        jac[:, i] = (np.asarray(fn(x + step)) - np.asarray(fn(x - step))) / (2 * h)
    return jac


def relative_error(analytic, numeric) -> float:
    return float(np.max(np.abs(analytic - numeric)) / max(np.max(np.abs(numeric)), 1e-12))


class TestPose(unittest.TestCase):
    def test_yaw_is_wrapped(self):
        self.assertAlmostEqual(Pose(np.zeros(3), 1.5 * np.pi).theta, -0.5 * np.pi)

    def test_heading_of_yaw_pi_points_along_z(self):
        np.testing.assert_allclose(Pose(np.zeros(3), np.pi).heading(), [0.0, 0.0, 1.0], atol=1e-12)

    def test_object_world_round_trip(self):
        pose = Pose([1.0, 1.65, 12.0], 0.7)
        points = np.random.default_rng(0).normal(size=(20, 3))
        np.testing.assert_allclose(pose.to_world(pose.to_object(points)), points, atol=1e-12)

    def test_rejects_non_finite(self):
        with self.assertRaises(InputError):
            Pose([0.0, np.nan, 0.0], 0.0)


class TestPredict(unittest.TestCase):
    def test_standing_is_identity(self):
        pose = Pose([1.0, 1.65, 10.0], 0.3, 4.0, 0.2)
        predicted = predict(pose, 0.1, MotionRegime.STANDING)
        np.testing.assert_array_equal(predicted.as_vector(), pose.as_vector())

    def test_straight_step(self):
        pose = Pose([0.0, 1.65, 10.0], np.pi, 6.0, 0.0)
        predicted = predict(pose, 0.1, MotionRegime.STRAIGHT)
        np.testing.assert_allclose(predicted.t, [0.0, 1.65, 10.6], atol=1e-12)
        self.assertAlmostEqual(predicted.theta, np.pi)

    def test_straight_ignores_yaw_rate(self):
        pose = Pose([0.0, 1.65, 10.0], 0.2, 6.0, 0.5)
        predicted = predict(pose, 0.1, MotionRegime.STRAIGHT)
        self.assertAlmostEqual(predicted.theta, 0.2)

    def test_turning_approaches_straight_linearly(self):
        def gap(omega):
            pose = Pose([0.0, 0.0, 0.0], 0.4, 6.0, omega)
            turning = predict(pose, 0.1, MotionRegime.TURNING)
            straight = predict(pose, 0.1, MotionRegime.STRAIGHT)
            return np.linalg.norm(state_difference(turning.as_vector(), straight.as_vector()))

        omegas = [1e-2, 1e-3, 1e-4]
        gaps = [gap(w) for w in omegas]
        for w, g in zip(omegas, gaps):
            self.assertGreater(g, 0.0)
            self.assertAlmostEqual(g / w, gaps[-1] / omegas[-1], delta=1e-2 * gaps[-1] / omegas[-1])
        self.assertAlmostEqual(gaps[0] / gaps[1], 10.0, delta=1e-2)
        self.assertAlmostEqual(gaps[1] / gaps[2], 10.0, delta=1e-2)

    def test_straight_heading_matches_arc_limit(self):
        for theta in (0.0, 0.4, np.pi / 2, 2.5, -1.2):
            pose = Pose([1.0, 1.65, 10.0], theta, 6.0, 1e-9)
            straight = predict(pose, 0.1, MotionRegime.STRAIGHT)
            turning = predict(pose, 0.1, MotionRegime.TURNING)
            np.testing.assert_allclose(straight.t, turning.t, atol=1e-9)
            np.testing.assert_allclose(straight.t - pose.t, 0.6 * pose.heading(), atol=1e-12)
        sideways = predict(Pose(np.zeros(3), np.pi / 2, 1.0), 1.0, MotionRegime.STRAIGHT)
        np.testing.assert_allclose(sideways.t, [-1.0, 0.0, 0.0], atol=1e-12)

    def test_taylor_branch_is_continuous(self):
        dt = 0.1
        below = predict(Pose(np.zeros(3), 0.4, 6.0, 1e-3 - 1e-9), dt, MotionRegime.TURNING)
        above = predict(Pose(np.zeros(3), 0.4, 6.0, 1e-3 + 1e-9), dt, MotionRegime.TURNING)
        np.testing.assert_allclose(below.as_vector(), above.as_vector(), atol=1e-9)

    def test_turning_steps_compose(self):
        pose = Pose([1.0, 1.65, 10.0], 2.5, 5.0, 0.4)
        twice = predict(predict(pose, 0.1, MotionRegime.TURNING), 0.1, MotionRegime.TURNING)
        once = predict(pose, 0.2, MotionRegime.TURNING)
        np.testing.assert_allclose(twice.as_vector(), once.as_vector(), atol=1e-12)

    def test_straight_k_steps(self):
        pose = Pose([0.0, 1.65, 10.0], 0.3, 4.0, 0.0)
        current = pose
        for _ in range(5):
            current = predict(current, 0.1, MotionRegime.STRAIGHT)
        np.testing.assert_allclose(current.t, pose.t + 5 * 0.1 * 4.0 * pose.heading(), atol=1e-12)

    def test_dt_must_be_positive(self):
        with self.assertRaises(InputError):
            predict(Pose(np.zeros(3), 0.0, 1.0), 0.0, MotionRegime.STRAIGHT)


class TestPredictJacobian(unittest.TestCase):
    def check(self, regime, xi):
        fn = lambda x: predict(Pose.from_vector(x), 0.1, regime).as_vector()
        np.testing.assert_allclose(
            predict_jacobian(Pose.from_vector(xi), 0.1, regime), numeric_jacobian(fn, xi), atol=1e-6
        )

    def test_turning(self):
        self.check(MotionRegime.TURNING, [1.0, 1.65, 10.0, 0.5, 6.0, 0.3])

    def test_straight(self):
        self.check(MotionRegime.STRAIGHT, [1.0, 1.65, 10.0, 0.5, 6.0, 0.0])

    def test_standing(self):
        self.check(MotionRegime.STANDING, [1.0, 1.65, 10.0, 0.5, 0.0, 0.0])


class TestCovariance(unittest.TestCase):
    def test_symmetric_positive_definite(self):
        sigma = propagate_covariance(Pose([0.0, 1.65, 10.0], 0.5, 6.0, 0.3), 0.1, MotionRegime.TURNING)
        np.testing.assert_allclose(sigma, sigma.T)
        self.assertGreater(np.min(np.linalg.eigvalsh(sigma)), 0.0)

    def test_doubling_velocity_noise_halves_residual(self):
        prev = Pose([0.0, 1.65, 10.0], np.pi, 6.0, 0.0)
        predicted = predict(prev, 0.1, MotionRegime.STRAIGHT)
        deviated = Pose(predicted.t + 0.05 * prev.heading(), predicted.theta, prev.v, prev.omega)

        def norm(sigma_v):
            noise = MotionNoise(sigma_v, 0.1, 1e-10, 1e-10, 1e-10, 1e-10)
            factor = MotionFactor.linearize(prev, 0.1, MotionRegime.STRAIGHT, noise, ROAD)
            return np.linalg.norm(factor.kinematic_residual(deviated, prev))

        self.assertAlmostEqual(norm(2.0) / norm(1.0), 0.5, delta=1e-3)

    def test_noise_must_be_positive(self):
        with self.assertRaises(InputError):
            MotionNoise(sigma_v=0.0)


class TestMotionFactor(unittest.TestCase):
    def setUp(self):
        self.prev = Pose([1.0, 1.65, 10.0], 2.8, 5.0, 0.25)
        self.factor = MotionFactor.linearize(self.prev, 0.1, MotionRegime.TURNING, MotionNoise(), ROAD)

    def test_zero_at_prediction(self):
        predicted = predict(self.prev, 0.1, MotionRegime.TURNING)
        residual = motion_residual(predicted, self.prev, 0.1, MotionRegime.TURNING, MotionNoise(), ROAD)
        self.assertEqual(residual.shape, (7,))
        np.testing.assert_allclose(residual, 0.0, atol=1e-9)

    def test_plane_residual_entry(self):
        pose = Pose([1.0, 1.75, 10.5], 2.8, 5.0, 0.25)
        residual = self.factor.residual(pose, self.prev)
        self.assertAlmostEqual(residual[-1], 0.1 / 0.05)

    def test_jacobians_match_finite_differences(self):
        pose_t = Pose([1.3, 1.6, 10.4], 2.85, 5.2, 0.2)
        jac_t, jac_prev = self.factor.jacobians(self.prev)
        numeric_t = numeric_jacobian(
            lambda x: self.factor.residual(Pose.from_vector(x), self.prev), pose_t.as_vector()
        )
        numeric_prev = numeric_jacobian(
            lambda x: self.factor.residual(pose_t, Pose.from_vector(x)), self.prev.as_vector()
        )
        np.testing.assert_allclose(jac_t, numeric_t, atol=1e-4)
        np.testing.assert_allclose(jac_prev, numeric_prev, atol=1e-4)

    def test_jacobians_in_every_regime(self):
        rng = np.random.default_rng(11)
        for regime in MotionRegime:
            for _ in range(30):
                prev = Pose(
                    [rng.uniform(-5, 5), 1.65 + rng.normal(0, 0.05), rng.uniform(5, 40)],
                    rng.uniform(-np.pi, np.pi),
                    rng.uniform(0.5, 12.0),
                    rng.uniform(-0.5, 0.5),
                )
                predicted = predict(prev, 0.1, regime)
                pose_t = Pose.from_vector(predicted.as_vector() + rng.normal(0, [0.1, 0.05, 0.1, 0.02, 0.3, 0.02]))
                factor = MotionFactor.linearize(prev, 0.1, regime, MotionNoise(), ROAD)
                jac_t, jac_prev = factor.jacobians(prev)
                numeric_t = numeric_jacobian(
                    lambda x: factor.residual(Pose.from_vector(x), prev), pose_t.as_vector()
                )
                numeric_prev = numeric_jacobian(
                    lambda x: factor.residual(pose_t, Pose.from_vector(x)), prev.as_vector()
                )
                self.assertLess(relative_error(jac_t, numeric_t), 1e-4, regime)
                self.assertLess(relative_error(jac_prev, numeric_prev), 1e-4, regime)
                if regime == MotionRegime.STANDING:
                    np.testing.assert_allclose(jac_prev[:6], -factor.sqrt_information, atol=1e-12)

    def test_singular_covariance(self):
        with mock.patch(
            "src.motion.kinematics.propagate_covariance", return_value=-np.eye(6)
        ):
            with self.assertRaises(SingularCovarianceError):
                MotionFactor.linearize(self.prev, 0.1, MotionRegime.TURNING, MotionNoise(), ROAD)


class TestHelpers(unittest.TestCase):
    def test_wrap_angle(self):
        self.assertAlmostEqual(float(wrap_angle(np.pi)), np.pi)
        self.assertAlmostEqual(float(wrap_angle(-np.pi)), np.pi)
        self.assertAlmostEqual(float(wrap_angle(3 * np.pi / 2)), -np.pi / 2)

    def test_state_difference_wraps_yaw(self):
        a = np.array([0.0, 0.0, 0.0, 3.1, 0.0, 0.0])
        b = np.array([0.0, 0.0, 0.0, -3.1, 0.0, 0.0])
        self.assertAlmostEqual(state_difference(a, b)[3], 6.2 - 2 * np.pi)

    def test_lower_median(self):
        self.assertEqual(lower_median([4.0, 1.0, 3.0, 2.0]), 2.0)
        self.assertEqual(lower_median([5.0, 1.0, 3.0]), 3.0)
        with self.assertRaises(InputError):
            lower_median([])

    def test_classify(self):
        self.assertEqual(classify(0.2, 1.0), MotionRegime.STANDING)
        self.assertEqual(classify(5.0, 0.01), MotionRegime.STRAIGHT)
        self.assertEqual(classify(5.0, -0.1), MotionRegime.TURNING)
        self.assertEqual(classify(0.5, 0.0), MotionRegime.STRAIGHT)


if __name__ == "__main__":
    unittest.main()
