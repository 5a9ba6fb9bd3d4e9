import os
import sys
import tempfile
import unittest
from dataclasses import replace

# Add project root to path
sys.path.append(os.path.join(os.path.dirname(__file__), ".."))

import numpy as np

from src.config.settings import LMSettings, RenderSettings
from src.core.errors import InputError
from src.ingest.association import Initialization, associate, initialize
from src.motion.kinematics import MotionRegime, Pose, wrap_angle
from src.optimizer.energy import Problem
from src.optimizer.solver import FitResult, damped_step, levenberg_marquardt, solve, solve_single_frame
from src.synth.generator import generate
from src.synth.presets import get_preset
from src.utils.observability.tracing import IterationTracer, read_report
from tests.helpers import fast_config, small_manifold, small_scenario


class TestDampedStep(unittest.TestCase):
    def test_matches_dense_solve(self):
        rng = np.random.default_rng(0)
        jac = rng.normal(size=(40, 15))
        hessian = jac.T @ jac
        gradient = rng.normal(size=15)
        for damping in (0.0, 1e-3, 10.0):
            scaling = np.diag(np.maximum(np.diag(hessian), 1e-6))
            expected = np.linalg.solve(hessian + damping * scaling, -gradient)
            np.testing.assert_allclose(damped_step(hessian, gradient, damping, 3), expected, atol=1e-9)

    def test_without_shape_block(self):
        hessian = np.diag([2.0, 4.0])
        step = damped_step(hessian, np.array([2.0, 4.0]), 1.0, 0)
        np.testing.assert_allclose(step, [-0.5, -0.5])


class FitCase(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.manifold = small_manifold()
        cls.scene = generate(small_scenario(), cls.manifold)
        cls.truth = cls.scene.ground_truth
        cls.config = fast_config()
        cls.fit = solve(cls.scene.track, cls.manifold, cls.config)


class TestLevenbergMarquardt(FitCase):
    def test_energy_never_increases(self):
        track = associate(self.scene.track)
        init = initialize(track, self.manifold)
        problem = Problem(self.manifold, track, self.config.energy, init.regime, init.poses, inflation=2.0)
        outcome = levenberg_marquardt(problem, problem.pack(init.z, init.poses), self.config.energy.lm)
        self.assertTrue(all(b <= a for a, b in zip(outcome.history, outcome.history[1:])))
        self.assertEqual(outcome.history[-1], outcome.energy.total)
        self.assertLessEqual(outcome.iterations, self.config.energy.lm.max_iterations)

    def test_iteration_budget(self):
        track = associate(self.scene.track)
        init = initialize(track, self.manifold)
        lm = self.config.energy.lm.model_copy(update={"max_iterations": 1, "cost_tol": 1e-300})
        problem = Problem(self.manifold, track, self.config.energy, init.regime, init.poses)
        outcome = levenberg_marquardt(problem, problem.pack(init.z, init.poses), lm)
        self.assertEqual(outcome.iterations, 1)


class TestSolve(FitCase):
    def test_recovers_trajectory(self):
        self.assertEqual(len(self.fit.poses), len(self.truth.poses))
        for fitted, true in zip(self.fit.poses, self.truth.poses):
            self.assertLess(np.linalg.norm(fitted.t - true.t), 0.25)
            self.assertLess(abs(float(wrap_angle(fitted.theta - true.theta))), 0.1)
        self.assertEqual(self.fit.regime, MotionRegime.STRAIGHT)

    def test_energy_history(self):
        for summary in self.fit.passes:
            history = summary.history
            self.assertTrue(all(b <= a for a, b in zip(history, history[1:])))
        self.assertEqual(self.fit.passes[0].pass_index, 0)
        self.assertGreaterEqual(len(self.fit.passes), 2)
        self.assertEqual(self.fit.iterations, sum(p.iterations for p in self.fit.passes))

    def test_energy_history_keeps_every_pass(self):
        self.assertEqual(len(self.fit.energy_history), len(self.fit.passes))
        for history, summary in zip(self.fit.energy_history, self.fit.passes):
            self.assertEqual(history, list(summary.history))
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "small.fit.json")
            self.fit.save(path)
            loaded = FitResult.load(path)
        self.assertEqual(loaded.energy_history, self.fit.energy_history)
        self.assertEqual([p.pass_index for p in loaded.passes], [p.pass_index for p in self.fit.passes])
        for a, b in zip(loaded.passes, self.fit.passes):
            self.assertEqual(list(a.history), list(b.history))

    def test_result_metadata(self):
        self.assertEqual(self.fit.track_id, "small")
        self.assertEqual(self.fit.frame_indices, list(range(6)))
        self.assertEqual(len(self.fit.frame_rms), 6)
        self.assertTrue(all(rms is not None and rms < 0.2 for rms in self.fit.frame_rms))
        self.assertEqual(self.fit.observation_free, [])
        self.assertEqual(len(self.fit.detections), 6)

    def test_save_load(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "fits", "small.fit.json")
            self.fit.save(path)
            loaded = FitResult.load(path)
        np.testing.assert_allclose(loaded.z, self.fit.z)
        self.assertEqual(loaded.regime, self.fit.regime)
        self.assertEqual(loaded.converged, self.fit.converged)
        self.assertAlmostEqual(loaded.energy.total, self.fit.energy.total)
        for a, b in zip(loaded.poses, self.fit.poses):
            np.testing.assert_allclose(a.as_vector(), b.as_vector())
        self.assertEqual(loaded.calibration, self.fit.calibration)

    def test_load_errors(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(InputError):
                FitResult.load(os.path.join(tmp, "missing.json"))
            path = os.path.join(tmp, "bad.json")
            with open(path, "w") as f:
                f.write('{"track_id": "x"}')
            with self.assertRaises(InputError):
                FitResult.load(path)

    def test_tracer_report(self):
        with tempfile.TemporaryDirectory() as tmp:
            report = os.path.join(tmp, "report.jsonl")
            config = fast_config()
            config = config.model_copy(update={"energy": config.energy.model_copy(update={"em_passes": 0})})
            fit = solve(self.scene.track, self.manifold, config, tracer=IterationTracer(report))
            rows = read_report(report)
        self.assertEqual(len(rows), fit.iterations)
        self.assertTrue(all(row["track_id"] == "small" for row in rows))
        self.assertEqual(len(fit.passes), 1)


class TestSingleFrame(FitCase):
    def test_one_result_per_frame(self):
        results = solve_single_frame(self.scene.track, self.manifold, self.config)
        self.assertEqual(len(results), self.scene.track.length)
        for k, result in enumerate(results):
            self.assertEqual(result.track_id, f"small:{k}")
            self.assertEqual(len(result.poses), 1)
            self.assertLess(np.linalg.norm(result.poses[0].t - self.truth.poses[k].t), 0.5)

    def test_observation_free_frame_keeps_seed(self):
        scene = generate(small_scenario(occluded_frames=[1]), self.manifold)
        results = solve_single_frame(scene.track, self.manifold, self.config)
        self.assertEqual(results[1].iterations, 0)
        self.assertEqual(results[1].observation_free, [1])


SMALL_IMAGE = {"width": 320, "height": 160, "f_px": 300.0}
EXACT_RENDER = RenderSettings(surface_tol=1e-6, max_steps=256)


def noise_free_scene(manifold, preset: str):
    spec = get_preset(preset).model_copy(update=SMALL_IMAGE)
    return generate(spec, manifold, render=EXACT_RENDER)


def perturbed_init(truth, dimension: int, seed: int = 5) -> Initialization:
    """True poses moved 0.3 m in a random horizontal direction and turned by 5 degrees."""
    rng = np.random.default_rng(seed)
    poses = []
    for p in truth.poses:
        angle = rng.uniform(0.0, 2 * np.pi)
        shift = 0.3 * np.array([np.cos(angle), 0.0, np.sin(angle)])
        turn = np.radians(5.0) * rng.choice([-1.0, 1.0])
        poses.append(Pose(p.t + shift, p.theta + turn, p.v, p.omega))
    first = truth.poses[0]
    return Initialization(np.zeros(dimension), poses, truth.regime, first.v, first.omega)


def field_rms(manifold, z_a, z_b) -> float:
    return float(np.sqrt(np.mean((manifold.decode(z_a) - manifold.decode(z_b)) ** 2)))


def reversed_track(track):
    """Frames in reverse order, re-timed so time still increases."""
    end = track.frames[-1].timestamp
    frames = [
        replace(frame, index=k, timestamp=end - frame.timestamp)
        for k, frame in enumerate(reversed(track.frames))
    ]
    return replace(track, frames=frames)


class TestNoiseFreeRecovery(unittest.TestCase):
    PRESETS = ("straight-20-frames", "turn-20-frames", "static-20-frames")

    @classmethod
    def setUpClass(cls):
        cls.manifold = small_manifold()
        cls.config = fast_config(lm=LMSettings())
        exact_lm = LMSettings(gradient_tol=1e-12)
        cls.unregularized = fast_config(shape_prior_weight=0.0, lm=exact_lm)
        cls.scenes = {name: noise_free_scene(cls.manifold, name) for name in cls.PRESETS}

    def test_recovers_shape_and_trajectory(self):
        for name in self.PRESETS:
            with self.subTest(preset=name):
                scene = self.scenes[name]
                truth = scene.ground_truth
                init = perturbed_init(truth, self.manifold.dimension)
                fit = solve(scene.track, self.manifold, self.config, init=init)
                self.assertTrue(fit.converged)
                self.assertEqual(fit.regime, truth.regime)
                for fitted, true in zip(fit.poses, truth.poses):
                    self.assertLess(np.linalg.norm(fitted.t - true.t), 1e-3)
                    self.assertLess(abs(float(wrap_angle(fitted.theta - true.theta))), np.radians(0.01))
                self.assertLess(field_rms(self.manifold, fit.z, truth.z), 1e-3)

    def test_reversed_frames_give_mirrored_optimum(self):
        scene = self.scenes["straight-20-frames"]
        truth = scene.ground_truth
        init = perturbed_init(truth, self.manifold.dimension)
        forward = solve(scene.track, self.manifold, self.unregularized, init=init)

        backward_poses = [Pose(p.t, p.theta, -p.v, -p.omega) for p in reversed(init.poses)]
        backward_init = Initialization(init.z, backward_poses, init.regime, -init.speed, -init.yaw_rate)
        backward = solve(reversed_track(scene.track), self.manifold, self.unregularized, init=backward_init)

        self.assertEqual(backward.regime, forward.regime)
        for a, b in zip(forward.poses, reversed(backward.poses)):
            np.testing.assert_allclose(a.t, b.t, atol=1e-6)
            self.assertLess(abs(float(wrap_angle(a.theta - b.theta))), 1e-6)
            self.assertLess(abs(a.v + b.v), 1e-4)
        self.assertLess(field_rms(self.manifold, forward.z, backward.z), 1e-6)

    def test_motion_terms_do_not_move_static_optimum(self):
        scene = self.scenes["static-20-frames"]
        init = perturbed_init(scene.ground_truth, self.manifold.dimension)
        without = self.unregularized.model_copy(
            update={"energy": self.unregularized.energy.model_copy(update={"use_motion_term": False})}
        )
        with_motion = solve(scene.track, self.manifold, self.unregularized, init=init)
        data_only = solve(scene.track, self.manifold, without, init=init)
        for a, b in zip(with_motion.poses, data_only.poses):
            np.testing.assert_allclose(a.t, b.t, atol=1e-6)
            self.assertLess(abs(float(wrap_angle(a.theta - b.theta))), 1e-6)
        self.assertLess(field_rms(self.manifold, with_motion.z, data_only.z), 1e-6)


if __name__ == "__main__":
    unittest.main()
