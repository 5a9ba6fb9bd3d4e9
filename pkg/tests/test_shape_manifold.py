import os
import sys
import tempfile
import unittest

# Add project root to path
sys.path.append(os.path.join(os.path.dirname(__file__), ".."))

import numpy as np

from src.core.errors import InputError, ManifoldError
from src.geometry.sdf_grid import GridSpec
from src.shape.car_generator import CarParameters, CarShape, car_point_cloud
from src.shape.manifold import ShapeManifold, reconstruction_rms, train
from tests.helpers import SMALL_GRID, small_manifold, small_training_grids, sphere_grid


class TestTraining(unittest.TestCase):
    def setUp(self):
        self.grids = list(small_training_grids())

    def test_full_rank_reconstruction(self):
        rms = reconstruction_rms(self.grids, len(self.grids) - 1)
        self.assertLess(np.max(rms), 1e-5)

    def test_basis_orthonormal(self):
        manifold = train(self.grids, 4)
        np.testing.assert_allclose(manifold.basis.T @ manifold.basis, np.eye(4), atol=1e-6)

    def test_eigenvalues_descending(self):
        eig = train(self.grids, 4).eigenvalues
        self.assertTrue(np.all(np.diff(eig) <= 0))

    def test_reconstruction_error_non_increasing_in_dimension(self):
        errors = [np.mean(reconstruction_rms(self.grids, r)) for r in range(1, len(self.grids))]
        self.assertTrue(all(b <= a + 1e-12 for a, b in zip(errors, errors[1:])))

    def test_explained_variance(self):
        ratio = train(self.grids, 5).explained_variance_ratio()
        self.assertTrue(np.all(np.diff(ratio) >= 0))
        self.assertAlmostEqual(ratio[-1], 1.0, places=9)

    def test_dimension_bounds(self):
        with self.assertRaises(ManifoldError):
            train(self.grids, 0)
        with self.assertRaises(ManifoldError):
            train(self.grids, len(self.grids))

    def test_needs_two_grids(self):
        with self.assertRaises(ManifoldError):
            train(self.grids[:1], 1)

    def test_inconsistent_grids(self):
        other = sphere_grid(GridSpec.centered((4, 4, 4), 0.25, 0.5), 0.3)
        with self.assertRaises(ManifoldError):
            train([self.grids[0], other], 1)

    def test_deterministic(self):
        a, b = train(self.grids, 3), train(self.grids, 3)
        np.testing.assert_array_equal(a.basis, b.basis)


class TestManifoldQueries(unittest.TestCase):
    def setUp(self):
        self.manifold = small_manifold()
        self.rng = np.random.default_rng(4)
        lower, upper = SMALL_GRID.bounds
        self.points = lower - 0.3 + self.rng.random((1000, 3)) * (upper - lower + 0.6)

    def test_encode_decode_identity(self):
        z = self.rng.normal(size=self.manifold.dimension) * self.manifold.sigmas
        np.testing.assert_allclose(self.manifold.encode(self.manifold.decode(z)), z, atol=1e-9)

    def test_phi_is_affine_in_code(self):
        r = self.manifold.dimension
        z1, z2 = self.rng.normal(size=r), self.rng.normal(size=r)
        alpha = 0.37
        mixed = self.manifold.phi(self.points, alpha * z1 + (1 - alpha) * z2)
        blend = alpha * self.manifold.phi(self.points, z1) + (1 - alpha) * self.manifold.phi(self.points, z2)
        np.testing.assert_allclose(mixed, blend, atol=1e-9)

    def test_grad_z_is_exact(self):
        z = self.rng.normal(size=self.manifold.dimension)
        grad = self.manifold.phi_grad_z(self.points)
        step = np.zeros_like(z)
        step[1] = 0.5
        delta = self.manifold.phi(self.points, z + step) - self.manifold.phi(self.points, z)
        np.testing.assert_allclose(delta, 0.5 * grad[:, 1], atol=1e-9)

    def test_grad_x_matches_finite_differences(self):
        z = self.rng.normal(size=self.manifold.dimension) * self.manifold.sigmas
        points = self.rng.uniform(-0.6, 0.6, size=(40, 3)) + np.array([0.0, -0.85, 0.0])
        h = 1e-6
        numeric = np.zeros_like(points)
        for axis in range(3):
            step = np.zeros(3)
            step[axis] = h
            numeric[:, axis] = (
                self.manifold.phi(points + step, z) - self.manifold.phi(points - step, z)
            ) / (2 * h)
        np.testing.assert_allclose(self.manifold.phi_grad_x(points, z), numeric, atol=1e-5)

    def test_decode_grid_matches_lazy_evaluation(self):
        z = self.rng.normal(size=self.manifold.dimension)
        grid = self.manifold.decode_grid(z)
        np.testing.assert_allclose(grid(self.points), self.manifold.phi(self.points, z), atol=1e-9)
        evaluator = self.manifold.evaluator(z)
        np.testing.assert_allclose(evaluator(self.points), grid(self.points), atol=1e-9)

    def test_shape_prior(self):
        self.assertAlmostEqual(self.manifold.shape_prior(self.manifold.sigmas), self.manifold.dimension)
        self.assertEqual(self.manifold.shape_prior(np.zeros(self.manifold.dimension)), 0.0)

    def test_code_length_checked(self):
        with self.assertRaises(InputError):
            self.manifold.decode(np.zeros(self.manifold.dimension + 1))


class TestManifoldFile(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.manifold = small_manifold()

    def tearDown(self):
        self.tmp.cleanup()

    def test_save_load(self):
        path = os.path.join(self.tmp.name, "cars.sman")
        self.manifold.save(path)
        loaded = ShapeManifold.load(path)
        self.assertEqual(loaded.spec.dims, self.manifold.spec.dims)
        self.assertEqual(loaded.dimension, self.manifold.dimension)
        np.testing.assert_allclose(loaded.mean, self.manifold.mean, atol=1e-6)
        np.testing.assert_allclose(loaded.basis.T @ loaded.basis, np.eye(loaded.dimension), atol=1e-5)

    def test_byte_identical_rewrite(self):
        a = os.path.join(self.tmp.name, "a.sman")
        b = os.path.join(self.tmp.name, "b.sman")
        self.manifold.save(a)
        train(list(small_training_grids()), self.manifold.dimension).save(b)
        with open(a, "rb") as fa, open(b, "rb") as fb:
            self.assertEqual(fa.read(), fb.read())

    def test_missing_and_corrupt(self):
        with self.assertRaises(ManifoldError):
            ShapeManifold.load(os.path.join(self.tmp.name, "missing.sman"))
        path = os.path.join(self.tmp.name, "corrupt.sman")
        with open(path, "wb") as f:
            f.write(b"SMAN" + bytes(12))
        with self.assertRaises(ManifoldError):
            ShapeManifold.load(path)

    def test_short_file_is_a_manifold_error(self):
        full = os.path.join(self.tmp.name, "full.sman")
        self.manifold.save(full)
        with open(full, "rb") as f:
            header = f.read(40)
        for size in (0, 2, 6, 20, 39):
            path = os.path.join(self.tmp.name, f"short_{size}.sman")
            with open(path, "wb") as f:
                f.write(header[:size])
            with self.assertRaises(ManifoldError) as ctx:
                ShapeManifold.load(path)
            self.assertIn("truncated", str(ctx.exception))


class TestCarGenerator(unittest.TestCase):
    def test_inside_and_outside(self):
        car = CarShape(CarParameters())
        inside = np.array([[0.0, -0.6, 0.0]])
        outside = np.array([[0.0, -0.6, 5.0]])
        self.assertLess(car(inside)[0], 0.0)
        self.assertGreater(car(outside)[0], 0.0)

    def test_point_cloud_on_surface(self):
        params = CarParameters()
        points, normals = car_point_cloud(params, n_rays=2000, seed=1)
        self.assertGreater(len(points), 100)
        self.assertLess(np.max(np.abs(CarShape(params)(points))), 1e-3)
        np.testing.assert_allclose(np.linalg.norm(normals, axis=1), 1.0, atol=1e-6)

    def test_training_grids_fit_small_grid(self):
        grids = small_training_grids()
        for grid in grids:
            self.assertEqual(grid.spec, SMALL_GRID)
            self.assertLess(grid(np.array([[0.0, -0.6, 0.0]]))[0], 0.0)


if __name__ == "__main__":
    unittest.main()
