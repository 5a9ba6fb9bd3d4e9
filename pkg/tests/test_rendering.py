import os
import sys
import unittest

# Add project root to path
sys.path.append(os.path.join(os.path.dirname(__file__), ".."))

import numpy as np

from src.core.errors import RenderError
from src.geometry.rendering import Camera, backproject, extract_surface_points, render_depth
from src.motion.kinematics import yaw_rotation
from tests.helpers import Sphere


class TestRenderDepth(unittest.TestCase):
    def setUp(self):
        self.camera = Camera(100.0, 32.0, 24.0, 64, 48)
        self.sphere = Sphere(1.0, (0.0, 0.0, 5.0))

    def test_central_pixel_depth(self):
        depth_map = render_depth(self.sphere, self.camera)
        self.assertTrue(depth_map.valid[24, 32])
        self.assertAlmostEqual(depth_map.depth[24, 32], 4.0, delta=2e-3)
        self.assertFalse(depth_map.valid[0, 0])
        self.assertGreater(depth_map.num_valid, 100)

    def test_unbounded_evaluator_uses_max_depth(self):
        unbounded = lambda p: np.linalg.norm(np.asarray(p).reshape(-1, 3) - [0.0, 0.0, 5.0], axis=1) - 1.0
        depth_map = render_depth(unbounded, self.camera)
        self.assertAlmostEqual(depth_map.depth[24, 32], 4.0, delta=2e-3)

    def test_camera_inside_object(self):
        depth_map = render_depth(Sphere(2.0), self.camera)
        self.assertTrue(depth_map.camera_inside)
        self.assertEqual(depth_map.num_valid, 0)

    def test_image_size_override(self):
        depth_map = render_depth(self.sphere, self.camera, image_size=(32, 16))
        self.assertEqual(depth_map.depth.shape, (16, 32))

    def test_backprojection_lies_on_surface(self):
        depth_map = render_depth(self.sphere, self.camera)
        points = backproject(depth_map, self.camera)
        self.assertEqual(len(points), depth_map.num_valid)
        np.testing.assert_allclose(np.abs(self.sphere(points)), 0.0, atol=2e-3)

    def test_backprojection_identity(self):
        depth_map = render_depth(self.sphere, self.camera)
        points = backproject(depth_map, self.camera)
        rows, cols = np.nonzero(depth_map.valid)
        pixels = self.camera.project(points)
        np.testing.assert_allclose(pixels[:, 0], cols, atol=1e-9)
        np.testing.assert_allclose(pixels[:, 1], rows, atol=1e-9)
        np.testing.assert_allclose(points[:, 2], depth_map.depth[rows, cols], atol=1e-12)

    def test_posed_camera_object_frame(self):
        # Object at the origin, camera 5 m away and rotated about y.
        rotation = yaw_rotation(0.4)
        camera = self.camera.with_pose(rotation, np.array([0.0, 0.0, 5.0]))
        sphere = Sphere(1.0)
        depth_map = render_depth(sphere, camera)
        self.assertGreater(depth_map.num_valid, 0)
        points = backproject(depth_map, camera, frame="object")
        np.testing.assert_allclose(np.linalg.norm(points, axis=1), 1.0, atol=2e-3)

    def test_mask_restricts_pixels(self):
        depth_map = render_depth(self.sphere, self.camera)
        mask = np.zeros_like(depth_map.valid)
        mask[24, 32] = True
        self.assertEqual(len(backproject(depth_map, self.camera, mask)), 1)

    def test_invalid_camera(self):
        with self.assertRaises(RenderError):
            Camera(0.0, 1.0, 1.0, 10, 10)


class TestSurfaceExtraction(unittest.TestCase):
    def test_points_on_level_set(self):
        sphere = Sphere(0.8)
        points = extract_surface_points(sphere, 2000, seed=3)
        self.assertGreater(len(points), 400)
        self.assertLess(np.max(np.abs(sphere(points))), 1e-3)

    def test_deterministic(self):
        sphere = Sphere(0.8)
        np.testing.assert_array_equal(
            extract_surface_points(sphere, 300, seed=5), extract_surface_points(sphere, 300, seed=5)
        )

    def test_empty_level_set(self):
        class Nothing:
            bounds = (np.full(3, -1.0), np.full(3, 1.0))

            def __call__(self, points):
                return np.ones(len(np.asarray(points).reshape(-1, 3)))

        points = extract_surface_points(Nothing(), 100)
        self.assertEqual(points.shape, (0, 3))

    def test_unbounded_needs_bounds(self):
        with self.assertRaises(RenderError):
            extract_surface_points(lambda p: np.zeros(len(p)), 10)


if __name__ == "__main__":
    unittest.main()
