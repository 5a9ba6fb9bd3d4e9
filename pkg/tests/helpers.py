"""Shared fixtures: a coarse grid, a small cached car manifold and tiny scenarios."""

import functools
import os
import sys

sys.path.append(os.path.join(os.path.dirname(__file__), ".."))

import numpy as np

from src.config.settings import PipelineConfig
from src.geometry.sdf_grid import GridSpec, SdfGrid
from src.ingest.track_io import Calibration, CameraPose, Detection, Frame, Track
from src.models.records import ScenarioSpec
from src.motion.ground_plane import GroundPlane
from src.shape.car_generator import training_grids
from src.shape.manifold import ShapeManifold, train

SMALL_GRID = GridSpec.centered((16, 12, 24), 0.25, 0.5, (0.0, -0.85, 0.0))


class Sphere:
    """Analytic sphere SDF with bounds."""

    def __init__(self, radius=1.0, center=(0.0, 0.0, 0.0), margin=0.2):
        self.radius = radius
        self.center = np.asarray(center, dtype=np.float64)
        pad = radius + margin
        self.bounds = (self.center - pad, self.center + pad)

    def __call__(self, points):
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return np.linalg.norm(p - self.center, axis=1) - self.radius


def fibonacci_sphere(n, radius=1.0, center=(0.0, 0.0, 0.0)):
    i = np.arange(n) + 0.5
    polar = np.arccos(1 - 2 * i / n)
    azimuth = np.pi * (1 + 5**0.5) * i
    unit = np.stack(
        [np.cos(azimuth) * np.sin(polar), np.sin(azimuth) * np.sin(polar), np.cos(polar)], axis=1
    )
    return np.asarray(center) + radius * unit, unit


def sphere_grid(spec: GridSpec, radius: float, center=(0.0, 0.0, 0.0)) -> SdfGrid:
    distance = np.linalg.norm(spec.centers() - np.asarray(center), axis=1) - radius
    return SdfGrid(spec, np.clip(distance, -spec.truncation, spec.truncation))


@functools.lru_cache(maxsize=None)
def small_training_grids(count: int = 6, seed: int = 3):
    return tuple(training_grids(count, SMALL_GRID, seed=seed, n_rays=4000))


@functools.lru_cache(maxsize=None)
def small_manifold(dimension: int = 3) -> ShapeManifold:
    return train(list(small_training_grids()), dimension)


def small_scenario(**overrides) -> ScenarioSpec:
    base = dict(
        name="small",
        regime="straight",
        speed=6.0,
        start_x=2.0,
        start_z=12.0,
        start_yaw=np.pi,
        frames=6,
        f_px=300.0,
        width=320,
        height=160,
        clutter_points=120,
        detection_sigma_t=0.0,
        detection_sigma_yaw=0.0,
        seed=7,
    )
    base.update(overrides)
    return ScenarioSpec(**base)


def fast_config(**energy) -> PipelineConfig:
    config = PipelineConfig()
    update = {
        "shape_prior_weight": 1e-6,
        "lm": config.energy.lm.model_copy(update={"max_iterations": 60}),
    }
    update.update(energy)
    return config.model_copy(update={"energy": config.energy.model_copy(update=update)})


def box_track(frames: int = 3, points_per_frame: int = 40, seed: int = 0, track_id: str = "box") -> Track:
    """Track of random points on a box above a y = 1.65 road, moving along -z at 2 m/s."""
    rng = np.random.default_rng(seed)
    calibration = Calibration(721.0, 0.54, 1.0)
    plane = GroundPlane.horizontal(1.65, 0.05**2)
    result = []
    for k in range(frames):
        center = np.array([1.0, 1.65, 15.0 - 0.2 * k])
        body = center + rng.uniform([-0.9, -1.5, -2.2], [0.9, -0.2, 2.2], size=(points_per_frame, 3))
        road = np.column_stack(
            [
                center[0] + rng.uniform(-2.5, 2.5, 20),
                np.full(20, 1.65),
                center[2] + rng.uniform(-2.5, 2.5, 20),
            ]
        )
        far = center + np.array([[5.0, -0.5, 0.0]])
        points = np.vstack([body, road, far])
        camera = CameraPose()
        result.append(
            Frame(
                index=k,
                timestamp=0.1 * k,
                points=points,
                depths=camera.depth(points),
                detection=Detection(center, 0.0, np.array([1.8, 1.5, 4.4]), 0.9, k),
                plane=plane,
                camera=camera,
                cloud=f"clouds/frame_{k:04d}.xyz",
            )
        )
    return Track(track_id, result, calibration)
