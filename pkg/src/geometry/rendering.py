"""
Depth rendering and surface sampling of SDF evaluators by sphere tracing.

An evaluator is any callable mapping an (N, 3) array of object-frame
points to N signed distances. Evaluators may expose a `bounds` attribute
(lower, upper) limiting where rays are marched.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from src.config.settings import RenderSettings
from src.core.errors import RenderError
from src.utils.observability.logging_utils import log_event
from src.utils.validators import as_points, require_positive

Evaluator = Callable[[np.ndarray], np.ndarray]
Bounds = Tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class Camera:
    """Pinhole camera; x right, y down, z forward. x_cam = R x_obj + t."""

    f: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        require_positive(self.f, "f", RenderError)
        if int(self.width) < 1 or int(self.height) < 1:
            raise RenderError(f"image size must be positive, got {self.width}x{self.height}")
        rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    def with_pose(self, rotation, translation) -> "Camera":
        return Camera(self.f, self.cx, self.cy, self.width, self.height, rotation, translation)

    @property
    def center_in_object(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    def pixel_grid(self) -> Tuple[np.ndarray, np.ndarray]:
        v, u = np.mgrid[0 : self.height, 0 : self.width]
        return u.astype(np.float64), v.astype(np.float64)

    def project(self, points_cam: np.ndarray) -> np.ndarray:
        """(N, 2) pixel coordinates of camera-frame points."""
        p = as_points(points_cam)
        return np.stack(
            [self.f * p[:, 0] / p[:, 2] + self.cx, self.f * p[:, 1] / p[:, 2] + self.cy], axis=1
        )


@dataclass
class DepthMap:
    depth: np.ndarray  # (H, W) z-depth in metres, 0 where invalid
    valid: np.ndarray  # (H, W) bool
    camera_inside: bool = False

    @property
    def num_valid(self) -> int:
        return int(self.valid.sum())


def evaluator_bounds(evaluator, fallback: Optional[Bounds] = None) -> Optional[Bounds]:
    bounds = getattr(evaluator, "bounds", None)
    if bounds is None:
        return fallback
    lower, upper = bounds
    return np.asarray(lower, dtype=np.float64), np.asarray(upper, dtype=np.float64)


def ray_box_interval(
    origins: np.ndarray, directions: np.ndarray, bounds: Bounds
) -> Tuple[np.ndarray, np.ndarray]:
    """Slab test: entry and exit ray parameters (t_near > t_far means a miss)."""
    lower, upper = bounds
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / directions
        t0 = (lower - origins) * inv
        t1 = (upper - origins) * inv
    t_small = np.where(np.isnan(t0), -np.inf, np.minimum(t0, t1))
    t_large = np.where(np.isnan(t1), np.inf, np.maximum(t0, t1))
    t_near = np.maximum(np.max(t_small, axis=1), 0.0)
    t_far = np.min(t_large, axis=1)
    return t_near, t_far


def sphere_trace(
    evaluator: Evaluator,
    origins: np.ndarray,
    directions: np.ndarray,
    t_near: np.ndarray,
    t_far: np.ndarray,
    settings: Optional[RenderSettings] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """March unit-direction rays from t_near; returns (ray parameter, hit mask)."""
    settings = settings or RenderSettings()
    t = np.array(t_near, dtype=np.float64)
    hit = np.zeros(len(t), dtype=bool)
    active = t_near <= t_far

    for _ in range(settings.max_steps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        distance = np.asarray(evaluator(origins[idx] + t[idx, None] * directions[idx]))
        done = np.abs(distance) < settings.surface_tol
        hit[idx[done]] = True
        active[idx[done]] = False

        moving = idx[~done]
        t[moving] += settings.step_safety * distance[~done]
        escaped = (t[moving] > t_far[moving]) | (t[moving] < t_near[moving] - settings.surface_tol)
        active[moving[escaped]] = False
    return t, hit


def render_depth(
    evaluator: Evaluator,
    camera: Camera,
    image_size: Optional[Tuple[int, int]] = None,
    settings: Optional[RenderSettings] = None,
) -> DepthMap:
    """Per-pixel z-depth of the first zero crossing seen by `camera`."""
    settings = settings or RenderSettings()
    if image_size is not None:
        width, height = image_size
        camera = Camera(camera.f, camera.cx, camera.cy, width, height, camera.rotation, camera.translation)

    shape = (camera.height, camera.width)
    origin = camera.center_in_object
    if float(np.asarray(evaluator(origin[None, :]))[0]) < 0.0:
        log_event("Renderer", "camera inside object; depth map invalid", level="warning")
        return DepthMap(np.zeros(shape), np.zeros(shape, dtype=bool), camera_inside=True)

    u, v = camera.pixel_grid()
    rays_cam = np.stack(
        [(u.ravel() - camera.cx) / camera.f, (v.ravel() - camera.cy) / camera.f, np.ones(u.size)],
        axis=1,
    )
    norms = np.linalg.norm(rays_cam, axis=1)
    directions = (rays_cam / norms[:, None]) @ camera.rotation
    origins = np.broadcast_to(origin, directions.shape)

    bounds = evaluator_bounds(evaluator)
    if bounds is None:
        t_near = np.zeros(len(directions))
        t_far = np.full(len(directions), settings.max_depth)
    else:
        t_near, t_far = ray_box_interval(origins, directions, bounds)

    t, hit = sphere_trace(evaluator, origins, directions, t_near, t_far, settings)
    depth = np.where(hit, t / norms, 0.0).reshape(shape)
    return DepthMap(depth, hit.reshape(shape))


def backproject(depth_map: DepthMap, camera: Camera, mask=None, frame: str = "camera") -> np.ndarray:
    """Valid pixels lifted to 3D in the camera frame (or object frame)."""
    valid = depth_map.valid if mask is None else depth_map.valid & np.asarray(mask, dtype=bool)
    u, v = camera.pixel_grid()
    d = depth_map.depth[valid]
    points = np.stack(
        [(u[valid] - camera.cx) / camera.f * d, (v[valid] - camera.cy) / camera.f * d, d], axis=1
    )
    if frame == "object":
        points = (points - camera.translation) @ camera.rotation
    return points.reshape(-1, 3)


def extract_surface_points(
    evaluator: Evaluator,
    n_rays: int,
    seed: int = 0,
    bounds: Optional[Bounds] = None,
    settings: Optional[RenderSettings] = None,
) -> np.ndarray:
    """
    Surface samples with |phi| < surface_tol.

    Rays start on a sphere enclosing the bounds and aim at uniform random
    points inside the box, so concave regions still get hit.
    """
    settings = settings or RenderSettings()
    bounds = bounds if bounds is not None else evaluator_bounds(evaluator)
    if bounds is None:
        raise RenderError("extract_surface_points needs bounds for an unbounded evaluator")
    lower, upper = (np.asarray(b, dtype=np.float64) for b in bounds)
    rng = np.random.default_rng(seed)

    center = 0.5 * (lower + upper)
    radius = 0.5 * np.linalg.norm(upper - lower) + 1e-3
    on_sphere = rng.normal(size=(n_rays, 3))
    on_sphere /= np.linalg.norm(on_sphere, axis=1, keepdims=True)
    origins = center + radius * on_sphere
    targets = lower + rng.random((n_rays, 3)) * (upper - lower)
    directions = targets - origins
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)

    t_near, t_far = ray_box_interval(origins, directions, (lower, upper))
    t, hit = sphere_trace(evaluator, origins, directions, t_near, t_far, settings)
    points = origins[hit] + t[hit, None] * directions[hit]
    if len(points) == 0:
        log_event("Renderer", "empty zero-level set", level="warning", rays=n_rays)
    return points.reshape(-1, 3)
