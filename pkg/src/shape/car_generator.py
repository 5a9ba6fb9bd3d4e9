"""
Parametric synthetic cars used as manifold training shapes.

A car is the union of a body box, a cabin box cut by slanted windshield and
rear-window planes, and four wheel cylinders. Coordinates follow the
canonical object frame: origin on the ground below the vehicle centre,
x lateral, y down, z longitudinal with the front at -z.
"""

from dataclasses import asdict, dataclass
from typing import List, Optional, Tuple

import numpy as np

from src.geometry.rendering import extract_surface_points
from src.geometry.sdf_grid import GridSpec, SdfGrid, build_sdf_from_points
from src.utils.observability.logging_utils import log_event

WHEEL_RADIUS = 0.32
WHEEL_WIDTH = 0.22
CABIN_INSET = 0.08


@dataclass(frozen=True)
class CarParameters:
    length: float = 4.4
    width: float = 1.78
    clearance: float = 0.22
    body_height: float = 0.68
    cabin_height: float = 0.5
    cabin_fraction: float = 0.48
    cabin_offset: float = 0.15  # cabin centre behind the body centre (+z)
    windshield_slope: float = 1.2  # horizontal run per unit rise
    rear_slope: float = 0.7

    @property
    def height(self) -> float:
        return self.clearance + self.body_height + self.cabin_height

    def to_dict(self):
        return asdict(self)


def _box(p: np.ndarray, center, half) -> np.ndarray:
    q = np.abs(p - np.asarray(center)) - np.asarray(half)
    return np.linalg.norm(np.maximum(q, 0.0), axis=1) + np.minimum(q.max(axis=1), 0.0)


def _wheel(p: np.ndarray, center, radius: float, half_width: float) -> np.ndarray:
    d = p - np.asarray(center)
    radial = np.hypot(d[:, 1], d[:, 2]) - radius
    axial = np.abs(d[:, 0]) - half_width
    q = np.stack([radial, axial], axis=1)
    return np.linalg.norm(np.maximum(q, 0.0), axis=1) + np.minimum(q.max(axis=1), 0.0)


def _halfspace(p: np.ndarray, point, normal) -> np.ndarray:
    n = np.asarray(normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    return (p - np.asarray(point)) @ n


class CarShape:
    """Analytic (lower-bound) signed distance of a parametric car."""

    def __init__(self, params: CarParameters, margin: float = 0.3):
        self.params = params
        half_l, half_w = params.length / 2, params.width / 2
        self._bounds = (
            np.array([-half_w - margin, -params.height - margin, -half_l - margin]),
            np.array([half_w + margin, margin, half_l + margin]),
        )

    @property
    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        return self._bounds

    def __call__(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        c = self.params
        body_top = -(c.clearance + c.body_height)
        roof = -c.height

        body = _box(
            p,
            (0.0, -(c.clearance + c.body_height / 2), 0.0),
            (c.width / 2, c.body_height / 2, c.length / 2),
        )

        cabin_len = c.cabin_fraction * c.length
        cabin_z = float(np.clip(c.cabin_offset, -(c.length - cabin_len) / 2, (c.length - cabin_len) / 2))
        cabin_front, cabin_back = cabin_z - cabin_len / 2, cabin_z + cabin_len / 2
        overlap = 0.05
        cabin = _box(
            p,
            (0.0, (roof + body_top + overlap) / 2, cabin_z),
            (c.width / 2 - CABIN_INSET, (body_top + overlap - roof) / 2, cabin_len / 2),
        )
        windshield = _halfspace(p, (0.0, body_top, cabin_front), (0.0, -c.windshield_slope, -1.0))
        rear = _halfspace(p, (0.0, body_top, cabin_back), (0.0, -c.rear_slope, 1.0))
        cabin = np.maximum(cabin, np.maximum(windshield, rear))

        shape = np.minimum(body, cabin)
        axle = c.length / 2 - max(0.75, 0.2 * c.length)
        for x in (-(c.width / 2 - WHEEL_WIDTH / 2), c.width / 2 - WHEEL_WIDTH / 2):
            for z in (-axle, axle):
                wheel = _wheel(p, (x, -WHEEL_RADIUS, z), WHEEL_RADIUS, WHEEL_WIDTH / 2)
                shape = np.minimum(shape, wheel)
        return shape

    def normals(self, points, h: float = 1e-4) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        grad = np.empty_like(p)
        for axis in range(3):
            step = np.zeros(3)
            step[axis] = h
            grad[:, axis] = (self(p + step) - self(p - step)) / (2 * h)
        norm = np.linalg.norm(grad, axis=1, keepdims=True)
        return grad / np.where(norm > 0, norm, 1.0)


def sample_car_parameters(rng: np.random.Generator) -> CarParameters:
    return CarParameters(
        length=rng.uniform(3.8, 4.9),
        width=rng.uniform(1.65, 1.9),
        clearance=rng.uniform(0.16, 0.28),
        body_height=rng.uniform(0.55, 0.8),
        cabin_height=rng.uniform(0.4, 0.6),
        cabin_fraction=rng.uniform(0.4, 0.55),
        cabin_offset=rng.uniform(-0.1, 0.4),
        windshield_slope=rng.uniform(0.8, 1.6),
        rear_slope=rng.uniform(0.3, 1.2),
    )


def car_point_cloud(
    params: CarParameters, n_rays: int = 20000, seed: int = 0
) -> Tuple[np.ndarray, np.ndarray]:
    """Surface points and outward normals of one car."""
    shape = CarShape(params)
    points = extract_surface_points(shape, n_rays, seed=seed)
    return points, shape.normals(points)


def training_grids(
    count: int,
    spec: GridSpec,
    seed: int = 0,
    n_rays: int = 20000,
    params: Optional[List[CarParameters]] = None,
) -> List[SdfGrid]:
    """`count` random cars turned into truncated SDF grids over `spec`."""
    rng = np.random.default_rng(seed)
    params = params or [sample_car_parameters(rng) for _ in range(count)]
    streams = np.random.SeedSequence(seed).spawn(len(params))
    grids = []
    for car, stream in zip(params, streams):
        points, normals = car_point_cloud(car, n_rays, seed=int(stream.generate_state(1)[0]))
        grids.append(build_sdf_from_points(points, spec, normals=normals))
    log_event("CarGenerator", {"event": "training grids built", "count": len(grids)}, level="debug")
    return grids
