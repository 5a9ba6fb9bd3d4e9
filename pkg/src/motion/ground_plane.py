"""
Road plane a x + b y + c z + d = 0 (y down) and its robust estimation.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from src.config.settings import GroundPlaneSettings
from src.core.errors import InputError
from src.utils.observability.logging_utils import log_event
from src.utils.validators import as_points, require_positive


@dataclass(frozen=True)
class GroundPlane:
    """Plane with unit normal (b > 0) plus the variance of the elevation prior."""

    coefficients: Tuple[float, float, float, float]
    variance: float
    fallback: bool = False

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=np.float64).reshape(-1)
        if coef.size != 4 or not np.all(np.isfinite(coef)):
            raise InputError(f"plane needs 4 finite coefficients, got {self.coefficients}")
        norm = np.linalg.norm(coef[:3])
        if norm == 0:
            raise InputError("plane normal is zero")
        if abs(norm - 1.0) > 1e-12:
            coef = coef / norm
        if coef[1] < 0:
            coef = -coef
        if coef[1] < np.cos(np.radians(45.0)) - 1e-12:
            raise InputError(f"plane normal tilted more than 45 degrees from vertical: {coef[:3]}")
        require_positive(self.variance, "plane variance")
        object.__setattr__(self, "coefficients", tuple(float(c) for c in coef))
        object.__setattr__(self, "variance", float(self.variance))

    @classmethod
    def horizontal(cls, y: float = 0.0, variance: float = 1.0, fallback: bool = False) -> "GroundPlane":
        return cls((0.0, 1.0, 0.0, -float(y)), variance, fallback)

    @property
    def normal(self) -> np.ndarray:
        return np.asarray(self.coefficients[:3])

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.variance))

    def elevation(self, x, z):
        """Road y below (x, z)."""
        a, b, c, d = self.coefficients
        return -(a * np.asarray(x) + c * np.asarray(z) + d) / b

    def slope(self) -> Tuple[float, float]:
        """d elevation / dx and d elevation / dz."""
        a, b, c, _ = self.coefficients
        return -a / b, -c / b

    def height_above(self, points) -> np.ndarray:
        """Perpendicular height above the road, positive against gravity."""
        p = as_points(points)
        return -(p @ self.normal + self.coefficients[3])

    def shifted_to(self, x: float, z: float, y: float) -> "GroundPlane":
        """Parallel plane through (x, y, z)."""
        a, b, c, _ = self.coefficients
        return GroundPlane((a, b, c, -(a * x + b * y + c * z)), self.variance, self.fallback)


def ground_candidates(points, center, settings: Optional[GroundPlaneSettings] = None) -> np.ndarray:
    """Points in a vertical band around the detection bottom, within the search radius."""
    settings = settings or GroundPlaneSettings()
    p = as_points(points)
    c = np.asarray(center, dtype=np.float64)
    near = np.hypot(p[:, 0] - c[0], p[:, 2] - c[2]) <= settings.search_radius
    band = np.abs(p[:, 1] - c[1]) <= settings.band
    return p[near & band]


def _plane_from_sample(sample: np.ndarray, min_vertical: float) -> Optional[np.ndarray]:
    normal = np.cross(sample[1] - sample[0], sample[2] - sample[0])
    norm = np.linalg.norm(normal)
    if norm < 1e-12:
        return None
    normal = normal / norm
    if normal[1] < 0:
        normal = -normal
    if normal[1] < min_vertical:
        return None
    return np.append(normal, -normal @ sample[0])


def fit_ground_plane(
    points, settings: Optional[GroundPlaneSettings] = None, seed: int = 0
) -> GroundPlane:
    """RANSAC consensus plane refined by least squares on its inliers."""
    settings = settings or GroundPlaneSettings()
    p = as_points(points)
    if len(p) < settings.min_points:
        log_event(
            "GroundPlane",
            "too few ground points, using y=0 fallback",
            level="warning",
            points=len(p),
            required=settings.min_points,
        )
        return GroundPlane.horizontal(0.0, settings.fallback_variance, fallback=True)

    rng = np.random.default_rng(seed)
    min_vertical = np.cos(np.radians(settings.max_tilt_deg))
    best_inliers = None
    for _ in range(settings.ransac_iterations):
        plane = _plane_from_sample(p[rng.choice(len(p), 3, replace=False)], min_vertical)
        if plane is None:
            continue
        inliers = np.abs(p @ plane[:3] + plane[3]) < settings.inlier_threshold
        if best_inliers is None or inliers.sum() > best_inliers.sum():
            best_inliers = inliers

    if best_inliers is None or best_inliers.sum() < 3:
        log_event("GroundPlane", "no consensus plane, using y=0 fallback", level="warning")
        return GroundPlane.horizontal(0.0, settings.fallback_variance, fallback=True)

    q = p[best_inliers]
    design = np.column_stack([q[:, 0], q[:, 2], np.ones(len(q))])
    (alpha, beta, gamma), *_ = np.linalg.lstsq(design, q[:, 1], rcond=None)
    residuals = q[:, 1] - design @ np.array([alpha, beta, gamma])
    variance = max(float(np.mean(residuals**2)), settings.variance_floor)
    plane = GroundPlane((-alpha, 1.0, -beta, -gamma), variance)
    log_event(
        "GroundPlane",
        {"event": "fitted", "inliers": int(best_inliers.sum()), "points": len(p)},
        level="debug",
        variance=variance,
    )
    return plane
