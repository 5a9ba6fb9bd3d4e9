"""
Observation filtering, track initialization and hard-EM reassociation.
"""

from dataclasses import dataclass, replace
from typing import List, Optional, Sequence

import numpy as np

from src.config.settings import AssociationSettings, MotionSettings
from src.core.errors import InputError
from src.ingest.track_io import Frame, Track
from src.motion.ground_plane import GroundPlane
from src.motion.kinematics import MotionRegime, Pose, classify, lower_median, wrap_angle
from src.utils.observability.logging_utils import log_event
from src.utils.validators import as_points


def select_points(
    points, center, plane: GroundPlane, radius: float = 3.0, ground_margin: float = 0.05
) -> np.ndarray:
    """Mask of points above the road (by more than `ground_margin`) within `radius` of `center`."""
    p = as_points(points)
    above = plane.height_above(p) > ground_margin
    near = np.linalg.norm(p - np.asarray(center, dtype=np.float64), axis=1) <= radius
    return above & near


def filter_observations(
    frame: Frame,
    radius: Optional[float] = None,
    settings: Optional[AssociationSettings] = None,
    center=None,
    plane: Optional[GroundPlane] = None,
) -> np.ndarray:
    """Points of the frame's pool kept as observations of the object."""
    settings = settings or AssociationSettings()
    radius = settings.radius if radius is None else radius
    center = frame.detection.center if center is None else center
    mask = select_points(frame.points, center, plane or frame.plane, radius, settings.ground_margin)
    return frame.points[mask]


def associate(
    track: Track,
    centers: Optional[Sequence] = None,
    planes: Optional[Sequence[GroundPlane]] = None,
    settings: Optional[AssociationSettings] = None,
) -> Track:
    """Copy of `track` with each frame's observation mask recomputed."""
    settings = settings or AssociationSettings()
    frames: List[Frame] = []
    for k, frame in enumerate(track.frames):
        center = frame.detection.center if centers is None else centers[k]
        plane = frame.plane if planes is None else planes[k]
        mask = select_points(frame.points, center, plane, settings.radius, settings.ground_margin)
        if not mask.any():
            log_event("Association", "observation-free frame", level="warning", frame=frame.index)
        frames.append(replace(frame, observed=mask))
    return replace(track, frames=frames)


def association_sets(track: Track) -> List[np.ndarray]:
    return [
        np.flatnonzero(f.observed) if f.observed is not None else np.arange(len(f.points))
        for f in track.frames
    ]


def same_association(a: Track, b: Track) -> bool:
    return all(np.array_equal(x, y) for x, y in zip(association_sets(a), association_sets(b)))


def reassociate(track: Track, fit, settings: Optional[AssociationSettings] = None) -> Track:
    """
    Re-select observations around the optimized trajectory.

    Each frame's plane is shifted parallel so it passes through the optimized
    vehicle position.
    """
    poses: Sequence[Pose] = getattr(fit, "poses", fit)
    if len(poses) != track.length:
        raise InputError(f"fit has {len(poses)} poses for a track of {track.length} frames")
    centers = [p.t for p in poses]
    planes = [f.plane.shifted_to(p.t[0], p.t[2], p.t[1]) for f, p in zip(track.frames, poses)]
    updated = associate(track, centers, planes, settings)
    log_event(
        "Association",
        {"event": "reassociated", "track": track.id},
        level="debug",
        points=[int(len(f.observations)) for f in updated.frames],
    )
    return updated


@dataclass
class Initialization:
    z: np.ndarray
    poses: List[Pose]
    regime: MotionRegime
    speed: float
    yaw_rate: float


def initialize(track: Track, manifold, settings: Optional[MotionSettings] = None) -> Initialization:
    """Mean shape, detection centres dropped onto the road and median velocities.

    `manifold` may also be the shape-code dimension as an int.
    """
    dimension = manifold if isinstance(manifold, int) else manifold.dimension
    settings = settings or MotionSettings()
    if track.length < 2:
        raise InputError(f"a track needs at least 2 frames, got {track.length}")

    centers = np.array([f.detection.center for f in track.frames], dtype=np.float64)
    for k, frame in enumerate(track.frames):
        centers[k, 1] = frame.plane.elevation(centers[k, 0], centers[k, 2])
    yaws = np.array([f.detection.yaw for f in track.frames])
    dts = track.dts()

    speeds = np.hypot(np.diff(centers[:, 0]), np.diff(centers[:, 2])) / dts
    rates = wrap_angle(np.diff(yaws)) / dts
    v, omega = lower_median(speeds), lower_median(rates)
    regime = classify(v, omega, settings.eps_v, settings.eps_omega)

    if regime == MotionRegime.STANDING:
        headings = yaws
    else:
        chord = centers[-1] - centers[0]
        headings = np.full(track.length, np.arctan2(-chord[0], -chord[2]))

    poses = [Pose(centers[k], headings[k], v, omega) for k in range(track.length)]
    log_event(
        "Initializer",
        {"event": "initialized", "track": track.id, "regime": regime.value},
        level="debug",
        speed=v,
        yaw_rate=omega,
    )
    return Initialization(np.zeros(dimension), poses, regime, v, omega)
