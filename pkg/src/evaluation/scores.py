"""
Shape and pose quality measures.

Shape: completeness is the percentage of ground-truth points with a
reconstructed point within tau, accuracy the percentage of reconstructed
points with a ground-truth point within tau, F1 their harmonic mean.
Pose: wrapped absolute yaw difference and Euclidean translation error,
summarised per camera-distance bin.
"""

from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from src.config.settings import RenderSettings
from src.core.errors import InputError
from src.geometry.rendering import DepthMap, backproject, extract_surface_points, render_depth
from src.ingest.track_io import Calibration, CameraPose
from src.motion.kinematics import Pose, wrap_angle
from src.shape.manifold import ShapeManifold
from src.utils.observability.logging_utils import log_event
from src.utils.validators import as_points, require_positive

DEFAULT_TAU = 0.2


@dataclass(frozen=True)
class ShapeScore:
    completeness: float
    accuracy: float
    f1: float
    tau: float
    gt_points: int
    reconstructed_points: int
    empty: bool = False

    def as_dict(self) -> dict:
        return asdict(self)


def f1_score(completeness: float, accuracy: float) -> float:
    if completeness * accuracy == 0:
        return 0.0
    return 2.0 * completeness * accuracy / (completeness + accuracy)


def _nearest_distances(query: np.ndarray, reference: np.ndarray) -> np.ndarray:
    distances, _ = cKDTree(reference).query(query, k=1)
    return distances


def _empty_score(tau: float, gt_count: int, rec_count: int) -> ShapeScore:
    log_event(
        "ShapeScore", "empty point set, scoring zero", level="warning", gt_points=gt_count, reconstructed=rec_count
    )
    return ShapeScore(0.0, 0.0, 0.0, tau, gt_count, rec_count, empty=True)


def shape_score(gt_points, reconstructed_points, tau: float = DEFAULT_TAU) -> ShapeScore:
    tau = require_positive(tau, "tau")
    gt = as_points(gt_points, "gt_points")
    rec = as_points(reconstructed_points, "reconstructed_points")
    if len(gt) == 0 or len(rec) == 0:
        return _empty_score(tau, len(gt), len(rec))
    completeness = 100.0 * float(np.mean(_nearest_distances(gt, rec) <= tau))
    accuracy = 100.0 * float(np.mean(_nearest_distances(rec, gt) <= tau))
    return ShapeScore(completeness, accuracy, f1_score(completeness, accuracy), tau, len(gt), len(rec))


def tau_sweep(gt_points, reconstructed_points, taus: Sequence[float]) -> pd.DataFrame:
    """Completeness/accuracy/F1 for every threshold, one nearest-neighbour pass per direction."""
    gt = as_points(gt_points, "gt_points")
    rec = as_points(reconstructed_points, "reconstructed_points")
    taus = [require_positive(t, "tau") for t in taus]
    if len(gt) == 0 or len(rec) == 0:
        rows = [_empty_score(t, len(gt), len(rec)).as_dict() for t in taus]
        return pd.DataFrame(rows)

    to_rec = _nearest_distances(gt, rec)
    to_gt = _nearest_distances(rec, gt)
    rows = []
    for tau in taus:
        completeness = 100.0 * float(np.mean(to_rec <= tau))
        accuracy = 100.0 * float(np.mean(to_gt <= tau))
        rows.append(
            ShapeScore(completeness, accuracy, f1_score(completeness, accuracy), tau, len(gt), len(rec)).as_dict()
        )
    return pd.DataFrame(rows)


def mean_shape_score(scores: Sequence[ShapeScore]) -> ShapeScore:
    """Average completeness and accuracy over frames; F1 of the averages."""
    scored = [s for s in scores if not s.empty]
    if not scored:
        tau = scores[0].tau if scores else DEFAULT_TAU
        return ShapeScore(0.0, 0.0, 0.0, tau, 0, 0, empty=True)
    completeness = float(np.mean([s.completeness for s in scored]))
    accuracy = float(np.mean([s.accuracy for s in scored]))
    return ShapeScore(
        completeness,
        accuracy,
        f1_score(completeness, accuracy),
        scored[0].tau,
        sum(s.gt_points for s in scored),
        sum(s.reconstructed_points for s in scored),
    )


@dataclass
class PoseScore:
    rotation_errors: np.ndarray  # rad, in [0, pi]
    translation_errors: np.ndarray  # m
    distances: np.ndarray  # camera-to-object distance of the ground truth, m
    bins: pd.DataFrame
    window: float

    @property
    def median_translation(self) -> float:
        return float(np.median(self.translation_errors))

    @property
    def median_rotation(self) -> float:
        return float(np.median(self.rotation_errors))

    def frames(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "distance": self.distances,
                "rotation_error": self.rotation_errors,
                "translation_error": self.translation_errors,
            }
        )


def rotation_error(theta_est: float, theta_gt: float) -> float:
    return abs(float(wrap_angle(theta_est - theta_gt)))


def _summarise(frame: pd.DataFrame, key) -> pd.DataFrame:
    grouped = frame.groupby(key)
    summary = grouped.agg(
        frames=("distance", "size"),
        rotation_mean=("rotation_error", "mean"),
        rotation_median=("rotation_error", "median"),
        translation_mean=("translation_error", "mean"),
        translation_median=("translation_error", "median"),
    )
    return summary.reset_index()


def pose_score(
    fit_poses: Sequence[Pose],
    gt_poses: Sequence[Pose],
    camera_positions: Optional[Sequence] = None,
    window: float = 20.0,
) -> PoseScore:
    if len(fit_poses) != len(gt_poses):
        raise InputError(f"pose count mismatch: {len(fit_poses)} estimated vs {len(gt_poses)} ground truth")
    window = require_positive(window, "window")
    if camera_positions is None:
        camera_positions = np.zeros((len(gt_poses), 3))
    cameras = as_points(camera_positions, "camera_positions")
    if len(cameras) != len(gt_poses):
        raise InputError(f"camera count mismatch: {len(cameras)} cameras for {len(gt_poses)} poses")

    rotation = np.array([rotation_error(e.theta, g.theta) for e, g in zip(fit_poses, gt_poses)])
    translation = np.array([np.linalg.norm(e.t - g.t) for e, g in zip(fit_poses, gt_poses)])
    distances = np.array([np.linalg.norm(g.t - c) for g, c in zip(gt_poses, cameras)])

    frame = pd.DataFrame(
        {"distance": distances, "rotation_error": rotation, "translation_error": translation}
    )
    frame["bin_start"] = np.floor(distances / window) * window
    bins = _summarise(frame, "bin_start")
    bins.insert(1, "bin_end", bins["bin_start"] + window)
    return PoseScore(rotation, translation, distances, bins, window)


def distance_curve(score: PoseScore, window: Optional[float] = None, step: float = 5.0) -> pd.DataFrame:
    """Errors over sliding distance windows [s, s + window), s advancing by `step`."""
    window = window or score.window
    frame = score.frames()
    if frame.empty:
        return pd.DataFrame()
    rows = []
    start = np.floor(frame["distance"].min() / step) * step
    while start <= frame["distance"].max():
        inside = frame[(frame["distance"] >= start) & (frame["distance"] < start + window)]
        if not inside.empty:
            rows.append(
                {
                    "center": start + window / 2.0,
                    "frames": len(inside),
                    "rotation_mean": inside["rotation_error"].mean(),
                    "rotation_median": inside["rotation_error"].median(),
                    "translation_mean": inside["translation_error"].mean(),
                    "translation_median": inside["translation_error"].median(),
                }
            )
        start += step
    return pd.DataFrame(rows)


def _frame_view(
    manifold: ShapeManifold,
    z,
    pose: Pose,
    camera: CameraPose,
    calibration: Calibration,
    render: Optional[RenderSettings],
):
    cam = camera.object_camera(calibration, pose)
    return render_depth(manifold.decode_grid(z), cam, settings=render), cam


def ground_truth_view(truth, manifold: ShapeManifold, frame: int, render: Optional[RenderSettings] = None):
    """Depth map of the true shape at its true pose, plus the camera used."""
    return _frame_view(
        manifold, truth.z, truth.poses[frame], truth.cameras[frame], truth.calibration, render
    )


def reconstructed_points_from_fit(
    fit,
    manifold: ShapeManifold,
    frame: int,
    mask=None,
    render: Optional[RenderSettings] = None,
) -> np.ndarray:
    """
    Depth-buffer read-out of the fitted shape at the frame's optimized pose.

    Valid pixels are back-projected to world points, restricted to `mask`
    (an image-sized boolean array) when one is given.
    """
    if fit.calibration is None:
        raise InputError("fit result has no calibration; cannot render")
    camera = fit.cameras[frame] if fit.cameras else CameraPose()
    depth_map, cam = _frame_view(manifold, fit.z, fit.poses[frame], camera, fit.calibration, render)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != depth_map.valid.shape:
            raise InputError(f"mask shape {mask.shape} does not match image {depth_map.valid.shape}")
        if not mask.any():
            log_event("ShapeScore", "ground-truth mask has no pixels", level="warning", frame=frame)
            return np.zeros((0, 3))
    return camera.camera_to_world(backproject(depth_map, cam, mask))


def _depth_points(depth_map: DepthMap, cam, camera: CameraPose) -> np.ndarray:
    return camera.camera_to_world(backproject(depth_map, cam))


def frame_shape_scores(
    fit,
    truth,
    manifold: ShapeManifold,
    taus: Sequence[float] = (DEFAULT_TAU,),
    render: Optional[RenderSettings] = None,
) -> List[List[ShapeScore]]:
    """Per frame, per tau scores of the fit's depth buffer against the true surface view."""
    if len(fit.poses) != len(truth.poses):
        raise InputError(f"frame mismatch: fit has {len(fit.poses)} frames, ground truth {len(truth.poses)}")
    results = []
    for k in range(len(truth.poses)):
        gt_map, gt_cam = ground_truth_view(truth, manifold, k, render)
        gt_points = _depth_points(gt_map, gt_cam, truth.cameras[k])
        rec_points = reconstructed_points_from_fit(fit, manifold, k, gt_map.valid, render)
        sweep = tau_sweep(gt_points, rec_points, taus)
        results.append([ShapeScore(**row) for row in sweep.to_dict("records")])
    return results


def full_surface_points(
    manifold: ShapeManifold,
    z,
    pose: Optional[Pose] = None,
    n_rays: int = 20000,
    seed: int = 0,
    render: Optional[RenderSettings] = None,
) -> np.ndarray:
    """Samples of the whole zero level set, in the world frame when `pose` is given."""
    points = extract_surface_points(manifold.decode_grid(z), n_rays, seed=seed, settings=render)
    return pose.to_world(points) if pose is not None else points


@dataclass
class TrackEvaluation:
    track_id: str
    shape: List[ShapeScore]  # one per tau, averaged over frames
    pose: PoseScore
    seed_pose: Optional[PoseScore] = None
    completion: Optional[ShapeScore] = None


def evaluate_fit(
    fit,
    truth,
    manifold: ShapeManifold,
    taus: Sequence[float] = (DEFAULT_TAU,),
    window: float = 20.0,
    render: Optional[RenderSettings] = None,
    completion_rays: int = 0,
) -> TrackEvaluation:
    """Shape and pose scores of one fit against its ground truth."""
    per_frame = frame_shape_scores(fit, truth, manifold, taus, render)
    shape = [mean_shape_score([scores[i] for scores in per_frame]) for i in range(len(taus))]
    cameras = [c.position for c in truth.cameras]
    pose = pose_score(fit.poses, truth.poses, cameras, window)

    seed_pose = None
    if fit.detections:
        seeds = [Pose(d.center, d.yaw) for d in fit.detections]
        seed_pose = pose_score(seeds, truth.poses, cameras, window)

    completion = None
    if completion_rays:
        completion = shape_score(
            full_surface_points(manifold, truth.z, truth.poses[0], completion_rays, render=render),
            full_surface_points(manifold, fit.z, fit.poses[0], completion_rays, seed=1, render=render),
            taus[0],
        )

    log_event(
        "Evaluator",
        {"event": "evaluated", "track": fit.track_id},
        level="info",
        f1=shape[0].f1,
        translation_median=pose.median_translation,
    )
    return TrackEvaluation(fit.track_id, shape, pose, seed_pose, completion)
