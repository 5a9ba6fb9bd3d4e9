"""
Synthetic tracks with ground truth.

A shape is drawn from the manifold and driven along an exact motion-model
trajectory; each frame is ray-cast from the virtual stereo camera, noise is
added in disparity space and the points are written as a regular track.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from src.config.settings import GroundPlaneSettings, RenderSettings
from src.core.errors import ScenarioError, SceneNotVisibleError
from src.geometry.rendering import backproject, render_depth
from src.ingest.track_io import Calibration, CameraPose, Detection, Frame, Track, save_track
from src.models.records import GroundTruthRecord, PoseRecord, ScenarioSpec
from src.motion.ground_plane import GroundPlane, fit_ground_plane, ground_candidates
from src.motion.kinematics import MotionRegime, Pose, predict
from src.shape.manifold import ShapeManifold
from src.utils.observability.logging_utils import log_event

NOMINAL_BOX = (1.8, 1.5, 4.4)
MIN_CLUTTER_DEPTH = 0.5


@dataclass
class GroundTruth:
    track_id: str
    z: np.ndarray
    regime: MotionRegime
    poses: List[Pose]
    masks: List[np.ndarray]  # per frame, True for points on the object surface
    cameras: List[CameraPose]
    calibration: Calibration
    timestamps: List[float]
    scenario: dict

    def to_record(self) -> GroundTruthRecord:
        return GroundTruthRecord(
            track_id=self.track_id,
            shape_code=[float(v) for v in self.z],
            regime=self.regime.value,
            poses=[
                PoseRecord(index=k, t_s=ts, t=[float(c) for c in p.t], theta=p.theta, v=p.v, omega=p.omega)
                for k, (ts, p) in enumerate(zip(self.timestamps, self.poses))
            ],
            masks=[[bool(b) for b in m] for m in self.masks],
            cameras=[c.to_record() for c in self.cameras],
            calib=self.calibration.to_record(),
            scenario=self.scenario,
        )

    @classmethod
    def from_record(cls, record: GroundTruthRecord) -> "GroundTruth":
        return cls(
            track_id=record.track_id,
            z=np.array(record.shape_code),
            regime=MotionRegime(record.regime),
            poses=[Pose(p.t, p.theta, p.v, p.omega) for p in record.poses],
            masks=[np.array(m, dtype=bool) for m in record.masks],
            cameras=[CameraPose.from_record(c) for c in record.cameras],
            calibration=Calibration.from_record(record.calib),
            timestamps=[p.t_s for p in record.poses],
            scenario=record.scenario,
        )

    def save(self, path: Union[str, Path]):
        Path(path).write_text(json.dumps(self.to_record().model_dump(), indent=2) + "\n")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "GroundTruth":
        path = Path(path)
        if not path.exists():
            raise ScenarioError(f"ground truth not found: {path}")
        try:
            return cls.from_record(GroundTruthRecord.model_validate_json(path.read_text()))
        except ValueError as e:
            raise ScenarioError(f"{path}: invalid ground truth: {e}") from e


@dataclass
class SyntheticScene:
    track: Track
    ground_truth: GroundTruth


def perturb_depth(depth, baseline: float, focal: float, sigma_px: float, rng: np.random.Generator):
    """Depth after Gaussian disparity noise: d' = b f / (b f / d + n). NaN where disparity <= 0."""
    depth = np.asarray(depth, dtype=np.float64)
    if sigma_px == 0:
        return depth.copy()
    disparity = baseline * focal / depth + rng.normal(0.0, sigma_px, size=depth.shape)
    with np.errstate(divide="ignore"):
        return np.where(disparity > 0, baseline * focal / disparity, np.nan)


def trajectory(spec: ScenarioSpec) -> List[Pose]:
    regime = MotionRegime(spec.regime)
    speed = 0.0 if regime == MotionRegime.STANDING else spec.speed
    yaw_rate = spec.yaw_rate if regime == MotionRegime.TURNING else 0.0
    if regime == MotionRegime.TURNING and yaw_rate == 0.0:
        raise ScenarioError("a turning scenario needs a non-zero yaw_rate")
    poses = [Pose((spec.start_x, spec.ground_height, spec.start_z), spec.start_yaw, speed, yaw_rate)]
    for _ in range(spec.frames - 1):
        poses.append(predict(poses[-1], spec.dt, regime))
    return poses


def _shape_code(spec: ScenarioSpec, manifold: ShapeManifold, rng: np.random.Generator) -> np.ndarray:
    if spec.shape_code is not None:
        if len(spec.shape_code) != manifold.dimension:
            raise ScenarioError(
                f"shape_code has {len(spec.shape_code)} entries, manifold dimension is {manifold.dimension}"
            )
        return np.array(spec.shape_code, dtype=np.float64)
    k = spec.shape_sigma_scale
    return rng.uniform(-k, k, manifold.dimension) * manifold.sigmas


def _clutter(spec: ScenarioSpec, center: np.ndarray, camera: CameraPose, rng: np.random.Generator):
    n = spec.clutter_points
    radius = spec.clutter_radius * np.sqrt(rng.random(n))
    angle = rng.uniform(0.0, 2 * np.pi, n)
    points = np.column_stack(
        [
            center[0] + radius * np.cos(angle),
            spec.ground_height + rng.uniform(-0.02, 0.02, n),
            center[2] + radius * np.sin(angle),
        ]
    )
    return points[camera.depth(points) > MIN_CLUTTER_DEPTH]


def generate(
    spec: ScenarioSpec,
    manifold: ShapeManifold,
    render: Optional[RenderSettings] = None,
    ground: Optional[GroundPlaneSettings] = None,
) -> SyntheticScene:
    render = render or RenderSettings()
    ground = ground or GroundPlaneSettings()
    streams = np.random.SeedSequence(spec.seed).spawn(spec.frames + 1)
    rng = np.random.default_rng(streams[0])

    z_true = _shape_code(spec, manifold, rng)
    poses = trajectory(spec)
    field = manifold.decode_grid(z_true)
    calibration = Calibration(
        spec.f_px, spec.b_m, spec.calib_sigma_px, None, None, spec.width, spec.height
    )
    bias = np.asarray(spec.detection_bias, dtype=np.float64)
    occluded = set(spec.occluded_frames)

    frames, masks, cameras = [], [], []
    for k, pose in enumerate(poses):
        frame_rng = np.random.default_rng(streams[k + 1])
        camera = CameraPose(np.array([0.0, 0.0, spec.camera_speed * k * spec.dt]), spec.camera_yaw)

        surface = np.zeros((0, 3))
        if k not in occluded:
            cam = camera.object_camera(calibration, pose)
            depth_map = render_depth(field, cam, settings=render)
            if depth_map.camera_inside or depth_map.num_valid == 0:
                raise SceneNotVisibleError(k)
            local = backproject(depth_map, cam)
            noisy = perturb_depth(local[:, 2], spec.b_m, spec.f_px, spec.noise_sigma_px, frame_rng)
            keep = np.isfinite(noisy)
            local = local[keep] * (noisy[keep] / local[keep, 2])[:, None]
            surface = camera.camera_to_world(local)

        clutter = _clutter(spec, pose.t, camera, frame_rng)
        points = np.vstack([surface, clutter])
        mask = np.concatenate([np.ones(len(surface), bool), np.zeros(len(clutter), bool)])

        # Detector error grows with range.
        sigma_t = spec.detection_sigma_t + spec.detection_sigma_range * float(camera.depth(pose.t)[0])
        noise = np.array([rng.normal(0, sigma_t), 0.0, rng.normal(0, sigma_t)])
        detection = Detection(
            pose.t + bias + noise,
            pose.theta + rng.normal(0, spec.detection_sigma_yaw),
            np.array(NOMINAL_BOX),
            1.0,
            k,
        )
        if spec.emit_plane:
            plane = GroundPlane.horizontal(spec.ground_height, ground.variance_floor)
        else:
            plane = fit_ground_plane(ground_candidates(points, detection.center, ground), ground)
        frames.append(
            Frame(
                index=k,
                timestamp=k * spec.dt,
                points=points,
                depths=camera.depth(points),
                detection=detection,
                plane=plane,
                camera=camera,
                cloud=f"clouds/frame_{k:04d}.xyz",
                plane_given=spec.emit_plane,
            )
        )
        masks.append(mask)
        cameras.append(camera)

    track = Track(spec.name, frames, calibration)
    truth = GroundTruth(
        spec.name,
        z_true,
        MotionRegime(spec.regime),
        poses,
        masks,
        cameras,
        calibration,
        [f.timestamp for f in frames],
        spec.model_dump(),
    )
    log_event(
        "SceneGenerator",
        {"event": "generated", "scenario": spec.name, "frames": spec.frames},
        level="info",
        surface_points=int(sum(m.sum() for m in masks)),
    )
    return SyntheticScene(track, truth)


def write_scene(scene: SyntheticScene, out_dir: Union[str, Path]):
    """track.json (+ clouds/) and gt.json under `out_dir`."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_track(scene.track, out / "track.json")
    scene.ground_truth.save(out / "gt.json")
