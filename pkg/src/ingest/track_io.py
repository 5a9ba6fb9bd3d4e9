"""
Track files: a JSON document plus one ASCII point cloud per frame.

Geometry is in metres and radians in a y-down world frame. Each frame's
point pool is kept unfiltered so observations can be re-associated later.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
from pydantic import ValidationError

from src.config.settings import GroundPlaneSettings
from src.core.errors import PointCloudFormatError, TrackFormatError
from src.geometry.point_io import read_points, write_points
from src.geometry.rendering import Camera
from src.models.records import (
    CalibRecord,
    CameraRecord,
    DetectionRecord,
    FrameRecord,
    TrackRecord,
)
from src.motion.ground_plane import GroundPlane, fit_ground_plane, ground_candidates
from src.motion.kinematics import yaw_rotation
from src.utils.observability.logging_utils import log_event

DEFAULT_WIDTH = 1242
DEFAULT_HEIGHT = 375


@dataclass(frozen=True)
class Calibration:
    f: float
    b: float
    sigma_disparity: float
    cx: Optional[float] = None
    cy: Optional[float] = None
    width: Optional[int] = None
    height: Optional[int] = None

    def sigma_depth(self, depth) -> np.ndarray:
        """Depth standard deviation d^2 sigma_delta / (b f)."""
        return np.asarray(depth, dtype=np.float64) ** 2 * self.sigma_disparity / (self.b * self.f)

    def camera(self, rotation=None, translation=None) -> Camera:
        width = self.width or DEFAULT_WIDTH
        height = self.height or DEFAULT_HEIGHT
        cx = self.cx if self.cx is not None else width / 2.0
        cy = self.cy if self.cy is not None else height / 2.0
        return Camera(
            self.f,
            cx,
            cy,
            width,
            height,
            np.eye(3) if rotation is None else rotation,
            np.zeros(3) if translation is None else translation,
        )

    @classmethod
    def from_record(cls, record: CalibRecord) -> "Calibration":
        return cls(
            record.f_px, record.b_m, record.sigma_disp_px, record.cx, record.cy, record.width, record.height
        )

    def to_record(self) -> CalibRecord:
        return CalibRecord(
            f_px=self.f,
            b_m=self.b,
            sigma_disp_px=self.sigma_disparity,
            cx=self.cx,
            cy=self.cy,
            width=self.width,
            height=self.height,
        )


@dataclass(frozen=True)
class Detection:
    center: np.ndarray
    yaw: float
    size: np.ndarray
    score: float
    frame: int

    @classmethod
    def from_record(cls, record: DetectionRecord, frame: int) -> "Detection":
        return cls(np.array(record.center), record.yaw, np.array(record.size), record.score, frame)

    def to_record(self) -> DetectionRecord:
        return DetectionRecord(
            center=[float(c) for c in self.center],
            yaw=float(self.yaw),
            size=[float(s) for s in self.size],
            score=float(self.score),
        )


@dataclass(frozen=True)
class CameraPose:
    """Camera placement in the world; it looks along its own +z."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    yaw: float = 0.0

    def rotation(self) -> np.ndarray:
        return yaw_rotation(self.yaw)

    def world_to_camera(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64).reshape(-1, 3) - self.position) @ self.rotation()

    def camera_to_world(self, points) -> np.ndarray:
        return np.asarray(points, dtype=np.float64).reshape(-1, 3) @ self.rotation().T + self.position

    def depth(self, points) -> np.ndarray:
        return self.world_to_camera(points)[:, 2]

    def object_camera(self, calibration: Calibration, pose) -> Camera:
        """Camera seeing an object placed at `pose` (object-to-camera transform)."""
        r_wc = self.rotation().T
        return calibration.camera(r_wc @ pose.rotation(), r_wc @ (pose.t - self.position))

    @classmethod
    def from_record(cls, record: Optional[CameraRecord]) -> "CameraPose":
        if record is None:
            return cls()
        return cls(np.array(record.position, dtype=np.float64), record.yaw)

    def to_record(self) -> CameraRecord:
        return CameraRecord(position=[float(p) for p in self.position], yaw=float(self.yaw))


@dataclass
class Frame:
    index: int
    timestamp: float
    points: np.ndarray  # full pool, world frame
    depths: np.ndarray
    detection: Detection
    plane: GroundPlane
    camera: CameraPose
    cloud: str = ""
    plane_given: bool = True
    camera_given: bool = True
    observed: Optional[np.ndarray] = None  # bool mask over `points`

    @property
    def observations(self) -> np.ndarray:
        if self.observed is None:
            return self.points
        return self.points[self.observed]

    @property
    def observation_depths(self) -> np.ndarray:
        if self.observed is None:
            return self.depths
        return self.depths[self.observed]

    @property
    def observation_free(self) -> bool:
        return len(self.observations) == 0


@dataclass
class Track:
    id: str
    frames: List[Frame]
    calibration: Calibration

    @property
    def length(self) -> int:
        return len(self.frames)

    def timestamps(self) -> np.ndarray:
        return np.array([f.timestamp for f in self.frames])

    def dts(self) -> np.ndarray:
        return np.diff(self.timestamps())


_WHITESPACE = " \t\r\n"


def _skip_whitespace(text: str, pos: int) -> int:
    while pos < len(text) and text[pos] in _WHITESPACE:
        pos += 1
    return pos


def _skip_separator(text: str, pos: int) -> int:
    pos = _skip_whitespace(text, pos)
    if pos < len(text) and text[pos] == ",":
        pos = _skip_whitespace(text, pos + 1)
    return pos


def source_line(text: str, loc: Sequence[Union[str, int]]) -> int:
    """1-based line of the value at `loc` in a JSON document.

    Stops at the deepest container that exists, so a missing key reports the
    line of the object that should have held it.
    """
    decoder = json.JSONDecoder()
    pos = _skip_whitespace(text, 0)
    try:
        for part in loc:
            if pos >= len(text):
                break
            if text[pos] == "{" and isinstance(part, str):
                cursor = _skip_whitespace(text, pos + 1)
                found = None
                while cursor < len(text) and text[cursor] != "}":
                    key, cursor = decoder.raw_decode(text, cursor)
                    cursor = _skip_whitespace(text, _skip_whitespace(text, cursor) + 1)
                    if key == part:
                        found = cursor
                        break
                    _, cursor = decoder.raw_decode(text, cursor)
                    cursor = _skip_separator(text, cursor)
                if found is None:
                    break
                pos = found
            elif text[pos] == "[" and isinstance(part, int):
                cursor = _skip_whitespace(text, pos + 1)
                for _ in range(part):
                    _, cursor = decoder.raw_decode(text, cursor)
                    cursor = _skip_separator(text, cursor)
                pos = cursor
            else:
                break
    except (ValueError, IndexError):
        pass
    return text.count("\n", 0, pos) + 1


def _validation_error(error: ValidationError, text: Optional[str] = None) -> TrackFormatError:
    first = error.errors()[0]
    path = first.get("loc", ())
    loc = ".".join(str(p) for p in path)
    line = source_line(text, path) if text is not None else None
    return TrackFormatError(first.get("msg", str(error)), field=loc or None, line=line)


def parse_track_record(text: str) -> TrackRecord:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise TrackFormatError(e.msg, line=e.lineno) from e
    try:
        return TrackRecord.model_validate(raw)
    except ValidationError as e:
        raise _validation_error(e, text) from e


def _frame_plane(
    record: FrameRecord, points: np.ndarray, detection: Detection, settings: GroundPlaneSettings, seed: int
) -> GroundPlane:
    if record.plane is not None:
        try:
            return GroundPlane(tuple(record.plane), record.plane_var or settings.variance_floor)
        except ValueError as e:
            raise TrackFormatError(str(e), field=f"frames.{record.index}.plane") from e
    plane = fit_ground_plane(ground_candidates(points, detection.center, settings), settings, seed=seed)
    if plane.fallback:
        log_event("TrackLoader", "ground plane fallback", level="warning", frame=record.index)
    return plane


def load_track(
    path: Union[str, Path], ground: Optional[GroundPlaneSettings] = None, seed: int = 0
) -> Track:
    """Parse and validate a track file, resolving its point clouds."""
    path = Path(path)
    if not path.exists():
        raise TrackFormatError(f"track file not found: {path}")
    record = parse_track_record(path.read_text())
    ground = ground or GroundPlaneSettings()

    frames = []
    for position, fr in enumerate(record.frames):
        cloud_path = path.parent / fr.cloud
        try:
            points, _ = read_points(cloud_path)
        except PointCloudFormatError as e:
            raise TrackFormatError(str(e), field=f"frames.{position}.cloud") from e
        camera = CameraPose.from_record(fr.camera)
        depths = camera.depth(points)
        if np.any(depths <= 0):
            raise TrackFormatError(
                f"{int(np.sum(depths <= 0))} point(s) at or behind the camera", field=f"frames.{position}.cloud"
            )
        detection = Detection.from_record(fr.detection, fr.index)
        frames.append(
            Frame(
                index=fr.index,
                timestamp=fr.t_s,
                points=points,
                depths=depths,
                detection=detection,
                plane=_frame_plane(fr, points, detection, ground, seed),
                camera=camera,
                cloud=fr.cloud,
                plane_given=fr.plane is not None,
                camera_given=fr.camera is not None,
            )
        )
    track = Track(record.id, frames, Calibration.from_record(record.calib))
    log_event(
        "TrackLoader",
        {"event": "loaded", "track": track.id, "frames": track.length},
        level="debug",
        points=int(sum(len(f.points) for f in frames)),
    )
    return track


def track_to_record(track: Track) -> TrackRecord:
    frames = []
    for frame in track.frames:
        frames.append(
            FrameRecord(
                index=frame.index,
                t_s=frame.timestamp,
                cloud=frame.cloud or f"{track.id}_clouds/frame_{frame.index:04d}.xyz",
                detection=frame.detection.to_record(),
                plane=list(frame.plane.coefficients) if frame.plane_given else None,
                plane_var=frame.plane.variance if frame.plane_given else None,
                camera=frame.camera.to_record() if frame.camera_given else None,
            )
        )
    return TrackRecord(id=track.id, calib=track.calibration.to_record(), frames=frames)


def save_track(track: Track, path: Union[str, Path]):
    """Write the track JSON and its clouds (relative to the JSON file)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    record = track_to_record(track)
    for frame, fr in zip(track.frames, record.frames):
        write_points(path.parent / fr.cloud, frame.points)
    path.write_text(json.dumps(record.model_dump(exclude_none=True), indent=2) + "\n")
