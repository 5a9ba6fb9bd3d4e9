"""
JSON schemas for track files, fit results, ground truth and scenarios.
"""

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class _Record(BaseModel):
    model_config = ConfigDict(extra="forbid")


def _check_length(values: List[float], length: int, name: str) -> List[float]:
    if len(values) != length:
        raise ValueError(f"{name} must have {length} entries, got {len(values)}")
    return values


class CalibRecord(_Record):
    f_px: float = Field(gt=0)
    b_m: float = Field(gt=0)
    sigma_disp_px: float = Field(gt=0)
    cx: Optional[float] = None
    cy: Optional[float] = None
    width: Optional[int] = Field(default=None, gt=0)
    height: Optional[int] = Field(default=None, gt=0)


class DetectionRecord(_Record):
    center: List[float]
    yaw: float
    size: List[float]
    score: float = Field(1.0, ge=0, le=1)

    @field_validator("center")
    @classmethod
    def _center(cls, v):
        return _check_length(v, 3, "center")

    @field_validator("size")
    @classmethod
    def _size(cls, v):
        _check_length(v, 3, "size")
        if any(s <= 0 for s in v):
            raise ValueError("box dimensions must be positive")
        return v


class CameraRecord(_Record):
    position: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0])
    yaw: float = 0.0

    @field_validator("position")
    @classmethod
    def _position(cls, v):
        return _check_length(v, 3, "position")


class FrameRecord(_Record):
    index: int = Field(ge=0)
    t_s: float
    cloud: str
    detection: DetectionRecord
    plane: Optional[List[float]] = None
    plane_var: Optional[float] = Field(default=None, gt=0)
    camera: Optional[CameraRecord] = None

    @field_validator("plane")
    @classmethod
    def _plane(cls, v):
        return v if v is None else _check_length(v, 4, "plane")


class TrackRecord(_Record):
    id: str
    calib: CalibRecord
    frames: List[FrameRecord] = Field(min_length=2)

    @model_validator(mode="after")
    def _ordering(self):
        seen = set()
        for frame in self.frames:
            if frame.index in seen:
                raise ValueError(f"duplicated frame index {frame.index}")
            seen.add(frame.index)
        times = [f.t_s for f in self.frames]
        for earlier, later in zip(times, times[1:]):
            if later <= earlier:
                raise ValueError(f"timestamps must increase strictly, got {earlier} then {later}")
        return self


class PoseRecord(_Record):
    index: int
    t_s: float
    t: List[float]
    theta: float
    v: float
    omega: float


class EnergyRecord(_Record):
    total: float
    data: float
    motion: float
    shape: float


class PassRecord(_Record):
    pass_index: int
    iterations: int
    converged: bool
    regime: str
    energy: float
    associated_points: List[int]


class FitRecord(_Record):
    track_id: str
    shape_code: List[float]
    poses: List[PoseRecord]
    energy: EnergyRecord
    iterations: int
    converged: bool
    regime: str
    energy_history: List[List[float]]
    frame_rms: List[Optional[float]]
    observation_free: List[int] = Field(default_factory=list)
    passes: List[PassRecord] = Field(default_factory=list)
    calib: Optional[CalibRecord] = None
    cameras: List[CameraRecord] = Field(default_factory=list)
    detections: List[DetectionRecord] = Field(default_factory=list)
    config: Dict[str, Any] = Field(default_factory=dict)


class GroundTruthRecord(_Record):
    track_id: str
    shape_code: List[float]
    regime: str
    poses: List[PoseRecord]
    masks: List[List[bool]]
    cameras: List[CameraRecord]
    calib: CalibRecord
    scenario: Dict[str, Any] = Field(default_factory=dict)


class ScenarioSpec(_Record):
    """Synthetic scene description; loadable from JSON for `gen --spec`."""

    name: str = "custom"
    shape_code: Optional[List[float]] = None
    shape_sigma_scale: float = Field(1.0, ge=0)
    regime: str = "straight"
    speed: float = 8.0
    yaw_rate: float = 0.0
    start_x: float = 3.0
    start_z: float = 18.0
    start_yaw: float = 0.0
    frames: int = Field(20, ge=2)
    dt: float = Field(0.1, gt=0)
    ground_height: float = 1.65
    camera_speed: float = 0.0
    camera_yaw: float = 0.0
    f_px: float = Field(721.0, gt=0)
    b_m: float = Field(0.54, gt=0)
    width: int = Field(1242, gt=0)
    height: int = Field(375, gt=0)
    noise_sigma_px: float = Field(0.0, ge=0)
    calib_sigma_px: float = Field(1.0, gt=0)
    detection_sigma_t: float = Field(0.3, ge=0)
    detection_sigma_yaw: float = Field(0.0873, ge=0)
    detection_sigma_range: float = Field(0.0, ge=0)  # extra seed translation sigma per metre of range
    detection_bias: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0])
    occluded_frames: List[int] = Field(default_factory=list)
    clutter_points: int = Field(300, ge=0)
    clutter_radius: float = Field(10.0, gt=0)
    emit_plane: bool = True
    seed: int = 0

    @field_validator("regime")
    @classmethod
    def _regime(cls, v):
        if v not in ("turning", "straight", "standing"):
            raise ValueError(f"unknown regime '{v}'")
        return v

    @field_validator("detection_bias")
    @classmethod
    def _bias(cls, v):
        return _check_length(v, 3, "detection_bias")
