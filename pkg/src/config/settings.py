"""
Centralized pipeline configuration.

Every numeric default used by the library lives here so the CLI, the
evaluation harness and the tests share one source of truth. Overlay files
are `key=value` text with dotted keys (`lm.max_iterations=50`).
"""

from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from src.core.errors import InputError


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class GridSettings(_Section):
    dims: Tuple[int, int, int] = (60, 40, 100)
    voxel_size: float = Field(0.06, gt=0)
    truncation: float = Field(0.3, gt=0)
    # Grid centre in the canonical frame; y is negative because the canonical
    # origin sits on the ground below the vehicle and y points down.
    center: Tuple[float, float, float] = (0.0, -0.85, 0.0)


class ManifoldSettings(_Section):
    dimension: int = Field(5, ge=1)
    training_cars: int = Field(12, ge=2)
    car_rays: int = Field(20000, ge=100)


class MotionSettings(_Section):
    eps_v: float = Field(0.5, gt=0)
    eps_omega: float = Field(0.03, gt=0)
    sigma_v: float = Field(1.0, gt=0)
    sigma_omega: float = Field(0.1, gt=0)
    floor_translation: float = Field(0.05**2, gt=0)
    floor_rotation: float = Field(0.02**2, gt=0)
    floor_velocity: float = Field(0.5**2, gt=0)
    floor_yaw_rate: float = Field(0.05**2, gt=0)
    default_dt: float = Field(0.1, gt=0)
    taylor_threshold: float = Field(1e-4, gt=0)


class GroundPlaneSettings(_Section):
    ransac_iterations: int = Field(200, ge=1)
    inlier_threshold: float = Field(0.05, gt=0)
    min_points: int = Field(50, ge=3)
    variance_floor: float = Field(0.05**2, gt=0)
    fallback_variance: float = Field(1.0, gt=0)
    band: float = Field(0.2, gt=0)
    search_radius: float = Field(10.0, gt=0)
    max_tilt_deg: float = Field(45.0, gt=0, le=90)


class AssociationSettings(_Section):
    radius: float = Field(3.0, gt=0)
    ground_margin: float = Field(0.05, ge=0)


class LMSettings(_Section):
    max_iterations: int = Field(100, ge=1)
    initial_damping: float = Field(1e-4, gt=0)
    gradient_tol: float = Field(1e-8, gt=0)
    cost_tol: float = Field(1e-10, gt=0)
    step_tol: float = Field(1e-10, gt=0)
    damping_increase: float = Field(10.0, gt=1)
    damping_decrease: float = Field(0.1, gt=0, lt=1)
    max_damping: float = Field(1e16, gt=0)


class EnergyConfig(_Section):
    """Term weights and solver settings of the joint shape/trajectory energy."""

    huber_delta: float = Field(1.345, gt=0)
    shape_prior_weight: float = Field(1.0, ge=0)
    initial_inflation: float = Field(2.0, ge=1)
    use_motion_term: bool = True
    use_ground_prior: bool = True
    motion: MotionSettings = Field(default_factory=MotionSettings)
    lm: LMSettings = Field(default_factory=LMSettings)
    em_passes: int = Field(1, ge=0)


class RenderSettings(_Section):
    step_safety: float = Field(0.9, gt=0, le=1)
    max_steps: int = Field(128, ge=1)
    surface_tol: float = Field(1e-3, gt=0)
    max_depth: float = Field(120.0, gt=0)


class EvalSettings(_Section):
    taus: List[float] = Field(default_factory=lambda: [0.2])
    distance_window: float = Field(20.0, gt=0)
    distance_step: float = Field(5.0, gt=0)

    @field_validator("taus")
    @classmethod
    def _positive_taus(cls, v):
        if not v or any(t <= 0 for t in v):
            raise ValueError("taus must be a non-empty list of positive thresholds")
        return v


class PipelineConfig(_Section):
    """Root configuration object."""

    grid: GridSettings = Field(default_factory=GridSettings)
    manifold: ManifoldSettings = Field(default_factory=ManifoldSettings)
    ground: GroundPlaneSettings = Field(default_factory=GroundPlaneSettings)
    association: AssociationSettings = Field(default_factory=AssociationSettings)
    energy: EnergyConfig = Field(default_factory=EnergyConfig)
    render: RenderSettings = Field(default_factory=RenderSettings)
    evaluation: EvalSettings = Field(default_factory=EvalSettings)
    seed: int = 0
    workers: int = Field(1, ge=1)


# Shorthand keys accepted in overlay files and mapped onto nested fields.
ALIASES = {
    "lm": "energy.lm",
    "motion": "energy.motion",
}


def _parse_scalar(raw: str) -> Any:
    text = raw.strip()
    if "," in text:
        return [_parse_scalar(part) for part in text.split(",") if part.strip()]
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def apply_overrides(config: PipelineConfig, overrides: Mapping[str, Any]) -> PipelineConfig:
    """Return a validated copy of `config` with dotted-key overrides applied."""
    data: Dict[str, Any] = config.model_dump()
    for key, value in overrides.items():
        if value is None:
            continue
        head, _, rest = key.partition(".")
        if head in ALIASES and rest:
            key = f"{ALIASES[head]}.{rest}"
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            if not isinstance(node.get(part), dict):
                raise InputError(f"unknown configuration key '{key}'")
            node = node[part]
        if parts[-1] not in node:
            raise InputError(f"unknown configuration key '{key}'")
        parsed = _parse_scalar(value) if isinstance(value, str) else value
        if isinstance(node[parts[-1]], (list, tuple)) and not isinstance(parsed, (list, tuple)):
            parsed = [parsed]
        node[parts[-1]] = parsed
    try:
        return PipelineConfig.model_validate(data)
    except ValidationError as e:
        raise InputError(f"invalid configuration: {e}") from e


def load_config(path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None) -> PipelineConfig:
    """Defaults, then the overlay file, then explicit overrides (CLI flags)."""
    config = PipelineConfig()
    if path:
        if not Path(path).exists():
            raise InputError(f"config file not found: {path}")
        file_values = {k: v for k, v in dotenv_values(path).items() if v is not None}
        config = apply_overrides(config, file_values)
    if overrides:
        config = apply_overrides(config, overrides)
    return config
