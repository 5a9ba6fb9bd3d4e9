"""Named synthetic scenarios covering the three motion regimes and the hard cases."""

from typing import Dict, List

import numpy as np

from src.core.errors import ScenarioError
from src.models.records import ScenarioSpec

_PRESETS: Dict[str, dict] = {
    "straight-20-frames": dict(regime="straight", speed=6.0, start_x=3.0, start_z=14.0, start_yaw=np.pi),
    "turn-20-frames": dict(
        regime="turning", speed=6.0, yaw_rate=0.3, start_x=2.0, start_z=14.0, start_yaw=np.pi
    ),
    "static-20-frames": dict(regime="standing", start_x=2.5, start_z=12.0, start_yaw=np.pi / 3),
    "occluded-mid-track": dict(
        regime="straight", speed=6.0, start_x=3.0, start_z=14.0, start_yaw=np.pi, occluded_frames=[8, 9, 10]
    ),
    "far-range": dict(
        regime="straight",
        speed=10.0,
        start_x=3.0,
        start_z=40.0,
        start_yaw=np.pi,
        noise_sigma_px=1.0,
        detection_sigma_range=0.01,
    ),
    "one-sided-20-frames": dict(regime="standing", start_x=0.0, start_z=10.0, start_yaw=np.pi / 2),
    "biased-seeds-20-frames": dict(
        regime="straight",
        speed=6.0,
        start_x=3.0,
        start_z=14.0,
        start_yaw=np.pi,
        detection_bias=[1.0, 0.0, 0.0],
        clutter_points=600,
    ),
}


def preset_names() -> List[str]:
    return list(_PRESETS)


def get_preset(name: str, seed: int = 0) -> ScenarioSpec:
    if name not in _PRESETS:
        raise ScenarioError(f"unknown preset '{name}'; available: {', '.join(preset_names())}")
    return ScenarioSpec(name=name, seed=seed, **_PRESETS[name])


def preset_suite(seed: int = 0) -> List[ScenarioSpec]:
    return [get_preset(name, seed) for name in _PRESETS]
