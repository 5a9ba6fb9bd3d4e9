from .generator import GroundTruth, SyntheticScene, generate, perturb_depth, trajectory, write_scene
from .presets import get_preset, preset_names, preset_suite
