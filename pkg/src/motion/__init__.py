from .ground_plane import GroundPlane, fit_ground_plane, ground_candidates
from .kinematics import (
    MotionFactor,
    MotionNoise,
    MotionRegime,
    Pose,
    classify,
    classify_track_velocities,
    motion_residual,
    predict,
    predict_jacobian,
    propagate_covariance,
    wrap_angle,
)
