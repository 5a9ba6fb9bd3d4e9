from .reports import score_rows, write_csv, write_dat, write_json
from .scores import (
    PoseScore,
    ShapeScore,
    TrackEvaluation,
    distance_curve,
    evaluate_fit,
    f1_score,
    frame_shape_scores,
    full_surface_points,
    mean_shape_score,
    pose_score,
    reconstructed_points_from_fit,
    shape_score,
    tau_sweep,
)
