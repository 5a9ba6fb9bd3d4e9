"""Score tables: JSON for archiving, flat CSV and gnuplot .dat for plotting."""

import json
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np
import pandas as pd

from src.evaluation.scores import PoseScore, TrackEvaluation


def _pose_summary(score: PoseScore, prefix: str = "") -> dict:
    return {
        f"{prefix}rotation_mean": float(np.mean(score.rotation_errors)),
        f"{prefix}rotation_median": score.median_rotation,
        f"{prefix}translation_mean": float(np.mean(score.translation_errors)),
        f"{prefix}translation_median": score.median_translation,
    }


def score_rows(evaluations: Sequence[TrackEvaluation]) -> pd.DataFrame:
    """One row per track per tau."""
    rows = []
    for ev in evaluations:
        pose = _pose_summary(ev.pose)
        seed = _pose_summary(ev.seed_pose, "seed_") if ev.seed_pose is not None else {}
        for score in ev.shape:
            rows.append(
                {
                    "track_id": ev.track_id,
                    "tau": score.tau,
                    "completeness": score.completeness,
                    "accuracy": score.accuracy,
                    "f1": score.f1,
                    "gt_points": score.gt_points,
                    "reconstructed_points": score.reconstructed_points,
                    "empty": score.empty,
                    **pose,
                    **seed,
                }
            )
    return pd.DataFrame(rows)


def evaluation_to_dict(ev: TrackEvaluation) -> dict:
    data = {
        "track_id": ev.track_id,
        "shape": [s.as_dict() for s in ev.shape],
        "pose": {
            **_pose_summary(ev.pose),
            "frames": ev.pose.frames().to_dict("records"),
            "bins": ev.pose.bins.to_dict("records"),
        },
    }
    if ev.seed_pose is not None:
        data["seed_pose"] = _pose_summary(ev.seed_pose)
    if ev.completion is not None:
        data["completion"] = ev.completion.as_dict()
    return data


def write_json(evaluations: Sequence[TrackEvaluation], path: Union[str, Path]):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    payload: List[dict] = [evaluation_to_dict(ev) for ev in evaluations]
    Path(path).write_text(json.dumps(payload, indent=2, default=float) + "\n")


def write_csv(evaluations: Sequence[TrackEvaluation], path: Union[str, Path]) -> pd.DataFrame:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    table = score_rows(evaluations)
    table.to_csv(path, index=False)
    return table


def write_dat(table: pd.DataFrame, path: Union[str, Path], title: str = ""):
    """Whitespace-separated columns with a '#' header line, readable by gnuplot."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    lines = []
    if title:
        lines.append(f"# {title}")
    lines.append("# " + " ".join(str(c) for c in table.columns))
    for row in table.itertuples(index=False):
        lines.append(" ".join(f"{v:.6g}" if isinstance(v, (float, np.floating)) else str(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")
