import datetime
import json
from pathlib import Path
from typing import Any, Dict, Optional, Union

from src.utils.observability.logging_utils import log_event


class IterationTracer:
    """Appends one JSON line per Levenberg-Marquardt iteration to a report file."""

    def __init__(self, filepath: Union[str, Path] = "fit_report.jsonl", track_id: Optional[str] = None):
        self.filepath = Path(filepath)
        self.track_id = track_id
        self.filepath.parent.mkdir(parents=True, exist_ok=True)

    def for_track(self, track_id: str) -> "IterationTracer":
        return IterationTracer(self.filepath, track_id)

    def record(
        self,
        pass_index: int,
        iteration: int,
        energy: Dict[str, float],
        damping: float,
        accepted: bool,
        step_norm: float,
        gradient_norm: float,
        **extra: Any,
    ):
        entry = {
            "timestamp": datetime.datetime.utcnow().isoformat(),
            "track_id": self.track_id,
            "pass": pass_index,
            "iteration": iteration,
            "energy": energy.get("total"),
            "terms": energy,
            "damping": damping,
            "accepted": accepted,
            "step_norm": step_norm,
            "gradient_norm": gradient_norm,
            **extra,
        }
        try:
            with open(self.filepath, "a", encoding="utf-8") as f:
                f.write(json.dumps(entry, default=float) + "\n")
        except OSError as e:
            log_event("IterationTracer", "failed to write trace", level="error", error=str(e))


def read_report(filepath: Union[str, Path]):
    """Parsed report lines, in file order."""
    with open(filepath, "r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]
