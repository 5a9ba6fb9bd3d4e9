"""
Batch track fitter.

Fits every track under a directory, chunk by chunk, in a process pool
(or in-process with a single worker) and aggregates per-track metrics.
"""

import asyncio
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from src.config.settings import PipelineConfig
from src.core.errors import InputError, ShapeTrackError
from src.ingest.track_io import load_track
from src.optimizer.solver import solve
from src.patterns.parallel import map_in_executor
from src.shape.manifold import ShapeManifold
from src.utils.observability.logging_utils import log_event
from src.utils.observability.metrics import MetricsCollector
from src.utils.observability.tracing import IterationTracer

_MANIFOLDS: Dict[str, ShapeManifold] = {}


def discover_tracks(directory: Union[str, Path]) -> List[Path]:
    """Track files below `directory`: `track.json` or `*.track.json`, sorted."""
    root = Path(directory)
    if not root.is_dir():
        raise InputError(f"not a directory: {root}")
    return sorted(p for p in root.rglob("*.json") if p.name == "track.json" or p.name.endswith(".track.json"))


def fit_name(track_path: Path) -> str:
    if track_path.name == "track.json":
        return f"{track_path.parent.name}.fit.json"
    return track_path.name.replace(".track.json", ".fit.json")


def _manifold(path: str) -> ShapeManifold:
    if path not in _MANIFOLDS:
        _MANIFOLDS[path] = ShapeManifold.load(path)
    return _MANIFOLDS[path]


def fit_track_file(
    track_path: str, manifold_path: str, out_path: str, config: Dict[str, Any], report: Optional[str] = None
) -> Dict[str, Any]:
    """Worker entry point: load, fit, save. Returns a picklable summary."""
    start = time.time()
    pipeline = PipelineConfig.model_validate(config)
    try:
        track = load_track(track_path, pipeline.ground, seed=pipeline.seed)
        tracer = IterationTracer(report, track.id) if report else None
        result = solve(track, _manifold(manifold_path), pipeline, tracer=tracer)
        result.save(out_path)
    except ShapeTrackError as e:
        return {
            "track": track_path,
            "fit": None,
            "converged": False,
            "iterations": 0,
            "energy": None,
            "latency_ms": (time.time() - start) * 1000,
            "error": str(e),
        }
    return {
        "track": track_path,
        "fit": out_path,
        "converged": result.converged,
        "iterations": result.iterations,
        "energy": result.energy.total,
        "latency_ms": (time.time() - start) * 1000,
        "error": None,
    }


@dataclass
class BatchSummary:
    results: List[Dict[str, Any]] = field(default_factory=list)
    stats: Dict[str, Any] = field(default_factory=dict)
    elapsed_seconds: float = 0.0

    @property
    def all_converged(self) -> bool:
        return all(r["converged"] and not r["error"] for r in self.results)


class TrackBatchProcessor:
    """Fits a set of track files with a shared manifold and configuration."""

    def __init__(
        self,
        manifold_path: Union[str, Path],
        out_dir: Union[str, Path],
        config: Optional[PipelineConfig] = None,
        report_dir: Optional[Union[str, Path]] = None,
        chunk_size: int = 8,
        metrics: Optional[MetricsCollector] = None,
    ):
        self.manifold_path = str(manifold_path)
        self.out_dir = Path(out_dir)
        self.config = config or PipelineConfig()
        self.report_dir = Path(report_dir) if report_dir else None
        self.chunk_size = chunk_size
        self.metrics = metrics or MetricsCollector()

    def _jobs(self, tracks: List[Path]) -> List[tuple]:
        config = self.config.model_dump()
        jobs = []
        for path in tracks:
            name = fit_name(path)
            report = str(self.report_dir / name.replace(".fit.json", ".report.jsonl")) if self.report_dir else None
            jobs.append((str(path), self.manifold_path, str(self.out_dir / name), config, report))
        return jobs

    async def process_batch(self, tracks: List[Path]) -> BatchSummary:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        jobs = self._jobs(tracks)
        summary = BatchSummary()
        start = time.time()

        executor = ProcessPoolExecutor(self.config.workers) if self.config.workers > 1 else None
        try:
            for i in range(0, len(jobs), self.chunk_size):
                chunk = jobs[i : i + self.chunk_size]
                if executor is None:
                    outcomes = [fit_track_file(*job) for job in chunk]
                else:
                    outcomes = await map_in_executor(fit_track_file, chunk, executor)
                for job, outcome in zip(chunk, outcomes):
                    if isinstance(outcome, BaseException):
                        outcome = {
                            "track": job[0], "fit": None, "converged": False, "iterations": 0,
                            "energy": None, "latency_ms": 0.0, "error": repr(outcome),
                        }
                    summary.results.append(outcome)
                    self.metrics.record_fit(
                        Path(outcome["track"]).parent.name,
                        outcome["latency_ms"],
                        outcome["converged"],
                        outcome["iterations"],
                        outcome["energy"],
                        outcome["error"],
                    )
                log_event(
                    "TrackBatchProcessor",
                    "progress",
                    level="info",
                    done=min(i + self.chunk_size, len(jobs)),
                    total=len(jobs),
                )
        finally:
            if executor is not None:
                executor.shutdown()

        summary.elapsed_seconds = time.time() - start
        summary.stats = self.metrics.get_stats()
        return summary

    def run(self, tracks: List[Path]) -> BatchSummary:
        return asyncio.run(self.process_batch(tracks))
