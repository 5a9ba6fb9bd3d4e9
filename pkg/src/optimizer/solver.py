"""
Levenberg-Marquardt minimisation of the joint energy with hard-EM reassociation.
"""

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from src.config.settings import EnergyConfig, LMSettings, PipelineConfig
from src.core.errors import InputError
from src.ingest.association import Initialization, associate, initialize, reassociate, same_association
from src.ingest.track_io import Calibration, CameraPose, Detection, Track
from src.models.records import EnergyRecord, FitRecord, PassRecord, PoseRecord
from src.motion.kinematics import MotionRegime, Pose, classify_track_velocities
from src.optimizer.energy import EnergyBreakdown, Problem
from src.shape.manifold import ShapeManifold
from src.utils.observability.logging_utils import log_event
from src.utils.observability.tracing import IterationTracer

DIAGONAL_FLOOR = 1e-6


@dataclass
class LMOutcome:
    x: np.ndarray
    energy: EnergyBreakdown
    iterations: int
    converged: bool
    reason: str
    history: List[float]


def damped_step(hessian: np.ndarray, gradient: np.ndarray, damping: float, dimension: int) -> np.ndarray:
    """
    Solve (H + lambda D) dx = -g with D = diag(H) floored, eliminating the
    shape block first (Schur complement on the pose block).
    """
    scaling = np.maximum(np.diag(hessian), DIAGONAL_FLOOR)
    system = hessian + damping * np.diag(scaling)
    rhs = -gradient
    r = dimension
    a_zz, a_zp, a_pp = system[:r, :r], system[:r, r:], system[r:, r:]
    if r == 0:
        return cho_solve(cho_factor(a_pp), rhs)
    zz = cho_factor(a_zz)
    y_mat = cho_solve(zz, a_zp)
    y_vec = cho_solve(zz, rhs[:r])
    schur = a_pp - a_zp.T @ y_mat
    d_pose = cho_solve(cho_factor(schur), rhs[r:] - a_zp.T @ y_vec)
    d_shape = y_vec - y_mat @ d_pose
    return np.concatenate([d_shape, d_pose])


def levenberg_marquardt(
    problem: Problem,
    x0: np.ndarray,
    settings: Optional[LMSettings] = None,
    tracer: Optional[IterationTracer] = None,
    pass_index: int = 0,
) -> LMOutcome:
    """Accept a step iff the energy decreases; damping shrinks on accept, grows on reject."""
    settings = settings or LMSettings()
    x = np.array(x0, dtype=np.float64)
    energy = problem.energy(x)
    cost = energy.total
    history = [cost]
    damping = settings.initial_damping
    converged, reason = False, "max_iterations"

    iteration = 0
    while iteration < settings.max_iterations:
        if cost == 0.0:
            converged, reason = True, "zero_cost"
            break
        hessian, gradient = problem.linearize(x).normal_equations()
        gradient_norm = float(np.max(np.abs(gradient)))
        if gradient_norm < settings.gradient_tol:
            converged, reason = True, "gradient"
            break
        iteration += 1

        try:
            step = damped_step(hessian, gradient, damping, problem.dimension)
            trial = problem.energy(x + step, strict=False)
            accepted = bool(np.isfinite(trial.total) and trial.total < cost)
        except np.linalg.LinAlgError:
            step, trial, accepted = np.zeros_like(x), None, False

        step_norm = float(np.linalg.norm(step))
        if tracer is not None:
            tracer.record(
                pass_index,
                iteration,
                (trial or energy).as_dict(),
                damping,
                accepted,
                step_norm,
                gradient_norm,
            )

        if not accepted:
            damping *= settings.damping_increase
            if damping > settings.max_damping:
                converged, reason = True, "damping"
                break
            continue

        decrease = cost - trial.total
        x, energy, cost = x + step, trial, trial.total
        history.append(cost)
        damping = max(damping * settings.damping_decrease, 1e-15)
        if decrease <= settings.cost_tol * (cost + decrease):
            converged, reason = True, "cost"
            break
        if step_norm <= settings.step_tol * (np.linalg.norm(x) + settings.step_tol):
            converged, reason = True, "step"
            break

    log_event(
        "LevenbergMarquardt",
        {"event": "finished", "reason": reason, "iterations": iteration},
        level="debug",
        energy=cost,
        pass_index=pass_index,
    )
    return LMOutcome(x, energy, iteration, converged, reason, history)


@dataclass
class PassSummary:
    pass_index: int
    iterations: int
    converged: bool
    regime: MotionRegime
    energy: float
    associated_points: List[int]
    history: List[float] = field(default_factory=list)

    def to_record(self) -> PassRecord:
        return PassRecord(
            pass_index=self.pass_index,
            iterations=self.iterations,
            converged=self.converged,
            regime=self.regime.value,
            energy=self.energy,
            associated_points=self.associated_points,
        )

    @classmethod
    def from_record(cls, record: PassRecord, history: Optional[List[float]] = None) -> "PassSummary":
        return cls(
            pass_index=record.pass_index,
            iterations=record.iterations,
            converged=record.converged,
            regime=MotionRegime(record.regime),
            energy=record.energy,
            associated_points=list(record.associated_points),
            history=list(history or []),
        )


@dataclass
class FitResult:
    track_id: str
    z: np.ndarray
    poses: List[Pose]
    frame_indices: List[int]
    timestamps: List[float]
    energy: EnergyBreakdown
    iterations: int
    converged: bool
    regime: MotionRegime
    energy_history: List[List[float]]  # accepted-step energies, one list per pass
    frame_rms: List[Optional[float]]
    observation_free: List[int] = field(default_factory=list)
    passes: List[PassSummary] = field(default_factory=list)
    calibration: Optional[Calibration] = None
    cameras: List[CameraPose] = field(default_factory=list)
    detections: List[Detection] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_record(self) -> FitRecord:
        return FitRecord(
            track_id=self.track_id,
            shape_code=[float(v) for v in self.z],
            poses=[
                PoseRecord(
                    index=i, t_s=ts, t=[float(c) for c in p.t], theta=p.theta, v=p.v, omega=p.omega
                )
                for i, ts, p in zip(self.frame_indices, self.timestamps, self.poses)
            ],
            energy=EnergyRecord(**self.energy.as_dict()),
            iterations=self.iterations,
            converged=self.converged,
            regime=self.regime.value,
            energy_history=[list(h) for h in self.energy_history],
            frame_rms=self.frame_rms,
            observation_free=self.observation_free,
            passes=[p.to_record() for p in self.passes],
            calib=self.calibration.to_record() if self.calibration else None,
            cameras=[c.to_record() for c in self.cameras],
            detections=[d.to_record() for d in self.detections],
            config=self.config,
        )

    @classmethod
    def from_record(cls, record: FitRecord) -> "FitResult":
        return cls(
            track_id=record.track_id,
            z=np.array(record.shape_code),
            poses=[Pose(p.t, p.theta, p.v, p.omega) for p in record.poses],
            frame_indices=[p.index for p in record.poses],
            timestamps=[p.t_s for p in record.poses],
            energy=EnergyBreakdown(**record.energy.model_dump()),
            iterations=record.iterations,
            converged=record.converged,
            regime=MotionRegime(record.regime),
            energy_history=[list(h) for h in record.energy_history],
            frame_rms=list(record.frame_rms),
            observation_free=list(record.observation_free),
            passes=[PassSummary.from_record(p, h) for p, h in zip(record.passes, record.energy_history)],
            calibration=Calibration.from_record(record.calib) if record.calib else None,
            cameras=[CameraPose.from_record(c) for c in record.cameras],
            detections=[
                Detection.from_record(d, i) for d, i in zip(record.detections, [p.index for p in record.poses])
            ],
            config=record.config,
        )

    def save(self, path: Union[str, Path]):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_record().model_dump(), indent=2) + "\n")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "FitResult":
        path = Path(path)
        if not path.exists():
            raise InputError(f"fit result not found: {path}")
        try:
            return cls.from_record(FitRecord.model_validate_json(path.read_text()))
        except ValueError as e:
            raise InputError(f"{path}: invalid fit result: {e}") from e


def _associated_counts(track: Track) -> List[int]:
    return [int(len(f.observations)) for f in track.frames]


def _result(
    track: Track,
    problem: Problem,
    outcome: LMOutcome,
    passes: List[PassSummary],
    config: PipelineConfig,
    iterations: int,
) -> FitResult:
    z, poses = problem.unpack(outcome.x)
    return FitResult(
        track_id=track.id,
        z=z,
        poses=poses,
        frame_indices=[f.index for f in track.frames],
        timestamps=[f.timestamp for f in track.frames],
        energy=outcome.energy,
        iterations=iterations,
        converged=outcome.converged,
        regime=problem.regime,
        energy_history=[list(p.history) for p in passes],
        frame_rms=problem.frame_rms(outcome.x),
        observation_free=[f.index for f in track.frames if f.observation_free],
        passes=passes,
        calibration=track.calibration,
        cameras=[f.camera for f in track.frames],
        detections=[f.detection for f in track.frames],
        config=config.model_dump(),
    )


def solve(
    track: Track,
    manifold: ShapeManifold,
    config: Optional[PipelineConfig] = None,
    init: Optional[Initialization] = None,
    tracer: Optional[IterationTracer] = None,
) -> FitResult:
    """
    Fit shape code and trajectory to a track.

    The first pass uses inflated depth uncertainty and detection-based
    association; each EM pass then re-associates observations around the
    optimized trajectory, re-classifies the motion regime and re-solves.
    """
    config = config or PipelineConfig()
    energy_cfg = config.energy
    current = associate(track, settings=config.association)
    init = init or initialize(current, manifold, energy_cfg.motion)
    if tracer is not None and tracer.track_id is None:
        tracer = tracer.for_track(track.id)

    problem = Problem(
        manifold, current, energy_cfg, init.regime, init.poses, inflation=energy_cfg.initial_inflation
    )
    outcome = levenberg_marquardt(problem, problem.pack(init.z, init.poses), energy_cfg.lm, tracer, 0)
    passes = [
        PassSummary(0, outcome.iterations, outcome.converged, problem.regime, outcome.energy.total,
                    _associated_counts(current), outcome.history)
    ]
    iterations = outcome.iterations

    for pass_index in range(1, energy_cfg.em_passes + 1):
        z, poses = problem.unpack(outcome.x)
        updated = reassociate(current, poses, config.association)
        if pass_index > 1 and same_association(updated, current):
            log_event("Solver", "association unchanged, stopping EM", level="debug", pass_index=pass_index)
            break
        current = updated
        regime = classify_track_velocities([p.v for p in poses], [p.omega for p in poses], energy_cfg.motion)
        problem = Problem(manifold, current, energy_cfg, regime, poses, inflation=1.0)
        outcome = levenberg_marquardt(problem, problem.pack(z, poses), energy_cfg.lm, tracer, pass_index)
        iterations += outcome.iterations
        passes.append(
            PassSummary(pass_index, outcome.iterations, outcome.converged, regime, outcome.energy.total,
                        _associated_counts(current), outcome.history)
        )

    result = _result(current, problem, outcome, passes, config, iterations)
    log_event(
        "Solver",
        {"event": "fit", "track": track.id, "converged": result.converged},
        level="info",
        energy=result.energy.total,
        iterations=iterations,
        regime=result.regime.value,
    )
    return result


def solve_single_frame(
    track: Track, manifold: ShapeManifold, config: Optional[PipelineConfig] = None
) -> List[FitResult]:
    """Fit every frame on its own: own shape code, ground prior only, no motion coupling."""
    config = config or PipelineConfig()
    energy_cfg: EnergyConfig = config.energy.model_copy(update={"use_motion_term": False})
    associated = associate(track, settings=config.association)
    results = []
    for frame in associated.frames:
        single = replace(associated, id=f"{track.id}:{frame.index}", frames=[frame])
        center = np.array(frame.detection.center, dtype=np.float64)
        center[1] = frame.plane.elevation(center[0], center[2])
        pose = Pose(center, frame.detection.yaw)
        problem = Problem(manifold, single, energy_cfg, MotionRegime.STANDING, [pose])
        x0 = problem.pack(np.zeros(manifold.dimension), [pose])
        if frame.observation_free:
            outcome = LMOutcome(x0, problem.energy(x0), 0, True, "no_observations", [problem.energy(x0).total])
        else:
            outcome = levenberg_marquardt(problem, x0, energy_cfg.lm)
        summary = PassSummary(0, outcome.iterations, outcome.converged, MotionRegime.STANDING,
                              outcome.energy.total, _associated_counts(single), outcome.history)
        results.append(_result(single, problem, outcome, [summary], config, outcome.iterations))
    return results
