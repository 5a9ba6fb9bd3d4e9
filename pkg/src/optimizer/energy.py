"""
Joint shape/trajectory energy as a robust nonlinear least-squares problem.

E = (1/T) sum_t [ (1/N_t) sum_x rho(phi_z(T_xi x) / sigma_d) + motion_t ] + kappa(z)

Every term is written as a sum of squared residuals so Levenberg-Marquardt
sees the exact energy: data residuals are sign(r) sqrt(rho(r)) scaled by
sqrt(1/(T N_t)), motion and ground residuals are whitened and scaled by
sqrt(1/T), and the shape prior contributes sqrt(w) z_i / sigma_i.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.config.settings import EnergyConfig
from src.core.errors import InputError, NonFiniteEnergyError
from src.ingest.track_io import Calibration, Track
from src.motion.kinematics import (
    STATE_SIZE,
    MotionFactor,
    MotionNoise,
    MotionRegime,
    Pose,
    classify_track_velocities,
    plane_residual,
    plane_residual_jacobian,
    yaw_rotation_derivative,
)
from src.shape.manifold import ShapeManifold

EIGENVALUE_FLOOR = 1e-12


def huber(r, delta: float = 1.345):
    """rho(r) = r^2 inside [-delta, delta], 2 delta |r| - delta^2 outside."""
    a = np.abs(np.asarray(r, dtype=np.float64))
    return np.where(a <= delta, a**2, 2 * delta * a - delta**2)


def robust_residual(r, delta: float = 1.345) -> Tuple[np.ndarray, np.ndarray]:
    """sign(r) sqrt(rho(r)) and its derivative in r."""
    r = np.asarray(r, dtype=np.float64)
    a = np.abs(r)
    inside = a <= delta
    root = np.sqrt(np.where(inside, 1.0, 2 * delta * a - delta**2))
    value = np.where(inside, r, np.sign(r) * root)
    slope = np.where(inside, 1.0, delta / root)
    return value, slope


def data_residuals(
    manifold: ShapeManifold,
    z,
    pose: Pose,
    points,
    depths,
    calibration: Calibration,
    huber_delta: float = 1.345,
    inflation: float = 1.0,
    scale: Optional[float] = None,
) -> np.ndarray:
    """Whitened robust residual per point; `scale` defaults to sqrt(1/N)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        return np.zeros(0)
    sigma = calibration.sigma_depth(depths) * inflation
    scale = np.sqrt(1.0 / len(pts)) if scale is None else scale
    raw = manifold.evaluate(pose.to_object(pts), z).values / sigma
    return scale * robust_residual(raw, huber_delta)[0]


@dataclass
class EnergyBreakdown:
    total: float
    data: float
    motion: float
    shape: float

    def as_dict(self) -> Dict[str, float]:
        return {"total": self.total, "data": self.data, "motion": self.motion, "shape": self.shape}


@dataclass
class FrameObservations:
    position: int  # frame position in the track
    points: np.ndarray
    sigma: np.ndarray
    scale: float


@dataclass
class DataBlock:
    position: int
    residuals: np.ndarray  # (N,)
    jac_z: np.ndarray  # (N, R)
    jac_pose: np.ndarray  # (N, 6)


@dataclass
class PoseBlock:
    """Residual rows touching only poses (kinematic or ground prior)."""

    residuals: np.ndarray
    jacobians: Dict[int, np.ndarray] = field(default_factory=dict)


@dataclass
class JacobianBlocks:
    dimension: int
    frames: int
    data: List[DataBlock]
    pose: List[PoseBlock]
    prior_residuals: np.ndarray
    prior_scale: np.ndarray

    @property
    def size(self) -> int:
        return self.dimension + STATE_SIZE * self.frames

    def pose_slice(self, position: int) -> slice:
        start = self.dimension + STATE_SIZE * position
        return slice(start, start + STATE_SIZE)

    def residual_vector(self) -> np.ndarray:
        parts = [b.residuals for b in self.data] + [b.residuals for b in self.pose]
        return np.concatenate(parts + [self.prior_residuals])

    def to_dense(self) -> np.ndarray:
        rows = []
        for block in self.data:
            dense = np.zeros((len(block.residuals), self.size))
            dense[:, : self.dimension] = block.jac_z
            dense[:, self.pose_slice(block.position)] = block.jac_pose
            rows.append(dense)
        for block in self.pose:
            dense = np.zeros((len(block.residuals), self.size))
            for position, jac in block.jacobians.items():
                dense[:, self.pose_slice(position)] += jac
            rows.append(dense)
        prior = np.zeros((self.dimension, self.size))
        prior[:, : self.dimension] = np.diag(self.prior_scale)
        rows.append(prior)
        return np.vstack(rows)

    def normal_equations(self) -> Tuple[np.ndarray, np.ndarray]:
        """Gauss-Newton H = J^T J and gradient g = J^T r, accumulated block by block."""
        r_dim = self.dimension
        hessian = np.zeros((self.size, self.size))
        gradient = np.zeros(self.size)
        zs = slice(0, r_dim)
        for block in self.data:
            ps = self.pose_slice(block.position)
            jz, jp, res = block.jac_z, block.jac_pose, block.residuals
            cross = jz.T @ jp
            hessian[zs, zs] += jz.T @ jz
            hessian[zs, ps] += cross
            hessian[ps, zs] += cross.T
            hessian[ps, ps] += jp.T @ jp
            gradient[zs] += jz.T @ res
            gradient[ps] += jp.T @ res
        for block in self.pose:
            items = list(block.jacobians.items())
            for i, jac_i in items:
                si = self.pose_slice(i)
                gradient[si] += jac_i.T @ block.residuals
                for j, jac_j in items:
                    hessian[si, self.pose_slice(j)] += jac_i.T @ jac_j
        hessian[zs, zs] += np.diag(self.prior_scale**2)
        gradient[zs] += self.prior_scale * self.prior_residuals
        return hessian, gradient


class Problem:
    """Residual model of one track for fixed observations, regime and motion weighting."""

    def __init__(
        self,
        manifold: ShapeManifold,
        track: Track,
        config: EnergyConfig,
        regime: MotionRegime,
        linearization: Sequence[Pose],
        inflation: float = 1.0,
    ):
        if len(linearization) != track.length:
            raise InputError(f"{len(linearization)} poses for a track of {track.length} frames")
        self.manifold = manifold
        self.track = track
        self.config = config
        self.regime = regime
        self.inflation = inflation
        self.frames = track.length
        self.dimension = manifold.dimension

        self.observations: List[FrameObservations] = []
        for k, frame in enumerate(track.frames):
            points = frame.observations
            if len(points) == 0:
                continue
            sigma = track.calibration.sigma_depth(frame.observation_depths) * inflation
            scale = np.sqrt(1.0 / (self.frames * len(points)))
            self.observations.append(FrameObservations(k, points, sigma, scale))

        self.motion_scale = np.sqrt(1.0 / self.frames)
        self.factors: List[Optional[MotionFactor]] = [None] * self.frames
        if config.use_motion_term:
            noise = MotionNoise.from_settings(config.motion)
            dts = track.dts()
            for k in range(1, self.frames):
                self.factors[k] = MotionFactor.linearize(
                    linearization[k - 1],
                    float(dts[k - 1]),
                    regime,
                    noise,
                    track.frames[k].plane,
                    config.motion.taylor_threshold,
                )
        self.prior_scale = np.sqrt(config.shape_prior_weight) / np.sqrt(
            np.maximum(manifold.eigenvalues, EIGENVALUE_FLOOR)
        )

    @classmethod
    def for_poses(
        cls, manifold, track, config: EnergyConfig, poses: Sequence[Pose], regime=None, inflation=1.0
    ) -> "Problem":
        if regime is None:
            regime = classify_track_velocities(
                [p.v for p in poses], [p.omega for p in poses], config.motion
            )
        return cls(manifold, track, config, regime, poses, inflation)

    @property
    def size(self) -> int:
        return self.dimension + STATE_SIZE * self.frames

    def pack(self, z, poses: Sequence[Pose]) -> np.ndarray:
        return np.concatenate([np.asarray(z, dtype=np.float64)] + [p.as_vector() for p in poses])

    def unpack(self, x) -> Tuple[np.ndarray, List[Pose]]:
        x = np.asarray(x, dtype=np.float64)
        z = x[: self.dimension]
        states = x[self.dimension :].reshape(self.frames, STATE_SIZE)
        return z.copy(), [Pose.from_vector(s) for s in states]

    def _data(self, z, poses, obs: FrameObservations, with_jacobian: bool):
        pose = poses[obs.position]
        local = pose.to_object(obs.points)
        phi = self.manifold.evaluate(local, z)
        raw = phi.values / obs.sigma
        value, slope = robust_residual(raw, self.config.huber_delta)
        residuals = obs.scale * value
        if not with_jacobian:
            return residuals, None
        factor = (obs.scale * slope / obs.sigma)[:, None]
        rotation = pose.rotation()
        offsets = obs.points - pose.t
        d_t = -phi.grad_x @ rotation.T
        d_theta = np.einsum("nd,nd->n", phi.grad_x, offsets @ yaw_rotation_derivative(pose.theta))
        jac_pose = np.zeros((len(residuals), STATE_SIZE))
        jac_pose[:, :3] = d_t
        jac_pose[:, 3] = d_theta
        return residuals, DataBlock(obs.position, residuals, factor * phi.grad_z, factor * jac_pose)

    def _pose_terms(self, poses, with_jacobian: bool) -> List[PoseBlock]:
        blocks = []
        for k, factor in enumerate(self.factors):
            if factor is None:
                continue
            residuals = self.motion_scale * factor.kinematic_residual(poses[k], poses[k - 1])
            block = PoseBlock(residuals)
            if with_jacobian:
                jac_t, jac_prev = factor.jacobians(poses[k - 1])
                block.jacobians = {
                    k: self.motion_scale * jac_t[:STATE_SIZE],
                    k - 1: self.motion_scale * jac_prev[:STATE_SIZE],
                }
            blocks.append(block)
        if self.config.use_ground_prior:
            for k, frame in enumerate(self.track.frames):
                residual = self.motion_scale * plane_residual(poses[k], frame.plane)
                block = PoseBlock(np.array([residual]))
                if with_jacobian:
                    block.jacobians = {k: self.motion_scale * plane_residual_jacobian(frame.plane)[None, :]}
                blocks.append(block)
        return blocks

    def linearize(self, x) -> JacobianBlocks:
        z, poses = self.unpack(x)
        data = [self._data(z, poses, obs, True)[1] for obs in self.observations]
        return JacobianBlocks(
            self.dimension,
            self.frames,
            data,
            self._pose_terms(poses, True),
            self.prior_scale * z,
            self.prior_scale,
        )

    def residual_vector(self, x) -> np.ndarray:
        z, poses = self.unpack(x)
        parts = [self._data(z, poses, obs, False)[0] for obs in self.observations]
        parts += [b.residuals for b in self._pose_terms(poses, False)]
        return np.concatenate(parts + [self.prior_scale * z])

    def energy(self, x, strict: bool = True) -> EnergyBreakdown:
        z, poses = self.unpack(x)
        data = 0.0
        for obs in self.observations:
            frame_energy = float(np.sum(self._data(z, poses, obs, False)[0] ** 2))
            if not np.isfinite(frame_energy):
                if strict:
                    raise NonFiniteEnergyError("data", self.track.frames[obs.position].index)
                frame_energy = np.inf
            data += frame_energy
        motion = 0.0
        for block in self._pose_terms(poses, False):
            motion += float(np.sum(block.residuals**2))
        if not np.isfinite(motion) and strict:
            raise NonFiniteEnergyError("motion")
        shape = float(np.sum((self.prior_scale * z) ** 2))
        if not np.isfinite(shape) and strict:
            raise NonFiniteEnergyError("shape")
        return EnergyBreakdown(data + motion + shape, data, motion, shape)

    def frame_rms(self, x) -> List[Optional[float]]:
        """Per-frame RMS of |phi| (metres) over associated observations."""
        z, poses = self.unpack(x)
        rms: List[Optional[float]] = [None] * self.frames
        for obs in self.observations:
            phi = self.manifold.evaluate(poses[obs.position].to_object(obs.points), z).values
            rms[obs.position] = float(np.sqrt(np.mean(phi**2)))
        return rms


def total_energy(
    manifold: ShapeManifold,
    z,
    poses: Sequence[Pose],
    track: Track,
    config: Optional[EnergyConfig] = None,
    regime: Optional[MotionRegime] = None,
) -> EnergyBreakdown:
    """Energy of a state, with motion factors weighted at the state itself."""
    config = config or EnergyConfig()
    problem = Problem.for_poses(manifold, track, config, poses, regime)
    return problem.energy(problem.pack(z, poses))


def jacobians(
    manifold: ShapeManifold,
    z,
    poses: Sequence[Pose],
    track: Track,
    config: Optional[EnergyConfig] = None,
    regime: Optional[MotionRegime] = None,
) -> JacobianBlocks:
    config = config or EnergyConfig()
    problem = Problem.for_poses(manifold, track, config, poses, regime)
    return problem.linearize(problem.pack(z, poses))
