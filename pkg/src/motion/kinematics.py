"""
Vehicle state, motion regimes and the kinematic prior between frames.

State vector ordering is (t_x, t_y, t_z, theta, v, omega). A vehicle with
yaw theta drives along (-sin theta, 0, -cos theta); theta = 0 faces -z.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import solve_triangular

from src.config.settings import MotionSettings
from src.core.errors import InputError, SingularCovarianceError
from src.motion.ground_plane import GroundPlane
from src.utils.validators import require_finite, require_positive

STATE_SIZE = 6


def wrap_angle(angle):
    """Wrap to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(angle, dtype=np.float64), 2 * np.pi)


def lower_median(values: Sequence[float]) -> float:
    ordered = np.sort(np.asarray(values, dtype=np.float64).reshape(-1))
    if ordered.size == 0:
        raise InputError("median of an empty sample")
    return float(ordered[(ordered.size - 1) // 2])


def yaw_rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def yaw_rotation_derivative(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[-s, 0.0, c], [0.0, 0.0, 0.0], [-c, 0.0, -s]])


@dataclass(frozen=True)
class Pose:
    t: np.ndarray
    theta: float
    v: float = 0.0
    omega: float = 0.0

    def __post_init__(self):
        t = require_finite(np.array(self.t, dtype=np.float64).reshape(3), "pose translation")
        t.setflags(write=False)
        object.__setattr__(self, "t", t)
        require_finite([self.theta, self.v, self.omega], "pose")
        object.__setattr__(self, "theta", float(wrap_angle(self.theta)))
        object.__setattr__(self, "v", float(self.v))
        object.__setattr__(self, "omega", float(self.omega))

    @classmethod
    def from_vector(cls, xi) -> "Pose":
        xi = np.asarray(xi, dtype=np.float64).reshape(STATE_SIZE)
        return cls(xi[:3], xi[3], xi[4], xi[5])

    def as_vector(self) -> np.ndarray:
        return np.array([*self.t, self.theta, self.v, self.omega])

    def rotation(self) -> np.ndarray:
        return yaw_rotation(self.theta)

    def heading(self) -> np.ndarray:
        return np.array([-np.sin(self.theta), 0.0, -np.cos(self.theta)])

    def to_object(self, points) -> np.ndarray:
        """World points into the canonical object frame: R^T (x - t)."""
        return (np.asarray(points, dtype=np.float64).reshape(-1, 3) - self.t) @ self.rotation()

    def to_world(self, points) -> np.ndarray:
        return np.asarray(points, dtype=np.float64).reshape(-1, 3) @ self.rotation().T + self.t


class MotionRegime(str, Enum):
    TURNING = "turning"
    STRAIGHT = "straight"
    STANDING = "standing"


@dataclass(frozen=True)
class MotionNoise:
    sigma_v: float = 1.0
    sigma_omega: float = 0.1
    floor_translation: float = 0.05**2
    floor_rotation: float = 0.02**2
    floor_velocity: float = 0.5**2
    floor_yaw_rate: float = 0.05**2

    def __post_init__(self):
        for name in (
            "sigma_v",
            "sigma_omega",
            "floor_translation",
            "floor_rotation",
            "floor_velocity",
            "floor_yaw_rate",
        ):
            require_positive(getattr(self, name), name)

    @classmethod
    def from_settings(cls, settings: MotionSettings) -> "MotionNoise":
        return cls(
            settings.sigma_v,
            settings.sigma_omega,
            settings.floor_translation,
            settings.floor_rotation,
            settings.floor_velocity,
            settings.floor_yaw_rate,
        )

    def floor(self) -> np.ndarray:
        t, r = self.floor_translation, self.floor_rotation
        return np.diag([t, t, t, r, self.floor_velocity, self.floor_yaw_rate])


def classify(v: float, omega: float, eps_v: float = 0.5, eps_omega: float = 0.03) -> MotionRegime:
    """Standing takes precedence over Straight, Straight over Turning."""
    if abs(v) < eps_v:
        return MotionRegime.STANDING
    if abs(omega) < eps_omega:
        return MotionRegime.STRAIGHT
    return MotionRegime.TURNING


def classify_track_velocities(
    velocities: Sequence[float], yaw_rates: Sequence[float], settings: Optional[MotionSettings] = None
) -> MotionRegime:
    settings = settings or MotionSettings()
    return classify(
        lower_median(velocities), lower_median(yaw_rates), settings.eps_v, settings.eps_omega
    )


@dataclass
class Displacement:
    """(dx, dz, dtheta) of one step and their partials in theta, v, omega."""

    delta: np.ndarray  # (3,)  dx, dz, dtheta
    d_theta: np.ndarray  # (3,)
    d_v: np.ndarray  # (3,)
    d_omega: np.ndarray  # (3,)


def displacement(
    pose: Pose, dt: float, regime: MotionRegime, taylor_threshold: float = 1e-4
) -> Displacement:
    """
    One-step motion of the three regimes.

    Straight moves by v dt along the pose heading (-sin theta, 0, -cos theta),
    not along (sin theta, 0, -cos theta). The x sign is flipped so that
    Straight is the omega -> 0 limit of the Turning arc under
    R_y(theta) = [[c, 0, s], [0, 1, 0], [-s, 0, c]]; with the other sign the
    two models would disagree at first order in dt whenever theta != 0.
    """
    theta, v, w = pose.theta, pose.v, pose.omega
    s, c = np.sin(theta), np.cos(theta)
    zero = np.zeros(3)

    if regime == MotionRegime.STANDING:
        return Displacement(zero, zero, zero, zero)

    if regime == MotionRegime.STRAIGHT:
        dx, dz = -v * dt * s, -v * dt * c
        return Displacement(
            np.array([dx, dz, 0.0]),
            np.array([dz, -dx, 0.0]),
            np.array([-dt * s, -dt * c, 0.0]),
            zero,
        )

    if abs(w) * dt < taylor_threshold:
        # Second-order expansion of the arc in omega.
        ux = -dt * s - c * w * dt**2 / 2 + s * w**2 * dt**3 / 6
        uz = -dt * c + s * w * dt**2 / 2 + c * w**2 * dt**3 / 6
        dx, dz = v * ux, v * uz
        d_omega = np.array(
            [-v * c * dt**2 / 2 + v * s * w * dt**3 / 3, v * s * dt**2 / 2 + v * c * w * dt**3 / 3, dt]
        )
        return Displacement(
            np.array([dx, dz, w * dt]), np.array([dz, -dx, 0.0]), np.array([ux, uz, 0.0]), d_omega
        )

    a = theta + w * dt
    sa, ca = np.sin(a), np.cos(a)
    ux, uz = (ca - c) / w, (s - sa) / w
    dx, dz = v * ux, v * uz
    d_omega = np.array([-dx / w - v * sa * dt / w, -dz / w - v * ca * dt / w, dt])
    return Displacement(
        np.array([dx, dz, w * dt]), np.array([dz, -dx, 0.0]), np.array([ux, uz, 0.0]), d_omega
    )


def predict(
    pose: Pose, dt: float, regime: MotionRegime, taylor_threshold: float = 1e-4
) -> Pose:
    """g(xi): t_y, v and omega are carried over unchanged."""
    require_positive(dt, "dt")
    step = displacement(pose, dt, regime, taylor_threshold)
    dx, dz, dtheta = step.delta
    return Pose(pose.t + np.array([dx, 0.0, dz]), pose.theta + dtheta, pose.v, pose.omega)


def predict_jacobian(
    pose: Pose, dt: float, regime: MotionRegime, taylor_threshold: float = 1e-4
) -> np.ndarray:
    """6x6 d g / d xi."""
    step = displacement(pose, dt, regime, taylor_threshold)
    jac = np.eye(STATE_SIZE)
    for col, partial in ((3, step.d_theta), (4, step.d_v), (5, step.d_omega)):
        jac[0, col] += partial[0]
        jac[2, col] += partial[1]
        jac[3, col] += partial[2]
    return jac


def propagate_covariance(
    pose: Pose,
    dt: float,
    regime: MotionRegime,
    noise: Optional[MotionNoise] = None,
    taylor_threshold: float = 1e-4,
) -> np.ndarray:
    """Sigma = G diag(sigma_v^2, sigma_omega^2) G^T + floor, G = d g / d (v, omega)."""
    noise = noise or MotionNoise()
    step = displacement(pose, dt, regime, taylor_threshold)
    g = np.zeros((STATE_SIZE, 2))
    for col, partial in enumerate((step.d_v, step.d_omega)):
        g[0, col], g[2, col], g[3, col] = partial
    sigma = g @ np.diag([noise.sigma_v**2, noise.sigma_omega**2]) @ g.T + noise.floor()
    return 0.5 * (sigma + sigma.T)


def state_difference(xi_a, xi_b) -> np.ndarray:
    """xi_a - xi_b with the yaw component wrapped."""
    diff = np.asarray(xi_a, dtype=np.float64) - np.asarray(xi_b, dtype=np.float64)
    diff[3] = wrap_angle(diff[3])
    return diff


def plane_residual(pose: Pose, plane: GroundPlane) -> float:
    return float((pose.t[1] - plane.elevation(pose.t[0], pose.t[2])) / plane.sigma)


def plane_residual_jacobian(plane: GroundPlane) -> np.ndarray:
    slope_x, slope_z = plane.slope()
    return np.array([-slope_x, 1.0, -slope_z, 0.0, 0.0, 0.0]) / plane.sigma


@dataclass
class MotionFactor:
    """
    Kinematic prior between consecutive frames plus the ground prior of the later frame.

    The square-root information of Sigma is frozen at the pose the factor was
    linearised at, so residual and Jacobians stay consistent within a solve.
    """

    dt: float
    regime: MotionRegime
    sqrt_information: np.ndarray  # L^{-1}, Sigma = L L^T
    plane: GroundPlane
    taylor_threshold: float = 1e-4

    @classmethod
    def linearize(
        cls,
        pose_prev: Pose,
        dt: float,
        regime: MotionRegime,
        noise: MotionNoise,
        plane: GroundPlane,
        taylor_threshold: float = 1e-4,
    ) -> "MotionFactor":
        sigma = propagate_covariance(pose_prev, dt, regime, noise, taylor_threshold)
        try:
            lower = np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError as e:
            raise SingularCovarianceError(f"motion covariance is not positive definite: {e}") from e
        sqrt_info = solve_triangular(lower, np.eye(STATE_SIZE), lower=True)
        return cls(dt, regime, sqrt_info, plane, taylor_threshold)

    def kinematic_residual(self, pose_t: Pose, pose_prev: Pose) -> np.ndarray:
        predicted = predict(pose_prev, self.dt, self.regime, self.taylor_threshold)
        return self.sqrt_information @ state_difference(pose_t.as_vector(), predicted.as_vector())

    def residual(self, pose_t: Pose, pose_prev: Pose) -> np.ndarray:
        return np.append(self.kinematic_residual(pose_t, pose_prev), plane_residual(pose_t, self.plane))

    def jacobians(self, pose_prev: Pose) -> Tuple[np.ndarray, np.ndarray]:
        """(d r / d xi_t, d r / d xi_prev), each 7x6."""
        jac_t = np.vstack([self.sqrt_information, plane_residual_jacobian(self.plane)])
        jac_g = predict_jacobian(pose_prev, self.dt, self.regime, self.taylor_threshold)
        jac_prev = np.vstack([-self.sqrt_information @ jac_g, np.zeros(STATE_SIZE)])
        return jac_t, jac_prev


def motion_residual(
    pose_t: Pose,
    pose_prev: Pose,
    dt: float,
    regime: MotionRegime,
    noise: MotionNoise,
    plane: GroundPlane,
    taylor_threshold: float = 1e-4,
) -> np.ndarray:
    """Whitened (xi_t - g(xi_prev)) followed by the ground-plane residual (7 entries)."""
    factor = MotionFactor.linearize(pose_prev, dt, regime, noise, plane, taylor_threshold)
    return factor.residual(pose_t, pose_prev)
