"""Constant-velocity Kalman filter over oriented 3D boxes.

State is the 10-vector (cx, cy, cz, yaw, length, width, height, vx, vy, vz).
Position follows a linear constant-velocity transition; yaw and dims are
random walks. Measurements are full boxes (the first 7 components).
Predict/update are pure: they return new states and never mutate inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Box3D, wrap_angle

STATE_DIM = 10
MEAS_DIM = 7
MIN_DIM = 0.01  # meters; dims in the mean are clamped to this floor

_POS = slice(0, 3)
_YAW = 3
_DIMS = slice(4, 7)
_VEL = slice(7, 10)


class NumericFailure(RuntimeError):
    """Innovation covariance stayed singular after jitter retry."""


@dataclass(frozen=True)
class NoiseConfig:
    """Per-step process stds and measurement stds, all strictly positive.

    Process noise is applied once per predict call (per step, not per
    second).
    """

    process_pos_std: float = 0.5
    process_vel_std: float = 1.0
    process_yaw_std: float = 0.1
    process_dim_std: float = 0.05
    meas_pos_std: float = 0.5
    meas_yaw_std: float = 0.1
    meas_dim_std: float = 0.1

    def __post_init__(self):
        for name in ("process_pos_std", "process_vel_std", "process_yaw_std",
                     "process_dim_std", "meas_pos_std", "meas_yaw_std",
                     "meas_dim_std"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")

    def process_cov(self) -> np.ndarray:
        q = np.empty(STATE_DIM)
        q[_POS] = self.process_pos_std**2
        q[_YAW] = self.process_yaw_std**2
        q[_DIMS] = self.process_dim_std**2
        q[_VEL] = self.process_vel_std**2
        return np.diag(q)

    def meas_cov(self) -> np.ndarray:
        r = np.empty(MEAS_DIM)
        r[_POS] = self.meas_pos_std**2
        r[_YAW] = self.meas_yaw_std**2
        r[_DIMS] = self.meas_dim_std**2
        return np.diag(r)


@dataclass(frozen=True)
class KalmanState:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "cov", np.asarray(self.cov, dtype=np.float64))
        if self.mean.shape != (STATE_DIM,) or self.cov.shape != (STATE_DIM, STATE_DIM):
            raise ValueError("state must be a 10-vector with 10x10 covariance")


def _measurement_matrix() -> np.ndarray:
    h = np.zeros((MEAS_DIM, STATE_DIM))
    h[:MEAS_DIM, :MEAS_DIM] = np.eye(MEAS_DIM)
    return h


def _transition_matrix(dt: float) -> np.ndarray:
    f = np.eye(STATE_DIM)
    f[0, 7] = f[1, 8] = f[2, 9] = dt
    return f


def init_state(box: Box3D, noise: NoiseConfig) -> KalmanState:
    """Cold start from a first detection: pose/dims set, velocity 0.

    Velocity variance starts large (10^2 m^2/s^2) so the first updates pin
    it down quickly.
    """
    mean = np.zeros(STATE_DIM)
    mean[:MEAS_DIM] = (box.cx, box.cy, box.cz, box.yaw,
                       box.length, box.width, box.height)
    var = np.empty(STATE_DIM)
    var[_POS] = noise.meas_pos_std**2
    var[_YAW] = noise.meas_yaw_std**2
    var[_DIMS] = noise.meas_dim_std**2
    var[_VEL] = 100.0
    return KalmanState(mean, np.diag(var))


def predict(s: KalmanState, dt: float, noise: NoiseConfig) -> KalmanState:
    """Advance the state by dt seconds: x <- Fx, P <- FPF' + Q."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    f = _transition_matrix(dt)
    mean = f @ s.mean
    cov = f @ s.cov @ f.T + noise.process_cov()
    cov = 0.5 * (cov + cov.T)
    return KalmanState(mean, cov)


def update(s: KalmanState, z: Box3D, noise: NoiseConfig) -> KalmanState:
    """Kalman correction against an observed box.

    The yaw innovation is wrapped into (-pi, pi] so near-cut measurements
    do not produce ~2*pi jumps. Covariance uses the Joseph form to stay
    PSD. A singular innovation covariance gets one 1e-6 diagonal jitter
    retry before NumericFailure is raised.
    """
    h = _measurement_matrix()
    r = noise.meas_cov()
    z_vec = np.array([z.cx, z.cy, z.cz, z.yaw, z.length, z.width, z.height])
    innov = z_vec - h @ s.mean
    innov[3] = wrap_angle(innov[3])

    s_mat = h @ s.cov @ h.T + r
    try:
        gain = np.linalg.solve(s_mat, h @ s.cov).T
    except np.linalg.LinAlgError:
        try:
            jittered = s_mat + 1e-6 * np.eye(MEAS_DIM)
            gain = np.linalg.solve(jittered, h @ s.cov).T
        except np.linalg.LinAlgError as exc:
            raise NumericFailure("innovation covariance is singular") from exc

    mean = s.mean + gain @ innov
    mean[_DIMS] = np.maximum(mean[_DIMS], MIN_DIM)
    ikh = np.eye(STATE_DIM) - gain @ h
    cov = ikh @ s.cov @ ikh.T + gain @ r @ gain.T
    cov = 0.5 * (cov + cov.T)
    return KalmanState(mean, cov)


def state_to_box(s: KalmanState) -> Box3D:
    """Project the state mean onto a box; dims floored at MIN_DIM."""
    m = s.mean
    return Box3D(
        cx=m[0], cy=m[1], cz=m[2],
        length=max(m[4], MIN_DIM),
        width=max(m[5], MIN_DIM),
        height=max(m[6], MIN_DIM),
        yaw=m[3],
    )
