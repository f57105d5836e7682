"""Vehicle state evolution and Kalman beam prediction/tracking.

The per-vehicle state is (phi_x, phi_y, dist, speed).  Angle process and
measurement noises are real-valued Gaussians; their variances are the
real scalars that appear in the closed-form rate expressions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TAN_CLAMP = 1e3

NO_MEASUREMENT = math.inf


class TrajectoryError(RuntimeError):
    """Vehicle left the usable geometry (e.g. range collapsed to zero)."""


@dataclass
class KinematicState:
    """Per-vehicle motion state: ULA angles (rad), range (m), speed (m/s)."""

    phi_x: float
    phi_y: float
    dist: float
    speed: float

    def as_array(self) -> np.ndarray:
        return np.array([self.phi_x, self.phi_y, self.dist, self.speed], dtype=float)

    @classmethod
    def from_array(cls, x) -> "KinematicState":
        return cls(float(x[0]), float(x[1]), float(x[2]), float(x[3]))


@dataclass
class NoiseModel:
    """Process/measurement noise parameters and link noise powers.

    ``q_omega`` holds the four process-noise variances for
    (phi_x, phi_y, dist, speed).  ``sigma_r2`` is the variance parameter
    of the angle estimator; range/speed measurement variances are plain
    configuration constants because the echo SNR only shapes the angle
    measurements.
    """

    q_omega: np.ndarray = field(default_factory=lambda: np.array([0.1, 0.1, 0.1, 0.1]))
    sigma_r2: float = 0.1
    symbol_time: float = 1e-7
    slot_time: float = 0.02
    noise_s: float = 1e-10
    noise_c: float = 1e-10
    meas_var_dist: float = 0.1
    meas_var_speed: float = 0.1

    def __post_init__(self):
        self.q_omega = np.asarray(self.q_omega, dtype=float)
        if self.q_omega.shape != (4,):
            raise ValueError("q_omega must have four entries")
        if np.any(self.q_omega <= 0.0):
            raise ValueError("process noise variances must be positive")
        for name in ("sigma_r2", "symbol_time", "slot_time", "noise_s", "noise_c"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


@dataclass
class TrackState:
    """Prediction and posterior of one Kalman step."""

    predicted: KinematicState
    mse: np.ndarray
    tracked: KinematicState
    tracking_variances: tuple[float, float]


def _tan_clamped(x: float) -> float:
    return float(np.clip(math.tan(x), -TAN_CLAMP, TAN_CLAMP))


def transition(state: KinematicState, noise: NoiseModel) -> KinematicState:
    """Deterministic part of the state evolution over one slot."""
    dt = noise.slot_time
    ratio = state.speed * dt / state.dist
    phi_x = state.phi_x + ratio * math.sin(state.phi_x)
    phi_y = state.phi_y + ratio * _tan_clamped(state.phi_y)
    dist = state.dist - state.speed * dt * math.cos(state.phi_x)
    return KinematicState(phi_x, phi_y, dist, state.speed)


def transition_jacobian(state: KinematicState, noise: NoiseModel) -> np.ndarray:
    """Jacobian of :func:`transition` at ``state``."""
    dt = noise.slot_time
    v, d = state.speed, state.dist
    sin_x, cos_x = math.sin(state.phi_x), math.cos(state.phi_x)
    tan_y = math.tan(state.phi_y)
    clamped = abs(tan_y) > TAN_CLAMP
    tan_y = float(np.clip(tan_y, -TAN_CLAMP, TAN_CLAMP))
    sec2_y = 0.0 if clamped else 1.0 + math.tan(state.phi_y) ** 2
    g = np.eye(4)
    g[0, 0] = 1.0 + v * dt * cos_x / d
    g[0, 2] = -v * dt * sin_x / d**2
    g[0, 3] = dt * sin_x / d
    g[1, 1] = 1.0 + v * dt * sec2_y / d
    g[1, 2] = -v * dt * tan_y / d**2
    g[1, 3] = dt * tan_y / d
    g[2, 0] = v * dt * sin_x
    g[2, 3] = -dt * cos_x
    return g


def evolve_truth(state: KinematicState, noise: NoiseModel, rng) -> KinematicState:
    """One ground-truth step: transition plus fresh process noise.

    ``rng`` is a seed or a numpy Generator.  Raises
    :class:`TrajectoryError` when the range collapses.
    """
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    base = transition(state, noise)
    w = gen.normal(0.0, np.sqrt(noise.q_omega))
    out = KinematicState(base.phi_x + w[0], base.phi_y + w[1],
                         base.dist + w[2], base.speed + w[3])
    if out.dist <= 0.0:
        raise TrajectoryError("vehicle range collapsed to zero")
    return out


def predict(state: KinematicState, mse: np.ndarray, noise: NoiseModel) -> tuple[KinematicState, np.ndarray]:
    """Kalman prediction: zero-noise transition and G M G^T + Q."""
    g = transition_jacobian(state, noise)
    mse_pred = g @ np.asarray(mse, dtype=float) @ g.T + np.diag(noise.q_omega)
    return transition(state, noise), mse_pred


def measurement_variance(a_phi: float, a_phiy: float, eta: float, beta_r: float,
                         power_share: float = 1.0) -> tuple[float, float]:
    """Angle measurement variances A / (p * eta * beta_r).

    ``power_share`` is 1 for the single-vehicle form (power already in A)
    and the per-vehicle sensing power otherwise.  A zero echo budget
    yields the infinite no-measurement sentinel.
    """
    denom = power_share * eta * beta_r
    if denom <= 0.0:
        return NO_MEASUREMENT, NO_MEASUREMENT
    return a_phi / denom, a_phiy / denom


def tracking_variance(sigma_omega2: float, a_value: float, eta_beta_p: float) -> float:
    """Posterior angle variance s2*A / (s2*x + A); equals s2 at x = 0."""
    if eta_beta_p <= 0.0:
        return sigma_omega2
    return sigma_omega2 * a_value / (sigma_omega2 * eta_beta_p + a_value)


def track_update(predicted: KinematicState, mse_pred: np.ndarray,
                 measurement: np.ndarray, meas_vars: np.ndarray) -> TrackState:
    """Kalman update with diagonal measurement covariance.

    Any non-finite measurement variance marks a no-measurement slot and
    returns the prediction unchanged.  An ill-conditioned innovation
    covariance is regularized with 1e-12 * I.
    """
    mse_pred = np.asarray(mse_pred, dtype=float)
    meas_vars = np.asarray(meas_vars, dtype=float)
    if not np.all(np.isfinite(meas_vars)):
        return TrackState(predicted=predicted, mse=mse_pred.copy(), tracked=predicted,
                          tracking_variances=(float(mse_pred[0, 0]), float(mse_pred[1, 1])))
    q_z = np.diag(meas_vars)
    innov = q_z + mse_pred
    if np.linalg.cond(innov) > 1e12:
        innov = innov + 1e-12 * np.eye(4)
    gain = mse_pred @ np.linalg.inv(innov)
    x_pred = predicted.as_array()
    x_new = x_pred + gain @ (np.asarray(measurement, dtype=float) - x_pred)
    mse_post = (np.eye(4) - gain) @ mse_pred
    tracked = KinematicState.from_array(x_new)
    return TrackState(predicted=predicted, mse=mse_post, tracked=tracked,
                      tracking_variances=(float(mse_post[0, 0]), float(mse_post[1, 1])))
