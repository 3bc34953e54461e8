"""Extended Kalman filter with a box measurement model, and the fixed-interval RTS smoother."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    L,
    MIN_EXTENT,
    STATE_DIM,
    THETA,
    W,
    EgoMotion,
    ProcessNoise,
    discrete_process_noise,
    jacobian_f,
    propagate,
)
from .geometry import wrap_angle

MEAS_DIM = 5
MX, MY, MTHETA, ML, MW = range(MEAS_DIM)
MAX_INNOVATION_COND = 1e12
SMOOTHER_RIDGE = 1e-9

TRACK_MEASUREMENT_NOISE = (0.1, 0.1, 0.015, 0.07, 0.04)
EXTRAPOLATION_MEASUREMENT_NOISE = (0.5, 0.5, 0.06, 0.07, 0.04)


class DegenerateUpdateError(ArithmeticError):
    """The innovation covariance is numerically singular; the update was rejected."""


@dataclass(frozen=True)
class MeasurementNoise:
    r: tuple[float, ...] = TRACK_MEASUREMENT_NOISE

    def __post_init__(self) -> None:
        r = tuple(float(v) for v in self.r)
        if len(r) != MEAS_DIM or any(not v > 0 for v in r):
            raise ValueError(f"measurement noise needs {MEAS_DIM} positive entries, got {self.r}")
        object.__setattr__(self, "r", r)

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.r)


def sanitize_covariance(P: np.ndarray) -> np.ndarray:
    """Symmetrize and clip any negative eigenvalues to zero."""
    P = 0.5 * (P + P.T)
    vals, vecs = np.linalg.eigh(P)
    if vals[0] < 0.0:
        vals = np.clip(vals, 0.0, None)
        P = (vecs * vals) @ vecs.T
        P = 0.5 * (P + P.T)
    return P


def measurement_model(state: np.ndarray, back_axle_fraction: float = 0.25) -> np.ndarray:
    """Predicted box measurement ``[cx, cy, yaw, l, w]`` for a back-axle state.

    The box center lies ``back_axle_fraction * l`` ahead of the back axle along the heading.
    """
    x, y, theta, _, l, w = state
    off = back_axle_fraction * l
    return np.array([x + off * math.cos(theta), y + off * math.sin(theta), theta, l, w])


def measurement_jacobian(state: np.ndarray, back_axle_fraction: float = 0.25) -> np.ndarray:
    theta, l = state[THETA], state[L]
    c, s = math.cos(theta), math.sin(theta)
    H = np.zeros((MEAS_DIM, STATE_DIM))
    H[MX, 0] = 1.0
    H[MX, THETA] = -back_axle_fraction * l * s
    H[MX, L] = back_axle_fraction * c
    H[MY, 1] = 1.0
    H[MY, THETA] = back_axle_fraction * l * c
    H[MY, L] = back_axle_fraction * s
    H[MTHETA, THETA] = 1.0
    H[ML, L] = 1.0
    H[MW, W] = 1.0
    return H


def state_from_measurement(z, back_axle_fraction: float = 0.25, speed: float = 0.0) -> np.ndarray:
    """Invert the measurement model for a fresh track (speed is unobserved)."""
    cx, cy, yaw, l, w = (float(v) for v in z)
    off = back_axle_fraction * l
    return np.array([cx - off * math.cos(yaw), cy - off * math.sin(yaw), wrap_angle(yaw), speed, l, w])


def heading_residual(measured: float, predicted: float) -> float:
    """Heading innovation, choosing the nearer of ``measured`` and ``measured + pi``."""
    d = wrap_angle(measured - predicted)
    if abs(d) > 0.5 * math.pi:
        d = wrap_angle(d + math.pi)
    return d


def predict(state, cov, ego: EgoMotion, q: ProcessNoise, backward: bool = False):
    """EKF time update.

    Returns
    -------
    prior_state, prior_cov, F
    """
    state = np.asarray(state, dtype=float)
    F = jacobian_f(state, ego, backward)
    prior = propagate(state, ego, backward)
    prior_cov = F @ cov @ F.T + discrete_process_noise(state, ego, q)
    return prior, sanitize_covariance(prior_cov), F


def update(prior_state, prior_cov, z, r: MeasurementNoise, back_axle_fraction: float = 0.25):
    """EKF measurement update with Joseph-form covariance.

    Returns
    -------
    post_state, post_cov, innovation

    Raises
    ------
    DegenerateUpdateError
        If the innovation covariance has condition number above 1e12.
    """
    x = np.asarray(prior_state, dtype=float)
    P = np.asarray(prior_cov, dtype=float)
    z = np.asarray(z, dtype=float)
    H = measurement_jacobian(x, back_axle_fraction)
    innovation = z - measurement_model(x, back_axle_fraction)
    innovation[MTHETA] = heading_residual(z[MTHETA], x[THETA])

    R = r.matrix
    S = H @ P @ H.T + R
    if not np.all(np.isfinite(S)) or np.linalg.cond(S) > MAX_INNOVATION_COND:
        raise DegenerateUpdateError("innovation covariance is singular")
    K = np.linalg.solve(S, H @ P).T

    post = x + K @ innovation
    post[THETA] = wrap_angle(post[THETA])
    post[L] = max(post[L], MIN_EXTENT)
    post[W] = max(post[W], MIN_EXTENT)
    IKH = np.eye(STATE_DIM) - K @ H
    post_cov = IKH @ P @ IKH.T + K @ R @ K.T
    return post, sanitize_covariance(post_cov), innovation


@dataclass
class FilterHistory:
    """Forward-pass record for one track.

    ``posteriors[k]``/``post_covs[k]`` hold the estimate after frame k's
    measurement (equal to the prior when the frame had none). ``priors[k]``,
    ``prior_covs[k]``, ``jacobians[k]`` and ``egos[k]`` describe the
    transition from step k to step k + 1, so they are one shorter.
    """

    posteriors: list[np.ndarray] = field(default_factory=list)
    post_covs: list[np.ndarray] = field(default_factory=list)
    priors: list[np.ndarray] = field(default_factory=list)
    prior_covs: list[np.ndarray] = field(default_factory=list)
    jacobians: list[np.ndarray] = field(default_factory=list)
    egos: list[EgoMotion] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.posteriors)

    def start(self, state, cov) -> None:
        if self.posteriors:
            raise ValueError("history already started")
        self.posteriors.append(np.asarray(state, dtype=float))
        self.post_covs.append(np.asarray(cov, dtype=float))

    def add_prediction(self, prior, prior_cov, F, ego: EgoMotion) -> None:
        if len(self.priors) != len(self.posteriors) - 1:
            raise ValueError("prediction already recorded for the current step")
        self.priors.append(prior)
        self.prior_covs.append(prior_cov)
        self.jacobians.append(F)
        self.egos.append(ego)

    def add_posterior(self, state, cov) -> None:
        if len(self.priors) != len(self.posteriors):
            raise ValueError("a posterior must follow a prediction")
        self.posteriors.append(state)
        self.post_covs.append(cov)

    def truncated(self, n: int) -> "FilterHistory":
        """The first ``n`` steps."""
        return FilterHistory(
            self.posteriors[:n],
            self.post_covs[:n],
            self.priors[: max(n - 1, 0)],
            self.prior_covs[: max(n - 1, 0)],
            self.jacobians[: max(n - 1, 0)],
            self.egos[: max(n - 1, 0)],
        )


def _solve_spd(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve ``A X = B`` for symmetric ``A``, adding a small ridge if ``A`` is singular."""
    try:
        cho = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        A = A + SMOOTHER_RIDGE * np.eye(A.shape[0])
        return np.linalg.solve(A, B)
    y = np.linalg.solve(cho, B)
    return np.linalg.solve(cho.T, y)


def rts_smooth(history: FilterHistory) -> list[tuple[np.ndarray, np.ndarray]]:
    """Rauch-Tung-Striebel backward pass over a filter history.

    For k = N-2 .. 0::

        C_k    = P_{k|k} F_k^T P_{k+1|k}^{-1}
        x_{k|N} = x_{k|k} + C_k (x_{k+1|N} - x_{k+1|k})
        P_{k|N} = P_{k|k} + C_k (P_{k+1|N} - P_{k+1|k}) C_k^T

    with the heading component of the state difference wrapped to (-pi, pi].
    """
    n = len(history)
    if n == 0:
        return []
    xs = [None] * n
    Ps = [None] * n
    xs[-1] = history.posteriors[-1].copy()
    Ps[-1] = history.post_covs[-1].copy()
    for k in range(n - 2, -1, -1):
        P_post = history.post_covs[k]
        P_prior = history.prior_covs[k]
        F = history.jacobians[k]
        # C = P F^T P_prior^-1, solved as P_prior C^T = F P
        C = _solve_spd(P_prior, F @ P_post).T
        diff = xs[k + 1] - history.priors[k]
        diff[THETA] = wrap_angle(diff[THETA])
        x = history.posteriors[k] + C @ diff
        x[THETA] = wrap_angle(x[THETA])
        xs[k] = x
        Ps[k] = sanitize_covariance(P_post + C @ (Ps[k + 1] - P_prior) @ C.T)
    return list(zip(xs, Ps))
