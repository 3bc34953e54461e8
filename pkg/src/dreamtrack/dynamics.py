"""Constant speed and heading vehicle model, expressed relative to a moving ego vehicle.

States are length-6 float arrays ``[x, y, theta, s, l, w]``: back-axle position
and heading relative to the ego reference point, absolute ground speed, and box
length/width. The ego moves with longitudinal/lateral velocity ``(vx, vy)`` and
yaw rate ``wz`` expressed in its own frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import wrap_angle

X, Y, THETA, S, L, W = range(6)
STATE_DIM = 6
NOISE_DIM = 7
MIN_EXTENT = 0.1

# Continuous-time intensities for (e_theta, e_s, e_vx, e_vy, e_wz, e_l, e_w).
DEFAULT_PROCESS_NOISE = (0.1218, 1.0, 0.00545, 0.00545, 0.00307, 0.01, 0.01)


@dataclass(frozen=True)
class TrackState:
    x: float
    y: float
    theta: float
    s: float
    l: float
    w: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta, self.s, self.l, self.w], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "TrackState":
        return cls(*(float(v) for v in arr))


@dataclass(frozen=True)
class EgoMotion:
    """Ego velocity over one frame interval, in the ego frame at the interval start."""

    vx: float
    vy: float
    wz: float
    dt: float

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")

    @classmethod
    def still(cls, dt: float) -> "EgoMotion":
        return cls(0.0, 0.0, 0.0, dt)


@dataclass(frozen=True)
class ProcessNoise:
    q: tuple[float, ...] = DEFAULT_PROCESS_NOISE

    def __post_init__(self) -> None:
        q = tuple(float(v) for v in self.q)
        if len(q) != NOISE_DIM:
            raise ValueError(f"process noise needs {NOISE_DIM} entries, got {len(q)}")
        if any(v < 0 for v in q):
            raise ValueError("process noise intensities must be non-negative")
        object.__setattr__(self, "q", q)


def ego_motion_from_poses(pose_a, pose_b, dt: float) -> EgoMotion:
    """Finite-difference ego motion between two world-frame SE(2) poses ``(x, y, yaw)``.

    The translation is expressed in the frame of ``pose_a``.
    """
    if not dt > 0:
        raise ValueError(f"timestamps must increase, got dt={dt}")
    xa, ya, yaw_a = pose_a
    xb, yb, yaw_b = pose_b
    c, s = math.cos(yaw_a), math.sin(yaw_a)
    dx, dy = xb - xa, yb - ya
    return EgoMotion(
        vx=(c * dx + s * dy) / dt,
        vy=(-s * dx + c * dy) / dt,
        wz=wrap_angle(yaw_b - yaw_a) / dt,
        dt=dt,
    )


def _step(ego: EgoMotion, backward: bool) -> float:
    if not ego.dt > 0:
        raise ValueError(f"dt must be positive, got {ego.dt}")
    return -ego.dt if backward else ego.dt


def state_derivative(state: np.ndarray, ego: EgoMotion) -> np.ndarray:
    x, y, theta, s = state[X], state[Y], state[THETA], state[S]
    out = np.zeros(STATE_DIM)
    out[X] = s * math.cos(theta) - ego.vx + ego.wz * y
    out[Y] = s * math.sin(theta) - ego.vy - ego.wz * x
    out[THETA] = -ego.wz
    return out


def propagate(state: np.ndarray, ego: EgoMotion, backward: bool = False) -> np.ndarray:
    """One forward-Euler step of the relative dynamics.

    With ``backward=True`` the same interval is traversed in reverse (the step
    is ``-dt``), which maps a state at the end of the interval to its start.
    """
    dt = _step(ego, backward)
    out = np.asarray(state, dtype=float) + dt * state_derivative(state, ego)
    out[THETA] = wrap_angle(out[THETA])
    return out


def jacobian_f(state: np.ndarray, ego: EgoMotion, backward: bool = False) -> np.ndarray:
    dt = _step(ego, backward)
    theta, s = state[THETA], state[S]
    c, sn = math.cos(theta), math.sin(theta)
    F = np.eye(STATE_DIM)
    F[X, Y] += dt * ego.wz
    F[X, THETA] += -dt * s * sn
    F[X, S] += dt * c
    F[Y, X] += -dt * ego.wz
    F[Y, THETA] += dt * s * c
    F[Y, S] += dt * sn
    return F


def noise_input_matrix(state: np.ndarray) -> np.ndarray:
    """6x7 map from the seven noise channels onto the state derivative."""
    G = np.zeros((STATE_DIM, NOISE_DIM))
    G[THETA, 0] = 1.0
    G[S, 1] = 1.0
    G[X, 2] = -1.0
    G[Y, 3] = -1.0
    G[THETA, 4] = -1.0
    G[X, 4] = state[Y]
    G[Y, 4] = -state[X]
    G[L, 5] = 1.0
    G[W, 6] = 1.0
    return G


def discrete_process_noise(state: np.ndarray, ego: EgoMotion, q: ProcessNoise) -> np.ndarray:
    G = noise_input_matrix(state)
    Qd = (G * np.asarray(q.q)) @ G.T * abs(ego.dt)
    return 0.5 * (Qd + Qd.T)
