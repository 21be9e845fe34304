"""Dead-reckoning odometry: quaternion attitude integration plus double integration
of gravity-compensated acceleration, with external pose corrections.

Sign convention: the accelerometer reports specific force, so a stationary,
level sensor reads +9.81 m/s^2 along body +z. Rotating the reading into the
world frame and adding gravity g = (0, 0, -9.81) cancels it exactly.

Integration scheme, per step of length dt:
    q'      = q (x) exp(1/2 * omega * dt), renormalized
    q_mid   = slerp(q, q', 1/2)
    a_world = R(q_mid) @ (1/2 * (f_prev + f)) + g
    v'      = v + a_world * dt
    p'      = p + 1/2 * (v + v') * dt
Averaging the specific force in the body frame before the midpoint rotation
keeps the update second-order accurate (halving dt quarters the position
error on smooth trajectories) and exact for constant acceleration.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

GRAVITY = np.array([0.0, 0.0, -9.81])
GAP_THRESHOLD_NS = 100_000_000  # steps longer than 100 ms are applied but flagged


class NonFiniteSampleError(ValueError):
    """Sample carried NaN or infinity; the state must be left unchanged."""


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_multiply(q: np.ndarray, r: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = q
    w2, x2, y2, z2 = r
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    return q / np.linalg.norm(q)


def quat_from_rotation_vector(rv: np.ndarray) -> np.ndarray:
    """exp map: rotation vector (axis * angle, radians) to unit quaternion."""
    angle = float(np.linalg.norm(rv))
    if angle < 1e-12:
        # first-order expansion keeps the zero-rate path exact and branch-stable
        return quat_normalize(np.array([1.0, rv[0] / 2.0, rv[1] / 2.0, rv[2] / 2.0]))
    axis = rv / angle
    half = angle / 2.0
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    rot = np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])
    return rot @ v


def quat_slerp_half(q0: np.ndarray, q1: np.ndarray) -> np.ndarray:
    """Midpoint on the shortest arc between two unit quaternions."""
    if np.dot(q0, q1) < 0:
        q1 = -q1
    mid = q0 + q1
    norm = np.linalg.norm(mid)
    if norm < 1e-12:
        return q0
    return mid / norm


@dataclass(frozen=True)
class OdomState:
    q: np.ndarray                  # body -> world unit quaternion
    v: np.ndarray                  # m/s, world frame
    p: np.ndarray                  # m, world frame
    t_ns: int
    g: np.ndarray = field(default_factory=lambda: GRAVITY.copy())
    f_prev: np.ndarray | None = None   # previous body specific force, for trapezoidal averaging
    gap: bool = False              # last step exceeded the gap threshold


@dataclass(frozen=True)
class PoseCorrection:
    q_ref: np.ndarray
    p_ref: np.ndarray
    t_ns: int


def initial_state(t_ns: int = 0, g: np.ndarray | None = None) -> OdomState:
    return OdomState(
        q=quat_identity(),
        v=np.zeros(3),
        p=np.zeros(3),
        t_ns=t_ns,
        g=GRAVITY.copy() if g is None else np.asarray(g, dtype=float),
    )


def step(state: OdomState, sample) -> OdomState:
    """Advance the state to sample.mono_time_ns. Raises NonFiniteSampleError on bad input."""
    gyro = np.asarray(sample.gyro, dtype=float)
    accel = np.asarray(sample.accel, dtype=float)
    if not (np.isfinite(gyro).all() and np.isfinite(accel).all()):
        raise NonFiniteSampleError("IMU sample has non-finite components")
    if sample.mono_time_ns <= state.t_ns:
        raise ValueError(f"sample time {sample.mono_time_ns} not after state time {state.t_ns}")
    dt_ns = sample.mono_time_ns - state.t_ns
    dt = dt_ns * 1e-9

    q_next = quat_normalize(quat_multiply(state.q, quat_from_rotation_vector(gyro * dt)))
    q_mid = quat_slerp_half(state.q, q_next)
    f_prev = accel if state.f_prev is None else state.f_prev
    a_world = quat_rotate(q_mid, 0.5 * (f_prev + accel)) + state.g
    v_next = state.v + a_world * dt
    p_next = state.p + 0.5 * (state.v + v_next) * dt

    return OdomState(
        q=q_next,
        v=v_next,
        p=p_next,
        t_ns=sample.mono_time_ns,
        g=state.g,
        f_prev=accel,
        gap=dt_ns > GAP_THRESHOLD_NS,
    )


def apply_correction(state: OdomState, correction: PoseCorrection) -> OdomState:
    """Overwrite pose from the external reference; velocity is preserved.

    The stored previous specific force is discarded because it was expressed
    relative to the old orientation.
    """
    if correction.t_ns > state.t_ns:
        raise ValueError("correction is from the future")
    return replace(
        state,
        q=quat_normalize(np.asarray(correction.q_ref, dtype=float)),
        p=np.asarray(correction.p_ref, dtype=float).copy(),
        f_prev=None,
        gap=False,
    )


def state_to_dict(state: OdomState) -> dict:
    return {
        "t_ns": state.t_ns,
        "q": [float(x) for x in state.q],
        "v": [float(x) for x in state.v],
        "p": [float(x) for x in state.p],
        "gap": state.gap,
    }
