"""IMU sample type, payload codec, and motion-profile-driven sample synthesis."""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

import numpy as np

GRAVITY_UP = np.array([0.0, 0.0, 9.81])  # stationary specific-force reading, body frame


@dataclass(frozen=True)
class ImuSample:
    gyro: np.ndarray       # rad/s, body frame
    accel: np.ndarray      # m/s^2 specific force, body frame (stationary reads +9.81 up)
    mono_time_ns: int


_SAMPLE = struct.Struct("<q6d")


def encode_imu_sample(sample: ImuSample) -> bytes:
    return _SAMPLE.pack(sample.mono_time_ns, *sample.gyro, *sample.accel)


def decode_imu_sample(payload: bytes) -> ImuSample:
    t, gx, gy, gz, ax, ay, az = _SAMPLE.unpack(payload)
    return ImuSample(gyro=np.array([gx, gy, gz]), accel=np.array([ax, ay, az]), mono_time_ns=t)


class MotionKind(enum.Enum):
    STATIONARY = "stationary"
    CONSTANT_ACCEL = "constant_accel"
    CONSTANT_TURN = "constant_turn"


@dataclass(frozen=True)
class MotionProfile:
    """One segment of simulated motion.

    CONSTANT_ACCEL interprets accel in the world frame assuming a level,
    unrotated attitude; CONSTANT_TURN interprets accel in the body frame
    (constant lateral push while yawing), which keeps the ideal body-frame
    reading constant over the segment.
    """

    kind: MotionKind
    duration_s: float
    accel: tuple[float, float, float] = (0.0, 0.0, 0.0)
    yaw_rate: float = 0.0          # rad/s about body z

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")


def ideal_sample(profile: MotionProfile, t_ns: int,
                 gyro_bias: np.ndarray | None = None,
                 accel_bias: np.ndarray | None = None) -> ImuSample:
    """Noise-free body-frame reading for the given profile at time t_ns."""
    if profile.kind is MotionKind.STATIONARY:
        gyro = np.zeros(3)
        f = GRAVITY_UP.copy()
    elif profile.kind is MotionKind.CONSTANT_ACCEL:
        gyro = np.zeros(3)
        f = np.asarray(profile.accel, dtype=float) + GRAVITY_UP
    else:
        gyro = np.array([0.0, 0.0, profile.yaw_rate])
        f = np.asarray(profile.accel, dtype=float) + GRAVITY_UP
    if gyro_bias is not None:
        gyro = gyro + gyro_bias
    if accel_bias is not None:
        f = f + accel_bias
    return ImuSample(gyro=gyro, accel=f, mono_time_ns=t_ns)


@dataclass
class MotionSequence:
    """Piecewise motion: runs each profile for its duration, then holds stationary."""

    profiles: list[MotionProfile] = field(default_factory=list)

    def profile_at(self, t_s: float) -> MotionProfile:
        elapsed = 0.0
        for profile in self.profiles:
            if t_s < elapsed + profile.duration_s:
                return profile
            elapsed += profile.duration_s
        return MotionProfile(kind=MotionKind.STATIONARY, duration_s=1.0)
