"""Synthetic stereo camera frames with exact 12-bit pixel packing.

Frame content is a deterministic gradient-plus-noise pattern, a pure function
of (trigger_seq, camera_id, config, seed). The RIGHT camera applies a fixed
horizontal disparity shift; pixel intensity scales with the exposure in force
so exposure changes are observable downstream.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np


class CameraId(enum.Enum):
    LEFT = 0
    RIGHT = 1


@dataclass(frozen=True)
class CameraConfig:
    camera_id: CameraId
    width: int = 320
    height: int = 240
    bit_depth: int = 12
    disparity_px: int = 12          # horizontal shift applied by the RIGHT camera
    reference_exposure_us: int = 10000   # exposure at which the pattern hits nominal brightness
    base_temperature_c: float = 45.0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("frame dimensions must be positive")
        if self.bit_depth not in (8, 12):
            raise ValueError(f"unsupported bit depth {self.bit_depth}")

    @property
    def buffer_size(self) -> int:
        return (self.width * self.height * self.bit_depth + 7) // 8


@dataclass(frozen=True)
class Frame:
    camera_id: CameraId
    trigger_seq: int
    width: int
    height: int
    bit_depth: int
    pixels: bytes
    exposure_us: int
    temperature_c: float

    def __post_init__(self):
        expected = (self.width * self.height * self.bit_depth + 7) // 8
        if len(self.pixels) != expected:
            raise ValueError(f"pixel buffer is {len(self.pixels)} bytes, expected {expected}")
        if self.exposure_us <= 0:
            raise ValueError("exposure_us must be positive")


def pack_samples(values: np.ndarray, bit_depth: int) -> bytes:
    """Pack unsigned samples into a tight buffer; 12-bit packs two samples per 3 bytes."""
    flat = np.ascontiguousarray(values, dtype=np.uint16).ravel()
    n = flat.size
    if bit_depth == 8:
        return flat.astype(np.uint8).tobytes()
    if bit_depth != 12:
        raise ValueError(f"unsupported bit depth {bit_depth}")
    if np.any(flat > 0x0FFF):
        raise ValueError("sample exceeds 12-bit range")
    if n % 2:
        flat = np.append(flat, np.uint16(0))
    a = flat[0::2].astype(np.uint32)
    b = flat[1::2].astype(np.uint32)
    out = np.empty((flat.size // 2, 3), dtype=np.uint8)
    out[:, 0] = a >> 4
    out[:, 1] = ((a & 0x0F) << 4) | (b >> 8)
    out[:, 2] = b & 0xFF
    return out.tobytes()[: (n * 12 + 7) // 8]


def unpack_samples(buf: bytes, count: int, bit_depth: int) -> np.ndarray:
    """Inverse of pack_samples."""
    if bit_depth == 8:
        return np.frombuffer(buf, dtype=np.uint8, count=count).astype(np.uint16)
    if bit_depth != 12:
        raise ValueError(f"unsupported bit depth {bit_depth}")
    padded = bytes(buf) + b"\x00" * ((-len(buf)) % 3)
    triplets = np.frombuffer(padded, dtype=np.uint8).reshape(-1, 3).astype(np.uint16)
    a = (triplets[:, 0] << 4) | (triplets[:, 1] >> 4)
    b = ((triplets[:, 1] & 0x0F) << 8) | triplets[:, 2]
    out = np.empty(triplets.shape[0] * 2, dtype=np.uint16)
    out[0::2] = a
    out[1::2] = b
    return out[:count]


def synth_pixels(trigger_seq: int, config: CameraConfig, seed: int, exposure_us: int) -> np.ndarray:
    """Deterministic pattern values for one frame, before packing."""
    h, w = config.height, config.width
    max_val = (1 << config.bit_depth) - 1
    x = np.arange(w, dtype=np.float64)
    y = np.arange(h, dtype=np.float64)
    base = (x[None, :] * 3.0 + y[:, None] * 2.0 + (trigger_seq * 37) % 911) % (max_val * 0.55)
    if config.camera_id is CameraId.RIGHT:
        base = np.roll(base, -config.disparity_px, axis=1)
    rng = np.random.default_rng(np.random.SeedSequence([seed, trigger_seq, config.camera_id.value]))
    noise = rng.integers(0, max(2, max_val // 64), size=(h, w))
    gain = exposure_us / config.reference_exposure_us
    values = np.clip((base + noise) * gain, 0, max_val)
    return values.astype(np.uint16)


def synth_frame(
    event,
    config: CameraConfig,
    seed: int,
    temperature_c: float | None = None,
) -> Frame:
    """Build the frame for one trigger event; byte-identical for identical inputs."""
    values = synth_pixels(event.seq, config, seed, event.exposure_us)
    return Frame(
        camera_id=config.camera_id,
        trigger_seq=event.seq,
        width=config.width,
        height=config.height,
        bit_depth=config.bit_depth,
        pixels=pack_samples(values, config.bit_depth),
        exposure_us=event.exposure_us,
        temperature_c=config.base_temperature_c if temperature_c is None else temperature_c,
    )


_FRAME_HEADER = struct.Struct("<BQHHBIf")


def encode_frame(frame: Frame) -> bytes:
    """Record payload codec: fixed header + packed pixels."""
    return _FRAME_HEADER.pack(
        frame.camera_id.value,
        frame.trigger_seq,
        frame.width,
        frame.height,
        frame.bit_depth,
        frame.exposure_us,
        frame.temperature_c,
    ) + frame.pixels


def decode_frame(payload: bytes) -> Frame:
    cam, seq, w, h, depth, exposure, temp = _FRAME_HEADER.unpack_from(payload)
    return Frame(
        camera_id=CameraId(cam),
        trigger_seq=seq,
        width=w,
        height=h,
        bit_depth=depth,
        pixels=payload[_FRAME_HEADER.size:],
        exposure_us=exposure,
        temperature_c=temp,
    )
