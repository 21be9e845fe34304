"""1206-byte lidar packet encoding and decoding.

Packet layout (little-endian):
    12 data blocks x 100 bytes, each:
        u16 flag (0xFFEE), u16 azimuth in hundredths of a degree,
        32 x (u16 distance in 2 mm units, u8 reflectivity)
    tail: u32 timestamp in microseconds, 2 factory bytes

Each block carries two 16-channel firing groups that share the block azimuth,
so a packet decodes to 12 * 32 = 384 points.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

PACKET_SIZE = 1206
BLOCKS_PER_PACKET = 12
CHANNELS_PER_BLOCK = 32
CHANNELS_PER_GROUP = 16
GROUPS_PER_PACKET = BLOCKS_PER_PACKET * 2
POINTS_PER_PACKET = BLOCKS_PER_PACKET * CHANNELS_PER_BLOCK
BLOCK_FLAG = 0xFFEE
DISTANCE_RESOLUTION_M = 0.002
AZIMUTH_MAX_CDEG = 36000
DEFAULT_FACTORY = b"\x37\x22"

_BLOCK = struct.Struct("<HH" + "HB" * CHANNELS_PER_BLOCK)
_TAIL = struct.Struct("<I2s")


class LidarFormatError(ValueError):
    """Input does not satisfy the packet layout contract."""


class LidarLengthError(LidarFormatError):
    pass


class LidarFlagError(LidarFormatError):
    pass


@dataclass(frozen=True)
class LidarBlock:
    """One data block: a shared azimuth plus 32 (distance_raw, reflectivity) channels."""

    azimuth_cdeg: int
    channels: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if not 0 <= self.azimuth_cdeg < AZIMUTH_MAX_CDEG:
            raise LidarFormatError(f"azimuth {self.azimuth_cdeg} out of range [0, {AZIMUTH_MAX_CDEG})")
        if len(self.channels) != CHANNELS_PER_BLOCK:
            raise LidarFormatError(f"expected {CHANNELS_PER_BLOCK} channels, got {len(self.channels)}")
        for dist, refl in self.channels:
            if not 0 <= dist <= 0xFFFF:
                raise LidarFormatError(f"distance {dist} does not fit u16")
            if not 0 <= refl <= 0xFF:
                raise LidarFormatError(f"reflectivity {refl} does not fit u8")


class LidarPoint(NamedTuple):
    azimuth_deg: float
    channel: int          # 0..15 within the firing group
    range_m: float
    reflectivity: int


@dataclass(frozen=True)
class ParsedPacket:
    points: tuple[LidarPoint, ...]
    timestamp_us: int
    factory: bytes

    @property
    def zero_return_count(self) -> int:
        return sum(1 for p in self.points if p.range_m == 0.0)


def encode_lidar_packet(
    blocks: Sequence[LidarBlock],
    timestamp_us: int,
    factory: bytes = DEFAULT_FACTORY,
) -> bytes:
    """Encode 12 blocks plus tail into exactly 1206 bytes."""
    if len(blocks) != BLOCKS_PER_PACKET:
        raise LidarFormatError(f"expected {BLOCKS_PER_PACKET} blocks, got {len(blocks)}")
    if len(factory) != 2:
        raise LidarFormatError("factory field must be exactly 2 bytes")
    out = bytearray(PACKET_SIZE)
    offset = 0
    for block in blocks:
        flat: list[int] = [BLOCK_FLAG, block.azimuth_cdeg]
        for dist, refl in block.channels:
            flat.append(dist)
            flat.append(refl)
        _BLOCK.pack_into(out, offset, *flat)
        offset += _BLOCK.size
    _TAIL.pack_into(out, offset, timestamp_us & 0xFFFFFFFF, factory)
    return bytes(out)


def parse_lidar_packet(raw: bytes) -> ParsedPacket:
    """Decode a packet into 384 points; every block yields two 16-channel groups."""
    if len(raw) != PACKET_SIZE:
        raise LidarLengthError(f"packet is {len(raw)} bytes, expected {PACKET_SIZE}")
    arr = np.frombuffer(raw, dtype=np.uint8)
    body = arr[: BLOCKS_PER_PACKET * _BLOCK.size].reshape(BLOCKS_PER_PACKET, _BLOCK.size)
    flags = body[:, 0].astype(np.uint16) | (body[:, 1].astype(np.uint16) << 8)
    bad = np.nonzero(flags != BLOCK_FLAG)[0]
    if bad.size:
        raise LidarFlagError(f"block {int(bad[0])} flag 0x{int(flags[bad[0]]):04X} != 0x{BLOCK_FLAG:04X}")
    azimuths = body[:, 2].astype(np.uint16) | (body[:, 3].astype(np.uint16) << 8)
    chan = body[:, 4:].reshape(BLOCKS_PER_PACKET, CHANNELS_PER_BLOCK, 3)
    distances = chan[:, :, 0].astype(np.uint16) | (chan[:, :, 1].astype(np.uint16) << 8)
    reflect = chan[:, :, 2]

    points = []
    for b in range(BLOCKS_PER_PACKET):
        az = azimuths[b] / 100.0
        for i in range(CHANNELS_PER_BLOCK):
            points.append(
                LidarPoint(
                    azimuth_deg=az,
                    channel=i % CHANNELS_PER_GROUP,
                    range_m=float(distances[b, i]) * DISTANCE_RESOLUTION_M,
                    reflectivity=int(reflect[b, i]),
                )
            )
    timestamp_us, factory = _TAIL.unpack_from(raw, BLOCKS_PER_PACKET * _BLOCK.size)
    return ParsedPacket(points=tuple(points), timestamp_us=timestamp_us, factory=factory)


def packet_distance_stats(raw: bytes, near_m: float = 0.5) -> tuple[int, int]:
    """Fast path for obstruction detection: (total returns, returns < near_m or zero).

    Avoids building point objects; used on the hot ingest path.
    """
    if len(raw) != PACKET_SIZE:
        raise LidarLengthError(f"packet is {len(raw)} bytes, expected {PACKET_SIZE}")
    arr = np.frombuffer(raw, dtype=np.uint8)
    body = arr[: BLOCKS_PER_PACKET * _BLOCK.size].reshape(BLOCKS_PER_PACKET, _BLOCK.size)
    chan = body[:, 4:].reshape(BLOCKS_PER_PACKET, CHANNELS_PER_BLOCK, 3)
    distances = chan[:, :, 0].astype(np.uint32) | (chan[:, :, 1].astype(np.uint32) << 8)
    near_raw = int(near_m / DISTANCE_RESOLUTION_M)
    near = int(np.count_nonzero(distances < near_raw))
    return POINTS_PER_PACKET, near


def packet_planar_points(raw: bytes) -> np.ndarray:
    """Project a packet to 2D (x, y) meters for occupancy previews, dropping zero returns."""
    parsed_az_dist = _azimuth_distance_arrays(raw)
    az_rad, dist_m = parsed_az_dist
    mask = dist_m > 0
    x = dist_m[mask] * np.cos(az_rad[mask])
    y = dist_m[mask] * np.sin(az_rad[mask])
    return np.stack([x, y], axis=1)


def _azimuth_distance_arrays(raw: bytes) -> tuple[np.ndarray, np.ndarray]:
    if len(raw) != PACKET_SIZE:
        raise LidarLengthError(f"packet is {len(raw)} bytes, expected {PACKET_SIZE}")
    arr = np.frombuffer(raw, dtype=np.uint8)
    body = arr[: BLOCKS_PER_PACKET * _BLOCK.size].reshape(BLOCKS_PER_PACKET, _BLOCK.size)
    azimuths = (body[:, 2].astype(np.float64) + body[:, 3].astype(np.float64) * 256.0) / 100.0
    chan = body[:, 4:].reshape(BLOCKS_PER_PACKET, CHANNELS_PER_BLOCK, 3)
    distances = chan[:, :, 0].astype(np.float64) + chan[:, :, 1].astype(np.float64) * 256.0
    az_rad = np.deg2rad(np.repeat(azimuths, CHANNELS_PER_BLOCK))
    dist_m = distances.reshape(-1) * DISTANCE_RESOLUTION_M
    return az_rad, dist_m
