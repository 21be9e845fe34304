"""Timed simulated sources and the threaded runner that drives them.

Each source exposes an infinite schedule of (due_offset_ns, build) emissions,
where build(mono_ns, wall_ns) returns the payload bytes. Deterministic tests
iterate schedules directly; the daemon wraps them in SourceRunner threads that
sleep until each due time against the real clock. Cameras are not timed: they
fire on trigger events.

Lidar cadence: 10 Hz rotation at 0.2 deg per firing group gives 1800 groups
per revolution; 24 groups per packet yields 750 packets/s, about 7.24 Mb/s of
payload on the wire.
"""

from __future__ import annotations

import datetime as dt
import math
import socket
import threading
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from ..acquisition import RecordType
from .imu import MotionSequence, encode_imu_sample, ideal_sample
from .lidar import (
    BLOCKS_PER_PACKET,
    CHANNELS_PER_BLOCK,
    DISTANCE_RESOLUTION_M,
    GROUPS_PER_PACKET,
    LidarBlock,
    encode_lidar_packet,
)
from .nmea import GnssFix, format_gga

Emission = tuple[int, Callable[[int, int], bytes]]


class SinkClosed(Exception):
    """Raised by a sink to stop its source cleanly."""


@dataclass
class LidarSource:
    """750 packets/s of azimuth-sweeping synthetic returns.

    The scene is an open field by default; obstructed=True collapses every
    return to under half a meter, which is what a blocked window looks like.
    """

    rotation_hz: float = 10.0
    azimuth_step_deg: float = 0.2
    obstructed: bool = False

    record_type = RecordType.LIDAR_PKT

    def __post_init__(self):
        groups_per_rev = 360.0 / self.azimuth_step_deg
        self.packets_per_s = self.rotation_hz * groups_per_rev / GROUPS_PER_PACKET
        self.period_ns = round(1e9 / self.packets_per_s)
        self._azimuth_cdeg = 0

    def _scene_distance_raw(self, azimuth_cdeg: np.ndarray, channel: np.ndarray) -> np.ndarray:
        if self.obstructed:
            return np.full(azimuth_cdeg.shape, int(0.2 / DISTANCE_RESOLUTION_M), dtype=np.uint16)
        az_rad = np.deg2rad(azimuth_cdeg / 100.0)
        dist_m = 8.0 + 4.0 * np.sin(az_rad) + 0.12 * channel
        return (dist_m / DISTANCE_RESOLUTION_M).astype(np.uint16)

    def build_packet(self, timestamp_us: int) -> bytes:
        step_cdeg = int(self.azimuth_step_deg * 100)
        blocks = []
        for b in range(BLOCKS_PER_PACKET):
            az = (self._azimuth_cdeg + b * 2 * step_cdeg) % 36000
            channel = np.arange(CHANNELS_PER_BLOCK) % 16
            dist = self._scene_distance_raw(np.full(CHANNELS_PER_BLOCK, az, dtype=float), channel)
            refl = ((channel * 13 + az // 100) % 255).astype(np.uint8)
            blocks.append(
                LidarBlock(azimuth_cdeg=az, channels=tuple(zip(dist.tolist(), refl.tolist())))
            )
        self._azimuth_cdeg = (self._azimuth_cdeg + GROUPS_PER_PACKET * step_cdeg) % 36000
        return encode_lidar_packet(blocks, timestamp_us=timestamp_us)

    def schedule(self) -> Iterator[Emission]:
        n = 0
        while True:
            due = round(n * self.period_ns)
            yield due, lambda mono_ns, wall_ns: self.build_packet((mono_ns // 1000) & 0xFFFFFFFF)
            n += 1


@dataclass
class ImuSource:
    """Fixed-rate ideal IMU readings driven by a motion profile sequence."""

    rate_hz: float = 100.0
    motion: MotionSequence | None = None
    gyro_bias: tuple[float, float, float] | None = None
    accel_bias: tuple[float, float, float] | None = None

    record_type = RecordType.IMU

    def __post_init__(self):
        self.period_ns = round(1e9 / self.rate_hz)
        self.motion = self.motion or MotionSequence()
        self._gyro_bias = None if self.gyro_bias is None else np.asarray(self.gyro_bias)
        self._accel_bias = None if self.accel_bias is None else np.asarray(self.accel_bias)

    def build_sample(self, t_offset_ns: int, mono_ns: int) -> bytes:
        profile = self.motion.profile_at(t_offset_ns / 1e9)
        sample = ideal_sample(profile, mono_ns, self._gyro_bias, self._accel_bias)
        return encode_imu_sample(sample)

    def schedule(self) -> Iterator[Emission]:
        n = 1
        while True:
            due = n * self.period_ns
            yield due, lambda mono_ns, wall_ns, _due=due: self.build_sample(_due, mono_ns)
            n += 1


@dataclass
class GnssSource:
    """One GGA sentence per second around a base coordinate."""

    base_latitude_deg: float = 46.8139
    base_longitude_deg: float = -71.2082
    altitude_m: float = 120.0
    rate_hz: float = 1.0
    fix_quality: int = 1
    satellites: int = 9
    walk_scale_deg: float = 1e-5

    record_type = RecordType.GNSS

    def __post_init__(self):
        self.period_ns = round(1e9 / self.rate_hz)
        self._rng = np.random.default_rng(1234)
        self._lat = self.base_latitude_deg
        self._lon = self.base_longitude_deg

    def build_sentence(self, wall_ns: int) -> bytes:
        self._lat += float(self._rng.normal(0, self.walk_scale_deg))
        self._lon += float(self._rng.normal(0, self.walk_scale_deg))
        wall = dt.datetime.fromtimestamp(wall_ns / 1e9, tz=dt.timezone.utc)
        fix = GnssFix(
            latitude_deg=self._lat,
            longitude_deg=self._lon,
            altitude_m=self.altitude_m,
            fix_quality=self.fix_quality,
            satellites=self.satellites if self.fix_quality else 0,
            wall_time=wall.time(),
        )
        return (format_gga(fix) + "\r\n").encode("ascii")

    def schedule(self) -> Iterator[Emission]:
        n = 1
        while True:
            yield n * self.period_ns, lambda mono_ns, wall_ns: self.build_sentence(wall_ns)
            n += 1


def run_schedule_sim(source, duration_s: float, start_mono_ns: int = 0,
                     start_wall_ns: int = 1_700_000_000_000_000_000) -> list[bytes]:
    """Drain a source's schedule over simulated time; for tests and sizing."""
    out = []
    horizon = int(duration_s * 1e9)
    for due, build in source.schedule():
        if due >= horizon:
            break
        out.append(build(start_mono_ns + due, start_wall_ns + due))
    return out


class SourceRunner(threading.Thread):
    """Drives one timed source against the real clock.

    pause() models a killed sensor: due emissions are consumed and discarded,
    so on resume the source continues at the current time instead of bursting
    the backlog. A sink may raise SinkClosed to stop the runner cleanly.
    """

    def __init__(self, name: str, source, clock, sink: Callable[[RecordType, bytes], None]):
        super().__init__(name=f"source-{name}", daemon=True)
        self.source = source
        self.clock = clock
        self.sink = sink
        self._stop_event = threading.Event()
        self._paused = threading.Event()
        self.emitted = 0
        self.discarded_while_paused = 0

    def pause(self) -> None:
        self._paused.set()

    def resume(self) -> None:
        self._paused.clear()

    def stop(self) -> None:
        self._stop_event.set()

    def run(self) -> None:
        start_ns = self.clock.mono_ns()
        for due_offset, build in self.source.schedule():
            due = start_ns + due_offset
            while not self._stop_event.is_set():
                now = self.clock.mono_ns()
                if now >= due:
                    break
                # short sleeps keep pause/stop responsive
                threading.Event().wait(min((due - now) / 1e9, 0.05))
            if self._stop_event.is_set():
                return
            if self._paused.is_set():
                self.discarded_while_paused += 1
                continue
            payload = build(self.clock.mono_ns(), self.clock.wall_ns())
            try:
                self.sink(self.source.record_type, payload)
            except SinkClosed:
                return
            self.emitted += 1


class LidarUdpEmitter:
    """Optional loopback UDP path: one packet per datagram."""

    def __init__(self, host: str = "127.0.0.1", port: int = 2368):
        self.addr = (host, port)
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)

    def __call__(self, record_type: RecordType, payload: bytes) -> None:
        self._sock.sendto(payload, self.addr)

    def close(self) -> None:
        self._sock.close()


class LidarUdpReceiver(threading.Thread):
    """Receives lidar datagrams and forwards them to a sink."""

    def __init__(self, sink: Callable[[RecordType, bytes], None],
                 host: str = "127.0.0.1", port: int = 2368):
        super().__init__(name="lidar-udp-rx", daemon=True)
        self.sink = sink
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.bind((host, port))
        self._sock.settimeout(0.2)
        self._stop_event = threading.Event()
        self.port = self._sock.getsockname()[1]

    def stop(self) -> None:
        self._stop_event.set()

    def run(self) -> None:
        while not self._stop_event.is_set():
            try:
                payload, _ = self._sock.recvfrom(2048)
            except socket.timeout:
                continue
            except OSError:
                return
            try:
                self.sink(RecordType.LIDAR_PKT, payload)
            except SinkClosed:
                return
        self._sock.close()
