"""Ingest pipelines: dual timestamping, per-sensor sequence tracking, stereo frame
pairing, and the bounded recording queue with exact drop accounting.

Loss is never silent: every datum that enters is counted, and at quiescence
ingested == recorded + dropped holds exactly per sensor. "recorded" counts
acceptance into the recording queue; the writer drains the queue fully on
session stop, so accepted records are durable by the time stats are read.
"""

from __future__ import annotations

import enum
import queue
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable


class SensorKind(enum.Enum):
    CAMERA = "CAMERA"
    LIDAR = "LIDAR"
    IMU = "IMU"
    GNSS = "GNSS"


class RecordType(enum.IntEnum):
    FRAME = 1
    LIDAR_PKT = 2
    IMU = 3
    GNSS = 4
    EVENT = 5


class UnknownSensorError(KeyError):
    pass


class DuplicateSensorIdError(ValueError):
    pass


@dataclass(frozen=True)
class SensorDescriptor:
    id: int
    name: str
    kind: SensorKind
    nominal_rate_hz: float
    silence_timeout_ms: float

    def __post_init__(self):
        if self.id < 0 or self.id > 255:
            raise ValueError(f"sensor id {self.id} must fit u8")
        if self.nominal_rate_hz <= 0:
            raise ValueError("nominal_rate_hz must be positive")
        if self.silence_timeout_ms <= 1000.0 / self.nominal_rate_hz:
            raise ValueError(
                f"silence_timeout_ms {self.silence_timeout_ms} must exceed the "
                f"nominal period {1000.0 / self.nominal_rate_hz:.1f} ms"
            )


@dataclass(frozen=True)
class StampedRecord:
    sensor_id: int
    record_type: RecordType
    mono_ns: int
    wall_ns: int
    seq: int
    payload: bytes


class RateMeter:
    """Sliding-window rate and bandwidth over ingest timestamps."""

    def __init__(self, window_s: float = 2.0):
        self.window_ns = int(window_s * 1e9)
        self._events: deque[tuple[int, int]] = deque()

    def note(self, mono_ns: int, nbytes: int) -> None:
        self._events.append((mono_ns, nbytes))
        self._trim(mono_ns)

    def _trim(self, now_ns: int) -> None:
        cutoff = now_ns - self.window_ns
        while self._events and self._events[0][0] < cutoff:
            self._events.popleft()

    def rate_hz(self, now_ns: int) -> float:
        self._trim(now_ns)
        return len(self._events) / (self.window_ns * 1e-9)

    def bandwidth_bps(self, now_ns: int) -> float:
        self._trim(now_ns)
        return sum(n for _, n in self._events) * 8 / (self.window_ns * 1e-9)


@dataclass
class SensorStats:
    ingested: int = 0
    recorded: int = 0
    dropped: int = 0
    bytes_in: int = 0
    meter: RateMeter = field(default_factory=RateMeter)

    def as_dict(self, now_ns: int | None = None) -> dict:
        d = {
            "ingested": self.ingested,
            "recorded": self.recorded,
            "dropped": self.dropped,
            "bytes_in": self.bytes_in,
        }
        if now_ns is not None:
            d["measured_rate_hz"] = round(self.meter.rate_hz(now_ns), 3)
            d["measured_bandwidth_bps"] = round(self.meter.bandwidth_bps(now_ns), 1)
        return d


class Ingestor:
    """Registry plus stamping front end; one instance serves all sensors."""

    def __init__(self, clock):
        self._clock = clock
        self._descriptors: dict[int, SensorDescriptor] = {}
        self._stats: dict[int, SensorStats] = {}
        self._seq: dict[int, int] = {}
        self._last_mono: dict[int, int] = {}
        self._lock = threading.Lock()
        self.rejected_unknown = 0

    def register(self, descriptor: SensorDescriptor) -> None:
        with self._lock:
            if descriptor.id in self._descriptors:
                raise DuplicateSensorIdError(
                    f"sensor id {descriptor.id} already registered "
                    f"({self._descriptors[descriptor.id].name})"
                )
            if any(d.name == descriptor.name for d in self._descriptors.values()):
                raise DuplicateSensorIdError(f"sensor name {descriptor.name!r} already registered")
            self._descriptors[descriptor.id] = descriptor
            self._stats[descriptor.id] = SensorStats()
            self._seq[descriptor.id] = 0
            self._last_mono[descriptor.id] = 0

    @property
    def descriptors(self) -> list[SensorDescriptor]:
        return sorted(self._descriptors.values(), key=lambda d: d.id)

    def descriptor(self, sensor_id: int) -> SensorDescriptor:
        return self._descriptors[sensor_id]

    def id_of(self, name: str) -> int:
        for d in self._descriptors.values():
            if d.name == name:
                return d.id
        raise UnknownSensorError(name)

    def ingest(self, sensor_id: int, record_type: RecordType, payload: bytes) -> StampedRecord:
        """Stamp both clocks at arrival and assign the next per-sensor seq."""
        with self._lock:
            if sensor_id not in self._descriptors:
                self.rejected_unknown += 1
                raise UnknownSensorError(f"sensor id {sensor_id} is not registered")
            mono = max(self._clock.mono_ns(), self._last_mono[sensor_id])
            self._last_mono[sensor_id] = mono
            seq = self._seq[sensor_id]
            self._seq[sensor_id] = seq + 1
            stats = self._stats[sensor_id]
            stats.ingested += 1
            stats.bytes_in += len(payload)
            stats.meter.note(mono, len(payload))
            return StampedRecord(
                sensor_id=sensor_id,
                record_type=record_type,
                mono_ns=mono,
                wall_ns=self._clock.wall_ns(),
                seq=seq,
                payload=payload,
            )

    def note_recorded(self, sensor_id: int) -> None:
        with self._lock:
            self._stats[sensor_id].recorded += 1

    def note_dropped(self, sensor_id: int) -> None:
        with self._lock:
            self._stats[sensor_id].dropped += 1

    def move_recorded_to_dropped(self, sensor_id: int) -> None:
        """A record accepted into the queue failed durably (disk full)."""
        with self._lock:
            self._stats[sensor_id].recorded -= 1
            self._stats[sensor_id].dropped += 1

    def stats(self, sensor_id: int) -> SensorStats:
        return self._stats[sensor_id]

    def stats_by_name(self, now_ns: int | None = None) -> dict[str, dict]:
        with self._lock:
            return {
                d.name: self._stats[d.id].as_dict(now_ns) for d in self.descriptors
            }

    def reset_counters(self) -> None:
        """Zero the session counters (rate meters keep their windows)."""
        with self._lock:
            for stats in self._stats.values():
                stats.ingested = 0
                stats.recorded = 0
                stats.dropped = 0
                stats.bytes_in = 0


@dataclass(frozen=True)
class FramePair:
    trigger_seq: int
    left: object
    right: object


@dataclass(frozen=True)
class PairDropout:
    missing_side: str       # "LEFT" or "RIGHT": the side that never delivered
    trigger_seq: int


class FramePairer:
    """Matches left/right frames by trigger sequence.

    A seq present on both sides pairs immediately. A seq seen on exactly one
    side expires into a dropout once the other side has moved more than
    `window_periods` sequences past it, or when the pending entry is older
    than the window in time, or at flush.
    """

    def __init__(self, window_periods: int = 5, period_ns: int = 100_000_000):
        self.window_periods = window_periods
        self.period_ns = period_ns
        self._pending: dict[int, dict] = {}
        self._max_seen = -1
        self._lock = threading.Lock()
        self.pairs_emitted = 0
        self.dropouts_emitted = 0

    def offer(self, side: str, trigger_seq: int, item, mono_ns: int = 0) -> list:
        if side not in ("LEFT", "RIGHT"):
            raise ValueError(f"side must be LEFT or RIGHT, got {side!r}")
        out: list = []
        with self._lock:
            entry = self._pending.setdefault(
                trigger_seq, {"LEFT": None, "RIGHT": None, "first_ns": mono_ns}
            )
            entry[side] = item
            if entry["LEFT"] is not None and entry["RIGHT"] is not None:
                del self._pending[trigger_seq]
                self.pairs_emitted += 1
                out.append(FramePair(trigger_seq=trigger_seq, left=entry["LEFT"], right=entry["RIGHT"]))
            self._max_seen = max(self._max_seen, trigger_seq)
            out.extend(self._expire_locked(seq_horizon=self._max_seen - self.window_periods))
        return out

    def expire_older_than(self, now_ns: int) -> list:
        with self._lock:
            cutoff = now_ns - self.window_periods * self.period_ns
            return self._expire_locked(time_horizon=cutoff)

    def flush(self) -> list:
        with self._lock:
            return self._expire_locked(seq_horizon=None, flush=True)

    def _expire_locked(self, seq_horizon=None, time_horizon=None, flush=False) -> list:
        out = []
        for seq in sorted(self._pending):
            entry = self._pending[seq]
            expired = flush
            if seq_horizon is not None and seq < seq_horizon:
                expired = True
            if time_horizon is not None and entry["first_ns"] < time_horizon:
                expired = True
            if not expired:
                continue
            missing = "RIGHT" if entry["RIGHT"] is None else "LEFT"
            del self._pending[seq]
            self.dropouts_emitted += 1
            out.append(PairDropout(missing_side=missing, trigger_seq=seq))
        return out


class RecordingQueue:
    """Bounded multi-producer single-consumer queue; drop-newest on overflow."""

    def __init__(
        self,
        capacity: int,
        ingestor: Ingestor,
        on_overflow: Callable[[int], None] | None = None,
    ):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._queue: queue.Queue[StampedRecord | None] = queue.Queue(maxsize=capacity)
        self._ingestor = ingestor
        self._on_overflow = on_overflow

    def put(self, record: StampedRecord) -> bool:
        """Accept or drop; a drop is counted and signals QUEUE_OVERFLOW upstream."""
        try:
            self._queue.put_nowait(record)
        except queue.Full:
            self._ingestor.note_dropped(record.sensor_id)
            if self._on_overflow:
                self._on_overflow(record.sensor_id)
            return False
        self._ingestor.note_recorded(record.sensor_id)
        return True

    def get(self, timeout: float = 0.2) -> StampedRecord | None:
        try:
            return self._queue.get(timeout=timeout)
        except queue.Empty:
            return None

    def drain(self) -> Iterable[StampedRecord]:
        while True:
            try:
                item = self._queue.get_nowait()
            except queue.Empty:
                return
            if item is not None:
                yield item

    def qsize(self) -> int:
        return self._queue.qsize()


class PreviewRing:
    """Drop-oldest buffer for preview paths; never blocks and never backpressures."""

    def __init__(self, capacity: int = 16):
        self._items: deque = deque(maxlen=capacity)
        self._lock = threading.Lock()

    def push(self, item) -> None:
        with self._lock:
            self._items.append(item)

    def latest(self):
        with self._lock:
            return self._items[-1] if self._items else None

    def snapshot(self) -> list:
        with self._lock:
            return list(self._items)
