"""Per-sensor state machine (OFF/IDLE/REC/ERR/CAL), fault detectors, and the
rig-wide status snapshot.

Transition table:
    OFF  -> IDLE on START_OK        OFF  -> ERR on START_FAIL
    IDLE -> REC  on RECORD_ON       REC  -> IDLE on RECORD_OFF
    IDLE -> CAL  on CAL_START (IMU only)
    CAL  -> IDLE on CAL_DONE
    IDLE/REC/CAL -> ERR on FAULT    ERR  -> IDLE on FAULT_CLEARED
    any  -> OFF  on STOP
Every other (state, event) pair is rejected with the state unchanged.

Detectors raise a fault the moment its condition holds and clear it only
after the condition has been false for a hold time, which prevents flapping.
"""

from __future__ import annotations

import enum
import threading
from collections import deque
from dataclasses import dataclass, field

from .acquisition import SensorDescriptor, SensorKind


class SensorState(enum.Enum):
    OFF = "OFF"
    IDLE = "IDLE"
    REC = "REC"
    ERR = "ERR"
    CAL = "CAL"


class HealthEvent(enum.Enum):
    START_OK = "start_ok"
    START_FAIL = "start_fail"
    RECORD_ON = "record_on"
    RECORD_OFF = "record_off"
    CAL_START = "cal_start"
    CAL_DONE = "cal_done"
    FAULT = "fault"
    FAULT_CLEARED = "fault_cleared"
    STOP = "stop"


class FaultKind(enum.Enum):
    DISCONNECTED = "DISCONNECTED"
    OVERHEAT = "OVERHEAT"
    OBSTRUCTION = "OBSTRUCTION"
    GNSS_DENIED = "GNSS_DENIED"
    QUEUE_OVERFLOW = "QUEUE_OVERFLOW"
    DISK_FULL = "DISK_FULL"
    DISK_LOW = "DISK_LOW"


_TABLE: dict[tuple[SensorState, HealthEvent], SensorState] = {
    (SensorState.OFF, HealthEvent.START_OK): SensorState.IDLE,
    (SensorState.OFF, HealthEvent.START_FAIL): SensorState.ERR,
    (SensorState.IDLE, HealthEvent.RECORD_ON): SensorState.REC,
    (SensorState.REC, HealthEvent.RECORD_OFF): SensorState.IDLE,
    (SensorState.IDLE, HealthEvent.CAL_START): SensorState.CAL,
    (SensorState.CAL, HealthEvent.CAL_DONE): SensorState.IDLE,
    (SensorState.IDLE, HealthEvent.FAULT): SensorState.ERR,
    (SensorState.REC, HealthEvent.FAULT): SensorState.ERR,
    (SensorState.CAL, HealthEvent.FAULT): SensorState.ERR,
    (SensorState.ERR, HealthEvent.FAULT_CLEARED): SensorState.IDLE,
}


def transition(
    state: SensorState, event: HealthEvent, kind: SensorKind
) -> tuple[SensorState, bool]:
    """Apply one event; returns (new_state, accepted). Rejections leave state unchanged."""
    if event is HealthEvent.STOP:
        return SensorState.OFF, True
    if event is HealthEvent.CAL_START and kind is not SensorKind.IMU:
        return state, False
    new_state = _TABLE.get((state, event))
    if new_state is None:
        return state, False
    return new_state, True


@dataclass(frozen=True)
class Fault:
    kind: FaultKind
    sensor_id: int | None        # None marks a rig-level fault (disk)
    raised_at_ns: int
    details: str = ""


class FaultBoard:
    """Active fault set with at most one entry per (sensor, kind)."""

    def __init__(self):
        self._active: dict[tuple[int | None, FaultKind], Fault] = {}

    def raise_fault(self, kind: FaultKind, sensor_id: int | None, now_ns: int, details: str = "") -> bool:
        """Returns True if newly raised; raising an active fault changes nothing."""
        key = (sensor_id, kind)
        if key in self._active:
            return False
        self._active[key] = Fault(kind=kind, sensor_id=sensor_id, raised_at_ns=now_ns, details=details)
        return True

    def clear_fault(self, kind: FaultKind, sensor_id: int | None) -> bool:
        return self._active.pop((sensor_id, kind), None) is not None

    def active_for(self, sensor_id: int | None) -> list[Fault]:
        return [f for (sid, _), f in self._active.items() if sid == sensor_id]

    def all_active(self) -> list[Fault]:
        return list(self._active.values())

    def is_active(self, kind: FaultKind, sensor_id: int | None) -> bool:
        return (sensor_id, kind) in self._active


@dataclass(frozen=True)
class HealthThresholds:
    overheat_c: float = 75.0
    overheat_consecutive_frames: int = 3
    obstruction_ratio: float = 0.95
    obstruction_near_m: float = 0.5
    obstruction_window_s: float = 1.0
    gnss_denied_after_s: float = 10.0
    clear_hold_s: float = 2.0
    cal_duration_s: float = 10.0


class _HoldTracker:
    """Raise immediately while a condition holds; clear after it has been false for hold_ns."""

    def __init__(self, hold_ns: int):
        self.hold_ns = hold_ns
        self.active = False
        self._false_since: int | None = None

    def update(self, condition: bool, now_ns: int) -> str | None:
        if condition:
            self._false_since = None
            if not self.active:
                self.active = True
                return "raise"
            return None
        if not self.active:
            return None
        if self._false_since is None:
            self._false_since = now_ns
            return None
        if now_ns - self._false_since >= self.hold_ns:
            self.active = False
            self._false_since = None
            return "clear"
        return None


@dataclass
class _SensorTelemetry:
    last_datum_ns: int | None = None
    hot_streak: int = 0
    lidar_returns: deque = field(default_factory=deque)   # (mono_ns, total, near)
    gnss_zero_since_ns: int | None = None
    gnss_quality: int | None = None


@dataclass(frozen=True)
class FaultChange:
    action: str                 # "raise" or "clear"
    sensor_id: int
    kind: FaultKind
    details: str = ""


class FaultDetectors:
    """Threshold detectors fed from ingest paths; evaluate() emits fault changes."""

    def __init__(self, thresholds: HealthThresholds | None = None):
        self.thresholds = thresholds or HealthThresholds()
        self._telemetry: dict[int, _SensorTelemetry] = {}
        self._trackers: dict[tuple[int, FaultKind], _HoldTracker] = {}
        self._lock = threading.Lock()

    def _telemetry_for(self, sensor_id: int) -> _SensorTelemetry:
        return self._telemetry.setdefault(sensor_id, _SensorTelemetry())

    def _tracker(self, sensor_id: int, kind: FaultKind) -> _HoldTracker:
        key = (sensor_id, kind)
        if key not in self._trackers:
            self._trackers[key] = _HoldTracker(int(self.thresholds.clear_hold_s * 1e9))
        return self._trackers[key]

    def note_datum(self, sensor_id: int, mono_ns: int) -> None:
        with self._lock:
            self._telemetry_for(sensor_id).last_datum_ns = mono_ns

    def note_frame_temperature(self, sensor_id: int, temperature_c: float) -> None:
        with self._lock:
            t = self._telemetry_for(sensor_id)
            if temperature_c > self.thresholds.overheat_c:
                t.hot_streak += 1
            else:
                t.hot_streak = 0

    def note_lidar_returns(self, sensor_id: int, mono_ns: int, total: int, near: int) -> None:
        with self._lock:
            t = self._telemetry_for(sensor_id)
            t.lidar_returns.append((mono_ns, total, near))
            cutoff = mono_ns - int(self.thresholds.obstruction_window_s * 1e9)
            while t.lidar_returns and t.lidar_returns[0][0] < cutoff:
                t.lidar_returns.popleft()

    def note_gnss_quality(self, sensor_id: int, mono_ns: int, quality: int) -> None:
        with self._lock:
            t = self._telemetry_for(sensor_id)
            t.gnss_quality = quality
            if quality == 0:
                if t.gnss_zero_since_ns is None:
                    t.gnss_zero_since_ns = mono_ns
            else:
                t.gnss_zero_since_ns = None

    def evaluate(
        self, now_ns: int, descriptors: list[SensorDescriptor], active_ids: set[int]
    ) -> list[FaultChange]:
        """Run all detectors; only sensors in active_ids are checked for silence."""
        changes: list[FaultChange] = []
        with self._lock:
            for desc in descriptors:
                t = self._telemetry_for(desc.id)

                if desc.id in active_ids:
                    timeout_ns = int(desc.silence_timeout_ms * 1e6)
                    ref = t.last_datum_ns
                    silent = ref is not None and (now_ns - ref) > timeout_ns
                    self._emit(changes, desc.id, FaultKind.DISCONNECTED, silent, now_ns,
                               f"no data for {(now_ns - ref) / 1e6:.0f} ms" if silent else "")

                if desc.kind is SensorKind.CAMERA:
                    hot = t.hot_streak >= self.thresholds.overheat_consecutive_frames
                    self._emit(changes, desc.id, FaultKind.OVERHEAT, hot, now_ns,
                               f"{t.hot_streak} consecutive frames above {self.thresholds.overheat_c} C")

                if desc.kind is SensorKind.LIDAR and t.lidar_returns:
                    total = sum(r[1] for r in t.lidar_returns)
                    near = sum(r[2] for r in t.lidar_returns)
                    window_ns = int(self.thresholds.obstruction_window_s * 1e9)
                    span_ok = t.lidar_returns[-1][0] - t.lidar_returns[0][0] >= window_ns // 2
                    obstructed = (
                        span_ok and total > 0 and near / total >= self.thresholds.obstruction_ratio
                    )
                    self._emit(changes, desc.id, FaultKind.OBSTRUCTION, obstructed, now_ns,
                               f"{near}/{total} returns below {self.thresholds.obstruction_near_m} m")

                if desc.kind is SensorKind.GNSS:
                    denied = (
                        t.gnss_zero_since_ns is not None
                        and (now_ns - t.gnss_zero_since_ns) > self.thresholds.gnss_denied_after_s * 1e9
                    )
                    self._emit(changes, desc.id, FaultKind.GNSS_DENIED, denied, now_ns,
                               "fix quality 0" if denied else "")
        return changes

    def _emit(self, changes, sensor_id, kind, condition, now_ns, details):
        action = self._tracker(sensor_id, kind).update(condition, now_ns)
        if action:
            changes.append(FaultChange(action=action, sensor_id=sensor_id, kind=kind, details=details))


@dataclass
class StatusSnapshot:
    taken_mono_ns: int
    uptime_s: float
    recording: bool
    disk_free_bytes: int
    camera_fps_measured: float
    states: dict[str, str]                       # sensor name -> state name
    faults: list[dict]
    exposure_us: int | None = None
    trigger_fps: float | None = None

    def to_dict(self) -> dict:
        return {
            "uptime_s": round(self.uptime_s, 3),
            "recording": self.recording,
            "disk_free_bytes": self.disk_free_bytes,
            "camera_fps": round(self.camera_fps_measured, 2),
            "states": dict(self.states),
            "faults": list(self.faults),
            "exposure_us": self.exposure_us,
            "trigger_fps": self.trigger_fps,
        }


class HealthMonitor:
    """Single owner of all per-sensor states; every mutation is serialized."""

    def __init__(
        self,
        descriptors: list[SensorDescriptor],
        clock,
        thresholds: HealthThresholds | None = None,
    ):
        self.descriptors = sorted(descriptors, key=lambda d: d.id)
        self.clock = clock
        self.thresholds = thresholds or HealthThresholds()
        self.detectors = FaultDetectors(self.thresholds)
        self.board = FaultBoard()
        self._states: dict[int, SensorState] = {d.id: SensorState.OFF for d in self.descriptors}
        self._by_id = {d.id: d for d in self.descriptors}
        self._lock = threading.RLock()
        self._pair_times: deque[int] = deque()
        self._cal_deadline_ns: dict[int, int] = {}
        self._started_mono_ns = clock.mono_ns()
        self.rejected_transitions: list[tuple[int, SensorState, HealthEvent]] = []

    def state(self, sensor_id: int) -> SensorState:
        with self._lock:
            return self._states[sensor_id]

    def states_by_name(self) -> dict[str, str]:
        with self._lock:
            return {d.name: self._states[d.id].value for d in self.descriptors}

    def apply(self, sensor_id: int, event: HealthEvent) -> bool:
        """Run one transition; rejected transitions are reported, never absorbed."""
        with self._lock:
            kind = self._by_id[sensor_id].kind
            current = self._states[sensor_id]
            new_state, accepted = transition(current, event, kind)
            if accepted:
                self._states[sensor_id] = new_state
            else:
                self.rejected_transitions.append((sensor_id, current, event))
            return accepted

    def active_ids(self) -> set[int]:
        """Sensors that have been started (not OFF); only these are checked for silence."""
        with self._lock:
            return {sid for sid, st in self._states.items() if st is not SensorState.OFF}

    def process_fault(self, sensor_id: int, kind: FaultKind, details: str = "") -> None:
        now = self.clock.mono_ns()
        with self._lock:
            if self.board.raise_fault(kind, sensor_id, now, details):
                if self._states[sensor_id] in (SensorState.IDLE, SensorState.REC, SensorState.CAL):
                    self.apply(sensor_id, HealthEvent.FAULT)

    def process_fault_cleared(self, sensor_id: int, kind: FaultKind) -> None:
        with self._lock:
            if self.board.clear_fault(kind, sensor_id):
                if not self.board.active_for(sensor_id) and self._states[sensor_id] is SensorState.ERR:
                    self.apply(sensor_id, HealthEvent.FAULT_CLEARED)

    def raise_rig_fault(self, kind: FaultKind, details: str = "") -> None:
        self.board.raise_fault(kind, None, self.clock.mono_ns(), details)

    def clear_rig_fault(self, kind: FaultKind) -> None:
        self.board.clear_fault(kind, None)

    def start_calibration(self, sensor_id: int) -> bool:
        with self._lock:
            if self.apply(sensor_id, HealthEvent.CAL_START):
                self._cal_deadline_ns[sensor_id] = (
                    self.clock.mono_ns() + int(self.thresholds.cal_duration_s * 1e9)
                )
                return True
            return False

    def tick(self, now_ns: int | None = None) -> list[FaultChange]:
        """Evaluate detectors and timed calibration; apply resulting transitions."""
        now = self.clock.mono_ns() if now_ns is None else now_ns
        with self._lock:
            for sensor_id, deadline in list(self._cal_deadline_ns.items()):
                if now >= deadline and self._states[sensor_id] is SensorState.CAL:
                    self.apply(sensor_id, HealthEvent.CAL_DONE)
                    del self._cal_deadline_ns[sensor_id]
            changes = self.detectors.evaluate(now, self.descriptors, self.active_ids())
            for change in changes:
                if change.action == "raise":
                    self.process_fault(change.sensor_id, change.kind, change.details)
                else:
                    self.process_fault_cleared(change.sensor_id, change.kind)
            return changes

    def note_pair(self, mono_ns: int) -> None:
        with self._lock:
            self._pair_times.append(mono_ns)
            cutoff = mono_ns - 2_000_000_000
            while self._pair_times and self._pair_times[0] < cutoff:
                self._pair_times.popleft()

    def camera_fps(self, now_ns: int) -> float:
        with self._lock:
            cutoff = now_ns - 2_000_000_000
            while self._pair_times and self._pair_times[0] < cutoff:
                self._pair_times.popleft()
            return len(self._pair_times) / 2.0

    def snapshot(
        self,
        disk_free_bytes: int = 0,
        exposure_us: int | None = None,
        trigger_fps: float | None = None,
    ) -> StatusSnapshot:
        now = self.clock.mono_ns()
        with self._lock:
            recording = any(st is SensorState.REC for st in self._states.values())
            faults = [
                {
                    "kind": f.kind.value,
                    "sensor": self._by_id[f.sensor_id].name if f.sensor_id in self._by_id else "RIG",
                    "details": f.details,
                }
                for f in self.board.all_active()
            ]
            return StatusSnapshot(
                taken_mono_ns=now,
                uptime_s=(now - self._started_mono_ns) / 1e9,
                recording=recording,
                disk_free_bytes=disk_free_bytes,
                camera_fps_measured=self.camera_fps(now),
                states=self.states_by_name(),
                faults=faults,
                exposure_us=exposure_us,
                trigger_fps=trigger_fps,
            )
