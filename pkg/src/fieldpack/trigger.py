"""Software model of the external camera trigger.

A single schedule fires fixed-rate events; both cameras subscribe and receive
identical (seq, exposure) events, which is what makes sequence-number frame
pairing sound. The schedule runs on injected timestamps so tests are
deterministic; live mode feeds it the monotonic clock and records jitter.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable

LATE_THRESHOLD_NS = 1_000_000  # events fired >1 ms after nominal count as late


class TriggerConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TriggerConfig:
    fps: float
    exposure_us: int


@dataclass(frozen=True)
class TriggerEvent:
    seq: int
    fire_time_ns: int     # nominal monotonic fire time
    exposure_us: int


def validate_config(config: TriggerConfig) -> str | None:
    """Return None when valid, otherwise a human-readable violation."""
    if config.fps <= 0:
        return f"fps must be positive, got {config.fps}"
    if config.exposure_us <= 0:
        return f"exposure must be positive, got {config.exposure_us}"
    period_us = 1e6 / config.fps
    if config.exposure_us >= period_us:
        return f"exposure {config.exposure_us}us must be shorter than the period {period_us:.0f}us"
    return None


class TriggerSchedule:
    """Owns the event sequence; thread-safe against concurrent set_exposure."""

    def __init__(self, config: TriggerConfig, start_ns: int = 0):
        violation = validate_config(config)
        if violation:
            raise TriggerConfigError(violation)
        self._fps = config.fps
        self._exposure_us = config.exposure_us
        self._start_ns = start_ns
        self._period_ns = round(1e9 / config.fps)
        self._next_seq = 0
        self._subscribers: list[Callable[[TriggerEvent], None]] = []
        self._lock = threading.Lock()
        self.late_count = 0
        self.max_jitter_ns = 0

    @property
    def period_ns(self) -> int:
        return self._period_ns

    @property
    def fps(self) -> float:
        return self._fps

    @property
    def exposure_us(self) -> int:
        with self._lock:
            return self._exposure_us

    def subscribe(self, callback: Callable[[TriggerEvent], None]) -> None:
        self._subscribers.append(callback)

    def next_fire_ns(self) -> int:
        with self._lock:
            return self._start_ns + self._next_seq * self._period_ns

    def next_event(self, now_ns: int) -> TriggerEvent | None:
        """Fire the next due event, or return None if it is not due yet.

        At most one event fires per call, so a stalled caller never skips
        sequence numbers; it just fires late and the jitter is recorded.
        """
        with self._lock:
            nominal = self._start_ns + self._next_seq * self._period_ns
            if now_ns < nominal:
                return None
            event = TriggerEvent(seq=self._next_seq, fire_time_ns=nominal, exposure_us=self._exposure_us)
            self._next_seq += 1
            jitter = now_ns - nominal
            if jitter > self.max_jitter_ns:
                self.max_jitter_ns = jitter
            if jitter > LATE_THRESHOLD_NS:
                self.late_count += 1
        for callback in self._subscribers:
            callback(event)
        return event

    def set_exposure(self, exposure_us: int) -> int:
        """Change exposure for all not-yet-fired events; returns the first affected seq."""
        with self._lock:
            violation = validate_config(TriggerConfig(fps=self._fps, exposure_us=exposure_us))
            if violation:
                raise TriggerConfigError(violation)
            self._exposure_us = exposure_us
            return self._next_seq
