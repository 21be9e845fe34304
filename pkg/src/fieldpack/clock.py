"""Injectable clocks so pipelines run identically on real time or simulated time."""

from __future__ import annotations

import time


class SystemClock:
    """Real monotonic + wall clock."""

    def mono_ns(self) -> int:
        return time.monotonic_ns()

    def wall_ns(self) -> int:
        return time.time_ns()


class SimClock:
    """Manually advanced clock for deterministic tests.

    Monotonic and wall time advance together; wall time starts at an arbitrary
    but fixed epoch offset so wall stamps are distinguishable from mono stamps.
    """

    def __init__(self, start_mono_ns: int = 0, start_wall_ns: int = 1_700_000_000_000_000_000):
        self._mono_ns = start_mono_ns
        self._wall_ns = start_wall_ns

    def mono_ns(self) -> int:
        return self._mono_ns

    def wall_ns(self) -> int:
        return self._wall_ns

    def advance(self, ns: int) -> None:
        if ns < 0:
            raise ValueError("clock cannot move backwards")
        self._mono_ns += ns
        self._wall_ns += ns

    def advance_s(self, seconds: float) -> None:
        self.advance(int(seconds * 1e9))
