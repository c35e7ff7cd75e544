"""Clocks consulted by every time budget in the planner.

Components report the work they perform through :meth:`Clock.charge`. The
wall clock ignores those reports and reads real time; the virtual clock
turns them into simulated seconds, which makes whole construction schedules
reproducible and fast to test.
"""

from __future__ import annotations

import time


class Clock:
    virtual = False

    def now(self) -> float:
        raise NotImplementedError

    def charge(self, units: float = 1.0) -> None:
        """Record ``units`` of work (one unit is roughly one state operation)."""

    def deadline(self, seconds: float) -> float:
        return self.now() + seconds

    def expired(self, deadline: float) -> bool:
        return self.now() >= deadline


class WallClock(Clock):
    def now(self) -> float:
        return time.perf_counter()


class VirtualClock(Clock):
    """Deterministic clock advanced only by charged work.

    >>> c = VirtualClock(unit_seconds=0.5)
    >>> c.charge(4); c.now()
    2.0
    """

    virtual = True

    def __init__(self, unit_seconds: float = 1e-6, start: float = 0.0):
        self.unit_seconds = unit_seconds
        self._t = start

    def now(self) -> float:
        return self._t

    def charge(self, units: float = 1.0) -> None:
        self._t += units * self.unit_seconds

    def advance(self, seconds: float) -> None:
        self._t += seconds
