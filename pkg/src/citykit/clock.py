"""Clock abstraction so schedulers and throttles run under simulated time."""

import threading
import time


class Clock:
    """Source of epoch-second timestamps."""

    def now(self) -> float:
        raise NotImplementedError


class SystemClock(Clock):
    """Wall clock."""

    def now(self) -> float:
        return time.time()


class SimulatedClock(Clock):
    """Manually driven clock; time only moves when told to.

    Thread-safe so broker pumps and schedulers may read it concurrently
    while a harness advances it.
    """

    def __init__(self, start: float = 0.0):
        self._now = float(start)
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            return self._now

    def advance(self, seconds: float) -> float:
        """Move time forward; returns the new time."""
        if seconds < 0:
            raise ValueError("cannot advance a clock backwards")
        with self._lock:
            self._now += seconds
            return self._now

    def set(self, t: float) -> float:
        """Jump to an absolute time, never backwards."""
        with self._lock:
            if t < self._now:
                raise ValueError(f"clock moving backwards: {t} < {self._now}")
            self._now = float(t)
            return self._now
