"""Deterministic discrete-event scheduler over integer-microsecond virtual time."""
from __future__ import annotations

import heapq
import itertools
from typing import Any, Callable

# Tie-break order for events sharing a timestamp.
PRIO_DISTURBANCE = 0
PRIO_DELIVERY = 1
PRIO_GATEWAY = 2
PRIO_SIM = 3
PRIO_AGENT = 4


class Scheduler:
    """Events run in (time, priority, insertion seq) order."""

    def __init__(self):
        self.now = 0
        self._queue: list[tuple[int, int, int, Callable[..., Any], tuple]] = []
        self._seq = itertools.count()

    def call_at(self, t_us: int, fn: Callable[..., Any], *args: Any, priority: int = PRIO_DELIVERY) -> None:
        if t_us < self.now:
            raise ValueError(f"cannot schedule in the past ({t_us} < {self.now})")
        heapq.heappush(self._queue, (t_us, priority, next(self._seq), fn, args))

    def call_later(self, delay_us: int, fn: Callable[..., Any], *args: Any, priority: int = PRIO_DELIVERY) -> None:
        self.call_at(self.now + delay_us, fn, *args, priority=priority)

    def __len__(self) -> int:
        return len(self._queue)

    def run(self, until: int | None = None) -> int:
        """Run events with time < ``until`` (all if None). Returns the number run."""
        n = 0
        while self._queue:
            t = self._queue[0][0]
            if until is not None and t >= until:
                break
            _, _, _, fn, args = heapq.heappop(self._queue)
            self.now = t
            fn(*args)
            n += 1
        if until is not None:
            self.now = max(self.now, until)
        return n
