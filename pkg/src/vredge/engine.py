"""Deterministic discrete-event core: virtual clock, event queue, named RNG streams.

Time is integer microseconds. Two events with the same firing time execute
in scheduling order, so a run is a pure function of (scenario, seed).
"""

from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

EventId = int


class SchedulingError(Exception):
    """Raised when an event is scheduled before the current clock."""


@dataclass(order=True, slots=True)
class _QueueEntry:
    fire_at: int
    ordinal: int
    label: str = field(compare=False)
    action: Callable[[int], None] = field(compare=False)
    cancelled: bool = field(compare=False, default=False)


class RngStream:
    """One independent random stream per stochastic source.

    The draw sequence depends only on (seed, stream_id), so adding a flow
    never perturbs another flow's draws.
    """

    def __init__(self, seed: int, stream_id: str):
        self.seed = seed
        self.stream_id = stream_id
        digest = hashlib.sha256(stream_id.encode("utf-8")).digest()
        sub = int.from_bytes(digest[:8], "little")
        self._rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, sub])

    def normal(self, mu: float, sigma: float) -> float:
        return float(self._rng.normal(mu, sigma))

    def uniform(self, lo: float, hi: float) -> float:
        return float(self._rng.uniform(lo, hi))

    def integers(self, lo: int, hi: int) -> int:
        return int(self._rng.integers(lo, hi))


class Engine:
    """Single-threaded event loop over a microsecond virtual clock."""

    def __init__(self, seed: int = 0, trace: bool = False):
        self.seed = seed
        self.now: int = 0
        self._heap: list[_QueueEntry] = []
        self._entries: dict[EventId, _QueueEntry] = {}
        self._next_ordinal: int = 0
        self._streams: dict[str, RngStream] = {}
        self.trace_enabled = trace
        self.trace: list[tuple[int, int, str]] = []

    # -- random streams ---------------------------------------------------

    def stream(self, stream_id: str) -> RngStream:
        if stream_id not in self._streams:
            self._streams[stream_id] = RngStream(self.seed, stream_id)
        return self._streams[stream_id]

    # -- scheduling --------------------------------------------------------

    def schedule(self, fire_at: int, action: Callable[[int], None],
                 label: str = "") -> EventId:
        """Queue `action` to run at `fire_at`; returns a run-unique id."""
        if fire_at < self.now:
            raise SchedulingError(
                f"cannot schedule at t={fire_at} before clock t={self.now}")
        entry = _QueueEntry(int(fire_at), self._next_ordinal, label, action)
        self._next_ordinal += 1
        heapq.heappush(self._heap, entry)
        self._entries[entry.ordinal] = entry
        return entry.ordinal

    def schedule_after(self, delay: int, action: Callable[[int], None],
                       label: str = "") -> EventId:
        return self.schedule(self.now + delay, action, label)

    def cancel(self, event_id: EventId) -> bool:
        """True iff the event existed and had not fired. Idempotent."""
        entry = self._entries.pop(event_id, None)
        if entry is None:
            return False
        entry.cancelled = True
        return True

    # -- execution ---------------------------------------------------------

    def run_until(self, t_end: int) -> int:
        """Execute every event with fire_at <= t_end; clock ends at t_end."""
        if t_end < self.now:
            raise SchedulingError(
                f"run_until({t_end}) behind clock t={self.now}")
        executed = 0
        heap = self._heap
        while heap and heap[0].fire_at <= t_end:
            entry = heapq.heappop(heap)
            if entry.cancelled:
                continue
            self._entries.pop(entry.ordinal, None)
            self.now = entry.fire_at
            if self.trace_enabled:
                self.trace.append((entry.fire_at, entry.ordinal, entry.label))
            entry.action(entry.fire_at)
            executed += 1
        self.now = t_end
        return executed

    def pending(self) -> int:
        return len(self._entries)

    def dump_trace(self) -> str:
        """Tab-separated `time_us ordinal action_label`, one line per event."""
        return "\n".join(f"{t}\t{o}\t{lbl}" for t, o, lbl in self.trace)


def write_trace(engine: Engine, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(engine.dump_trace())
        fh.write("\n")
