"""Deterministic discrete-event core: global clock, ordered queue, seeded randomness."""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass
from typing import Callable, Optional

# Simulation time is integer microseconds since run start.  Integer time keeps
# event ordering exact across platforms; all configured delays are expressed
# in these units.
SimTime = int

US = 1
MS = 1_000
SEC = 1_000_000


class PastEvent(Exception):
    """An event was scheduled behind the engine clock."""


# Event payload kinds.
PACKET_ARRIVAL = "packet_arrival"
TIMER_EXPIRY = "timer_expiry"
L2_TRIGGER = "l2_trigger"
L2_LINK_DOWN = "l2_link_down"
APP_START = "app_start"
APP_STOP = "app_stop"


@dataclass(slots=True)
class SimEvent:
    fire_at: SimTime
    target: str
    kind: str
    payload: object = None
    insertion_seq: int = -1


class RngStream:
    """Seeded pseudo-random stream; identical seeds yield identical draw sequences."""

    def __init__(self, seed: int):
        self.seed = seed
        self._rng = random.Random(seed)

    def uniform(self) -> float:
        return self._rng.random()

    def randrange(self, n: int) -> int:
        return self._rng.randrange(n)


class Engine:
    """Single-threaded event engine.

    Events are processed in strict (fire_at, insertion_seq) order, so two
    events at the same instant pop in FIFO insertion order.  One seeded
    RngStream feeds every random decision in a run.
    """

    def __init__(self, seed: int = 0, trace: Optional[list[str]] = None):
        self.now: SimTime = 0
        self.rng = RngStream(seed)
        self.trace = trace
        self._heap: list[tuple[SimTime, int, SimEvent]] = []
        self._seq = 0
        self._handlers: dict[str, Callable[[SimEvent], None]] = {}

    def register(self, node_id: str, handler: Callable[[SimEvent], None]) -> None:
        self._handlers[node_id] = handler

    def schedule(self, event: SimEvent) -> None:
        if event.fire_at < self.now:
            raise PastEvent(f"fire_at {event.fire_at} < clock {self.now}")
        event.insertion_seq = self._seq
        self._seq += 1
        heapq.heappush(self._heap, (event.fire_at, event.insertion_seq, event))

    def schedule_in(self, delay: SimTime, target: str, kind: str, payload: object = None) -> None:
        self.schedule(SimEvent(self.now + delay, target, kind, payload))

    def pending(self) -> int:
        return len(self._heap)

    def run_until(self, end: SimTime) -> int:
        """Process every event with fire_at <= end; returns the count processed.

        Afterwards the clock sits at the last processed fire_at, or at `end`
        when nothing fired.
        """
        processed = 0
        while self._heap and self._heap[0][0] <= end:
            fire_at, _, event = heapq.heappop(self._heap)
            self.now = fire_at
            processed += 1
            if self.trace is not None:
                detail = trace_detail(event.payload)
                self.trace.append(f"{fire_at}\t{event.target}\t{event.kind}\t{detail}")
            handler = self._handlers.get(event.target)
            if handler is not None:
                handler(event)
        self.now = end if processed == 0 else min(end, self.now)
        return processed


def trace_detail(payload: object) -> str:
    if payload is None:
        return "-"
    render = getattr(payload, "trace_str", None)
    if render is not None:
        return render()
    return str(payload)
