"""Edge conditioning and per-hop behaviour: SLA marking, token bucket, RED, strict priority."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional

from .engine import RngStream, SimTime
from .packets import Packet

# DSCP codepoints: EF is 46, AF(class i, drop precedence j) is 8i+2j, best effort 0.
EF = 46
BE = 0


def af(class_index: int, drop_precedence: int) -> int:
    return 8 * class_index + 2 * drop_precedence


AF11 = af(1, 1)
AF21 = af(2, 1)

# Strict-priority service order: EF, then AF classes 1..4, then best effort.
CLASS_EF = 0
CLASS_AF1 = 1
CLASS_AF2 = 2
CLASS_AF3 = 3
CLASS_AF4 = 4
CLASS_BE = 5
NUM_CLASSES = 6


def service_class(dscp: int) -> int:
    if dscp == EF:
        return CLASS_EF
    if 8 <= dscp <= 39 and dscp % 2 == 0:
        return CLASS_AF1 + (dscp // 8) - 1
    return CLASS_BE


def remark_out_of_profile(dscp: int) -> int:
    """Out-of-profile assured traffic moves to the next drop precedence."""
    if 8 <= dscp <= 39:
        i, j = dscp // 8, (dscp % 8) // 2
        return af(i, min(j + 1, 3))
    return dscp


IN_PROFILE = "in_profile"
OUT_OF_PROFILE = "out_of_profile"

ACCEPT = "accept"
DROP = "drop"


@dataclass(slots=True)
class TokenBucket:
    """Byte-count meter: rate in bits/second, depth and tokens in bytes."""

    rate_bps: int
    depth_bytes: float
    tokens: float = -1.0
    last_update: SimTime = 0

    def __post_init__(self) -> None:
        if self.tokens < 0:
            self.tokens = self.depth_bytes

    def meter(self, size_bytes: int, t: SimTime) -> str:
        elapsed = t - self.last_update
        self.tokens = min(self.depth_bytes, self.tokens + self.rate_bps * elapsed / 8e6)
        self.last_update = t
        if self.tokens >= size_bytes:
            self.tokens -= size_bytes
            return IN_PROFILE
        return OUT_OF_PROFILE


@dataclass
class SlaRule:
    """First-match flow rule: any unset selector is a wildcard."""

    dscp: int
    src: Optional[object] = None          # Address or Prefix
    dst: Optional[object] = None
    kind: Optional[str] = None            # "data" | "signal"
    meter_rate_bps: Optional[int] = None
    meter_depth_bytes: Optional[int] = None

    def matches(self, pkt: Packet) -> bool:
        if self.kind is not None and pkt.kind != self.kind:
            return False
        for selector, addr in ((self.src, pkt.src), (self.dst, pkt.dst)):
            if selector is None:
                continue
            if hasattr(selector, "matches"):
                if not selector.matches(addr):
                    return False
            elif selector != addr:
                return False
        return True


class SlaTable:
    """Ordered rule list with per-rule meters; unmatched traffic is best effort."""

    def __init__(self, rules: list[SlaRule]):
        self.rules = rules
        self._meters: dict[int, TokenBucket] = {}
        for i, rule in enumerate(rules):
            if rule.meter_rate_bps is not None:
                self._meters[i] = TokenBucket(rule.meter_rate_bps, rule.meter_depth_bytes or 2000)

    def classify_and_mark(self, pkt: Packet, t: SimTime) -> Packet:
        for i, rule in enumerate(self.rules):
            if not rule.matches(pkt):
                continue
            pkt.dscp = rule.dscp
            meter = self._meters.get(i)
            if meter is not None and meter.meter(pkt.size_bytes, t) == OUT_OF_PROFILE:
                pkt.dscp = remark_out_of_profile(rule.dscp)
            return pkt
        pkt.dscp = BE
        return pkt


@dataclass
class RedParams:
    min_th: int = 5
    max_th: int = 15
    max_p: float = 0.1
    w_q: float = 0.002
    capacity: int = 50


class RedQueue:
    """Random early detection on the instantaneous backlog EWMA."""

    def __init__(self, params: RedParams):
        self.params = params
        self.backlog: deque[Packet] = deque()
        self.avg = 0.0
        self.count_since_drop = 0

    def red_enqueue(self, pkt: Packet, rng: RngStream) -> str:
        p = self.params
        self.avg = (1.0 - p.w_q) * self.avg + p.w_q * len(self.backlog)
        if self.avg >= p.max_th or len(self.backlog) >= p.capacity:
            self.count_since_drop = 0
            return DROP
        if self.avg >= p.min_th:
            p_b = p.max_p * (self.avg - p.min_th) / (p.max_th - p.min_th)
            denom = 1.0 - self.count_since_drop * p_b
            p_a = 1.0 if denom <= 0 else p_b / denom
            if rng.uniform() < p_a:
                self.count_since_drop = 0
                return DROP
        self.count_since_drop += 1
        self.backlog.append(pkt)
        return ACCEPT

    def pop(self) -> Optional[Packet]:
        return self.backlog.popleft() if self.backlog else None

    def __len__(self) -> int:
        return len(self.backlog)


class FifoQueue:
    """Drop-tail FIFO; expedited forwarding gets no early drops."""

    def __init__(self, capacity: int = 50):
        self.capacity = capacity
        self.backlog: deque[Packet] = deque()

    def enqueue(self, pkt: Packet) -> str:
        if len(self.backlog) >= self.capacity:
            return DROP
        self.backlog.append(pkt)
        return ACCEPT

    def pop(self) -> Optional[Packet]:
        return self.backlog.popleft() if self.backlog else None

    def __len__(self) -> int:
        return len(self.backlog)


class PriorityScheduler:
    """Per-class queues served in strict priority, FIFO within a class."""

    def __init__(self, red_params: RedParams, ef_capacity: int = 50):
        self.queues: list[object] = [FifoQueue(ef_capacity)]
        self.queues += [RedQueue(red_params) for _ in range(NUM_CLASSES - 1)]
        self.drops_by_class = [0] * NUM_CLASSES

    def enqueue(self, pkt: Packet, rng: RngStream) -> str:
        cls = service_class(pkt.dscp)
        queue = self.queues[cls]
        if cls == CLASS_EF:
            verdict = queue.enqueue(pkt)
        else:
            verdict = queue.red_enqueue(pkt, rng)
        if verdict == DROP:
            self.drops_by_class[cls] += 1
        return verdict

    def dequeue(self) -> Optional[Packet]:
        for queue in self.queues:
            pkt = queue.pop()
            if pkt is not None:
                return pkt
        return None

    def backlog(self) -> int:
        return sum(len(q) for q in self.queues)
