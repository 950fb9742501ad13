"""Per-run counters, delivery records, and the derived performance metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .engine import SimTime
from .packets import Packet

FLOW_CBR = "cbr"
FLOW_BG = "bg"

MICRO = "micro"
MACRO = "macro"


@dataclass(slots=True)
class Delivery:
    seq: int
    created_at: SimTime
    delivered_at: SimTime
    serving_bs: Optional[str]
    src: object
    dst: object
    path: tuple

    @property
    def delay_us(self) -> SimTime:
        return self.delivered_at - self.created_at


@dataclass(slots=True)
class Drop:
    seq: int
    at: SimTime
    where: str


class MetricsCollector:
    """Counts the foreground flow; background and signalling are tallied aside."""

    def __init__(self) -> None:
        self.sent = 0
        self.deliveries: list[Delivery] = []
        self.drops: list[Drop] = []
        self.signal_drops = 0
        self.bg_drops = 0
        self.bg_delivered = 0
        self.rejected_bindings = 0
        self.unexpected_signals = 0
        self.nar_buffer_drops = 0

    def record_sent(self, pkt: Packet) -> None:
        if pkt.flow == FLOW_CBR:
            self.sent += 1

    def record_delivery(self, pkt: Packet, t: SimTime) -> None:
        path = tuple(pkt.path_log) if pkt.path_log else ()
        serving = None
        for node in reversed(path):
            if node.startswith("bs"):
                serving = node
                break
        self.deliveries.append(Delivery(pkt.seq, pkt.created_at, t, serving,
                                        pkt.src, pkt.dst, path))

    def record_drop(self, pkt: Packet, t: SimTime, where: str) -> None:
        inner = pkt.innermost()
        if inner.flow == FLOW_CBR:
            self.drops.append(Drop(inner.seq, t, where))
        elif inner.flow == FLOW_BG:
            self.bg_drops += 1
        else:
            self.signal_drops += 1

    @property
    def delivered(self) -> int:
        return len(self.deliveries)

    @property
    def dropped(self) -> int:
        return len(self.drops)


def compute_loss(metrics: MetricsCollector) -> float:
    """Dropped share of the foreground flow, in percent."""
    if metrics.sent == 0:
        return 0.0
    return 100.0 * metrics.dropped / metrics.sent


def compute_forwarding_rate(metrics: MetricsCollector) -> float:
    if metrics.sent == 0:
        return 100.0
    return 100.0 * metrics.delivered / metrics.sent


def compute_handover_latency(deliveries: list[Delivery],
                             bs_to_map: Optional[dict[str, str]] = None
                             ) -> list[tuple[SimTime, str]]:
    """Delivery gap around each serving base-station change.

    For each change of serving base station in the delivery sequence the
    latency is the arrival time of the first packet via the new station minus
    the arrival time of the last packet via the old one.  Each gap is labelled
    micro or macro by whether the two stations hang off the same anchor point.
    """
    gaps: list[tuple[SimTime, str]] = []
    last_bs: Optional[str] = None
    last_t: SimTime = 0
    for d in deliveries:
        if d.serving_bs is None:
            continue
        if last_bs is not None and d.serving_bs != last_bs:
            kind = MICRO
            if bs_to_map is not None:
                if bs_to_map.get(last_bs) != bs_to_map.get(d.serving_bs):
                    kind = MACRO
            gaps.append((d.delivered_at - last_t, kind))
        last_bs = d.serving_bs
        last_t = d.delivered_at
    return gaps


@dataclass
class MetricsReport:
    protocol: str
    mode: str
    speed_kmh: float
    seed: int
    sent: int
    delivered: int
    dropped: int
    loss_pct: float
    forwarding_rate_pct: float
    handover_latencies_us: list[int]
    handover_kinds: list[str]
    delay_mean_us: float
    per_packet_delay: list[tuple[int, int, int]]   # (seq, delivered_at, delay)
    per_packet_path: list[tuple]
    drops_detail: list[Drop]
    in_flight_at_end: int
    queue_drops: dict = None   # per egress queue, drop count per service class

    @property
    def ho_latency_mean_us(self) -> float:
        if not self.handover_latencies_us:
            return 0.0
        return sum(self.handover_latencies_us) / len(self.handover_latencies_us)

    @property
    def ho_latency_max_us(self) -> int:
        return max(self.handover_latencies_us, default=0)

    def latency_mean_by_kind(self, kind: str) -> float:
        vals = [lat for lat, k in zip(self.handover_latencies_us, self.handover_kinds)
                if k == kind]
        if not vals:
            return 0.0
        return sum(vals) / len(vals)

    def csv_row(self) -> str:
        return ",".join([
            self.protocol,
            self.mode,
            f"{self.speed_kmh:g}",
            str(self.seed),
            str(self.sent),
            str(self.delivered),
            str(self.dropped),
            f"{self.loss_pct:.3f}",
            f"{self.forwarding_rate_pct:.3f}",
            f"{self.ho_latency_mean_us / 1000.0:.3f}",
            f"{self.ho_latency_max_us / 1000.0:.3f}",
            f"{self.delay_mean_us / 1000.0:.3f}",
        ])


CSV_HEADER = ("protocol,mode,speed_kmh,seed,sent,delivered,dropped,"
              "loss_pct,fwd_rate_pct,ho_latency_mean_ms,ho_latency_max_ms,delay_mean_ms")


def build_report(config, metrics: MetricsCollector,
                 bs_to_map: Optional[dict[str, str]] = None,
                 queue_drops: Optional[dict] = None) -> MetricsReport:
    gaps = compute_handover_latency(metrics.deliveries, bs_to_map)
    delays = [d.delay_us for d in metrics.deliveries]
    return MetricsReport(
        protocol=config.protocol,
        mode=config.mode,
        speed_kmh=config.dmr_speed_kmh,
        seed=config.seed,
        sent=metrics.sent,
        delivered=metrics.delivered,
        dropped=metrics.dropped,
        loss_pct=compute_loss(metrics),
        forwarding_rate_pct=compute_forwarding_rate(metrics),
        handover_latencies_us=[g for g, _ in gaps],
        handover_kinds=[k for _, k in gaps],
        delay_mean_us=(sum(delays) / len(delays)) if delays else 0.0,
        per_packet_delay=[(d.seq, d.delivered_at, d.delay_us) for d in metrics.deliveries],
        per_packet_path=[d.path for d in metrics.deliveries],
        drops_detail=list(metrics.drops),
        in_flight_at_end=metrics.sent - metrics.delivered - len(metrics.drops),
        queue_drops=queue_drops or {},
    )
