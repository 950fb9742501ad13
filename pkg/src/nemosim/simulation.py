"""Builds a scenario into a live node graph and runs it to completion."""

from __future__ import annotations

from typing import Optional

from .diffserv import BE, EF, SlaTable
from .engine import (APP_START, APP_STOP, L2_LINK_DOWN, L2_TRIGGER,
                     TIMER_EXPIRY, Engine, SimEvent, SimTime)
from .metrics import MetricsCollector, build_report
from .network import Link, LinkQueue, build_l2_plan
from .nodes import (ArNode, BsNode, CnNode, DmrNode, HaNode, MapNode, MnnNode,
                    RouterNode)
from .packets import Address, Packet, SignalKind, encapsulate
from .packets import make_signal as new_signal
from .scenario import (BEACON_PHASE_US, MODE_PREDICTIVE, PROTO_DIFF_FH,
                       PROTO_DIFF_NEMO, ScenarioConfig, Topology, build_track,
                       default_sla_rules, default_topology)


class Simulation:
    """One scenario, one engine, one seeded run."""

    def __init__(self, config: ScenarioConfig, collect_trace: bool = False):
        config.validate()
        self.config = config
        self.trace: Optional[list[str]] = [] if collect_trace else None
        self.engine = Engine(seed=config.seed, trace=self.trace)
        self.metrics = MetricsCollector()
        self.topo: Topology = default_topology(config)
        self.track = build_track(config)
        self.dmr_attached: Optional[str] = None
        self.linkqueues: dict[tuple[str, str], LinkQueue] = {}
        self._sla_tables: dict[str, SlaTable] = {}
        self._drop_faults = list(config.faults.drop_first_signals)
        self._build()

    # -- construction ----------------------------------------------------------
    def _build(self) -> None:
        cfg = self.config
        self._build_links()
        self._build_routing()
        self.l2_plan = build_l2_plan(
            self.track, self.topo.cells, cfg.sim_end_us, cfg.lead_us,
            cfg.l2_switch_us, predictive=(cfg.mode == MODE_PREDICTIVE),
            force_reactive_at=frozenset(cfg.force_reactive_at))
        self._build_nodes()
        self._schedule_boot()

    def _build_links(self) -> None:
        cfg = self.config
        for link in self.topo.links:
            self._add_queue_pair(link, link.a, link.b)
        for bs in self.topo.bs_to_ar:
            air = Link(bs, "dmr", cfg.air_rate_bps, cfg.air_delay_us)
            self._add_queue(air, bs, f"dmr@{bs}")
            self._add_queue(air, "dmr", f"{bs}@air", src_key=("dmr", bs))
        local = Link("dmr", "mnn", 100_000_000, 1000)
        self._add_queue(local, "dmr", "mnn", src_key=("dmr", "mnn"))
        self._add_queue(local, "mnn", "dmr_local", src_key=("mnn", "dmr_local"))

    def _add_queue_pair(self, link, a: str, b: str) -> None:
        self._add_queue(link, a, b)
        self._add_queue(link, b, a)

    def _add_queue(self, link, src: str, dst: str, src_key=None) -> None:
        queue = LinkQueue(self.engine, link, src, dst, self.config.red, self.drop)
        self.linkqueues[src_key or (src, dst)] = queue

    def _build_routing(self) -> None:
        adjacency: dict[str, list[str]] = {}
        for link in self.topo.links:
            adjacency.setdefault(link.a, []).append(link.b)
            adjacency.setdefault(link.b, []).append(link.a)
        self._next_hop: dict[str, dict[str, str]] = {}
        for start in adjacency:
            table: dict[str, str] = {}
            frontier = [(nbr, nbr) for nbr in sorted(adjacency[start])]
            seen = {start}
            while frontier:
                nxt = []
                for node, first in frontier:
                    if node in seen:
                        continue
                    seen.add(node)
                    table[node] = first
                    for nbr in sorted(adjacency[node]):
                        if nbr not in seen:
                            nxt.append((nbr, first))
                frontier = nxt
            self._next_hop[start] = table

    def _build_nodes(self) -> None:
        cfg = self.config
        fh = cfg.protocol == PROTO_DIFF_FH
        qos = cfg.qos_enabled()
        self.nodes = {
            "cn": CnNode(self, "cn", with_agent=qos),
            "er": RouterNode(self, "er"),
            "ha": HaNode(self, "ha"),
            "map1": MapNode(self, "map1", with_agent=fh),
            "map2": MapNode(self, "map2", with_agent=fh),
            "mnn": MnnNode(self, "mnn"),
            "dmr": DmrNode(self, "dmr"),
        }
        for ar in self.topo.ar_prefix:
            self.nodes[ar] = ArNode(self, ar, with_nar=fh)
        for bs in self.topo.bs_to_ar:
            self.nodes[bs] = BsNode(self, bs)
        self.nodes["dmr"].proto = self._make_dmr_proto()

    def _make_dmr_proto(self):
        cfg = self.config
        topo = self.topo
        if cfg.protocol == PROTO_DIFF_FH:
            from .diff_fh import FhDmr
            return FhDmr(self, topo.hoa, topo.mnp, topo.addresses["ha"],
                         topo.addresses["cn"])
        from .nemo_bs import MrState
        state = MrState(hoa=topo.hoa, mnp=topo.mnp, ha=topo.addresses["ha"])
        if cfg.protocol == PROTO_DIFF_NEMO:
            from .diff_nemo import ProxyDmr
            return ProxyDmr(self, state, topo.addresses["cn"])
        from .nemo_bs import BaselineMr
        return BaselineMr(self, state)

    def _schedule_boot(self) -> None:
        cfg = self.config
        sched = self.engine.schedule
        sched(SimEvent(cfg.cbr.start_us, "cn", APP_START))
        sched(SimEvent(cfg.cbr.stop_us, "cn", APP_STOP))
        if cfg.background_load_bps > 0:
            for ar in self.topo.ar_prefix:
                sched(SimEvent(0, ar, APP_START))
        if cfg.beacon_interval_us > 0:
            for ar, phase in BEACON_PHASE_US.items():
                sched(SimEvent(phase, ar, TIMER_EXPIRY, ("beacon",)))
        for plan in self.l2_plan:
            if plan.kind == "trigger":
                sched(SimEvent(plan.at, "dmr", L2_TRIGGER, plan))
            elif plan.kind == "down":
                sched(SimEvent(plan.at, "dmr", L2_LINK_DOWN, plan))
            else:
                sched(SimEvent(plan.at, "dmr", TIMER_EXPIRY, ("l2_attach", plan)))

    # -- services used by nodes and agents ---------------------------------------
    @property
    def now(self) -> SimTime:
        return self.engine.now

    def timer(self, node_id: str, delay: SimTime, token) -> None:
        self.engine.schedule_in(delay, node_id, TIMER_EXPIRY, token)

    def owner_of(self, dst: Address) -> Optional[str]:
        topo = self.topo
        if topo.home_prefix.matches(dst) or topo.mnp.matches(dst):
            return "ha"
        if dst.domain == 0:
            return "cn" if dst == topo.addresses["cn"] else "er"
        for map_id, prefix in topo.map_prefix.items():
            if prefix.matches(dst):
                return map_id
        for ar_id, prefix in topo.ar_prefix.items():
            if prefix.matches(dst):
                return ar_id
        return None

    def forward(self, here: str, pkt: Packet) -> None:
        if here == "dmr":
            self.dmr_send(pkt)
            return
        owner = self.owner_of(pkt.dst)
        if owner is None:
            self.drop(pkt, f"unroutable@{here}")
            return
        if owner == here:
            # Site-local delivery: access routers hand down to their station.
            if here in self.topo.ar_prefix:
                self.linkqueues[(here, self.topo.bs_of_ar(here))].send(pkt)
            else:
                self.drop(pkt, f"undeliverable@{here}")
            return
        nxt = self._next_hop[here].get(owner)
        if nxt is None:
            self.drop(pkt, f"unroutable@{here}")
            return
        self.linkqueues[(here, nxt)].send(pkt)

    def send_via(self, here: str, neighbor: str, pkt: Packet) -> None:
        self.linkqueues[(here, neighbor)].send(pkt)

    def wireless_to_dmr(self, bs: str, pkt: Packet) -> None:
        self.linkqueues[(bs, f"dmr@{bs}")].send(pkt)

    def dmr_send(self, pkt: Packet) -> None:
        bs = self.dmr_attached
        if bs is None:
            self.drop(pkt, "dmr_detached")
            return
        self.linkqueues[("dmr", bs)].send(pkt)

    def send_to_mnn(self, pkt: Packet) -> None:
        self.linkqueues[("dmr", "mnn")].send(pkt)

    def drop(self, pkt: Packet, where: str) -> None:
        self.metrics.record_drop(pkt, self.now, where)

    # -- conditioning -------------------------------------------------------------
    def _sla_for(self, node_id: str) -> SlaTable:
        table = self._sla_tables.get(node_id)
        if table is None:
            table = SlaTable(default_sla_rules(self.topo))
            self._sla_tables[node_id] = table
        return table

    def condition_data(self, node_id: str, pkt: Packet) -> None:
        if not self.config.qos_enabled():
            pkt.dscp = BE
            return
        self._sla_for(node_id).classify_and_mark(pkt, self.now)

    def condition_signal(self, node_id: str, pkt: Packet) -> None:
        pkt.dscp = EF if self.config.qos_enabled() else BE

    def make_signal(self, kind: SignalKind, src: Address, dst: Address,
                    info: Optional[dict] = None, high_priority: bool = False) -> Packet:
        pkt = new_signal(kind, src, dst, self.now, info=info)
        self.condition_signal("", pkt)
        return pkt

    def send_signal(self, origin: str, kind: SignalKind, src: Address, dst: Address,
                    info: Optional[dict] = None, high_priority: bool = False,
                    encap_to: Optional[Address] = None,
                    encap_src: Optional[Address] = None) -> None:
        pkt = self.make_signal(kind, src, dst, info=info, high_priority=high_priority)
        if encap_to is not None:
            pkt = encapsulate(pkt, encap_src or src, encap_to, dscp=pkt.dscp)
        self.send_signal_packet(origin, pkt)

    def send_signal_packet(self, origin: str, pkt: Packet) -> None:
        inner = pkt.innermost()
        if inner.signal is not None and self._consume_drop_fault(inner.signal):
            self.metrics.signal_drops += 1
            return
        if origin == "dmr":
            self.dmr_send(pkt)
        else:
            self.forward(origin, pkt)

    def _consume_drop_fault(self, kind: SignalKind) -> bool:
        if kind.value in self._drop_faults:
            self._drop_faults.remove(kind.value)
            return True
        return False

    # -- fault queries -------------------------------------------------------------
    def dad_collides(self, handover: int, attempt: int) -> bool:
        return attempt == 0 and handover in self.config.faults.dad_collision_handovers

    def fna_collides(self, handover: int, attempt: int) -> bool:
        return attempt == 0 and handover in self.config.faults.fna_collision_handovers

    # -- run -------------------------------------------------------------------
    def run(self):
        self.engine.run_until(self.config.sim_end_us)
        bs_to_map = {bs: self.topo.ar_to_map[ar] for bs, ar in self.topo.bs_to_ar.items()}
        queue_drops = {f"{q.src}->{q.dst}": list(q.scheduler.drops_by_class)
                       for q in self.linkqueues.values()
                       if any(q.scheduler.drops_by_class)}
        return build_report(self.config, self.metrics, bs_to_map, queue_drops)
