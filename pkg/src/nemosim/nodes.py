"""Node behaviours: routers, base stations, access routers, anchors, endpoints."""

from __future__ import annotations

from .engine import (APP_START, APP_STOP, L2_LINK_DOWN, L2_TRIGGER,
                     PACKET_ARRIVAL, TIMER_EXPIRY, SimEvent)
from .metrics import FLOW_BG, FLOW_CBR
from .packets import DATA, SIGNAL, Packet, SignalKind, apply_home_address_option


class Node:
    def __init__(self, sim, node_id: str):
        self.sim = sim
        self.node_id = node_id
        self.address = sim.topo.addresses.get(node_id)
        sim.engine.register(node_id, self.dispatch)

    def dispatch(self, ev: SimEvent) -> None:
        if ev.kind == PACKET_ARRIVAL:
            pkt: Packet = ev.payload
            log = pkt.innermost().path_log
            if log is not None:
                log.append(self.node_id)
            self.on_packet(pkt)
        elif ev.kind == TIMER_EXPIRY:
            self.on_timer(ev.payload)
        elif ev.kind in (APP_START, APP_STOP):
            self.on_app(ev)

    def on_packet(self, pkt: Packet) -> None:
        self.sim.forward(self.node_id, pkt)

    def on_timer(self, token) -> None:
        pass

    def on_app(self, ev: SimEvent) -> None:
        pass


class RouterNode(Node):
    """Plain wired router; consumes packets addressed to itself."""

    def on_packet(self, pkt: Packet) -> None:
        if pkt.dst == self.address:
            return
        self.sim.forward(self.node_id, pkt)


class HaNode(Node):
    """Home agent: binding cache, interception, reverse-tunnel endpoint."""

    def __init__(self, sim, node_id: str):
        super().__init__(sim, node_id)
        from .nemo_bs import HomeAgent
        self.agent = HomeAgent(sim, node_id, self.address)

    def on_packet(self, pkt: Packet) -> None:
        if pkt.dst == self.address:
            if pkt.inner is not None:
                self.agent.handle_tunneled(pkt)
            elif pkt.signal == SignalKind.BU:
                self.agent.handle_binding_update(pkt)
            return
        topo = self.sim.topo
        if topo.home_prefix.matches(pkt.dst) or topo.mnp.matches(pkt.dst):
            self.agent.intercept(pkt)
            return
        self.sim.forward(self.node_id, pkt)


class MapNode(Node):
    """Anchor point; regional bindings and fast-handover forwarding when the
    scheme uses them, a plain router otherwise."""

    def __init__(self, sim, node_id: str, with_agent: bool):
        super().__init__(sim, node_id)
        self.agent = None
        if with_agent:
            from .diff_fh import MapAgent
            self.agent = MapAgent(sim, node_id, self.address)

    def on_packet(self, pkt: Packet) -> None:
        if pkt.dst == self.address:
            if self.agent is None or pkt.signal is None:
                return
            sig = pkt.signal
            if sig == SignalKind.FBU:
                self.agent.on_fbu(pkt)
            elif sig == SignalKind.HACK:
                self.agent.on_hack(pkt)
            elif sig == SignalKind.LBU:
                self.agent.on_lbu(pkt)
            elif sig == SignalKind.HI:
                self.agent.on_hi_as_new_map(pkt)
            return
        if self.agent is not None and self.agent.route_hook(pkt):
            return
        self.sim.forward(self.node_id, pkt)

    def on_timer(self, token) -> None:
        if self.agent is not None:
            self.agent.on_timer(token)


class ArNode(Node):
    """Access router: advertisements, proxied discovery, fast-handover duties,
    and the optional best-effort background source on its downlink."""

    def __init__(self, sim, node_id: str, with_nar: bool):
        super().__init__(sim, node_id)
        self.bs_id = sim.topo.bs_of_ar(node_id)
        self.prefix = sim.topo.ar_prefix[node_id]
        self.map_id = sim.topo.ar_to_map[node_id]
        self.nar = None
        if with_nar:
            from .diff_fh import NarAgent
            self.nar = NarAgent(sim, node_id, self.address)
        self._bg_seq = 0

    # -- control -------------------------------------------------------------
    def ra_info(self) -> dict:
        return {"prefix": self.prefix, "map_id": self.map_id,
                "map_prefix": self.sim.topo.map_prefix[self.map_id]}

    def send_ra(self, dst) -> None:
        ra = self.sim.make_signal(SignalKind.RA, self.address, dst, info=self.ra_info())
        self.sim.send_via(self.node_id, self.bs_id, ra)

    def on_packet(self, pkt: Packet) -> None:
        if pkt.dst == self.address:
            sig = pkt.signal
            if sig == SignalKind.RS:
                self.send_ra(pkt.src)
            elif sig == SignalKind.RT_SOL_PR:
                self._proxy_advertisement(pkt)
            elif sig == SignalKind.NS:
                self._dad_check(pkt)
            elif sig == SignalKind.HI and self.nar is not None:
                self.nar.on_hi(pkt)
            elif sig == SignalKind.FNA and self.nar is not None:
                self.nar.on_fna(pkt)
            return
        if self.nar is not None and self.nar.intercept(pkt):
            return
        self.sim.forward(self.node_id, pkt)

    def _proxy_advertisement(self, pkt: Packet) -> None:
        target_bs = pkt.info["target_bs"]
        nar = self.sim.topo.bs_to_ar[target_bs]
        nar_map = self.sim.topo.ar_to_map[nar]
        adv = self.sim.make_signal(
            SignalKind.PR_RT_ADV, self.address, pkt.src,
            info={"nar": nar, "nar_prefix": self.sim.topo.ar_prefix[nar],
                  "nar_map": nar_map,
                  "nar_map_prefix": self.sim.topo.map_prefix[nar_map],
                  "qos_profile": "default-sla"})
        self.sim.send_via(self.node_id, self.bs_id, adv)

    def _dad_check(self, pkt: Packet) -> None:
        info = pkt.info or {}
        if self.sim.dad_collides(info.get("handover", -1), info.get("attempt", 0)):
            na = self.sim.make_signal(SignalKind.NA, self.address, pkt.src, info={})
            self.sim.send_via(self.node_id, self.bs_id, na)

    def on_timer(self, token) -> None:
        name = token[0]
        if name == "beacon":
            if self.sim.dmr_attached == self.bs_id:
                self.send_ra(self.sim.topo.addresses["dmr"])
            self.sim.timer(self.node_id, self.sim.config.beacon_interval_us, ("beacon",))
        elif name == "bg":
            self._bg_tick()
        elif self.nar is not None:
            self.nar.on_timer(token)

    # -- background load -------------------------------------------------------
    def _bg_tick(self) -> None:
        cfg = self.sim.config
        pkt = Packet(src=self.address, dst=self.sim.topo.addresses[self.bs_id],
                     size_bytes=cfg.bg_packet_bytes, kind=DATA, seq=self._bg_seq,
                     flow=FLOW_BG, created_at=self.sim.now)
        self._bg_seq += 1
        self.sim.linkqueues[(self.node_id, self.bs_id)].send(pkt)
        interval = round(cfg.bg_packet_bytes * 8 * 1_000_000 / cfg.background_load_bps)
        self.sim.timer(self.node_id, interval, ("bg",))

    def on_app(self, ev: SimEvent) -> None:
        if ev.kind == APP_START and self.sim.config.background_load_bps > 0:
            self._bg_tick()


class BsNode(Node):
    """Base station: layer-2 relay between its wired uplink and the air link."""

    def __init__(self, sim, node_id: str):
        super().__init__(sim, node_id)
        self.bg_received = 0
        sim.engine.register(f"{node_id}@air", self.dispatch_air)

    def on_packet(self, pkt: Packet) -> None:
        if pkt.dst == self.address:
            if pkt.innermost().flow == FLOW_BG:
                self.bg_received += 1
            return
        if self.sim.dmr_attached == self.node_id:
            self.sim.wireless_to_dmr(self.node_id, pkt)
        else:
            self.sim.drop(pkt, f"detached@{self.node_id}")

    def dispatch_air(self, ev: SimEvent) -> None:
        pkt: Packet = ev.payload
        if self.sim.dmr_attached != self.node_id:
            self.sim.drop(pkt, f"air_lost@{self.node_id}")
            return
        log = pkt.innermost().path_log
        if log is not None:
            log.append(self.node_id)
        self.sim.forward(self.node_id, pkt)


class CnNode(Node):
    """Correspondent: constant-bit-rate source plus, for the QoS schemes, the
    binding cache and return-routability responder."""

    def __init__(self, sim, node_id: str, with_agent: bool):
        super().__init__(sim, node_id)
        self.agent = None
        if with_agent:
            from .diff_nemo import CorrespondentAgent
            self.agent = CorrespondentAgent(sim, node_id, self.address)
        self.seq = 0
        self.upstream_received: list[Packet] = []

    def on_packet(self, pkt: Packet) -> None:
        if pkt.dst != self.address:
            self.sim.forward(self.node_id, pkt)
            return
        if pkt.kind == SIGNAL and self.agent is not None:
            sig = pkt.signal
            if sig == SignalKind.HOTI:
                self.agent.on_hoti(pkt)
            elif sig == SignalKind.COTI:
                self.agent.on_coti(pkt)
            elif sig == SignalKind.BU:
                self.agent.on_binding_update(pkt)
            return
        if pkt.kind == DATA:
            if pkt.home_addr_option is not None:
                pkt = apply_home_address_option(pkt)
            self.upstream_received.append(pkt)

    def on_app(self, ev: SimEvent) -> None:
        if ev.kind == APP_START:
            self._cbr_tick()

    def on_timer(self, token) -> None:
        if token[0] == "cbr":
            self._cbr_tick()

    def _cbr_tick(self) -> None:
        cbr = self.sim.config.cbr
        if self.sim.now >= cbr.stop_us:
            return
        mnn = self.sim.topo.mnn_addr
        pkt = Packet(src=self.address, dst=mnn, size_bytes=cbr.packet_bytes,
                     kind=DATA, seq=self.seq, flow=FLOW_CBR,
                     created_at=self.sim.now, path_log=[self.node_id])
        binding = self.agent.binding_for(mnn) if self.agent is not None else None
        if binding is not None:
            pkt.dst = binding.coa
            pkt.rh2_home_addr = mnn
        self.seq += 1
        self.sim.metrics.record_sent(pkt)
        self.sim.condition_data(self.node_id, pkt)
        self.sim.forward(self.node_id, pkt)
        if self.sim.now + cbr.interval_us < cbr.stop_us:
            self.sim.timer(self.node_id, cbr.interval_us, ("cbr",))


class MnnNode(Node):
    """Fixed node behind the mobile router; the sink of the measured flow."""

    def on_packet(self, pkt: Packet) -> None:
        if pkt.kind == DATA and pkt.flow == FLOW_CBR:
            self.sim.metrics.record_delivery(pkt, self.sim.now)

    def send_to_cn(self, size_bytes: int = 1000, seq: int = 0) -> None:
        """Inject one upstream datagram toward the correspondent."""
        pkt = Packet(src=self.address, dst=self.sim.topo.addresses["cn"],
                     size_bytes=size_bytes, kind=DATA, seq=seq, flow="up",
                     created_at=self.sim.now, path_log=[self.node_id])
        self.sim.linkqueues[("mnn", "dmr_local")].send(pkt)


class DmrNode(Node):
    """Mobile router chassis: attachment bookkeeping plus the active scheme."""

    def __init__(self, sim, node_id: str):
        super().__init__(sim, node_id)
        self.proto = None
        for bs in sim.topo.bs_to_ar:
            sim.engine.register(f"dmr@{bs}", self._air_dispatcher(bs))
        sim.engine.register("dmr_local", self.dispatch_local)

    def _air_dispatcher(self, bs: str):
        def handler(ev: SimEvent) -> None:
            pkt: Packet = ev.payload
            if self.sim.dmr_attached != bs:
                self.sim.drop(pkt, f"air_lost@{bs}")
                return
            log = pkt.innermost().path_log
            if log is not None:
                log.append("dmr")
            self.proto.on_packet(pkt)
        return handler

    def dispatch_local(self, ev: SimEvent) -> None:
        # Traffic from the mobile network side.
        if ev.kind == PACKET_ARRIVAL:
            self.proto.on_upstream(ev.payload)

    def dispatch(self, ev: SimEvent) -> None:
        if ev.kind == L2_TRIGGER:
            self.proto.on_l2_trigger(ev.payload)
        elif ev.kind == L2_LINK_DOWN:
            self.sim.dmr_attached = None
            self.proto.on_link_down(ev.payload)
        elif ev.kind == TIMER_EXPIRY and ev.payload[0] == "l2_attach":
            plan = ev.payload[1]
            self.sim.dmr_attached = plan.bs
            self.proto.on_link_up(plan.bs)
        else:
            super().dispatch(ev)

    def on_timer(self, token) -> None:
        self.proto.on_timer(token)

    def on_packet(self, pkt: Packet) -> None:
        self.proto.on_packet(pkt)
