"""NEMO basic support: home-agent interception and the baseline mobile router.

All mobile-network traffic rides a bidirectional tunnel between the mobile
router and its home agent; handovers re-register the care-of address with a
plain binding update after movement detection and duplicate address detection.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .engine import SimTime
from .packets import (Address, Packet, Prefix, SignalKind, decapsulate,
                      encapsulate)


@dataclass
class BindingCacheEntry:
    hoa: Address
    coa: Address
    mnps: list[Prefix]
    expires_at: SimTime

    def live(self, t: SimTime) -> bool:
        return t < self.expires_at

    def covers(self, dst: Address) -> bool:
        return dst == self.hoa or any(p.matches(dst) for p in self.mnps)


class HomeAgent:
    """Binding cache plus interception of traffic for the mobile network."""

    def __init__(self, sim, node_id: str, address: Address):
        self.sim = sim
        self.node_id = node_id
        self.address = address
        self.cache: dict[Address, BindingCacheEntry] = {}

    def handle_binding_update(self, pkt: Packet) -> None:
        info = pkt.info
        hoa, coa = info["hoa"], info["coa"]
        self.cache[hoa] = BindingCacheEntry(
            hoa=hoa, coa=coa, mnps=list(info["mnps"]),
            expires_at=self.sim.now + info.get("lifetime", self.sim.config.binding_lifetime_us))
        self.sim.send_signal(self.node_id, SignalKind.BA, self.address, coa,
                             info={"hoa": hoa, "coa": coa})

    def lookup(self, dst: Address) -> Optional[BindingCacheEntry]:
        for entry in self.cache.values():
            if entry.covers(dst) and entry.live(self.sim.now):
                return entry
        return None

    def intercept(self, pkt: Packet) -> None:
        """Tunnel home-network traffic to the registered care-of address."""
        entry = self.lookup(pkt.dst)
        if entry is None:
            self.sim.drop(pkt, f"no_binding@{self.node_id}")
            return
        outer = encapsulate(pkt, self.address, entry.coa, dscp=pkt.dscp)
        self.sim.forward(self.node_id, outer)

    def handle_tunneled(self, pkt: Packet) -> None:
        """Reverse-tunnel endpoint: unwrap and route the original datagram."""
        inner = decapsulate(pkt)
        self.sim.forward(self.node_id, inner)


@dataclass
class MrState:
    hoa: Address
    mnp: Prefix
    ha: Address
    coa: Optional[Address] = None
    current_prefix: Optional[Prefix] = None
    attached_bs: Optional[str] = None
    dad_pending: bool = False
    registered: bool = False
    node_component: int = 100
    epoch: int = 0


class BaselineMr:
    """Baseline mobile-router protocol: RA-driven movement detection, DAD,
    binding update to the home agent, and tunnel endpoint duties."""

    def __init__(self, sim, state: MrState):
        self.sim = sim
        self.state = state
        self.handover_count = 0
        self.dad_attempt = 0
        self._dad_prefix: Optional[Prefix] = None

    # -- layer 2 -----------------------------------------------------------
    def on_link_up(self, bs: str) -> None:
        self.state.attached_bs = bs
        if self.sim.config.solicited_detection():
            ar = self.sim.topo.bs_to_ar[bs]
            self.sim.send_signal("dmr", SignalKind.RS, self.current_address(),
                                 self.sim.topo.addresses[ar])

    def on_link_down(self, plan=None) -> None:
        self.state.attached_bs = None

    def on_l2_trigger(self, plan) -> None:
        pass

    # -- movement detection / registration ----------------------------------
    def on_router_advertisement(self, pkt: Packet) -> None:
        prefix: Prefix = pkt.info["prefix"]
        if self.state.dad_pending:
            if prefix == self._dad_prefix:
                return
        elif prefix == self.state.current_prefix:
            return
        if self.state.current_prefix is not None and prefix != self.state.current_prefix:
            self.handover_count += 1
        self.dad_attempt = 0
        self.start_dad(prefix)

    def start_dad(self, prefix: Prefix) -> None:
        self.state.dad_pending = True
        self._dad_prefix = prefix
        self.state.epoch += 1
        tentative = prefix.address(self.state.node_component)
        ar = self.sim.topo.bs_to_ar[self.state.attached_bs]
        self.sim.send_signal("dmr", SignalKind.NS, tentative, self.sim.topo.addresses[ar],
                             info={"tentative": tentative, "handover": self.handover_count,
                                   "attempt": self.dad_attempt})
        self.sim.timer("dmr", self.sim.config.dad_delay_us,
                       ("dad_done", self.state.epoch, prefix))

    def on_neighbor_advertisement(self, pkt: Packet) -> None:
        # Tentative address in use: retry with the next node component.
        if not self.state.dad_pending:
            return
        self.dad_attempt += 1
        self.state.node_component += 1
        self.start_dad(self._dad_prefix)

    def on_timer(self, token) -> None:
        name = token[0]
        if name == "dad_done":
            _, epoch, prefix = token
            if epoch != self.state.epoch or not self.state.dad_pending:
                return
            self.state.dad_pending = False
            self.state.coa = prefix.address(self.state.node_component)
            self.state.current_prefix = prefix
            self.dad_attempt = 0
            self.send_binding_update()
        elif name == "bu_refresh":
            if token[1] == self.state.epoch and self.state.coa is not None:
                self.send_binding_update()

    def send_binding_update(self) -> None:
        st = self.state
        self.sim.send_signal("dmr", SignalKind.BU, st.coa, st.ha,
                             info={"hoa": st.hoa, "coa": st.coa, "mnps": [st.mnp],
                                   "lifetime": self.sim.config.binding_lifetime_us},
                             high_priority=True)
        self.sim.timer("dmr", self.sim.config.binding_refresh_us,
                       ("bu_refresh", st.epoch))

    # -- packets -------------------------------------------------------------
    def on_packet(self, pkt: Packet) -> None:
        if pkt.inner is not None and pkt.dst == self.state.coa:
            self.deliver_downstream(decapsulate(pkt))
            return
        if pkt.kind == "signal":
            self.on_signal(pkt)
            return
        self.sim.drop(pkt, "dmr_unhandled")

    def on_signal(self, pkt: Packet) -> None:
        if pkt.signal == SignalKind.RA:
            self.on_router_advertisement(pkt)
        elif pkt.signal == SignalKind.NA:
            self.on_neighbor_advertisement(pkt)
        elif pkt.signal == SignalKind.BA:
            self.state.registered = True

    def deliver_downstream(self, pkt: Packet) -> None:
        if pkt.inner is not None:
            pkt = decapsulate(pkt)
        if pkt.kind == "signal":
            self.on_signal(pkt)
        elif self.state.mnp.matches(pkt.dst) and pkt.dst != self.state.hoa:
            self.sim.send_to_mnn(pkt)
        else:
            self.sim.drop(pkt, "dmr_not_for_mnn")

    def on_upstream(self, pkt: Packet) -> None:
        """Traffic from a mobile network node, reverse-tunneled home."""
        if not self.state.registered or self.state.coa is None:
            self.sim.drop(pkt, "mr_not_registered")
            return
        outer = encapsulate(pkt, self.state.coa, self.state.ha, dscp=pkt.dscp)
        self.sim.dmr_send(outer)

    def current_address(self) -> Address:
        return self.state.coa if self.state.coa is not None else self.state.hoa
