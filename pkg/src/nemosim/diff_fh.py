"""Fast hierarchical scheme: anchor-point local bindings, anticipatory address
configuration, forwarding tunnels into the new access router, and buffering
there until the mobile router announces itself on the new link.

The signal choreography lives in the pure machines of `fsm`; the classes here
interpret emitted actions against the topology and keep the mutable state
(bindings, buffers, pending addresses)."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

from . import fsm
from .engine import SimTime
from .fsm import (DmrState, FsmEvent, MapState, NarState, NewMapState,
                  fsm_step, reg_step)
from .packets import (SIGNAL, Address, Packet, Prefix, SignalKind,
                      apply_type2_routing, decapsulate, encapsulate)


@dataclass
class MapBinding:
    rcoa: Address
    lcoa: Address
    mnp: Prefix
    expires_at: SimTime

    def live(self, t: SimTime) -> bool:
        return t < self.expires_at


@dataclass
class FhHandoverCtx:
    """Per-handover context shared between the machine and its interpreter."""

    handover_index: int
    old_bs: Optional[str] = None
    new_bs: Optional[str] = None
    nar: Optional[str] = None
    old_map: Optional[str] = None
    new_map: Optional[str] = None
    macro: bool = False
    plcoa: Optional[Address] = None
    nlcoa: Optional[Address] = None
    nrcoa: Optional[Address] = None
    fbu_sent: bool = False
    fback_received: bool = False
    fna_attempt: int = 0


class MapAgent:
    """Anchor point: regional bindings plus the forwarding side of a fast handover."""

    def __init__(self, sim, node_id: str, address: Address):
        self.sim = sim
        self.node_id = node_id
        self.address = address
        self.bindings: dict[Address, MapBinding] = {}
        self.divert: dict[Address, tuple[Address, str]] = {}   # plcoa -> (nlcoa, nar)
        self.fh_state: MapState = MapState.IDLE
        self.fh_ctx: Optional[dict] = None
        self.newmap_state: NewMapState = NewMapState.IDLE
        self.newmap_pending: Optional[dict] = None

    # -- signals -------------------------------------------------------------
    def on_fbu(self, pkt: Packet) -> None:
        info = pkt.info
        kind = fsm.EV_FBU_VIA_NAR if info.get("relayed_by_nar") else fsm.EV_FBU
        if self.fh_ctx is None or self.fh_ctx["nlcoa"] != info["nlcoa"]:
            self.fh_ctx = {"plcoa": info["plcoa"], "nlcoa": info["nlcoa"],
                           "nar": info["nar"], "macro": info["macro"],
                           "new_map": info.get("new_map"),
                           "nrcoa": info.get("nrcoa")}
            self.fh_state = MapState.IDLE
        self._step(FsmEvent(kind, macro=self.fh_ctx["macro"]))

    def on_hack(self, pkt: Packet) -> None:
        src = pkt.info.get("from_role", "nar")
        kind = fsm.EV_HACK_NAR if src == "nar" else fsm.EV_HACK_NEW_MAP
        self._step(FsmEvent(kind, macro=self.fh_ctx["macro"] if self.fh_ctx else False))

    def on_lbu(self, pkt: Packet) -> None:
        info = pkt.info
        if info.get("teardown"):
            self.bindings.pop(info["old_rcoa"], None)
            self._step(FsmEvent(fsm.EV_LBU_CUT, relayed=True))
            return
        self.bindings[info["rcoa"]] = MapBinding(
            rcoa=info["rcoa"], lcoa=info["lcoa"], mnp=info["mnp"],
            expires_at=self.sim.now + self.sim.config.binding_lifetime_us)
        self.sim.send_signal(self.node_id, SignalKind.LBACK, self.address,
                             info["lcoa"], info={"rcoa": info["rcoa"]})
        old_map = info.get("old_map")
        if old_map and old_map != self.node_id:
            # Registration with a new anchor tears the forwarding tunnel at
            # the previous one.
            self.sim.send_signal(self.node_id, SignalKind.LBU, self.address,
                                 self.sim.topo.addresses[old_map],
                                 info={"teardown": True, "old_rcoa": info["old_rcoa"]},
                                 high_priority=True)
        elif self.fh_ctx is not None:
            self._step(FsmEvent(fsm.EV_LBU_CUT))

    def on_hi_as_new_map(self, pkt: Packet) -> None:
        self.newmap_pending = dict(pkt.info)
        self.newmap_state, actions = fsm_step(fsm.ROLE_NEW_MAP, self.newmap_state,
                                              FsmEvent(fsm.EV_HI, macro=True))
        for action in actions:
            if isinstance(action, fsm.StartTimer):
                self.sim.timer(self.node_id, self.sim.config.dad_rcoa_us, ("rcoa_dad",))

    def on_timer(self, token) -> None:
        if token[0] == "rcoa_dad":
            self.newmap_state, actions = fsm_step(fsm.ROLE_NEW_MAP, self.newmap_state,
                                                  FsmEvent(fsm.EV_DAD_OK))
            info = self.newmap_pending or {}
            for action in actions:
                if isinstance(action, fsm.Emit) and action.signal == SignalKind.HACK:
                    dest = info.get("old_map") if action.dest == fsm.DEST_OLD_MAP else info.get("nar")
                    if dest:
                        self.sim.send_signal(self.node_id, SignalKind.HACK, self.address,
                                             self.sim.topo.addresses[dest],
                                             info={"from_role": "new_map"})
            self.newmap_state = NewMapState.IDLE
            self.newmap_pending = None

    def _step(self, event: FsmEvent) -> None:
        self.fh_state, actions = fsm_step(fsm.ROLE_MAP, self.fh_state, event)
        ctx = self.fh_ctx
        for action in actions:
            if isinstance(action, fsm.Do) and action.op == "install_forwarding" and ctx:
                self.divert[ctx["plcoa"]] = (ctx["nlcoa"], ctx["nar"])
            elif isinstance(action, fsm.Do) and action.op == "remove_forwarding" and ctx:
                self.divert.pop(ctx["plcoa"], None)
                self.fh_ctx = None
                self.fh_state = MapState.IDLE
            elif isinstance(action, fsm.Emit) and action.signal == SignalKind.HI and ctx:
                self.sim.send_signal(self.node_id, SignalKind.HI, self.address,
                                     self.sim.topo.addresses[ctx["nar"]],
                                     info={"plcoa": ctx["plcoa"], "nlcoa": ctx["nlcoa"],
                                           "macro": ctx["macro"], "old_map": self.node_id,
                                           "new_map": ctx.get("new_map"),
                                           "nar": ctx["nar"]})
            elif isinstance(action, fsm.Emit) and action.signal == SignalKind.FBACK and ctx:
                # Acknowledge over both the previous and the prospective path.
                self.sim.send_signal(self.node_id, SignalKind.FBACK, self.address,
                                     ctx["plcoa"], info={"nlcoa": ctx["nlcoa"]})
                self.sim.send_signal(self.node_id, SignalKind.FBACK, self.address,
                                     ctx["nlcoa"], info={"nlcoa": ctx["nlcoa"]})
            elif isinstance(action, fsm.Unexpected):
                self.sim.metrics.unexpected_signals += 1

    # -- data plane ----------------------------------------------------------
    def route_hook(self, pkt: Packet) -> bool:
        """Divert or re-tunnel regional traffic; True when the packet was consumed."""
        target = None
        if pkt.dst in self.divert:
            target = self.divert[pkt.dst][0]
        else:
            binding = self.bindings.get(pkt.dst)
            if binding is not None and binding.live(self.sim.now):
                lcoa = binding.lcoa
                target = self.divert[lcoa][0] if lcoa in self.divert else lcoa
            elif binding is not None:
                self.sim.drop(pkt, f"stale_binding@{self.node_id}")
                return True
            elif self.sim.topo.map_prefix[self.node_id].matches(pkt.dst):
                self.sim.drop(pkt, f"no_binding@{self.node_id}")
                return True
        if target is None:
            return False
        outer = encapsulate(pkt, self.address, target, dscp=pkt.dscp)
        self.sim.forward(self.node_id, outer)
        return True


class NarAgent:
    """New access router: verifies the pre-configured address, anchors the
    forwarding tunnel, and buffers until the router announces itself."""

    def __init__(self, sim, node_id: str, address: Address):
        self.sim = sim
        self.node_id = node_id
        self.address = address
        self.state: NarState = NarState.IDLE
        self.ctx: Optional[dict] = None
        self.buffer: list[Packet] = []

    def active_nlcoa(self) -> Optional[Address]:
        return self.ctx["nlcoa"] if self.ctx else None

    def on_hi(self, pkt: Packet) -> None:
        self.ctx = dict(pkt.info)
        self.state = NarState.IDLE
        self._step(FsmEvent(fsm.EV_HI, macro=pkt.info["macro"]))

    def on_fna(self, pkt: Packet) -> None:
        if pkt.inner is not None:
            info = pkt.info or {}
            collision = self.sim.fna_collides(info.get("handover", -1),
                                              info.get("attempt", 0))
            if self.ctx is None:
                self.ctx = {"nlcoa": pkt.inner.info["nlcoa"],
                            "plcoa": pkt.inner.info["plcoa"],
                            "old_map": pkt.inner.info.get("old_map"),
                            "macro": pkt.inner.info.get("macro", False)}
            self._step(FsmEvent(fsm.EV_FNA_FBU, collision=collision), fbu=pkt.inner)
        else:
            self._step(FsmEvent(fsm.EV_FNA_RS))

    def on_timer(self, token) -> None:
        if token[0] == "nar_dad":
            self._step(FsmEvent(fsm.EV_DAD_OK))

    def _step(self, event: FsmEvent, fbu: Optional[Packet] = None) -> None:
        self.state, actions = fsm_step(fsm.ROLE_NAR, self.state, event)
        ctx = self.ctx or {}
        for action in actions:
            if isinstance(action, fsm.StartTimer):
                self.sim.timer(self.node_id, self.sim.config.dad_fast_us, ("nar_dad",))
            elif isinstance(action, fsm.Do) and action.op == "relay_hi":
                new_map = ctx.get("new_map")
                if new_map:
                    self.sim.send_signal(self.node_id, SignalKind.HI, self.address,
                                         self.sim.topo.addresses[new_map],
                                         info={"old_map": ctx.get("old_map"),
                                               "nar": self.node_id,
                                               "nrcoa": ctx.get("nrcoa")})
            elif isinstance(action, fsm.Do) and action.op == "flush_buffer":
                for buffered in self.buffer:
                    self.sim.forward(self.node_id, buffered)
                self.buffer.clear()
            elif isinstance(action, fsm.Do) and action.op == "forward_fbu" and fbu is not None:
                relayed = dataclasses.replace(fbu, info={**fbu.info, "relayed_by_nar": True})
                self.sim.forward(self.node_id, relayed)
            elif isinstance(action, fsm.Emit):
                self._emit(action, ctx)
            elif isinstance(action, fsm.Unexpected):
                self.sim.metrics.unexpected_signals += 1

    def _emit(self, action: fsm.Emit, ctx: dict) -> None:
        sig = action.signal
        if sig == SignalKind.NS:
            bs = self.sim.topo.bs_of_ar(self.node_id)
            self.sim.send_signal(self.node_id, SignalKind.NS, self.address,
                                 self.sim.topo.addresses[bs],
                                 info={"tentative": ctx.get("nlcoa")})
        elif sig == SignalKind.HACK and ctx.get("old_map"):
            self.sim.send_signal(self.node_id, SignalKind.HACK, self.address,
                                 self.sim.topo.addresses[ctx["old_map"]],
                                 info={"from_role": "nar"})
        elif sig == SignalKind.NAACK:
            alternative = ctx["nlcoa"]
            alternative = Address(alternative.domain, alternative.site, alternative.node + 1)
            self.sim.send_signal(self.node_id, SignalKind.NAACK, self.address,
                                 ctx["nlcoa"], info={"alternative": alternative})
        elif sig == SignalKind.NA:
            self.sim.send_signal(self.node_id, SignalKind.NA, self.address,
                                 ctx.get("nlcoa") or self.address, info={})

    def intercept(self, pkt: Packet) -> bool:
        """Hold packets for the pre-configured address until the flush."""
        if self.ctx is None or pkt.dst != self.ctx["nlcoa"]:
            return False
        if self.state in (NarState.DAD_RUNNING, NarState.TUNNEL_UP_BUFFERING):
            if len(self.buffer) >= self.sim.config.nar_buffer_capacity:
                oldest = self.buffer.pop(0)
                self.sim.metrics.nar_buffer_drops += 1
                self.sim.drop(oldest, f"nar_overflow@{self.node_id}")
            self.buffer.append(pkt)
            return True
        return False


class FhDmr:
    """Mobile-router side of the fast hierarchical scheme."""

    def __init__(self, sim, hoa: Address, mnp: Prefix, ha: Address, cn: Address):
        self.sim = sim
        self.hoa = hoa
        self.mnp = mnp
        self.ha = ha
        self.cn = cn
        self.node_component = 100
        self.lcoa: Optional[Address] = None
        self.rcoa: Optional[Address] = None
        self.prev_lcoa: Optional[Address] = None
        self.prev_rcoa: Optional[Address] = None
        self.serving_map: Optional[str] = None
        self.serving_bs: Optional[str] = None
        self.fsm_state: DmrState = DmrState.IDLE
        self.ctx: Optional[FhHandoverCtx] = None
        self.epoch = 0
        self.handover_count = 0
        # Registration machine (home agent, return routability, correspondent).
        self.reg_state = fsm.REG_IDLE
        self.reg_tokens: dict = {}
        self.reg_retries = 0
        self.reg_seq = 0
        self.cn_bound = False
        self._initial_prefix_seen = False

    # -- address bookkeeping -------------------------------------------------
    def addresses(self) -> set[Address]:
        out = {self.hoa}
        for addr in (self.lcoa, self.rcoa, self.prev_lcoa, self.prev_rcoa):
            if addr is not None:
                out.add(addr)
        if self.ctx:
            for addr in (self.ctx.nlcoa, self.ctx.nrcoa):
                if addr is not None:
                    out.add(addr)
        return out

    # -- layer 2 -------------------------------------------------------------
    def on_l2_trigger(self, plan) -> None:
        if self.lcoa is None:
            return
        self.ctx = FhHandoverCtx(handover_index=plan.handover_index,
                                 old_bs=plan.old_bs, new_bs=plan.new_bs,
                                 nar=self.sim.topo.bs_to_ar[plan.new_bs],
                                 old_map=self.serving_map,
                                 plcoa=self.lcoa)
        self.fsm_state = DmrState.IDLE
        self._step(FsmEvent(fsm.EV_L2_TRIGGER))

    def on_link_down(self, plan=None) -> None:
        self.serving_bs = None
        if self.lcoa is None:
            return
        if self.ctx is None:
            index = plan.handover_index if plan is not None else self.handover_count
            self.ctx = FhHandoverCtx(handover_index=index,
                                     old_map=self.serving_map, plcoa=self.lcoa)
            self.fsm_state = DmrState.IDLE
        self._step(FsmEvent(fsm.EV_L2_DOWN))

    def on_link_up(self, bs: str) -> None:
        self.serving_bs = bs
        self.epoch += 1
        if self.lcoa is None and self.ctx is None:
            # First attachment: discover the access router and anchor point.
            self.sim.send_signal("dmr", SignalKind.RS, self.hoa,
                                 self.sim.topo.addresses[self.sim.topo.bs_to_ar[bs]])
            return
        if self.ctx is None:
            return
        self.handover_count += 1
        self.ctx.new_bs = bs
        self.ctx.nar = self.sim.topo.bs_to_ar[bs]
        ncoa_known = self.ctx.nlcoa is not None
        if ncoa_known:
            self._promote_lcoa()
        self._step(FsmEvent(fsm.EV_ATTACH_DONE, ncoa_known=ncoa_known,
                            fbu_sent=self.ctx.fbu_sent, macro=self.ctx.macro))

    def _promote_lcoa(self) -> None:
        self.prev_lcoa = self.lcoa
        self.lcoa = self.ctx.nlcoa

    # -- machine interpretation ------------------------------------------------
    def _step(self, event: FsmEvent) -> None:
        self.fsm_state, actions = fsm_step(fsm.ROLE_DMR, self.fsm_state, event)
        for action in actions:
            self._apply(action)

    def _apply(self, action) -> None:
        cfg = self.sim.config
        ctx = self.ctx
        if isinstance(action, fsm.Emit):
            sig = action.signal
            if sig == SignalKind.RT_SOL_PR:
                oar = self.sim.topo.bs_to_ar[ctx.old_bs]
                self.sim.send_signal("dmr", SignalKind.RT_SOL_PR, self.lcoa,
                                     self.sim.topo.addresses[oar],
                                     info={"target_bs": ctx.new_bs})
            elif sig == SignalKind.FBU:
                ctx.fbu_sent = True
                self.sim.send_signal("dmr", SignalKind.FBU, self.lcoa,
                                     self.sim.topo.addresses[ctx.old_map],
                                     info=self._fbu_info(), high_priority=True)
            elif sig == SignalKind.RS:
                self.sim.send_signal("dmr", SignalKind.RS, self.lcoa,
                                     self.sim.topo.addresses[ctx.nar])
            elif sig == SignalKind.FNA:
                self.sim.send_signal("dmr", SignalKind.FNA, self.lcoa,
                                     self.sim.topo.addresses[ctx.nar],
                                     info={"nlcoa": self.lcoa})
            elif sig == SignalKind.LBU:
                self._send_lbu()
        elif isinstance(action, fsm.StartTimer):
            delay = {"fbu_delay": cfg.fbu_delay_us, "lbu_gap": cfg.lbu_gap_us,
                     "fbu_retx": cfg.fbu_retx_us}[action.name]
            self.sim.timer("dmr", delay, ("fh", action.name, self.epoch))
        elif isinstance(action, fsm.Do):
            self._do(action.op)
        elif isinstance(action, fsm.Unexpected):
            self.sim.metrics.unexpected_signals += 1

    def _fbu_info(self) -> dict:
        ctx = self.ctx
        return {"plcoa": ctx.plcoa, "nlcoa": ctx.nlcoa, "nar": ctx.nar,
                "macro": ctx.macro, "new_map": ctx.new_map,
                "nrcoa": ctx.nrcoa, "hoa": self.hoa,
                "handover": ctx.handover_index, "attempt": ctx.fna_attempt}

    def _do(self, op: str) -> None:
        ctx = self.ctx
        if op == "configure_ncoa":
            pass  # handled in on_prrtadv, which knows the advertised prefixes
        elif op == "send_fna_with_fbu":
            fbu = self.sim.make_signal(SignalKind.FBU, self.lcoa,
                                       self.sim.topo.addresses[ctx.old_map],
                                       info=self._fbu_info())
            ctx.fbu_sent = True
            fna = Packet(src=self.lcoa, dst=self.sim.topo.addresses[ctx.nar],
                         size_bytes=fbu.size_bytes + 40, kind=SIGNAL, dscp=fbu.dscp,
                         signal=SignalKind.FNA, inner=fbu, created_at=self.sim.now,
                         info={"handover": ctx.handover_index, "attempt": ctx.fna_attempt})
            self.sim.send_signal_packet("dmr", fna)
        elif op == "adopt_alternative":
            ctx.fna_attempt += 1
        elif op == "configure_ncoa_from_ra":
            pass  # handled in on_router_advertisement
        elif op == "start_macro_registration":
            self.start_registration()

    # -- signal handling -------------------------------------------------------
    def on_signal(self, pkt: Packet) -> None:
        sig = pkt.signal
        if sig == SignalKind.RA:
            self.on_router_advertisement(pkt)
        elif sig == SignalKind.PR_RT_ADV:
            self.handle_prrtadv(pkt)
        elif sig == SignalKind.FBACK:
            if self.ctx is not None:
                self.ctx.fback_received = True
            self._step(FsmEvent(fsm.EV_FBACK))
        elif sig == SignalKind.LBACK:
            self._on_lback()
        elif sig == SignalKind.NAACK:
            self._on_naack(pkt)
        elif sig in (SignalKind.BA, SignalKind.HOT, SignalKind.COT, SignalKind.NPT):
            self._reg_signal(pkt)
        elif sig == SignalKind.NA:
            pass  # initial DAD collisions are not exercised for this variant

    def handle_prrtadv(self, pkt: Packet) -> None:
        """Anticipatory address configuration from the proxied advertisement."""
        ctx = self.ctx
        if ctx is None:
            return
        info = pkt.info
        if info["nar_prefix"].matches(self.lcoa):
            return  # advertisement for the current attachment; nothing moves
        ctx.macro = info["nar_map"] != self.serving_map
        ctx.new_map = info["nar_map"] if ctx.macro else None
        ctx.nlcoa = info["nar_prefix"].address(self.node_component)
        if ctx.macro:
            ctx.nrcoa = info["nar_map_prefix"].address(self.node_component)
        self._step(FsmEvent(fsm.EV_PRRTADV, macro=ctx.macro))

    def on_router_advertisement(self, pkt: Packet) -> None:
        info = pkt.info
        prefix: Prefix = info["prefix"]
        if self.lcoa is None and self.ctx is None:
            # Initial attachment: configure both addresses, verify, register.
            if self._initial_prefix_seen:
                return
            self._initial_prefix_seen = True
            self.serving_map = info["map_id"]
            tentative_lcoa = prefix.address(self.node_component)
            tentative_rcoa = info["map_prefix"].address(self.node_component)
            self.sim.send_signal("dmr", SignalKind.NS, tentative_lcoa,
                                 pkt.src, info={"tentative": tentative_lcoa,
                                                "handover": -1, "attempt": 0})
            self.sim.timer("dmr", self.sim.config.dad_delay_us,
                           ("initial_dad", self.epoch, tentative_lcoa, tentative_rcoa))
            return
        if self.ctx is not None and self.fsm_state == DmrState.REACTIVE_ATTACH:
            ctx = self.ctx
            ctx.macro = info["map_id"] != self.serving_map
            ctx.new_map = info["map_id"] if ctx.macro else None
            ctx.nlcoa = prefix.address(self.node_component)
            if ctx.macro:
                ctx.nrcoa = info["map_prefix"].address(self.node_component)
            self._promote_lcoa()
            self._step(FsmEvent(fsm.EV_RA, macro=ctx.macro))

    def _on_naack(self, pkt: Packet) -> None:
        if self.ctx is None:
            return
        self.ctx.nlcoa = pkt.info["alternative"]
        self.node_component = pkt.info["alternative"].node
        self._promote_lcoa()
        self._step(FsmEvent(fsm.EV_NAACK))

    def _send_lbu(self) -> None:
        ctx = self.ctx
        old_rcoa = self.rcoa
        old_map = ctx.old_map
        if ctx.macro:
            self.prev_rcoa = self.rcoa
            self.rcoa = ctx.nrcoa
            self.serving_map = ctx.new_map
        self.sim.send_signal("dmr", SignalKind.LBU, self.lcoa,
                             self.sim.topo.addresses[self.serving_map],
                             info={"rcoa": self.rcoa, "lcoa": self.lcoa,
                                   "mnp": self.mnp, "old_map": old_map,
                                   "old_rcoa": old_rcoa},
                             high_priority=True)

    def _on_lback(self) -> None:
        if self.ctx is None:
            if self.reg_seq == 0:
                self.start_registration()
            return
        macro = self.ctx.macro
        self._step(FsmEvent(fsm.EV_LBACK, macro=macro))
        if self.fsm_state == DmrState.COMPLETE:
            self.ctx = None
            self.fsm_state = DmrState.IDLE

    # -- registration machine ----------------------------------------------------
    def start_registration(self) -> None:
        self.reg_seq += 1
        self.reg_tokens = {}
        self.reg_retries = 0
        self.reg_state = fsm.REG_IDLE
        self._reg_step(fsm.EV_REG_START)

    def _reg_step(self, event: str) -> None:
        self.reg_state, actions = reg_step(self.reg_state, event)
        for action in actions:
            if not isinstance(action, fsm.Emit):
                continue
            if action.signal == SignalKind.BU and action.dest == "ha":
                self.sim.send_signal("dmr", SignalKind.BU, self.rcoa, self.ha,
                                     info={"hoa": self.hoa, "coa": self.rcoa,
                                           "mnps": [self.mnp],
                                           "lifetime": self.sim.config.binding_lifetime_us},
                                     high_priority=True)
            elif action.signal == SignalKind.BU and action.dest == "cn":
                self.sim.send_signal("dmr", SignalKind.BU, self.rcoa, self.cn,
                                     info={"hoa": self.hoa, "coa": self.rcoa,
                                           "mnps": [self.mnp],
                                           "tokens": dict(self.reg_tokens),
                                           "lifetime": self.sim.config.binding_lifetime_us},
                                     high_priority=True)
            elif action.signal == SignalKind.HOTI:
                self.sim.send_signal("dmr", SignalKind.HOTI, self.hoa, self.cn,
                                     info={"hoa": self.hoa},
                                     encap_to=self.ha, encap_src=self.rcoa)
                self.sim.timer("dmr", self.sim.config.rr_timeout_us,
                               ("fh_rr_timeout", self.reg_seq, self.reg_retries))
            elif action.signal == SignalKind.COTI:
                self.sim.send_signal("dmr", SignalKind.COTI, self.rcoa, self.cn,
                                     info={"hoa": self.hoa})

    def _reg_signal(self, pkt: Packet) -> None:
        sig = pkt.signal
        if sig == SignalKind.BA and pkt.info and pkt.info.get("from") == "cn":
            self.cn_bound = True
            self._reg_step(fsm.EV_BA_CN)
            self.sim.timer("dmr", self.sim.config.binding_refresh_us,
                           ("reg_refresh", self.reg_seq))
        elif sig == SignalKind.BA:
            self._reg_step(fsm.EV_BA_HA)
        elif sig in (SignalKind.HOT, SignalKind.COT, SignalKind.NPT):
            event = {SignalKind.HOT: fsm.EV_HOT, SignalKind.COT: fsm.EV_COT,
                     SignalKind.NPT: fsm.EV_NPT}[sig]
            key = {SignalKind.HOT: "hot", SignalKind.COT: "cot",
                   SignalKind.NPT: "npt"}[sig]
            self.reg_tokens[key] = pkt.info["token"]
            self._reg_step(event)

    def on_timer(self, token) -> None:
        name = token[0]
        if name == "fh":
            _, timer_name, epoch = token
            if timer_name == "fbu_delay":
                self._step(FsmEvent(fsm.EV_FBU_TIMER))
            elif timer_name == "lbu_gap":
                self._step(FsmEvent(fsm.EV_LBU_TIMER,
                                    macro=self.ctx.macro if self.ctx else False))
            elif timer_name == "fbu_retx":
                if self.ctx is not None and not self.ctx.fback_received:
                    self._step(FsmEvent(fsm.EV_FBU_RETX_TIMER))
        elif name == "initial_dad":
            _, epoch, lcoa, rcoa = token
            if self.lcoa is not None:
                return
            self.lcoa = lcoa
            self.rcoa = rcoa
            self._send_lbu_initial()
        elif name == "fh_rr_timeout":
            _, seq, retries = token
            if (seq != self.reg_seq or retries != self.reg_retries
                    or not self.reg_state.startswith("rr_")):
                return
            if self.reg_retries < self.sim.config.rr_retries:
                self.reg_retries += 1
                self.reg_tokens = {}
                self._reg_step(fsm.EV_RR_TIMEOUT)
            else:
                self._reg_step(fsm.EV_GIVE_UP)
        elif name == "reg_refresh":
            if token[1] == self.reg_seq and self.ctx is None:
                self._send_lbu_refresh()
                self.start_registration()

    def _send_lbu_refresh(self) -> None:
        self.sim.send_signal("dmr", SignalKind.LBU, self.lcoa,
                             self.sim.topo.addresses[self.serving_map],
                             info={"rcoa": self.rcoa, "lcoa": self.lcoa,
                                   "mnp": self.mnp, "old_map": self.serving_map,
                                   "old_rcoa": None},
                             high_priority=True)

    def _send_lbu_initial(self) -> None:
        self.sim.send_signal("dmr", SignalKind.LBU, self.lcoa,
                             self.sim.topo.addresses[self.serving_map],
                             info={"rcoa": self.rcoa, "lcoa": self.lcoa,
                                   "mnp": self.mnp, "old_map": self.serving_map,
                                   "old_rcoa": None},
                             high_priority=True)

    # -- data plane --------------------------------------------------------------
    def on_packet(self, pkt: Packet) -> None:
        addresses = self.addresses()
        while pkt.inner is not None and pkt.dst in addresses:
            pkt = decapsulate(pkt)
        if pkt.rh2_home_addr is not None and pkt.dst in addresses:
            pkt = apply_type2_routing(pkt)
        if pkt.kind == SIGNAL:
            self.on_signal(pkt)
            return
        if self.mnp.matches(pkt.dst) and pkt.dst != self.hoa:
            self.sim.send_to_mnn(pkt)
            return
        self.sim.drop(pkt, "dmr_unhandled")

    def on_upstream(self, pkt: Packet) -> None:
        if self.cn_bound and self.rcoa is not None:
            out = dataclasses.replace(pkt, src=self.rcoa, home_addr_option=pkt.src)
            self.sim.condition_data("dmr", out)
            self.sim.dmr_send(out)
        elif self.rcoa is not None:
            outer = encapsulate(pkt, self.rcoa, self.ha, dscp=pkt.dscp)
            self.sim.dmr_send(outer)
        else:
            self.sim.drop(pkt, "mr_not_registered")
