"""Route-optimized variant: the mobile router proxies return routability and
correspondent registration for its network nodes, after which marked traffic
flows directly between correspondent and mobile router with a type 2 routing
header downstream and a home address option upstream."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

from .nemo_bs import BaselineMr, BindingCacheEntry, MrState
from .packets import (Address, Packet, SignalKind, apply_home_address_option,
                      apply_type2_routing)

RR_IDLE = "Idle"
RR_SENT = "SentHoTI_CoTI"
RR_READY = "Ready"


@dataclass
class RrExchange:
    """Return-routability progress; ready once all three tokens are held."""

    tokens: dict = field(default_factory=dict)   # kind -> token tuple
    sent: bool = False
    retries: int = 0

    @property
    def state(self) -> str:
        if not self.sent:
            return RR_IDLE
        if self.ready:
            return RR_READY
        for kind, label in (("npt", "GotNPT"), ("cot", "GotCoT"), ("hot", "GotHoT")):
            if kind in self.tokens:
                return label
        return RR_SENT

    @property
    def ready(self) -> bool:
        return all(k in self.tokens for k in ("hot", "cot", "npt"))


class CorrespondentAgent:
    """Correspondent-side binding cache gated by return-routability tokens."""

    def __init__(self, sim, node_id: str, address: Address):
        self.sim = sim
        self.node_id = node_id
        self.address = address
        self.cache: dict[Address, BindingCacheEntry] = {}
        self.issued: dict[Address, dict] = {}
        self.bound_at: list = []
        self._nonce = 0

    def _token(self, kind: str, addr: Address) -> tuple:
        self._nonce += 1
        return (kind, addr, self._nonce)

    def binding_for(self, dst: Address) -> Optional[BindingCacheEntry]:
        for entry in self.cache.values():
            if entry.covers(dst) and entry.live(self.sim.now):
                return entry
        return None

    def on_hoti(self, pkt: Packet) -> None:
        hoa = pkt.src
        issued = self.issued.setdefault(hoa, {})
        issued["hot"] = (self._token("hot", hoa), self.sim.now)
        issued["npt"] = (self._token("npt", hoa), self.sim.now)
        self.sim.send_signal(self.node_id, SignalKind.HOT, self.address, hoa,
                             info={"token": issued["hot"][0]})
        self.sim.send_signal(self.node_id, SignalKind.NPT, self.address, hoa,
                             info={"token": issued["npt"][0]})

    def on_coti(self, pkt: Packet) -> None:
        coa = pkt.src
        hoa = pkt.info["hoa"]
        issued = self.issued.setdefault(hoa, {})
        issued["cot"] = (self._token("cot", coa), self.sim.now)
        self.sim.send_signal(self.node_id, SignalKind.COT, self.address, coa,
                             info={"token": issued["cot"][0]})

    def on_binding_update(self, pkt: Packet) -> None:
        info = pkt.info
        hoa = info["hoa"]
        if not self._tokens_valid(hoa, info.get("tokens")):
            self.sim.metrics.rejected_bindings += 1
            return
        self.cache[hoa] = BindingCacheEntry(
            hoa=hoa, coa=info["coa"], mnps=list(info["mnps"]),
            expires_at=self.sim.now + info.get("lifetime", self.sim.config.binding_lifetime_us))
        self.bound_at.append(self.sim.now)
        self.sim.send_signal(self.node_id, SignalKind.BA, self.address, info["coa"],
                             info={"hoa": hoa, "from": "cn"})

    def _tokens_valid(self, hoa: Address, tokens: Optional[dict]) -> bool:
        if not tokens:
            return False
        issued = self.issued.get(hoa, {})
        lifetime = self.sim.config.token_lifetime_us
        for kind in ("hot", "cot", "npt"):
            record = issued.get(kind)
            if record is None:
                return False
            token, at = record
            if tokens.get(kind) != token or self.sim.now - at > lifetime:
                return False
        return True

    def rewrite_upstream(self, pkt: Packet) -> Packet:
        """Restore the application-level source from the home address option."""
        if pkt.home_addr_option is not None:
            return apply_home_address_option(pkt)
        return pkt


class ProxyDmr(BaselineMr):
    """Baseline registration plus proxied return routability and direct delivery."""

    def __init__(self, sim, state: MrState, cn_addr: Address):
        super().__init__(sim, state)
        self.cn_addr = cn_addr
        self.rr = RrExchange()
        self.cn_bound_coa: Optional[Address] = None
        self._rr_seq = 0

    # Registration with the home agent triggers the correspondent phase.
    def on_signal(self, pkt: Packet) -> None:
        sig = pkt.signal
        if sig == SignalKind.BA and pkt.info and pkt.info.get("from") == "cn":
            self.cn_bound_coa = self.state.coa
            return
        if sig == SignalKind.BA:
            self.state.registered = True
            self.start_return_routability()
            return
        if sig == SignalKind.HOT:
            self._collect("hot", pkt)
        elif sig == SignalKind.COT:
            self._collect("cot", pkt)
        elif sig == SignalKind.NPT:
            self._collect("npt", pkt)
        else:
            super().on_signal(pkt)

    def start_return_routability(self) -> None:
        self.rr = RrExchange(sent=True)
        self._rr_seq += 1
        self._send_rr_probes()

    def _send_rr_probes(self) -> None:
        st = self.state
        self.sim.send_signal("dmr", SignalKind.HOTI, st.hoa, self.cn_addr,
                             info={"hoa": st.hoa}, encap_to=st.ha, encap_src=st.coa)
        self.sim.send_signal("dmr", SignalKind.COTI, st.coa, self.cn_addr,
                             info={"hoa": st.hoa})
        self.sim.timer("dmr", self.sim.config.rr_timeout_us,
                       ("rr_timeout", self._rr_seq, self.rr.retries))

    def _collect(self, kind: str, pkt: Packet) -> None:
        if not self.rr.sent or self.rr.ready:
            return
        self.rr.tokens[kind] = pkt.info["token"]
        if self.rr.ready:
            self.register_with_cn()

    def register_with_cn(self) -> None:
        st = self.state
        self.sim.send_signal("dmr", SignalKind.BU, st.coa, self.cn_addr,
                             info={"hoa": st.hoa, "coa": st.coa, "mnps": [st.mnp],
                                   "tokens": dict(self.rr.tokens),
                                   "lifetime": self.sim.config.binding_lifetime_us},
                             high_priority=True)

    def on_timer(self, token) -> None:
        if token[0] == "rr_timeout":
            _, seq, retries = token
            if seq != self._rr_seq or self.rr.ready or retries != self.rr.retries:
                return
            if self.rr.retries < self.sim.config.rr_retries:
                self.rr.retries += 1
                self.rr.tokens.clear()
                self._send_rr_probes()
            return
        if token[0] == "bu_refresh":
            if token[1] == self.state.epoch and self.state.coa is not None:
                self.send_binding_update()
            return
        super().on_timer(token)

    # -- data plane ----------------------------------------------------------
    def on_packet(self, pkt: Packet) -> None:
        if pkt.rh2_home_addr is not None and pkt.dst == self.state.coa:
            self.proxy_deliver(pkt)
            return
        super().on_packet(pkt)

    def proxy_deliver(self, pkt: Packet) -> None:
        rewritten = apply_type2_routing(pkt)
        if self.state.mnp.matches(rewritten.dst):
            self.sim.send_to_mnn(rewritten)
        else:
            self.sim.drop(rewritten, "dmr_rh2_mismatch")

    def on_upstream(self, pkt: Packet) -> None:
        """Proxy the network node: rewrite the source and tag its home address."""
        if self.cn_bound_coa is not None and self.cn_bound_coa == self.state.coa:
            out = dataclasses.replace(pkt, src=self.state.coa, home_addr_option=pkt.src)
            self.sim.condition_data("dmr", out)
            self.sim.dmr_send(out)
            return
        super().on_upstream(pkt)
