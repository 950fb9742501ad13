"""Hierarchical addresses, packet layout, extension headers, tunnel encapsulation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum
from typing import Optional

# Every encapsulation level adds one fixed outer header.
HEADER_BYTES = 40
SIGNAL_BYTES = 64
MAX_ENCAP_DEPTH = 4

DATA = "data"
SIGNAL = "signal"


class TunnelError(Exception):
    pass


class DepthExceeded(TunnelError):
    pass


class NotTunneled(TunnelError):
    pass


class MissingRoutingHeader(Exception):
    pass


class MissingHomeAddressOption(Exception):
    pass


@dataclass(frozen=True, order=True, slots=True)
class Address:
    """Three-level hierarchical address: domain, site, node."""

    domain: int
    site: int
    node: int

    def __str__(self) -> str:
        return f"{self.domain}.{self.site}.{self.node}"


@dataclass(frozen=True, slots=True)
class Prefix:
    """Address prefix with the node part wildcarded."""

    domain: int
    site: int

    def matches(self, addr: Address) -> bool:
        return addr.domain == self.domain and addr.site == self.site

    def address(self, node: int) -> Address:
        return Address(self.domain, self.site, node)

    def __str__(self) -> str:
        return f"{self.domain}.{self.site}.*"


class SignalKind(Enum):
    RT_SOL_PR = "RtSolPr"
    PR_RT_ADV = "PrRtAdv"
    FBU = "FBU"
    FBACK = "FBack"
    HI = "HI"
    HACK = "HAck"
    FNA = "FNA"
    RS = "RS"
    RA = "RA"
    NS = "NS"
    NA = "NA"
    LBU = "LBU"
    LBACK = "LBAck"
    BU = "BU"
    BA = "BA"
    HOTI = "HoTI"
    HOT = "HoT"
    COTI = "CoTI"
    COT = "CoT"
    NPT = "NPT"
    NAACK = "NAACK"


@dataclass(slots=True)
class Packet:
    """Simulation-level datagram.

    Extension headers are modelled as optional fields rather than serialized
    bytes.  `inner` carries one level of tunnel encapsulation; the outer size
    is always inner size plus the fixed header overhead.
    """

    src: Address
    dst: Address
    size_bytes: int
    kind: str = DATA
    seq: int = 0
    flow: str = ""
    dscp: int = 0
    signal: Optional[SignalKind] = None
    rh2_home_addr: Optional[Address] = None
    home_addr_option: Optional[Address] = None
    inner: Optional["Packet"] = None
    created_at: int = 0
    info: Optional[dict] = None
    path_log: Optional[list] = None

    def depth(self) -> int:
        d, p = 0, self.inner
        while p is not None:
            d += 1
            p = p.inner
        return d

    def innermost(self) -> "Packet":
        p = self
        while p.inner is not None:
            p = p.inner
        return p

    def trace_str(self) -> str:
        label = self.signal.value if self.signal is not None else f"seq{self.seq}"
        return f"{label}/{self.src}→{self.dst}/dscp{self.dscp}/d{self.depth()}"


def make_signal(kind: SignalKind, src: Address, dst: Address, t: int,
                info: Optional[dict] = None, size: int = SIGNAL_BYTES) -> Packet:
    return Packet(src=src, dst=dst, size_bytes=size, kind=SIGNAL,
                  signal=kind, created_at=t, info=info, path_log=[])


def encapsulate(pkt: Packet, tun_src: Address, tun_dst: Address, dscp: int) -> Packet:
    if pkt.depth() + 1 > MAX_ENCAP_DEPTH:
        raise DepthExceeded(f"encapsulation depth above {MAX_ENCAP_DEPTH}")
    return Packet(src=tun_src, dst=tun_dst, size_bytes=pkt.size_bytes + HEADER_BYTES,
                  kind=pkt.kind, seq=pkt.seq, flow=pkt.flow, dscp=dscp,
                  inner=pkt, created_at=pkt.created_at, path_log=pkt.path_log)


def decapsulate(pkt: Packet) -> Packet:
    if pkt.inner is None:
        raise NotTunneled("packet carries no inner datagram")
    return pkt.inner


def apply_type2_routing(pkt: Packet) -> Packet:
    """Swap the destination for the home address held in the type 2 routing header."""
    if pkt.rh2_home_addr is None:
        raise MissingRoutingHeader("no type 2 routing header present")
    return dataclasses.replace(pkt, dst=pkt.rh2_home_addr, rh2_home_addr=None)


def apply_home_address_option(pkt: Packet) -> Packet:
    """Swap the source for the home address held in the destination option."""
    if pkt.home_addr_option is None:
        raise MissingHomeAddressOption("no home address option present")
    return dataclasses.replace(pkt, src=pkt.home_addr_option, home_addr_option=None)
