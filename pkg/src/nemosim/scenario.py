"""Scenario configuration, default topology, and config-file loading."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from typing import Optional

from .diffserv import AF11, AF21, EF, RedParams, SlaRule
from .engine import MS, SEC, SimTime
from .network import AR, BS, CN, DMR, ER, HA, MAP, MNN, Link, MobilityTrack, WirelessCell
from .packets import DATA, SIGNAL, Address, Prefix

PROTO_NEMO_BS = "nemo-bs"
PROTO_DIFF_NEMO = "diff-nemo"
PROTO_DIFF_FH = "diff-fh-nemo"
PROTOCOLS = (PROTO_NEMO_BS, PROTO_DIFF_NEMO, PROTO_DIFF_FH)

MODE_PREDICTIVE = "predictive"
MODE_REACTIVE = "reactive"

DETECT_INTERVAL = "interval"
DETECT_SOLICITED = "solicited"
DETECT_DEFAULT = "default"


class ConfigError(Exception):
    pass


@dataclass
class CbrConfig:
    packet_bytes: int = 1000
    rate_bps: int = 100_000
    start_us: SimTime = 20 * SEC
    stop_us: SimTime = 200 * SEC

    @property
    def interval_us(self) -> SimTime:
        return round(self.packet_bytes * 8 * SEC / self.rate_bps)


@dataclass
class FaultConfig:
    """Deterministic fault injection for exercising recovery paths."""

    dad_collision_handovers: tuple[int, ...] = ()
    fna_collision_handovers: tuple[int, ...] = ()
    drop_first_signals: tuple[str, ...] = ()


@dataclass
class ScenarioConfig:
    protocol: str = PROTO_DIFF_FH
    mode: str = MODE_PREDICTIVE
    dmr_speed_kmh: float = 3.6
    seed: int = 1
    sim_end_us: SimTime = 200 * SEC
    cbr: CbrConfig = field(default_factory=CbrConfig)
    background_load_bps: int = 0
    bg_packet_bytes: int = 2000

    # Radio and handover timing.
    lead_us: SimTime = 200 * MS
    l2_switch_us: SimTime = 50 * MS
    air_rate_bps: int = 2_000_000
    air_delay_us: SimTime = 1 * MS
    cell_radius_m: float = 50.0

    # Address configuration and registration timing.
    dad_delay_us: SimTime = 500 * MS
    dad_fast_us: SimTime = 100 * MS
    dad_rcoa_us: SimTime = 180 * MS
    fbu_delay_us: SimTime = 40 * MS
    fbu_retx_us: SimTime = 60 * MS
    lbu_gap_us: SimTime = 1 * MS
    beacon_interval_us: SimTime = 1000 * MS
    binding_lifetime_us: SimTime = 60 * SEC
    binding_refresh_us: SimTime = 30 * SEC
    token_lifetime_us: SimTime = 10 * SEC
    rr_timeout_us: SimTime = 3 * SEC
    rr_retries: int = 2
    nar_buffer_capacity: int = 100
    movement_detection: str = DETECT_DEFAULT

    red: RedParams = field(default_factory=RedParams)
    force_reactive_at: tuple[int, ...] = ()
    faults: FaultConfig = field(default_factory=FaultConfig)

    # Track geometry; a None waypoint list selects the default bounce track.
    start_x_m: float = 29.0
    bounce_near_x_m: float = 55.0
    bounce_far_x_m: float = 385.0
    waypoints: Optional[list[tuple[float, float]]] = None

    def validate(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}")
        if self.mode not in (MODE_PREDICTIVE, MODE_REACTIVE):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.dmr_speed_kmh <= 0:
            raise ConfigError("dmr_speed_kmh must be positive")
        if not (self.cbr.start_us < self.cbr.stop_us <= self.sim_end_us):
            raise ConfigError("cbr start must precede stop, and stop must not pass sim end")

    @property
    def speed_mps(self) -> float:
        return self.dmr_speed_kmh / 3.6

    def solicited_detection(self) -> bool:
        if self.movement_detection == DETECT_DEFAULT:
            return self.protocol != PROTO_NEMO_BS
        return self.movement_detection == DETECT_SOLICITED

    def qos_enabled(self) -> bool:
        return self.protocol != PROTO_NEMO_BS


_NESTED_KEYS = {"cbr": CbrConfig, "red": RedParams, "faults": FaultConfig}
_TUPLE_KEYS = {"force_reactive_at", "dad_collision_handovers", "fna_collision_handovers",
               "drop_first_signals"}


def _apply_keys(obj, data: dict, context: str) -> None:
    known = {f.name for f in fields(obj)}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown config key {context}{key!r}")
        if key in _NESTED_KEYS:
            if not isinstance(value, dict):
                raise ConfigError(f"{context}{key} must be an object")
            _apply_keys(getattr(obj, key), value, context=f"{key}.")
        elif key in _TUPLE_KEYS:
            setattr(obj, key, tuple(value))
        elif key == "waypoints" and value is not None:
            setattr(obj, key, [tuple(p) for p in value])
        else:
            setattr(obj, key, value)


def config_from_dict(data: dict) -> ScenarioConfig:
    config = ScenarioConfig()
    _apply_keys(config, data, context="")
    config.validate()
    return config


def load_config(path: str) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# Default topology.  Addresses are domain.site.node triples: the wired core is
# domain 0, the home network domain 1, and each anchor-point domain 2 and 3
# with one site per access router.


@dataclass
class Topology:
    addresses: dict[str, Address]
    roles: dict[str, str]
    links: list[Link]
    cells: list[WirelessCell]
    bs_to_ar: dict[str, str]
    ar_to_map: dict[str, str]
    ar_prefix: dict[str, Prefix]
    map_prefix: dict[str, Prefix]
    home_prefix: Prefix
    mnp: Prefix
    hoa: Address
    mnn_addr: Address

    def node_of(self, addr: Address) -> Optional[str]:
        for node, a in self.addresses.items():
            if a == addr:
                return node
        return None

    def bs_of_ar(self, ar: str) -> str:
        return next(bs for bs, a in self.bs_to_ar.items() if a == ar)

    def map_of_bs(self, bs: str) -> str:
        return self.ar_to_map[self.bs_to_ar[bs]]


def default_topology(config: ScenarioConfig) -> Topology:
    addresses = {
        "cn": Address(0, 0, 0),
        "er": Address(0, 0, 1),
        "ha": Address(1, 0, 1),
        "map1": Address(2, 0, 1),
        "map2": Address(3, 0, 1),
        "ar1": Address(2, 1, 1), "bs1": Address(2, 1, 2),
        "ar2": Address(2, 2, 1), "bs2": Address(2, 2, 2),
        "ar3": Address(3, 1, 1), "bs3": Address(3, 1, 2),
        "ar4": Address(3, 2, 1), "bs4": Address(3, 2, 2),
        "dmr": Address(1, 1, 1),
        "mnn": Address(1, 1, 2),
    }
    roles = {"cn": CN, "er": ER, "ha": HA, "map1": MAP, "map2": MAP,
             "ar1": AR, "ar2": AR, "ar3": AR, "ar4": AR,
             "bs1": BS, "bs2": BS, "bs3": BS, "bs4": BS,
             "dmr": DMR, "mnn": MNN}
    links = [
        Link("cn", "er", 100_000_000, 2 * MS),
        Link("ha", "er", 100_000_000, 2 * MS),
        Link("er", "map1", 100_000_000, 20 * MS),
        Link("er", "map2", 100_000_000, 20 * MS),
        Link("map1", "ar1", 10_000_000, 5 * MS),
        Link("map1", "ar2", 10_000_000, 5 * MS),
        Link("map2", "ar3", 10_000_000, 5 * MS),
        Link("map2", "ar4", 10_000_000, 5 * MS),
        Link("ar1", "bs1", 1_000_000, 2 * MS),
        Link("ar2", "bs2", 1_000_000, 2 * MS),
        Link("ar3", "bs3", 1_000_000, 2 * MS),
        Link("ar4", "bs4", 1_000_000, 2 * MS),
    ]
    r = config.cell_radius_m
    cells = [
        WirelessCell("bs1", (100.0, 0.0), r),
        WirelessCell("bs2", (180.0, 0.0), r),
        WirelessCell("bs3", (260.0, 0.0), r),
        WirelessCell("bs4", (340.0, 0.0), r),
    ]
    return Topology(
        addresses=addresses,
        roles=roles,
        links=links,
        cells=cells,
        bs_to_ar={"bs1": "ar1", "bs2": "ar2", "bs3": "ar3", "bs4": "ar4"},
        ar_to_map={"ar1": "map1", "ar2": "map1", "ar3": "map2", "ar4": "map2"},
        ar_prefix={"ar1": Prefix(2, 1), "ar2": Prefix(2, 2),
                   "ar3": Prefix(3, 1), "ar4": Prefix(3, 2)},
        map_prefix={"map1": Prefix(2, 0), "map2": Prefix(3, 0)},
        home_prefix=Prefix(1, 0),
        mnp=Prefix(1, 1),
        hoa=addresses["dmr"],
        mnn_addr=addresses["mnn"],
    )


def build_track(config: ScenarioConfig) -> MobilityTrack:
    """Default motion: enter the cell strip, then bounce between its ends.

    A single pass at sweep speeds would park the router in the last cell for
    most of the run, so the default track ping-pongs between turnaround points
    inside the outer cells; the handover count then scales with speed.
    """
    if config.waypoints is not None:
        return MobilityTrack([tuple(p) for p in config.waypoints], config.speed_mps)
    needed_m = config.speed_mps * config.sim_end_us / SEC + 1.0
    points = [(config.start_x_m, 0.0)]
    total = 0.0
    target = config.bounce_far_x_m
    while total < needed_m:
        total += abs(target - points[-1][0])
        points.append((target, 0.0))
        target = (config.bounce_near_x_m if target == config.bounce_far_x_m
                  else config.bounce_far_x_m)
    return MobilityTrack(points, config.speed_mps)


def default_sla_rules(topology: Topology) -> list[SlaRule]:
    return [
        SlaRule(dscp=EF, kind=SIGNAL),
        SlaRule(dscp=AF11, kind=DATA, src=topology.addresses["cn"],
                meter_rate_bps=128_000, meter_depth_bytes=2000),
        SlaRule(dscp=AF21, kind=DATA, dst=topology.addresses["cn"],
                meter_rate_bps=128_000, meter_depth_bytes=2000),
    ]


# Unsolicited router-advertisement phases, staggered per access router so
# beacon arrivals decorrelate across handovers.
BEACON_PHASE_US = {"ar1": 0, "ar2": 250 * MS, "ar3": 500 * MS, "ar4": 750 * MS}
