"""Deterministic packet-level simulator of network mobility with DiffServ QoS."""

from .engine import Engine, PastEvent, RngStream, SimEvent
from .scenario import (PROTO_DIFF_FH, PROTO_DIFF_NEMO, PROTO_NEMO_BS,
                       ScenarioConfig)
from .simulation import Simulation

__all__ = ["Engine", "PastEvent", "RngStream", "SimEvent", "ScenarioConfig",
           "Simulation", "PROTO_NEMO_BS", "PROTO_DIFF_NEMO", "PROTO_DIFF_FH"]
