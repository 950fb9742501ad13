"""Scenario execution, traffic schedules, and the speed-sweep experiment."""

from __future__ import annotations

import dataclasses
from typing import Optional

from .engine import SimTime
from .metrics import CSV_HEADER, MetricsReport
from .scenario import PROTOCOLS, CbrConfig, ScenarioConfig
from .simulation import Simulation


def generate_cbr(cbr: CbrConfig) -> list[tuple[SimTime, int]]:
    """The (send_time, sequence) schedule of the constant-bit-rate source."""
    schedule = []
    t, seq = cbr.start_us, 0
    while t < cbr.stop_us:
        schedule.append((t, seq))
        t += cbr.interval_us
        seq += 1
    return schedule


def run_scenario(config: ScenarioConfig, collect_trace: bool = False
                 ) -> tuple[MetricsReport, Optional[list[str]]]:
    sim = Simulation(config, collect_trace=collect_trace)
    report = sim.run()
    return report, sim.trace


def sweep(config: ScenarioConfig, speeds_kmh: list[float],
          protocols: tuple[str, ...] = PROTOCOLS) -> tuple[str, list[MetricsReport]]:
    """One row per (protocol, speed); deterministic for a fixed config and seed."""
    rows = [CSV_HEADER]
    reports = []
    for protocol in protocols:
        for speed in speeds_kmh:
            point = dataclasses.replace(config, protocol=protocol,
                                        dmr_speed_kmh=speed)
            point.cbr = dataclasses.replace(config.cbr)
            point.red = dataclasses.replace(config.red)
            point.faults = dataclasses.replace(config.faults)
            report, _ = run_scenario(point)
            reports.append(report)
            rows.append(report.csv_row())
    return "\n".join(rows) + "\n", reports
