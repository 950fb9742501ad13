"""Command-line entry points: single runs and speed sweeps."""

from __future__ import annotations

import argparse
import sys

from .experiment import run_scenario, sweep
from .metrics import CSV_HEADER
from .scenario import MODE_PREDICTIVE, MODE_REACTIVE, PROTOCOLS, ScenarioConfig, load_config


def _base_config(args) -> ScenarioConfig:
    config = load_config(args.config) if args.config else ScenarioConfig()
    if args.protocol:
        config.protocol = args.protocol
    if getattr(args, "mode", None):
        config.mode = args.mode
    if getattr(args, "speed", None):
        config.dmr_speed_kmh = args.speed
    if args.seed is not None:
        config.seed = args.seed
    config.validate()
    return config


def cmd_run(args) -> int:
    config = _base_config(args)
    report, trace = run_scenario(config, collect_trace=args.trace is not None)
    csv_text = CSV_HEADER + "\n" + report.csv_row() + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(csv_text)
    else:
        sys.stdout.write(csv_text)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            fh.write("\n".join(trace) + "\n")
    if args.paths:
        with open(args.paths, "w", encoding="utf-8") as fh:
            for (seq, _, _), path in zip(report.per_packet_delay, report.per_packet_path):
                fh.write(f"{seq}\t{'>'.join(path)}\n")
    return 0


def cmd_sweep(args) -> int:
    config = _base_config(args)
    speeds = [float(s) for s in args.speeds.split(",")]
    protocols = (args.protocol,) if args.protocol else PROTOCOLS
    csv_text, _ = sweep(config, speeds, protocols=protocols)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(csv_text)
    else:
        sys.stdout.write(csv_text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nemosim",
        description="Packet-level simulator of network-mobility handovers with QoS")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one scenario and print a CSV row")
    run_p.add_argument("--config", help="JSON scenario file")
    run_p.add_argument("--protocol", choices=PROTOCOLS)
    run_p.add_argument("--mode", choices=[MODE_PREDICTIVE, MODE_REACTIVE])
    run_p.add_argument("--speed", type=float, help="mobile router speed in km/h")
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--out", help="CSV output path (stdout when omitted)")
    run_p.add_argument("--trace", help="write the per-event TSV trace here")
    run_p.add_argument("--paths", help="write per-packet node paths here")
    run_p.set_defaults(func=cmd_run)

    sweep_p = sub.add_parser("sweep", help="sweep speeds across protocols")
    sweep_p.add_argument("--config", help="JSON scenario file")
    sweep_p.add_argument("--speeds", default="15,30,45,60,75,90",
                         help="comma-separated km/h values")
    sweep_p.add_argument("--protocol", choices=PROTOCOLS,
                         help="restrict to one protocol (default: all)")
    sweep_p.add_argument("--seed", type=int)
    sweep_p.add_argument("--out", help="CSV output path (stdout when omitted)")
    sweep_p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
