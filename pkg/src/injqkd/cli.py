"""Command-line entry point: ``injqkd {simulate,keyrate,scan,montecarlo}``.

Exit codes: 0 success, 1 result flagged (insecure, degenerate or misdecoded),
2 configuration or I/O error. Diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import math
import os
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig
from .io import ColumnWriter, atomic_write_json, write_csv
from .laser import backend_name
from .laser.model import TRAJECTORY_HEADER, IntegrationError, trajectory_columns
from .montecarlo import InsufficientStatistics, TrialConfig, empirical_key_rate, run_protocol
from .security import channel_model, scan_distance, secret_key_rate

OUTDIR_ENV = "INJQKD_OUTPUT_DIR"
DEFAULT_OUTDIR = "injqkd-output"

EXIT_OK = 0
EXIT_FLAGGED = 1
EXIT_CONFIG = 2

SCAN_HEADER = ["L_km", "Q_signal_Z", "E_signal_Z", "Q_signal_X", "E_signal_X",
               "bound_gain_low", "bound_Ez_up", "bound_Ex_up", "r", "R", "bits_per_sec",
               "status"]


class CommandOutcome:
    def __init__(self, code: int = EXIT_OK, written=None):
        self.code = code
        self.written = list(written or [])


def _parse_set(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            out[key.strip()] = json.loads(raw)
        except json.JSONDecodeError:
            out[key.strip()] = raw
    return out


def _load(args, extra: dict) -> RunConfig:
    overrides = _parse_set(args.set)
    overrides.update({k: v for k, v in extra.items() if v is not None})
    return RunConfig.load(args.config, overrides)


def _outdir(args, rc: RunConfig) -> Path:
    return Path(args.out or rc["output_dir"] or os.environ.get(OUTDIR_ENV) or DEFAULT_OUTDIR)


def _warn(msg: str) -> None:
    print(f"injqkd: {msg}", file=sys.stderr)


# simulate

def cmd_simulate(args) -> CommandOutcome:
    from .scenario import run_scenario

    extra = {"random_sequence_length": args.random_length, "sequence_seed": args.sequence_seed,
             "trace_stride": args.trace_stride}
    if args.sequence:
        extra["sequence"] = [s for s in args.sequence.replace(" ", "").split(",") if s]
    rc = _load(args, extra)
    out = _outdir(args, rc)
    traj_paths = [out / "master_trajectory.csv", out / "slave_trajectory.csv"]
    try:
        with contextlib.ExitStack() as stack:
            sink = None
            if not args.no_trajectories:
                writers = [stack.enter_context(ColumnWriter(p, TRAJECTORY_HEADER))
                           for p in traj_paths]

                def sink(mt, st):
                    for w, traj in zip(writers, (mt, st)):
                        w.append(trajectory_columns(traj))

            res = run_scenario(rc, keep_fields=False, trajectory_sink=sink)
    except IntegrationError as exc:
        _warn(f"integration failed: {exc}")
        return CommandOutcome(EXIT_FLAGGED)

    written = [res.write_trace(out / "scenario_trace.csv"),
               res.write_metrics(out / "bin_metrics.json")]
    if not args.no_trajectories:
        written.extend(traj_paths)
    summary = {
        "sequence": res.sequence,
        "decoded": res.classification,
        "mismatched_slots": res.mismatches,
        "mzi_theta_rad": res.theta,
        "attenuation_db": res.attenuation_db,
        "min_extinction_db": min(m.extinction_db for m in res.metrics),
        "backend": backend_name(),
    }
    written.append(atomic_write_json(out / "simulate_summary.json", summary))
    print(f"slots {len(res.sequence)}, min extinction {summary['min_extinction_db']:.2f} dB, "
          f"theta {res.theta:.4f} rad, attenuation {res.attenuation_db:.2f} dB")
    if len(res.sequence) <= 20:
        for m in res.metrics:
            print(f"  {m.symbol.value}: mu_hat {m.mu_hat:.4f}  extinction {m.extinction_db:.2f} dB"
                  f"  visibility {m.visibility:.4f}")
    if res.mismatches:
        _warn(f"decoded symbols disagree with the commanded sequence in slots "
              f"{res.mismatches}")
        return CommandOutcome(EXIT_FLAGGED, written)
    return CommandOutcome(EXIT_OK, written)


# keyrate

def cmd_keyrate(args) -> CommandOutcome:
    rc = _load(args, {"distance_km": args.distance, "mode": args.mode})
    out = _outdir(args, rc)
    point = secret_key_rate(rc.source(), rc.channel(), rc.protocol())
    path = atomic_write_json(out / "keyrate.json", point.to_json())
    print(f"{point.mode} L={point.distance:g} km: R={point.rate_per_pulse:.6g} bit/pulse, "
          f"{point.bits_per_second:.6g} bit/s (R*f = {point.bits_per_second_raw:.6g}), "
          f"status {point.status}")
    if point.flagged:
        _warn(f"key rate clamped to zero: status {point.status}")
        return CommandOutcome(EXIT_FLAGGED, [path])
    return CommandOutcome(EXIT_OK, [path])


# scan

def _scan_rows(scan):
    rows = []
    for p in scan.points:
        z = p.gains["z"] if "z" in p.gains else p.gains["z0"]
        x = p.gains["x"] if "x" in p.gains else p.gains["x0"]
        b = p.bounds
        rows.append([p.distance, z.q, z.e, x.q, x.e, b.q_low, b.e_up_z, b.e_up_x,
                     p.r_reduction, p.rate_per_pulse, p.bits_per_second, p.status])
    return rows


def cmd_scan(args) -> CommandOutcome:
    rc = _load(args, {})
    if args.step <= 0:
        raise ConfigError("--step must be positive")
    if args.start > args.stop:
        raise ConfigError(f"inverted range: --from {args.start} exceeds --to {args.stop}")
    if args.start < 0:
        raise ConfigError("--from must be non-negative")
    try:
        sources = {"nodecoy": rc.nodecoy(), "decoy": rc.decoy()}
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = _outdir(args, rc)
    ch = rc.channel()
    cfg = rc.protocol()
    written = []
    summary = {"from_km": args.start, "to_km": args.stop, "step_km": args.step}
    for label, src in sources.items():
        scan = scan_distance(src, ch, cfg, args.start, args.stop, args.step)
        written.append(write_csv(out / f"scan_{label}.csv", SCAN_HEADER, _scan_rows(scan)))
        summary[f"max_distance_{label}_km"] = scan.max_distance
    lo = summary["max_distance_nodecoy_km"]
    summary["ratio_decoy_to_nodecoy"] = (summary["max_distance_decoy_km"] / lo
                                         if lo > 0 else None)
    written.append(atomic_write_json(out / "scan_summary.json", summary))
    ratio = summary["ratio_decoy_to_nodecoy"]
    print(f"max distance: no decoy {lo:.2f} km, decoy {summary['max_distance_decoy_km']:.2f} km, "
          f"ratio {'n/a' if ratio is None else format(ratio, '.3f')}")
    return CommandOutcome(EXIT_OK, written)


# montecarlo

def _z(emp, ana, se):
    return (emp - ana) / se if 0 < se < math.inf else math.nan


def cmd_montecarlo(args) -> CommandOutcome:
    rc = _load(args, {"n_pulses": args.pulses, "seed": args.seed,
                      "distance_km": args.distance, "workers": args.workers})
    out = _outdir(args, rc)
    src = rc.nodecoy()
    cfg = TrialConfig(rc["n_pulses"], rc["seed"], src, rc.channel(), rc.protocol())
    tally = run_protocol(cfg, rc["workers"])
    written = [atomic_write_json(out / "tally.json", tally.to_json(rc["seed"]))]

    gz, gx = channel_model(src.mu, cfg.channel), channel_model(src.nu, cfg.channel)
    print(f"{tally.n_pulses} pulses, seed {rc['seed']}, L={cfg.channel.distance:g} km")
    print(f"{'quantity':>8} {'analytic':>14} {'empirical':>14} {'stderr':>12} {'z':>7}")
    for name, ana, emp, se in (
            ("Q_Z", gz.q, tally.q_z, tally.gain_stderr("z")),
            ("E_Z", gz.e, tally.e_z, tally.error_stderr("z")),
            ("Q_X", gx.q, tally.q_x, tally.gain_stderr("x")),
            ("E_X", gx.e, tally.e_x, tally.error_stderr("x"))):
        print(f"{name:>8} {ana:14.6e} {emp:14.6e} {se:12.4e} {_z(emp, ana, se):7.2f}")

    try:
        point = empirical_key_rate(tally, cfg)
    except InsufficientStatistics as exc:
        _warn(f"insufficient statistics: {exc}")
        return CommandOutcome(EXIT_FLAGGED, written)
    written.append(atomic_write_json(out / "montecarlo_keyrate.json", point.to_json()))
    analytic = secret_key_rate(src, cfg.channel, cfg.protocol)
    print(f"R analytic {analytic.rate_per_pulse:.6e}, empirical {point.rate_per_pulse:.6e}")
    if point.flagged:
        _warn(f"empirical key rate clamped to zero: status {point.status}")
        return CommandOutcome(EXIT_FLAGGED, written)
    return CommandOutcome(EXIT_OK, written)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config file (flat keys)")
    common.add_argument("--set", metavar="KEY=VALUE", action="append",
                        help="override one config key; VALUE is parsed as JSON (repeatable)")
    common.add_argument("--out", metavar="DIR",
                        help=f"output directory (default: config output_dir, ${OUTDIR_ENV}, "
                             f"or ./{DEFAULT_OUTDIR})")

    parser = argparse.ArgumentParser(
        prog="injqkd",
        description="Injection-locked time-bin QKD transmitter and key-rate toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common],
                       help="run the encoding scenario and decode the bins")
    p.add_argument("--sequence", help="comma-separated symbols, e.g. Z0,X0,Z1")
    p.add_argument("--random-length", type=int, metavar="N",
                   help="use N uniformly random symbols instead of --sequence")
    p.add_argument("--sequence-seed", type=int, metavar="S", help="seed for --random-length")
    p.add_argument("--trace-stride", type=int, metavar="K",
                   help="keep every K-th sample in scenario_trace.csv")
    p.add_argument("--no-trajectories", action="store_true",
                   help="skip the per-laser trajectory CSVs")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("keyrate", parents=[common], help="key rate at one distance")
    p.add_argument("--distance", type=float, metavar="KM", help="fibre length in km")
    p.add_argument("--mode", choices=["nodecoy", "decoy"], help="source mode")
    p.set_defaults(func=cmd_keyrate)

    p = sub.add_parser("scan", parents=[common],
                       help="key rate against distance for both source modes")
    p.add_argument("--from", dest="start", type=float, default=0.0, metavar="KM")
    p.add_argument("--to", dest="stop", type=float, default=200.0, metavar="KM")
    p.add_argument("--step", type=float, default=1.0, metavar="KM")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("montecarlo", parents=[common],
                       help="pulse-level protocol simulation (decoy-free source)")
    p.add_argument("--pulses", type=int, metavar="N", help="number of pulses")
    p.add_argument("--seed", type=int, metavar="S", help="random seed")
    p.add_argument("--distance", type=float, metavar="KM", help="fibre length in km")
    p.add_argument("--workers", type=int, metavar="W", help="worker threads")
    p.set_defaults(func=cmd_montecarlo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        outcome = args.func(args)
    except ConfigError as exc:
        _warn(f"config error: {exc}")
        return EXIT_CONFIG
    except OSError as exc:
        _warn(f"I/O error: {exc}")
        return EXIT_CONFIG
    return outcome.code


if __name__ == "__main__":
    sys.exit(main())
