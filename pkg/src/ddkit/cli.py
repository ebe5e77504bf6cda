"""Command-line front end: sequence emission, analysis, and experiment runs.

Every subcommand assembles an ExperimentConfig from an optional config file
plus flag overrides, runs one operation, and writes the owning module's text
format to --out (with a manifest) or stdout (without).
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from .experiments import (
    ExperimentConfig,
    HarnessError,
    calibrate_bath,
    grid_to_text,
    load_config,
    make_program,
    order_scan_to_text,
    run_decay,
    save_output,
    scan_map,
    scan_order,
    scan_tau,
    tau_scan_to_text,
    timed,
)
from .kernel import curve_to_text
from .sequences import SequenceError, write_sequence
from .toggling import (
    TrackError,
    compute_tracks,
    default_omega_grid,
    filter_function,
    spectrum_to_text,
    tracks_to_text,
)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="sectioned key = value config file")
    parser.add_argument("--family", help="sequence family label")
    parser.add_argument("--order", type=int, help="concatenation order")
    parser.add_argument("--symmetric", action="store_true", default=None,
                        help="use the time-symmetric variant")
    parser.add_argument("--n-pulses", type=int, dest="n_pulses",
                        help="pulse count for the uniform echo train")
    parser.add_argument("--tau", type=float, help="inter-pulse delay [s]")
    parser.add_argument("--tau-p", type=float, dest="tau_p",
                        help="pulse length [s]")
    parser.add_argument("--flip-error", type=float, dest="flip_error",
                        help="relative flip-angle error")
    parser.add_argument("--offset", type=float,
                        help="static detuning [rad/s]")
    parser.add_argument("--inhomogeneity", type=float,
                        help="rms per-spin flip-angle spread")
    parser.add_argument("--b-rms", type=float, dest="b_rms",
                        help="bath field rms [rad/s]")
    parser.add_argument("--tau-c", type=float, dest="tau_c",
                        help="bath correlation time [s]")
    parser.add_argument("--traj", type=int, dest="n_traj",
                        help="trajectories per point")
    parser.add_argument("--cycles", type=int, help="cycles per decay curve")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--out", help="output path; stdout when omitted")


_CONFIG_FIELDS = ("family", "order", "symmetric", "n_pulses", "tau", "tau_p",
                  "flip_error", "offset", "inhomogeneity", "b_rms", "tau_c",
                  "n_traj", "cycles", "seed")


def _build_config(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {name: getattr(args, name) for name in _CONFIG_FIELDS
                 if getattr(args, name, None) is not None}
    return dataclasses.replace(config, **overrides) if overrides else config


def _emit(args: argparse.Namespace, text: str, config: ExperimentConfig,
          elapsed: float | None = None) -> None:
    if args.out:
        save_output(args.out, text, config, elapsed)
    else:
        sys.stdout.write(text)


def _linspace(lo: float, hi: float, n: int) -> np.ndarray:
    if n < 1:
        raise HarnessError("grid needs at least one point")
    return np.linspace(lo, hi, n)


def _cmd_gen(args):
    config = _build_config(args)
    prog = make_program(config, repeats=args.repeats)
    _emit(args, write_sequence(prog), config)


def _cmd_toggle(args):
    config = _build_config(args)
    tracks = compute_tracks(make_program(config, repeats=args.repeats))
    _emit(args, tracks_to_text(tracks), config)


def _cmd_filter(args):
    config = _build_config(args)
    tracks = compute_tracks(make_program(config, repeats=args.repeats))
    grid = default_omega_grid(tracks)
    spectrum = filter_function(tracks, grid, component=args.component)
    _emit(args, spectrum_to_text(spectrum), config)


def _cmd_decay(args):
    config = _build_config(args)
    curve, dt = timed(run_decay, config)
    _emit(args, curve_to_text(curve), config, dt)


def _tau_grid(args) -> np.ndarray:
    return _linspace(args.tau_min, args.tau_max, args.tau_points)


def _cmd_scan_tau(args):
    config = _build_config(args)
    scan, dt = timed(scan_tau, config, _tau_grid(args))
    _emit(args, tau_scan_to_text(scan), config, dt)


def _cmd_scan_map(args):
    config = _build_config(args)
    axis_values = _linspace(args.amin, args.amax, args.apoints)
    grid, dt = timed(scan_map, config, args.axis, axis_values,
                     _tau_grid(args), args.budget)
    _emit(args, grid_to_text(grid), config, dt)


def _cmd_scan_order(args):
    config = _build_config(args)
    orders = [int(tok) for tok in args.orders.split(",") if tok.strip()]
    scan, dt = timed(scan_order, config, orders, _tau_grid(args))
    _emit(args, order_scan_to_text(scan), config, dt)


def _cmd_calibrate(args):
    config = _build_config(args)
    ou, dt = timed(calibrate_bath, args.target, config)
    text = (f"b_rms = {ou.b_rms!r}\ntau_c = {ou.tau_c!r}\n"
            f"target_t1e = {args.target!r}\n")
    _emit(args, text, config, dt)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddkit",
        description="Compile and simulate dynamical-decoupling sequences.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="emit the sequence event list")
    _add_common(p)
    p.add_argument("--repeats", type=int, default=1)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("toggle", help="emit the toggling-frame sign tracks")
    _add_common(p)
    p.add_argument("--repeats", type=int, default=1)
    p.set_defaults(func=_cmd_toggle)

    p = sub.add_parser("filter", help="emit the filter spectrum of a train")
    _add_common(p)
    p.add_argument("--repeats", type=int, default=16,
                   help="cycles in the analyzed train")
    p.add_argument("--component", choices=("x", "y", "z"), default="z")
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("decay", help="run an ensemble decay curve")
    _add_common(p)
    p.set_defaults(func=_cmd_decay)

    def add_tau_grid(p):
        p.add_argument("--tau-min", type=float, required=True,
                       dest="tau_min")
        p.add_argument("--tau-max", type=float, required=True,
                       dest="tau_max")
        p.add_argument("--tau-points", type=int, default=10,
                       dest="tau_points")

    p = sub.add_parser("scan-tau", help="1/e time versus delay")
    _add_common(p)
    add_tau_grid(p)
    p.set_defaults(func=_cmd_scan_tau)

    p = sub.add_parser("scan-map", help="end-of-train signal map")
    _add_common(p)
    add_tau_grid(p)
    p.add_argument("--axis", choices=("flip_error", "offset"),
                   default="flip_error")
    p.add_argument("--amin", type=float, required=True)
    p.add_argument("--amax", type=float, required=True)
    p.add_argument("--apoints", type=int, default=10)
    p.add_argument("--budget", type=int, default=100,
                   help="pulse budget per train")
    p.set_defaults(func=_cmd_scan_map)

    p = sub.add_parser("scan-order", help="optimal delay versus order")
    _add_common(p)
    add_tau_grid(p)
    p.add_argument("--orders", default="1,2,3",
                   help="comma-separated concatenation orders")
    p.set_defaults(func=_cmd_scan_order)

    p = sub.add_parser("calibrate", help="fit b_rms to a target FID 1/e time")
    _add_common(p)
    p.add_argument("--target", type=float, required=True,
                   help="target FID 1/e time [s]")
    p.set_defaults(func=_cmd_calibrate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except BrokenPipeError:
        # downstream closed the pipe (e.g. head); not an error
        sys.stderr.close()
        return 0
    except (HarnessError, SequenceError, TrackError, ValueError) as exc:
        print(f"ddkit: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
