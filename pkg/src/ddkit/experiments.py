"""Experiment orchestration: decay curves, scans, calibration, persistence.

An ExperimentConfig bundles everything a run needs (sequence choice, control
errors, bath parameters, trajectory budget, seed); it loads from sectioned
key = value text and round-trips through the manifest written next to every
output file.  All runs are deterministic given the config: identical config
and seed give bit-identical data files, the manifest additionally records
the wall clock.
"""

from __future__ import annotations

import configparser
import dataclasses
import datetime
import io
import math
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .kernel import ControlErrors, DecayCurve, curve_to_text, ensemble_signal
from .noise import OUParams
from .sequences import SequenceProgram, make_sequence, repeat

__all__ = [
    "HarnessError", "CalibrationError", "DegenerateCurveError",
    "ExperimentConfig", "T1eResult", "TauScan", "ScanGrid", "OrderScan",
    "load_config", "config_to_text", "make_program", "run_decay",
    "extract_t1e", "scan_tau", "scan_map", "scan_order", "calibrate_bath",
    "tau_scan_to_text", "grid_to_text", "order_scan_to_text", "save_output",
]

# FID 1/e time of 300 us at tau_c = 100 us under the analytic coherence
DESK_B_RMS = 6985.0
DESK_TAU_C = 100e-6


class HarnessError(ValueError):
    """Invalid experiment request or config."""


class CalibrationError(HarnessError):
    """Bisection interval does not bracket the calibration target."""


class DegenerateCurveError(HarnessError):
    """Decay curve starts below the 1/e threshold."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat run description; field names match CLI flags and config keys."""

    family: str = "XY4"
    order: int = 1
    symmetric: bool = False
    n_pulses: int = 1
    tau: float = 90e-6
    tau_p: float = 10e-6
    flip_error: float = 0.0
    offset: float = 0.0
    inhomogeneity: float = 0.0
    b_rms: float = DESK_B_RMS
    tau_c: float = DESK_TAU_C
    n_traj: int = 2000
    cycles: int = 50
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_traj < 1:
            raise HarnessError("n_traj must be >= 1")
        if self.cycles < 1:
            raise HarnessError("cycles must be >= 1")

    def errors(self) -> ControlErrors:
        return ControlErrors(flip_fraction=self.flip_error,
                             offset=self.offset,
                             inhomogeneity_rms=self.inhomogeneity)

    def bath(self) -> OUParams:
        return OUParams(b_rms=self.b_rms, tau_c=self.tau_c, seed=self.seed)


# Config file layout: section -> (key, python type) pairs.  Loading rejects
# anything outside this table so typos cannot silently revert to defaults.
_SCHEMA = {
    "sequence": {"family": str, "order": int, "symmetric": bool,
                 "n_pulses": int, "tau": float, "tau_p": float},
    "errors": {"flip_error": float, "offset": float,
               "inhomogeneity": float},
    "noise": {"b_rms": float, "tau_c": float},
    "run": {"n_traj": int, "cycles": int, "seed": int},
}


def load_config(path_or_text) -> ExperimentConfig:
    """Parse sectioned key = value text into an ExperimentConfig.

    Accepts a file path or the text itself; unknown sections or keys are
    hard errors.  A [meta] section (written by manifests) is ignored, so a
    manifest file reloads as the config that produced it.
    """
    parser = configparser.ConfigParser()
    text = str(path_or_text)
    try:
        # any real config text spans lines; a path never does
        if "\n" in text:
            parser.read_string(text)
        else:
            with open(text, encoding="utf-8") as fh:
                parser.read_file(fh)
    except OSError as exc:
        raise HarnessError(f"cannot read config {text!r}: {exc}") from exc
    except configparser.Error as exc:
        raise HarnessError(f"malformed config: {exc}") from exc
    fields = {}
    for section in parser.sections():
        if section == "meta":
            continue
        if section not in _SCHEMA:
            raise HarnessError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise HarnessError(
                    f"unknown config key {key!r} in section [{section}]")
            kind = _SCHEMA[section][key]
            try:
                if kind is bool:
                    fields[key] = parser.getboolean(section, key)
                else:
                    fields[key] = kind(raw)
            except ValueError as exc:
                raise HarnessError(
                    f"bad value for {key!r} in [{section}]: {raw!r}") from exc
    return ExperimentConfig(**fields)


def config_to_text(config: ExperimentConfig) -> str:
    """Inverse of load_config: sectioned key = value text."""
    parser = configparser.ConfigParser()
    for section, keys in _SCHEMA.items():
        parser[section] = {}
        for key in keys:
            value = getattr(config, key)
            parser[section][key] = repr(value) if isinstance(value, float) \
                else str(value)
    out = io.StringIO()
    parser.write(out)
    return out.getvalue()


def make_program(config: ExperimentConfig, repeats: int = 1) -> SequenceProgram:
    prog = make_sequence(config.family, config.tau, config.tau_p,
                         order=config.order, symmetric=config.symmetric,
                         n_pulses=config.n_pulses)
    return repeat(prog, repeats) if repeats > 1 else prog


# ------------------------------------------------------------
# Decay curves and 1/e extraction
# ------------------------------------------------------------

def run_decay(config: ExperimentConfig) -> DecayCurve:
    """Ensemble signal at cycle boundaries out to the configured horizon."""
    prog = make_program(config, repeats=config.cycles)
    return ensemble_signal(prog, config.bath(), config.errors(),
                           n_traj=config.n_traj, master_seed=config.seed)


@dataclass(frozen=True)
class T1eResult:
    t1e: float
    stderr: float
    lower_bound: bool


_THRESH = 1.0 / math.e


def extract_t1e(curve: DecayCurve) -> T1eResult:
    """First 1/e crossing by log-linear interpolation between samples.

    A curve that never crosses returns its last time flagged as a lower
    bound; a curve that starts below 1/e is degenerate.  The stderr of the
    two bracketing samples propagates through the interpolation.
    """
    s = np.asarray(curve.signal_mean, dtype=float)
    if s.size == 0:
        raise DegenerateCurveError("empty curve")
    if s[0] < _THRESH:
        raise DegenerateCurveError(
            f"curve starts at {s[0]:.4f}, below 1/e")
    below = np.nonzero(s < _THRESH)[0]
    if below.size == 0:
        return T1eResult(float(curve.times[-1]), 0.0, True)
    k = int(below[0])
    ta, tb = float(curve.times[k - 1]), float(curve.times[k])
    sa, sb = float(s[k - 1]), float(s[k])
    ea, eb = float(curve.signal_stderr[k - 1]), float(curve.signal_stderr[k])
    if sb <= 0.0:
        # log interpolation needs positive samples; fall back to linear
        frac = (sa - _THRESH) / (sa - sb)
        t1e = ta + (tb - ta) * frac
        dt_da = (tb - ta) * (_THRESH - sb) / (sa - sb) ** 2
        dt_db = (tb - ta) * (sa - _THRESH) / (sa - sb) ** 2
        err = math.hypot(dt_da * ea, dt_db * eb)
        return T1eResult(t1e, err, False)
    la, lb = math.log(sa), math.log(sb)
    frac = (la + 1.0) / (la - lb)
    t1e = ta + (tb - ta) * frac
    # d t1e / d ln s at both bracketing samples
    dt_da = (tb - ta) * (-1.0 - lb) / (la - lb) ** 2
    dt_db = (tb - ta) * (la + 1.0) / (la - lb) ** 2
    err = math.hypot(dt_da * ea / sa, dt_db * eb / sb)
    return T1eResult(t1e, err, False)


# ------------------------------------------------------------
# Scans
# ------------------------------------------------------------

def _check_grid(name, values):
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise HarnessError(f"{name} grid is empty")
    if arr.size > 1 and not np.all(np.diff(arr) > 0.0):
        raise HarnessError(f"{name} grid must be strictly increasing")
    return arr


@dataclass(frozen=True)
class TauScan:
    family: str
    order: int
    symmetric: bool
    tau_values: np.ndarray
    t1e: np.ndarray
    stderr: np.ndarray
    lower_bound: np.ndarray
    boundary_max: bool  # optimum sits on a grid endpoint: grid too coarse


def scan_tau(config: ExperimentConfig, tau_values) -> TauScan:
    """t_1e versus delay for the configured sequence."""
    taus = _check_grid("tau", tau_values)
    t1e = np.empty(taus.size)
    err = np.empty(taus.size)
    bound = np.zeros(taus.size, dtype=bool)
    for i, tau in enumerate(taus):
        res = extract_t1e(run_decay(dataclasses.replace(config,
                                                        tau=float(tau))))
        t1e[i], err[i], bound[i] = res.t1e, res.stderr, res.lower_bound
    k = int(np.argmax(t1e))
    return TauScan(family=config.family, order=config.order,
                   symmetric=config.symmetric, tau_values=taus, t1e=t1e,
                   stderr=err, lower_bound=bound,
                   boundary_max=k in (0, taus.size - 1))


@dataclass(frozen=True)
class ScanGrid:
    axis1_name: str
    axis1_values: np.ndarray
    axis2_name: str
    axis2_values: np.ndarray
    signal: np.ndarray
    stderr: np.ndarray
    digest: str

    def __post_init__(self) -> None:
        shape = (self.axis1_values.size, self.axis2_values.size)
        if self.signal.shape != shape or self.stderr.shape != shape:
            raise HarnessError("grid matrices must be |axis1| x |axis2|")
        if not (np.all(np.isfinite(self.signal))
                and np.all(np.isfinite(self.stderr))):
            raise HarnessError("grid entries must be finite")


_MAP_AXES = {"flip_error", "offset"}


def budget_cycles(program: SequenceProgram, pulse_budget: int) -> int:
    """Whole-cycle repeat count closest to the pulse budget."""
    per_cycle = len(program.pulses)
    if per_cycle == 0:
        raise HarnessError("pulse budget needs a sequence with pulses")
    if pulse_budget < per_cycle:
        raise HarnessError(
            f"budget {pulse_budget} is smaller than one cycle ({per_cycle})")
    return max(1, round(pulse_budget / per_cycle))


def scan_map(config: ExperimentConfig, axis1_name: str, axis1_values,
             tau_values, pulse_budget: int = 100) -> ScanGrid:
    """End-of-train mean signal over an error axis and the delay axis.

    The pulse budget is realized by repeating whole cycles, never by
    truncating one; the signal is read at the end of the repeated train.
    """
    if axis1_name not in _MAP_AXES:
        raise HarnessError(f"axis1 must be one of {sorted(_MAP_AXES)}, "
                           f"got {axis1_name!r}")
    a1 = _check_grid(axis1_name, axis1_values)
    taus = _check_grid("tau", tau_values)
    signal = np.empty((a1.size, taus.size))
    stderr = np.empty((a1.size, taus.size))
    for j, tau in enumerate(taus):
        point = dataclasses.replace(config, tau=float(tau))
        reps = budget_cycles(make_program(point), pulse_budget)
        for i, v in enumerate(a1):
            point_ij = dataclasses.replace(point, **{axis1_name: float(v)})
            prog = make_program(point_ij, repeats=reps)
            curve = ensemble_signal(prog, point_ij.bath(), point_ij.errors(),
                                    n_traj=point_ij.n_traj,
                                    master_seed=point_ij.seed)
            signal[i, j] = curve.signal_mean[-1]
            stderr[i, j] = curve.signal_stderr[-1]
    digest = (f"family={config.family} order={config.order} "
              f"budget={pulse_budget} n_traj={config.n_traj} "
              f"seed={config.seed}")
    return ScanGrid(axis1_name=axis1_name, axis1_values=a1, axis2_name="tau",
                    axis2_values=taus, signal=signal, stderr=stderr,
                    digest=digest)


@dataclass(frozen=True)
class OrderScan:
    orders: np.ndarray
    optimal_tau: np.ndarray
    t1e_at_optimum: np.ndarray
    stderr_at_optimum: np.ndarray
    boundary_max: np.ndarray


def scan_order(config: ExperimentConfig, orders, tau_values) -> OrderScan:
    """Optimal delay versus concatenation order for the configured family."""
    orders = np.asarray(list(orders), dtype=int)
    if orders.size == 0:
        raise HarnessError("orders list is empty")
    opt = np.empty(orders.size)
    best = np.empty(orders.size)
    err = np.empty(orders.size)
    flags = np.zeros(orders.size, dtype=bool)
    for i, n in enumerate(orders):
        scan = scan_tau(dataclasses.replace(config, order=int(n)), tau_values)
        k = int(np.argmax(scan.t1e))
        opt[i] = scan.tau_values[k]
        best[i] = scan.t1e[k]
        err[i] = scan.stderr[k]
        flags[i] = scan.boundary_max
    return OrderScan(orders=orders, optimal_tau=opt, t1e_at_optimum=best,
                     stderr_at_optimum=err, boundary_max=flags)


# ------------------------------------------------------------
# Bath calibration
# ------------------------------------------------------------

def calibrate_bath(target_t1e: float, config: ExperimentConfig | None = None,
                   b_lo: float = 200.0, b_hi: float = 2e5,
                   rel_tol: float = 0.02, max_iter: int = 60) -> OUParams:
    """Bisect b_rms (fixed tau_c) until the simulated FID 1/e time hits
    the target within rel_tol.

    The interval must bracket the target: the low edge must decay slower
    than the target, the high edge faster.
    """
    if not target_t1e > 0.0:
        raise HarnessError("target t_1e must be positive")
    if config is None:
        config = ExperimentConfig()
    # sample the FID a decade finer than the target, span 4 targets
    base = dataclasses.replace(
        config, family="FID", tau=target_t1e / 10.0, tau_p=0.0,
        flip_error=0.0, offset=0.0, inhomogeneity=0.0, cycles=40)

    def t1e_of(b_rms: float) -> float:
        curve = run_decay(dataclasses.replace(base, b_rms=b_rms))
        return extract_t1e(curve).t1e

    f_lo = t1e_of(b_lo) - target_t1e
    f_hi = t1e_of(b_hi) - target_t1e
    if not (f_lo > 0.0 > f_hi):
        raise CalibrationError(
            f"interval [{b_lo:g}, {b_hi:g}] rad/s does not bracket the "
            f"target {target_t1e:g} s")
    for _ in range(max_iter):
        mid = 0.5 * (b_lo + b_hi)
        f_mid = t1e_of(mid) - target_t1e
        if abs(f_mid) <= rel_tol * target_t1e:
            return OUParams(b_rms=mid, tau_c=config.tau_c, seed=config.seed)
        if f_mid > 0.0:
            b_lo = mid
        else:
            b_hi = mid
    raise CalibrationError("bisection did not converge")


# ------------------------------------------------------------
# Text output and manifests
# ------------------------------------------------------------

def tau_scan_to_text(scan: TauScan) -> str:
    """Columns: tau t1e stderr lower_bound, with a descriptive header."""
    head = (f"# family={scan.family} order={scan.order} "
            f"symmetric={scan.symmetric} boundary_max={scan.boundary_max}")
    lines = [head]
    for tau, t, e, b in zip(scan.tau_values, scan.t1e, scan.stderr,
                            scan.lower_bound):
        lines.append(f"{float(tau)!r} {float(t)!r} {float(e)!r} {int(b)}")
    return "\n".join(lines) + "\n"


def grid_to_text(grid: ScanGrid) -> str:
    """Long-form rows: axis1 axis2 signal stderr."""
    lines = [f"# {grid.axis1_name} {grid.axis2_name} signal stderr"]
    for i, v1 in enumerate(grid.axis1_values):
        for j, v2 in enumerate(grid.axis2_values):
            lines.append(f"{float(v1)!r} {float(v2)!r} "
                         f"{float(grid.signal[i, j])!r} "
                         f"{float(grid.stderr[i, j])!r}")
    return "\n".join(lines) + "\n"


def order_scan_to_text(scan: OrderScan) -> str:
    """Columns: order optimal_tau t1e stderr boundary_max."""
    lines = ["# order optimal_tau t1e stderr boundary_max"]
    for n, tau, t, e, b in zip(scan.orders, scan.optimal_tau,
                               scan.t1e_at_optimum, scan.stderr_at_optimum,
                               scan.boundary_max):
        lines.append(f"{int(n)} {float(tau)!r} {float(t)!r} {float(e)!r} "
                     f"{int(b)}")
    return "\n".join(lines) + "\n"


def save_output(path: str, text: str, config: ExperimentConfig,
                elapsed_s: float | None = None) -> None:
    """Write a data file plus its <path>.manifest sibling.

    The manifest holds the full config (it reloads with load_config), the
    code version, and the wall clock; the data file itself carries nothing
    run-dependent beyond the seed-determined numbers, so identical configs
    produce bit-identical data files.
    """
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        stamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
        manifest = config_to_text(config) + (
            "[meta]\n"
            f"version = {__version__}\n"
            f"written = {stamp}\n"
            f"elapsed_s = {0.0 if elapsed_s is None else elapsed_s:.3f}\n")
        with open(path + ".manifest", "w", encoding="utf-8") as fh:
            fh.write(manifest)
    except OSError as exc:
        raise HarnessError(f"cannot write output {path!r}: {exc}") from exc


def timed(func, *args, **kwargs):
    """Run func and return (result, elapsed seconds)."""
    t0 = time.perf_counter()
    out = func(*args, **kwargs)
    return out, time.perf_counter() - t0
