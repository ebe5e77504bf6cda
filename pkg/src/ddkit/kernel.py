"""Piecewise SU(2) propagation of one spin through a sequence program.

Between pulses the Hamiltonian is (offset + b_z(t)) S_z; all pieces commute,
so a delay contributes a single z rotation by the accumulated phase and the
Ornstein-Uhlenbeck field can be advanced exactly: the pair (endpoint,
time integral) of the field over a delay is jointly Gaussian with known
moments, and both are drawn in one step with no discretization error.

During a finite pulse the drive omega_1 S_phi does not commute with the
z term, so the pulse is cut into substeps no longer than
min(tau_c / 50, tau_p / 4); the field is held constant across each substep
and every substep is exponentiated with the closed-form axis-angle rotation.
Zero-length pulses take the instantaneous-rotation branch.

Flip-angle errors scale the rotation angle to angle * (1 + eps) where eps is
the configured fraction plus a per-trajectory static Gaussian deviate
(field inhomogeneity).  Trajectory i of a master seed draws its field from
stream (i, 0) and its deviate from stream (i, 1), so ensembles are
reproducible regardless of batching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .noise import NoiseTrajectory, OUParams, ou_step_factors, trajectory_seed
from .sequences import DelayEvent, PulseEvent, SequenceProgram

__all__ = [
    "KernelError", "ControlErrors", "DecayCurve", "segment_propagator",
    "evolve", "ensemble_signal", "cycle_propagator", "propagator_deviation",
    "ideal_equivalence", "curve_to_text",
]


class KernelError(ValueError):
    """Invalid simulation request."""


@dataclass(frozen=True)
class ControlErrors:
    """Static control imperfections.

    flip_fraction: relative pulse-amplitude error, rotation angle becomes
    angle * (1 + flip_fraction).  offset: static detuning in rad/s, applied
    during delays and pulses.  inhomogeneity_rms: standard deviation of a
    per-trajectory Gaussian spread added to flip_fraction.
    """

    flip_fraction: float = 0.0
    offset: float = 0.0
    inhomogeneity_rms: float = 0.0

    def __post_init__(self) -> None:
        if not self.inhomogeneity_rms >= 0.0:
            raise KernelError("inhomogeneity_rms must be >= 0")


@dataclass(frozen=True)
class DecayCurve:
    times: np.ndarray
    signal_mean: np.ndarray
    signal_stderr: np.ndarray
    n_traj: int
    digest: str = ""


# ------------------------------------------------------------
# Closed-form SU(2) pieces
# ------------------------------------------------------------

def _apply_z(a, b, phi):
    """In-place z rotation by angle phi: diag(e^{-i phi/2}, e^{+i phi/2})."""
    half = 0.5 * phi
    rot = np.cos(half) - 1j * np.sin(half)
    a *= rot
    b *= np.conj(rot)
    return a, b


def _apply_axis(a, b, nx, ny, nz, theta):
    """Rotation by theta about the unit axis n, applied to the spinor batch."""
    c = np.cos(0.5 * theta)
    s = np.sin(0.5 * theta)
    u00 = c - 1j * s * nz
    u01 = -1j * s * (nx - 1j * ny)
    u10 = -1j * s * (nx + 1j * ny)
    u11 = c + 1j * s * nz
    a2 = u00 * a + u01 * b
    b2 = u10 * a + u11 * b
    return a2, b2


def _pulse_unitary(phase, angle, duration, w):
    """Single 2x2 propagator of a pulse segment with constant z field w."""
    if duration == 0.0:
        nx, ny, nz, theta = math.cos(phase), math.sin(phase), 0.0, angle
    else:
        w1 = angle / duration
        norm = math.hypot(w1, w)
        nx = w1 * math.cos(phase) / norm
        ny = w1 * math.sin(phase) / norm
        nz = w / norm
        theta = norm * duration
    c, s = math.cos(0.5 * theta), math.sin(0.5 * theta)
    return np.array([[c - 1j * s * nz, -1j * s * (nx - 1j * ny)],
                     [-1j * s * (nx + 1j * ny), c + 1j * s * nz]])


def _pulse_substeps(duration, tau_c):
    if duration == 0.0:
        return 0
    limit = min(tau_c / 50.0, duration / 4.0)
    return int(math.ceil(duration / limit))


def segment_propagator(kind: str, b_samples, errors: ControlErrors,
                       duration: float, phase: float = 0.0,
                       angle: float = math.pi) -> np.ndarray:
    """2x2 propagator of one event given piecewise-constant field samples.

    The samples split the segment evenly; a delay folds them into a single
    z rotation (exact, the pieces commute), a pulse multiplies one
    closed-form rotation per sample with the drive amplitude
    angle * (1 + flip_fraction) / duration.  Zero-duration pulses rotate
    instantaneously and ignore the field.
    """
    if duration < 0.0:
        raise KernelError("duration must be >= 0")
    b = np.atleast_1d(np.asarray(b_samples, dtype=float))
    if kind == "delay":
        phi = (errors.offset + b.mean()) * duration
        return np.array([[np.exp(-0.5j * phi), 0.0],
                         [0.0, np.exp(0.5j * phi)]])
    if kind != "pulse":
        raise KernelError(f"kind must be 'pulse' or 'delay', got {kind!r}")
    scaled = angle * (1.0 + errors.flip_fraction)
    if duration == 0.0:
        return _pulse_unitary(phase, scaled, 0.0, 0.0)
    u = np.eye(2, dtype=complex)
    step = duration / b.size
    for bk in b:
        u = _pulse_unitary(phase, scaled * step / duration, step,
                           errors.offset + bk) @ u
    return u


# ------------------------------------------------------------
# Single-trajectory evolution against a sampled field
# ------------------------------------------------------------

def _bloch(a, b):
    ab = np.conj(a) * b
    return (2.0 * ab.real, 2.0 * ab.imag, abs(a) ** 2 - abs(b) ** 2)


_INIT = {"x": (1.0 / math.sqrt(2.0), 1.0 / math.sqrt(2.0) + 0.0j),
         "y": (1.0 / math.sqrt(2.0), 1j / math.sqrt(2.0))}


def evolve(program: SequenceProgram, trajectory: NoiseTrajectory | None = None,
           errors: ControlErrors = ControlErrors(), init_axis: str = "x",
           sample_at: str = "cycles", refine: int = 1,
           ) -> list[tuple[float, tuple[float, float, float]]]:
    """Propagate one spin through the program against one field trajectory.

    The field is read from the trajectory grid (zero-order hold); delays
    accumulate the exact phase of that piecewise-constant profile, pulses
    substep it.  Returns (time, Bloch vector) pairs at cycle boundaries or
    after every event.  A missing trajectory means a zero field.  refine
    multiplies the pulse substep count; the default already resolves the
    field, larger values exist to demonstrate convergence.
    """
    if init_axis not in _INIT:
        raise KernelError(f"init_axis must be 'x' or 'y', got {init_axis!r}")
    if sample_at not in ("cycles", "events"):
        raise KernelError("sample_at must be 'cycles' or 'events'")
    if refine < 1:
        raise KernelError(f"refine must be >= 1, got {refine}")
    total = math.fsum(e.duration for e in program.events)
    if trajectory is not None and trajectory.times[-1] < total:
        raise KernelError(
            f"trajectory ends at {trajectory.times[-1]:g} s but the program "
            f"runs to {total:g} s")

    def field(t):
        if trajectory is None:
            return 0.0
        k = np.searchsorted(trajectory.times, t, side="right") - 1
        return float(trajectory.values[max(k, 0)])

    def grid_edges(t0, t1):
        if trajectory is None:
            return [t0, t1]
        inner = [t for t in trajectory.times if t0 < t < t1]
        return [t0, *inner, t1]

    a = np.array(_INIT[init_axis][0], dtype=complex)
    b = np.array(_INIT[init_axis][1], dtype=complex)
    tau_c = trajectory.params.tau_c if trajectory is not None else math.inf
    per_cycle = len(program.base_events)
    out = [(0.0, _bloch(a, b))]
    t = 0.0
    for k, ev in enumerate(program.events):
        if isinstance(ev, DelayEvent):
            edges = grid_edges(t, t + ev.duration)
            phi = math.fsum((errors.offset + field(lo)) * (hi - lo)
                            for lo, hi in zip(edges[:-1], edges[1:]))
            a, b = _apply_z(a, b, phi)
        else:
            u = _event_pulse(ev, errors, t, field, tau_c, refine)
            a, b = u[0, 0] * a + u[0, 1] * b, u[1, 0] * a + u[1, 1] * b
        t += ev.duration
        if sample_at == "events" or (k + 1) % per_cycle == 0:
            out.append((t, _bloch(a, b)))
    return out


def _event_pulse(ev: PulseEvent, errors: ControlErrors, t0, field, tau_c,
                 refine: int = 1):
    scaled = ev.angle * (1.0 + errors.flip_fraction)
    if ev.duration == 0.0:
        return _pulse_unitary(ev.phase, scaled, 0.0, 0.0)
    n = _pulse_substeps(ev.duration, tau_c) * refine
    step = ev.duration / n
    u = np.eye(2, dtype=complex)
    for j in range(n):
        w = errors.offset + field(t0 + j * step)
        u = _pulse_unitary(ev.phase, scaled / n, step, w) @ u
    return u


# ------------------------------------------------------------
# Batched ensemble propagation
# ------------------------------------------------------------

# Segment table rows: ("delay", duration, rho, sig_b, mean_i, c1, c2)
# draws 2 normals, or ("pulse", step, rho, sig_b, phase, angle_frac, n_sub)
# draws 1 normal per substep.  Cycle boundaries fall between rows.

def _delay_integral_coeffs(ou: OUParams, dur: float):
    """Exact joint law of (endpoint, integral) of the field over a delay.

    Returns (rho, sig_b, m_i, c1, c2): endpoint = rho b0 + sig_b xi1,
    integral = m_i b0 + c1 xi1 + c2 xi2 for standard normals xi1, xi2.
    """
    x = dur / ou.tau_c
    rho = math.exp(-x)
    one_m = -math.expm1(-x)
    sig_b = ou.b_rms * math.sqrt(-math.expm1(-2.0 * x))
    m_i = ou.tau_c * one_m
    if ou.b_rms == 0.0:
        return rho, 0.0, m_i, 0.0, 0.0
    # var of the integral: b^2 tau_c^2 (2x - 3 + 4 rho - rho^2); the
    # closed form cancels catastrophically for small x, switch to series
    if x < 1e-3:
        avar = x ** 3 * (2.0 / 3.0 - 0.5 * x)
    else:
        avar = 2.0 * x - 3.0 + 4.0 * rho - rho * rho
    var_i = (ou.b_rms * ou.tau_c) ** 2 * avar
    cov = ou.b_rms ** 2 * ou.tau_c * one_m ** 2
    c1 = cov / sig_b if sig_b > 0.0 else 0.0
    c2 = math.sqrt(max(var_i - c1 * c1, 0.0))
    return rho, sig_b, m_i, c1, c2


def _segment_table(program: SequenceProgram, ou: OUParams):
    segments = []
    n_normals = 0
    for ev in program.base_events:
        if isinstance(ev, DelayEvent):
            if ev.duration > 0.0:
                segments.append(("delay", ev.duration,
                                 _delay_integral_coeffs(ou, ev.duration)))
                n_normals += 2
        elif ev.duration == 0.0:
            segments.append(("kick", ev.phase, ev.angle))
        else:
            n = _pulse_substeps(ev.duration, ou.tau_c)
            step = ev.duration / n
            rho, sig = ou_step_factors(ou, np.array([step]))
            segments.append(("pulse", step, n, ev.phase, ev.angle,
                             float(rho[0]), float(sig[0])))
            n_normals += n
    return segments, n_normals


def ensemble_signal(program: SequenceProgram, ou: OUParams,
                    errors: ControlErrors = ControlErrors(),
                    init_axis: str = "x", n_traj: int = 1000,
                    master_seed: int | None = None,
                    chunk: int = 1024) -> DecayCurve:
    """Monte Carlo mean signal at cycle boundaries.

    Each trajectory i draws its field innovations from stream (seed, i, 0)
    and its static flip deviate from stream (seed, i, 1), then propagates
    the spinor through the compiled segment table; the signal is the
    expectation of the Pauli operator along init_axis.  Reductions use
    compensated summation in trajectory order, so results do not depend on
    chunk size.  Deterministic given (program, ou, errors, seed).
    """
    if init_axis not in _INIT:
        raise KernelError(f"init_axis must be 'x' or 'y', got {init_axis!r}")
    if n_traj < 1:
        raise KernelError("n_traj must be >= 1")
    seed = ou.seed if master_seed is None else master_seed
    segments, n_normals = _segment_table(program, ou)
    if ou.b_rms == 0.0:
        n_normals = 0
    reps = program.repeats
    base_time = math.fsum(e.duration for e in program.base_events)
    times = np.array([j * base_time for j in range(reps + 1)])

    signals = np.empty((n_traj, reps + 1))
    for lo in range(0, n_traj, chunk):
        hi = min(lo + chunk, n_traj)
        m = hi - lo
        # slot 0 of each stream seeds the stationary field value, the rest
        # feed the segment table in order; the layout matches ou_trajectory
        xi = np.empty((m, n_normals * reps + 1)) if n_normals else None
        eps = np.empty(m)
        for i in range(m):
            if n_normals:
                rng = np.random.default_rng(trajectory_seed(seed, lo + i, 0))
                xi[i] = rng.standard_normal(n_normals * reps + 1)
            dev = np.random.default_rng(trajectory_seed(seed, lo + i, 1))
            eps[i] = (errors.flip_fraction
                      + errors.inhomogeneity_rms * dev.standard_normal())
        a = np.full(m, _INIT[init_axis][0], dtype=complex)
        b = np.full(m, _INIT[init_axis][1], dtype=complex)
        bz = ou.b_rms * xi[:, 0] if n_normals else np.zeros(m)
        col = 1
        signals[lo:hi, 0] = _signal(a, b, init_axis)
        sample_idx = 1
        for rep in range(reps):
            for seg in segments:
                if seg[0] == "delay":
                    dur, (rho, sig_b, m_i, c1, c2) = seg[1], seg[2]
                    if sig_b:
                        x1 = xi[:, col]
                        x2 = xi[:, col + 1]
                        col += 2
                        integral = m_i * bz + c1 * x1 + c2 * x2
                        bz = rho * bz + sig_b * x1
                    else:
                        integral = m_i * bz
                        bz = rho * bz
                    a, b = _apply_z(a, b, errors.offset * dur + integral)
                elif seg[0] == "kick":
                    _, phase, angle = seg
                    theta = angle * (1.0 + eps)
                    a, b = _apply_axis(a, b, math.cos(phase),
                                       math.sin(phase), 0.0, theta)
                else:
                    _, step, n_sub, phase, angle, rho, sig = seg
                    for _j in range(n_sub):
                        w = errors.offset + bz
                        w1 = angle * (1.0 + eps) / (n_sub * step)
                        norm = np.hypot(w1, w)
                        theta = norm * step
                        nx = w1 * math.cos(phase) / norm
                        ny = w1 * math.sin(phase) / norm
                        nz = w / norm
                        a, b = _apply_axis(a, b, nx, ny, nz, theta)
                        if sig:
                            bz = rho * bz + sig * xi[:, col]
                            col += 1
                        else:
                            bz = rho * bz
            signals[lo:hi, sample_idx] = _signal(a, b, init_axis)
            sample_idx += 1
    mean = np.array([_fmean(signals[:, j]) for j in range(reps + 1)])
    stderr = np.array([_fstderr(signals[:, j], mean[j])
                       for j in range(reps + 1)])
    digest = (f"family={program.family} order={program.order} "
              f"n_traj={n_traj} seed={seed}")
    return DecayCurve(times=times, signal_mean=mean, signal_stderr=stderr,
                      n_traj=n_traj, digest=digest)


def _signal(a, b, axis):
    ab = np.conj(a) * b
    return 2.0 * (ab.real if axis == "x" else ab.imag)


def _fmean(values):
    return math.fsum(values) / values.size


def _fstderr(values, mean):
    if values.size < 2:
        return 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (values.size - 1)
    return math.sqrt(var / values.size)


# ------------------------------------------------------------
# Exact propagators for static fields
# ------------------------------------------------------------

def cycle_propagator(program: SequenceProgram,
                     errors: ControlErrors = ControlErrors(),
                     static_b: float = 0.0) -> np.ndarray:
    """Exact 2x2 propagator of the whole program for a static field.

    With a constant z field every segment exponentiates in closed form with
    no substepping, so this is exact for any pulse length.
    """
    u = np.eye(2, dtype=complex)
    w = errors.offset + static_b
    for ev in program.events:
        if isinstance(ev, DelayEvent):
            phi = w * ev.duration
            u = np.array([[np.exp(-0.5j * phi), 0], [0, np.exp(0.5j * phi)]]) @ u
        else:
            scaled = ev.angle * (1.0 + errors.flip_fraction)
            u = _pulse_unitary(ev.phase, scaled, ev.duration,
                               w if ev.duration else 0.0) @ u
    return u


def propagator_deviation(u: np.ndarray,
                         reference: np.ndarray | None = None) -> float:
    """Frobenius distance of u from the reference, minimized over a global
    phase: sqrt(4 - 2 |tr(R^dag U)|)."""
    tr = np.trace(u if reference is None else reference.conj().T @ u)
    return math.sqrt(max(4.0 - 2.0 * abs(tr), 0.0))


def ideal_equivalence(program_a: SequenceProgram, program_b: SequenceProgram,
                      static_b_list) -> float:
    """Max over static fields of 1 - |tr(U_a^dag U_b)| / 2.

    Both programs must use zero-length pulses; equivalent programs give 0
    for every field.
    """
    for prog in (program_a, program_b):
        if any(p.duration != 0.0 for p in prog.pulses):
            raise KernelError("ideal_equivalence requires zero-length pulses")
    worst = 0.0
    for b in static_b_list:
        ua = cycle_propagator(program_a, static_b=float(b))
        ub = cycle_propagator(program_b, static_b=float(b))
        worst = max(worst, 1.0 - abs(np.trace(ua.conj().T @ ub)) / 2.0)
    return worst


def curve_to_text(curve: DecayCurve) -> str:
    """Three columns: t signal stderr."""
    lines = [f"{float(t)!r} {float(s)!r} {float(e)!r}"
             for t, s, e in zip(curve.times, curve.signal_mean,
                                curve.signal_stderr)]
    return "\n".join(lines) + "\n"
