"""Toggling-frame sign tracks and dephasing filter functions.

Conjugating the bath coupling operators by the accumulated ideal pulse
product turns a pulse program into piecewise time dependences f_u(t) for the
three spin components.  For sequences whose phases sit on the 90-degree grid
every f_u is a bare sign during delays; composite-pulse sequences rotate the
equatorial components off-axis, in which case only the component parallel to
a coordinate axis is reported and the rest are marked undefined.

During a pulse, exactly the component whose toggled image is parallel to the
pulse's own rotation axis is constant (it commutes with the drive); all
others are undefined for that interval.

The filter function is the squared magnitude of the finite-time Fourier
integral of a track, evaluated in closed form per piecewise-constant
interval, with pulses treated as instantaneous.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ddkit.sequences import DelayEvent, PulseEvent, SequenceProgram

_SNAP_TOL = 1e-9
_COMPONENTS = {"x": 0, "y": 1, "z": 2}


class TrackError(ValueError):
    """Track request that is not defined for the given program."""


class PeakNotFoundError(RuntimeError):
    """Spectrum has no resolvable local maximum above threshold."""


@dataclass(frozen=True)
class TrackInterval:
    """One piecewise-constant stretch of the toggling frame.

    ``signs`` holds (f_x, f_y, f_z); an entry is +1/-1 where that component
    is a pure sign over the interval and None where it is undefined.
    """

    start: float
    end: float
    kind: str  # "D" or "P"
    signs: tuple[int | None, int | None, int | None]

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class ToggleTracks:
    intervals: tuple[TrackInterval, ...]
    # Per real pulse, in program order: the toggled image of its rotation
    # axis, a unit vector in the equatorial plane of the toggling frame.
    pulse_axes: tuple[tuple[float, float, float], ...]
    # Stored event durations, parallel to `intervals`; exact copies of the
    # program's floats so aligned-window sums cancel without rounding.
    durations: tuple[float, ...]
    total_time: float


def _snap(m: np.ndarray) -> np.ndarray:
    r = np.round(m)
    near = np.abs(m - r) < _SNAP_TOL
    return np.where(near, r, m)


def _reflection(phase: float) -> np.ndarray:
    """Axis-conjugation matrix of an ideal pi rotation about an equatorial
    axis at ``phase``: reflects the plane about that axis and flips z."""
    c, s = math.cos(2.0 * phase), math.sin(2.0 * phase)
    return _snap(np.array([[c, s, 0.0], [s, -c, 0.0], [0.0, 0.0, -1.0]]))


def _column_sign(col: np.ndarray, axis: np.ndarray) -> int | None:
    d = float(col @ axis)
    if abs(d) >= 1.0 - _SNAP_TOL:
        return 1 if d > 0 else -1
    return None


_EYE = np.eye(3)


def compute_tracks(program: SequenceProgram) -> ToggleTracks:
    """Exact sign tracks of a program under ideal pulses.

    The conjugation state after k pulses is the product of per-pulse
    reflection matrices; matrix entries are snapped to exact integers when
    within 1e-9, so 90-degree-grid sequences produce exact +/-1 tracks.
    """
    m = _EYE.copy()
    t = 0.0
    intervals: list[TrackInterval] = []
    durations: list[float] = []
    axes: list[tuple[float, float, float]] = []
    for ev in program.events:
        if isinstance(ev, DelayEvent):
            signs = tuple(_column_sign(m[:, u], _EYE[u]) for u in range(3))
        else:
            axis = np.array([math.cos(ev.phase), math.sin(ev.phase), 0.0])
            img = _snap(m @ axis)
            axes.append((float(img[0]), float(img[1]), float(img[2])))
            signs = tuple(_column_sign(m[:, u], axis) for u in range(3))
        intervals.append(TrackInterval(start=t, end=t + ev.duration,
                                       kind="D" if isinstance(ev, DelayEvent)
                                       else "P", signs=signs))
        durations.append(ev.duration)
        t += ev.duration
        if isinstance(ev, PulseEvent):
            m = _snap(m @ _reflection(ev.phase))
    return ToggleTracks(intervals=tuple(intervals), pulse_axes=tuple(axes),
                        durations=tuple(durations), total_time=t)


def block_average(tracks: ToggleTracks, component: str,
                  window: tuple[float, float] | None = None,
                  include_pulses: bool = False) -> float:
    """Time-weighted mean of one track component over a window.

    Only intervals where the component is defined enter the numerator and
    denominator; pulse intervals are skipped unless ``include_pulses``.  A
    window fully aligned with interval boundaries sums the stored durations,
    so exact cancellations survive.  Returns 0.0 when no defined time falls
    in the window.
    """
    u = _component_index(component)
    t0, t1 = window if window is not None else (0.0, tracks.total_time)
    if not (0.0 <= t0 < t1 <= tracks.total_time * (1 + 1e-12) + 1e-300):
        raise TrackError(f"window ({t0}, {t1}) outside program "
                         f"[0, {tracks.total_time}]")
    num: list[float] = []
    den: list[float] = []
    for iv, dur in zip(tracks.intervals, tracks.durations):
        if iv.end <= t0 or iv.start >= t1:
            continue
        if iv.kind == "P" and not include_pulses:
            continue
        sign = iv.signs[u]
        if sign is None:
            continue
        lo, hi = max(iv.start, t0), min(iv.end, t1)
        d = dur if (lo == iv.start and hi == iv.end) else hi - lo
        num.append(sign * d)
        den.append(d)
    total = math.fsum(den)
    if total == 0.0:
        return 0.0
    return math.fsum(num) / total


def pulse_error_sum(tracks: ToggleTracks) -> np.ndarray:
    """Vector sum of the toggled rotation axes of all real pulses.

    A zero vector means flip-angle errors cancel in zeroth order over the
    program; a refocusing cycle that compensates per sub-block returns zero
    for each sub-block's slice as well.
    """
    if not tracks.pulse_axes:
        return np.zeros(3)
    acc = [math.fsum(ax[u] for ax in tracks.pulse_axes) for u in range(3)]
    return np.array(acc)


def _component_index(component: str) -> int:
    try:
        return _COMPONENTS[component]
    except KeyError:
        raise TrackError(f"component must be one of {tuple(_COMPONENTS)}, "
                         f"got {component!r}") from None


# ============================================================
# Filter functions
# ============================================================

@dataclass(frozen=True)
class FilterSpectrum:
    omega: np.ndarray
    value: np.ndarray
    component: str
    total_time: float  # delay-only duration backing the spectrum


def filter_function(tracks: ToggleTracks, omega_grid: np.ndarray,
                    component: str = "z") -> FilterSpectrum:
    """|integral of f_u(t) e^{i w t} dt|^2 on the given angular-frequency grid.

    Pulses are treated as instantaneous: delay intervals are concatenated on
    a pulse-free timeline.  The requested component must be defined on every
    delay; composite-pulse programs only support the z component.

    The closed form sums f_j (e^{i w t_{j+1}} - e^{i w t_j}) / (i w) per
    interval, with the w = 0 limit f_j (t_{j+1} - t_j).
    """
    u = _component_index(component)
    signs: list[int] = []
    durs: list[float] = []
    for iv, dur in zip(tracks.intervals, tracks.durations):
        if iv.kind != "D" or dur == 0.0:
            continue
        if iv.signs[u] is None:
            raise TrackError(
                f"component {component!r} is not a pure sign during every "
                "delay of this program; filter function undefined")
        signs.append(iv.signs[u])
        durs.append(dur)
    if not durs:
        raise TrackError("program has no delays; filter function undefined")
    omega = np.asarray(omega_grid, dtype=float)
    if omega.ndim != 1 or omega.size == 0:
        raise TrackError("omega_grid must be a non-empty 1-d array")
    f = np.array(signs, dtype=float)
    edges = np.concatenate([[0.0], np.cumsum(durs)])
    total = float(edges[-1])
    zero = (np.diff(edges) * f).sum()
    integ = np.empty(omega.size, dtype=complex)
    # chunk over omega to bound the (m, n_edges) phase matrix
    block = max(1, (1 << 22) // edges.size)
    for lo in range(0, omega.size, block):
        w = omega[lo:lo + block, None]
        safe = np.where(w == 0.0, 1.0, w)
        phases = np.exp(1j * w * edges[None, :])
        part = (phases[:, 1:] - phases[:, :-1]) / (1j * safe) @ f
        integ[lo:lo + block] = np.where(w[:, 0] == 0.0, zero, part)
    return FilterSpectrum(omega=omega, value=np.abs(integ) ** 2,
                          component=component, total_time=total)


def default_omega_grid(tracks: ToggleTracks, omega_max: float | None = None,
                       oversample: int = 10) -> np.ndarray:
    """Uniform grid from 0 with step pi / (oversample * T), T the delay-only
    duration; default upper end covers several times the inverse pulse
    spacing."""
    durs = [d for iv, d in zip(tracks.intervals, tracks.durations)
            if iv.kind == "D" and d > 0.0]
    if not durs:
        raise TrackError("program has no delays")
    total = math.fsum(durs)
    if omega_max is None:
        omega_max = 4.0 * math.pi / min(durs)
    step = math.pi / (oversample * total)
    n = int(math.floor(omega_max / step)) + 1
    return step * np.arange(n)


def fundamental_frequency(spectrum: FilterSpectrum,
                          threshold: float = 1e-6) -> float:
    """Lowest-frequency dominant peak of the spectrum.

    A spectrum observed over a finite stretch T carries truncation sidelobes
    spaced 2 pi / T around every real peak, so the bare lowest local maximum
    is almost never physical.  A point qualifies here only when it exceeds
    `threshold` times the global maximum and is the largest value within
    eight Rayleigh widths (8 * 2 pi / T) on either side; sidelobes always
    have a larger neighbour one width closer to their parent peak and are
    rejected, while harmonics of the underlying pattern survive whenever the
    grid spans sixteen or more pattern periods.  Requires a uniform grid
    with step <= pi / (10 T).  Raises `PeakNotFoundError` when no
    qualifying peak exists.
    """
    w, v = spectrum.omega, spectrum.value
    if w.size < 3:
        raise PeakNotFoundError("grid too short to hold a peak")
    steps = np.diff(w)
    step_max = float(steps.max())
    if step_max > math.pi / (10.0 * spectrum.total_time) * (1 + 1e-9):
        raise TrackError("omega grid step exceeds pi / (10 T); refine the grid")
    if (steps <= 0).any():
        raise TrackError("omega grid must be strictly increasing")
    vmax = float(v.max())
    if vmax <= 0.0:
        raise PeakNotFoundError("spectrum is identically zero")
    thr = threshold * vmax
    radius = max(1, math.ceil(16.0 * math.pi
                              / (spectrum.total_time * step_max)))
    inner = np.arange(1, w.size - 1)
    rising = v[inner] >= v[inner - 1]
    falling = v[inner] >= v[inner + 1]
    strict = (v[inner] > v[inner - 1]) | (v[inner] > v[inner + 1])
    keep = rising & falling & strict & (v[inner] > thr) & (w[inner] > 0.0)
    for i in inner[keep]:
        lo, hi = max(0, i - radius), min(w.size, i + radius + 1)
        if v[i] >= v[lo:hi].max():
            return float(w[i])
    raise PeakNotFoundError("no dominant maximum above threshold; "
                            "widen the grid")


# ============================================================
# Text export
# ============================================================

def tracks_to_text(tracks: ToggleTracks) -> str:
    """One line per interval: ``start end kind fx fy fz``, ``?`` when the
    component is undefined over that interval."""
    lines = []
    for iv in tracks.intervals:
        cells = " ".join("?" if s is None else f"{s:+d}" for s in iv.signs)
        lines.append(f"{iv.start!r} {iv.end!r} {iv.kind} {cells}")
    return "\n".join(lines) + "\n"


def spectrum_to_text(spectrum: FilterSpectrum) -> str:
    """Two columns: omega value."""
    lines = [f"{float(w)!r} {float(v)!r}"
             for w, v in zip(spectrum.omega, spectrum.value)]
    return "\n".join(lines) + "\n"
