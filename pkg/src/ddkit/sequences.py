"""Pulse-program representation and generators for single-qubit decoupling sequences.

A sequence is a flat, time-ordered tuple of events: free-evolution delays and
rotation pulses about axes in the equatorial plane.  Generators build the
standard refocusing cycles (Hahn, CPMG, XY4/XY16, concatenated cycles and
their virtual-pulse variants, Knill-composite cycles), `virtualize` rewrites a
tagged concatenated cycle into its virtual-pulse form, and `read_sequence` /
`write_sequence` give a line-oriented text format with bit-exact round trips.

Conventions
-----------
* Phases and angles are stored in radians; the text format and the CLI speak
  degrees.
* A "barred" pulse (rotation sense reversed) is canonicalized at construction
  time to phase + pi; the original sense is kept only as provenance.
* Durations are seconds.  Programs are immutable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

TWO_PI = 2.0 * math.pi

FAMILIES = (
    "FID", "HAHN", "CPMG", "XY4", "XY16",
    "CDD", "CDDS", "VCDD", "VCDDS", "KDD", "KDD2",
)

# Families where the generator accepts a concatenation order.
ORDERED_FAMILIES = ("CDD", "CDDS", "VCDD", "VCDDS")


class SequenceError(ValueError):
    """Invalid parameters or an unsupported family/option combination."""


def _wrap_phase(x: float) -> float:
    """Reduce an angle to [0, 2*pi).  Python's % can return the modulus
    itself for tiny negative inputs, so guard that edge."""
    r = x % TWO_PI
    if r == TWO_PI:
        r = 0.0
    return r


# ============================================================
# Event and program types
# ============================================================

@dataclass(frozen=True)
class PulseEvent:
    """A rotation about an equatorial axis ``(cos(phase), sin(phase), 0)``.

    Parameters
    ----------
    phase : float
        Axis angle in radians.  Folded into [0, 2*pi) at construction; if
        ``sense`` is -1 the fold adds pi first, so a reversed-sense rotation
        and its phase-shifted equivalent compare equal.
    angle : float
        Nominal rotation angle in radians (pi for a refocusing pulse).
    duration : float
        Pulse length in seconds; 0 means an instantaneous rotation.
    sense : int
        +1 or -1.  Provenance only; excluded from equality.
    generating : bool
        True for the pulses of the generating sequence of a concatenated
        cycle, i.e. the ones `virtualize` absorbs into phase bookkeeping.
    """

    phase: float
    angle: float = math.pi
    duration: float = 0.0
    sense: int = field(default=1, compare=False)
    generating: bool = False

    def __post_init__(self) -> None:
        if self.sense not in (1, -1):
            raise SequenceError(f"pulse sense must be +1 or -1, got {self.sense}")
        if not (math.isfinite(self.phase) and math.isfinite(self.angle)):
            raise SequenceError("pulse phase and angle must be finite")
        if not (math.isfinite(self.duration) and self.duration >= 0.0):
            raise SequenceError(f"pulse duration must be >= 0, got {self.duration}")
        raw = self.phase if self.sense == 1 else self.phase + math.pi
        object.__setattr__(self, "phase", _wrap_phase(raw))

    @property
    def axis(self) -> tuple[float, float, float]:
        return (math.cos(self.phase), math.sin(self.phase), 0.0)


@dataclass(frozen=True)
class DelayEvent:
    """Free evolution for ``duration`` seconds."""

    duration: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.duration) and self.duration >= 0.0):
            raise SequenceError(f"delay duration must be >= 0, got {self.duration}")


Event = PulseEvent | DelayEvent


@dataclass(frozen=True)
class SequenceProgram:
    """An immutable, time-ordered pulse program.

    ``repeats`` counts whole-cycle repetitions: the event tuple then holds
    ``repeats`` concatenated copies of the base cycle, and cycle boundaries
    always fall on event boundaries (symmetric cycles keep their trailing
    half-delay, so a train carries tau/2 + tau/2 across each seam).
    """

    events: tuple[Event, ...]
    family: str
    order: int = 0
    symmetric: bool = False
    tau: float = 0.0
    tau_p: float = 0.0
    repeats: int = 1

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise SequenceError(f"unknown family {self.family!r}")
        if self.repeats < 1:
            raise SequenceError(f"repeats must be >= 1, got {self.repeats}")
        if len(self.events) % self.repeats != 0:
            raise SequenceError("event count is not a multiple of repeats")
        object.__setattr__(self, "events", tuple(self.events))

    @property
    def base_events(self) -> tuple[Event, ...]:
        """Events of one cycle (the full tuple when repeats == 1)."""
        n = len(self.events) // self.repeats
        return self.events[:n]

    @property
    def pulses(self) -> tuple[PulseEvent, ...]:
        return tuple(e for e in self.events if isinstance(e, PulseEvent))


def pulse_count(program: SequenceProgram) -> int:
    """Number of real pulses in the program (all repetitions)."""
    return sum(1 for e in program.events if isinstance(e, PulseEvent))


def cycle_time(program: SequenceProgram) -> float:
    """Total duration: compensated sum of every event duration."""
    return math.fsum(e.duration for e in program.events)


def base_cycle_time(program: SequenceProgram) -> float:
    """Duration of a single cycle of a (possibly repeated) program."""
    return math.fsum(e.duration for e in program.base_events)


def duty_cycle(program: SequenceProgram) -> float:
    """Fraction of the total time spent inside pulses."""
    total = cycle_time(program)
    if total <= 0.0:
        raise SequenceError("duty cycle undefined for a zero-length program")
    on = math.fsum(e.duration for e in program.events if isinstance(e, PulseEvent))
    return on / total


# ============================================================
# Construction helpers
# ============================================================

def _check_timing(tau: float, tau_p: float) -> None:
    # tau = 0 is allowed: pulse-error analysis uses delay-free cycles
    if not (math.isfinite(tau) and tau >= 0.0):
        raise SequenceError(f"tau must be >= 0, got {tau}")
    if not (math.isfinite(tau_p) and tau_p >= 0.0):
        raise SequenceError(f"tau_p must be >= 0, got {tau_p}")


def _check_order(order: int) -> None:
    if not isinstance(order, int) or order < 1:
        raise SequenceError(f"concatenation order must be an integer >= 1, got {order}")


def _pi_pulse(phase_deg: float, tau_p: float, generating: bool = False) -> PulseEvent:
    # All library phases enter in degrees and convert exactly once, so equal
    # nominal phases are equal floats everywhere downstream.
    return PulseEvent(phase=math.radians(phase_deg % 360.0), duration=tau_p,
                      generating=generating)


def _concat(*blocks: list[Event]) -> list[Event]:
    """Concatenate event lists, merging abutting delays at the seams.

    The merge implements the half-delay boundary convention: when a symmetric
    block's trailing tau/2 meets the next block's leading tau/2, the cycle
    carries a single tau delay.
    """
    out: list[Event] = []
    for block in blocks:
        for ev in block:
            if (out and isinstance(ev, DelayEvent)
                    and isinstance(out[-1], DelayEvent)):
                out[-1] = DelayEvent(out[-1].duration + ev.duration)
            else:
                out.append(ev)
    return out


def _uniform_cycle(phases_deg: list[float], tau: float, tau_p: float,
                   symmetric: bool) -> list[Event]:
    """[tau, P1, tau, P2, ...] or, time-symmetric, [tau/2, P1, tau, ..., tau/2]."""
    events: list[Event] = []
    half = 0.5 * tau
    for k, deg in enumerate(phases_deg):
        if symmetric and k == 0:
            events.append(DelayEvent(half))
        else:
            events.append(DelayEvent(tau))
        events.append(_pi_pulse(deg, tau_p))
    if symmetric:
        events.append(DelayEvent(half))
    return events


# ============================================================
# Generators
# ============================================================

def gen_fid(duration: float) -> SequenceProgram:
    """Free evolution only; the no-pulse reference."""
    if not (math.isfinite(duration) and duration > 0.0):
        raise SequenceError(f"FID duration must be > 0, got {duration}")
    return SequenceProgram(events=(DelayEvent(duration),), family="FID",
                           tau=duration)


def gen_hahn(tau: float, tau_p: float = 0.0) -> SequenceProgram:
    """Single-echo cycle: tau - pi - tau."""
    _check_timing(tau, tau_p)
    events = (DelayEvent(tau), _pi_pulse(0.0, tau_p), DelayEvent(tau))
    return SequenceProgram(events=events, family="HAHN", tau=tau, tau_p=tau_p)


def gen_cpmg(tau: float, tau_p: float, n_pulses: int) -> SequenceProgram:
    """Equally spaced identical pulses, all along y."""
    _check_timing(tau, tau_p)
    if not isinstance(n_pulses, int) or n_pulses < 1:
        raise SequenceError(f"n_pulses must be an integer >= 1, got {n_pulses}")
    events = _uniform_cycle([90.0] * n_pulses, tau, tau_p, symmetric=False)
    return SequenceProgram(events=tuple(events), family="CPMG", tau=tau,
                           tau_p=tau_p, order=n_pulses)


_XY4_DEG = [0.0, 90.0, 0.0, 90.0]

# Two-axis cycle, its pulse-order mirror, then both with all phases + 180.
# The mirror makes the second half of the 16-pulse cycle undo the first even
# for a miscalibrated flip angle.
_XY16_DEG = ([0.0, 90.0, 0.0, 90.0] + [90.0, 0.0, 90.0, 0.0]
             + [180.0, 270.0, 180.0, 270.0] + [270.0, 180.0, 270.0, 180.0])


def gen_xy4(tau: float, tau_p: float, symmetric: bool = False) -> SequenceProgram:
    """Four-pulse two-axis cycle; the base cycle of the concatenated families."""
    _check_timing(tau, tau_p)
    events = _uniform_cycle(_XY4_DEG, tau, tau_p, symmetric)
    return SequenceProgram(events=tuple(events), family="XY4", order=1,
                           symmetric=symmetric, tau=tau, tau_p=tau_p)


def gen_xy16(tau: float, tau_p: float, symmetric: bool = False) -> SequenceProgram:
    """Sixteen-pulse cycle whose second half is the phase-inverted copy of the
    first, so the ideal cycle propagator is the identity up to global phase."""
    _check_timing(tau, tau_p)
    events = _uniform_cycle(_XY16_DEG, tau, tau_p, symmetric)
    return SequenceProgram(events=tuple(events), family="XY16", order=1,
                           symmetric=symmetric, tau=tau, tau_p=tau_p)


def _cdd_block(order: int, tau: float, tau_p: float) -> list[Event]:
    if order == 1:
        return _uniform_cycle(_XY4_DEG, tau, tau_p, symmetric=False)
    inner = _cdd_block(order - 1, tau, tau_p)
    out: list[Event] = []
    for deg in _XY4_DEG:
        out = _concat(out, inner, [_pi_pulse(deg, tau_p, generating=True)])
    return out


def _cdd_block_sym(order: int, tau: float, tau_p: float) -> list[Event]:
    if order == 1:
        return _uniform_cycle(_XY4_DEG, tau, tau_p, symmetric=True)
    half = _cdd_half_sym(order - 1, tau, tau_p)
    full = _cdd_block_sym(order - 1, tau, tau_p)
    out = list(half)
    for deg, blk in zip(_XY4_DEG, (full, full, full, half)):
        out = _concat(out, [_pi_pulse(deg, tau_p, generating=True)], blk)
    return out


def _cdd_half_sym(order: int, tau: float, tau_p: float) -> list[Event]:
    # First temporal half of the symmetric cycle; the cut always lands in the
    # middle of a central delay, so halves rejoin into a full cycle seamlessly.
    if order == 1:
        return [DelayEvent(0.5 * tau), _pi_pulse(0.0, tau_p),
                DelayEvent(tau), _pi_pulse(90.0, tau_p), DelayEvent(0.5 * tau)]
    half = _cdd_half_sym(order - 1, tau, tau_p)
    full = _cdd_block_sym(order - 1, tau, tau_p)
    return _concat(half, [_pi_pulse(0.0, tau_p, generating=True)], full,
                   [_pi_pulse(90.0, tau_p, generating=True)], half)


def gen_cdd(order: int, tau: float, tau_p: float,
            symmetric: bool = False) -> SequenceProgram:
    """Concatenated two-axis cycle of the given order.

    Order 1 is the four-pulse cycle itself.  For higher orders each level
    wraps four copies of the level below with a real generating pulse after
    each copy; those pulses carry ``generating=True`` so `virtualize` can
    absorb them.  The symmetric variant places the generating pulses between
    half-cycles, keeping the cycle an even function of time about its centre
    in the delay structure.
    """
    _check_order(order)
    _check_timing(tau, tau_p)
    build = _cdd_block_sym if symmetric else _cdd_block
    events = build(order, tau, tau_p)
    return SequenceProgram(events=tuple(events),
                           family="CDDS" if symmetric else "CDD",
                           order=order, symmetric=symmetric, tau=tau,
                           tau_p=tau_p)


class _VirtualFrame:
    """Accumulated action of absorbed generating pulses on pulse phases.

    Conjugation by a pi rotation about the equatorial axis ``g`` reflects
    equatorial axes, ``phase -> 2*g - phase``.  A product of such reflections
    is always ``phase -> s*phase + c`` with ``s = +/-1``; that pair is the
    whole state.
    """

    __slots__ = ("s", "c")

    def __init__(self) -> None:
        self.s = 1
        self.c = 0.0

    def apply(self, phase: float) -> float:
        return _wrap_phase(self.s * phase + self.c)

    def absorb(self, g_phase: float) -> None:
        self.c = _wrap_phase(2.0 * self.s * g_phase + self.c)
        self.s = -self.s

    @property
    def trivial(self) -> bool:
        return self.s == 1 and (self.c < 1e-9 or TWO_PI - self.c < 1e-9)


_Y_RAD = math.radians(90.0)


def _vcdd_events_asym(order: int, tau: float, tau_p: float,
                      frame: _VirtualFrame) -> list[Event]:
    # Recursion skeleton of the concatenated cycle with the generating pulses
    # replaced by frame updates; mirrors `_cdd_block` segment for segment.
    if order == 1:
        events: list[Event] = []
        for p in (0.0, _Y_RAD, 0.0, _Y_RAD):
            events.append(DelayEvent(tau))
            events.append(PulseEvent(phase=frame.apply(p), duration=tau_p))
        return events
    parts: list[list[Event]] = []
    for g in (0.0, _Y_RAD, 0.0, _Y_RAD):
        parts.append(_vcdd_events_asym(order - 1, tau, tau_p, frame))
        frame.absorb(g)
    return _concat(*parts)


def _vcdd_events_sym(order: int, tau: float, tau_p: float,
                     frame: _VirtualFrame, half: bool = False) -> list[Event]:
    # Symmetric skeleton: virtual pulses sit between half-cycles exactly where
    # the real generating pulses sit in `_cdd_block_sym` / `_cdd_half_sym`.
    # Merging the abutting tau/2 delays restores uniform pulse spacing.
    if order == 1:
        phases = (0.0, _Y_RAD) if half else (0.0, _Y_RAD, 0.0, _Y_RAD)
        events: list[Event] = [DelayEvent(0.5 * tau)]
        for k, p in enumerate(phases):
            if k > 0:
                events.append(DelayEvent(tau))
            events.append(PulseEvent(phase=frame.apply(p), duration=tau_p))
        events.append(DelayEvent(0.5 * tau))
        return events
    if half:
        kinds = (True, False, True)
        gens = (0.0, _Y_RAD)
    else:
        kinds = (True, False, False, False, True)
        gens = (0.0, _Y_RAD, 0.0, _Y_RAD)
    parts = []
    for i, sub_half in enumerate(kinds):
        parts.append(_vcdd_events_sym(order - 1, tau, tau_p, frame, sub_half))
        if i < len(gens):
            frame.absorb(gens[i])
    return _concat(*parts)


def gen_vcdd(order: int, tau: float, tau_p: float,
             symmetric: bool = False) -> SequenceProgram:
    """Concatenated cycle with a virtual generating sequence.

    The generating pulses of the concatenated construction are replaced by
    phase changes of the inner pulses, so the cycle keeps the pulse count and
    timing of the base cycle tiled 4**(order-1) times.  Order 1 equals the
    plain four-pulse cycle.
    """
    _check_order(order)
    _check_timing(tau, tau_p)
    frame = _VirtualFrame()
    if symmetric:
        events = _vcdd_events_sym(order, tau, tau_p, frame)
    else:
        events = _vcdd_events_asym(order, tau, tau_p, frame)
    if not frame.trivial:
        raise SequenceError("virtual generating sequence did not close")
    return SequenceProgram(events=tuple(events),
                           family="VCDDS" if symmetric else "VCDD",
                           order=order, symmetric=symmetric, tau=tau,
                           tau_p=tau_p)


# Composite pi pulse: phase offsets in degrees relative to the block phase.
_KNILL_DEG = [30.0, 0.0, 90.0, 0.0, 30.0]


def knill_phases(block_deg: float) -> list[float]:
    """Pulse phases (degrees) of the five-pulse composite at ``block_deg``."""
    return [(block_deg + d) % 360.0 for d in _KNILL_DEG]


def gen_kdd(tau: float, tau_p: float) -> SequenceProgram:
    """Two-axis cycle of five-pulse composites, 20 pulses per cycle.

    Every pulse is preceded by a delay tau (the composite's internal delays
    and the block seams coincide), so the cycle keeps the uniform [tau, P]
    pattern of the four-pulse cycle with each pulse replaced by a composite.
    """
    _check_timing(tau, tau_p)
    phases: list[float] = []
    for block in (0.0, 90.0, 0.0, 90.0):
        phases += knill_phases(block)
    events = _uniform_cycle(phases, tau, tau_p, symmetric=False)
    return SequenceProgram(events=tuple(events), family="KDD", tau=tau,
                           tau_p=tau_p)


def gen_kdd2(tau: float, tau_p: float) -> SequenceProgram:
    """Doubly composite cycle: composites arranged on a composite's phase
    pattern, repeated twice; 50 pulses per cycle."""
    _check_timing(tau, tau_p)
    phases: list[float] = []
    for block in _KNILL_DEG + _KNILL_DEG:
        phases += knill_phases(block)
    events = _uniform_cycle(phases, tau, tau_p, symmetric=False)
    return SequenceProgram(events=tuple(events), family="KDD2", tau=tau,
                           tau_p=tau_p)


def make_sequence(family: str, tau: float, tau_p: float = 0.0, order: int = 1,
                  symmetric: bool = False, n_pulses: int = 1) -> SequenceProgram:
    """Build a program from a family label; the CLI and config entry point."""
    fam = family.upper()
    if fam not in FAMILIES:
        raise SequenceError(f"unknown family {family!r}; choose from {FAMILIES}")
    if symmetric and fam in ("FID", "HAHN", "CPMG", "KDD", "KDD2"):
        raise SequenceError(f"{fam} has no symmetric variant")
    if fam == "FID":
        return gen_fid(tau)
    if fam == "HAHN":
        return gen_hahn(tau, tau_p)
    if fam == "CPMG":
        return gen_cpmg(tau, tau_p, n_pulses)
    if fam == "XY4":
        return gen_xy4(tau, tau_p, symmetric)
    if fam == "XY16":
        return gen_xy16(tau, tau_p, symmetric)
    if fam == "CDD":
        return gen_cdd(order, tau, tau_p, symmetric=symmetric)
    if fam == "CDDS":
        return gen_cdd(order, tau, tau_p, symmetric=True)
    if fam == "VCDD":
        return gen_vcdd(order, tau, tau_p, symmetric=symmetric)
    if fam == "VCDDS":
        return gen_vcdd(order, tau, tau_p, symmetric=True)
    if fam == "KDD":
        return gen_kdd(tau, tau_p)
    return gen_kdd2(tau, tau_p)


# ============================================================
# Program rewrites
# ============================================================

def canonicalize(program: SequenceProgram) -> SequenceProgram:
    """Canonical form: phases wrapped to [0, 2*pi) (done at construction),
    zero-length delays dropped, abutting delays merged.  Idempotent."""
    kept = [e for e in program.base_events
            if not (isinstance(e, DelayEvent) and e.duration == 0.0)]
    base = _concat(kept)
    events = tuple(base) * program.repeats
    return replace(program, events=events)


def events_equal(a: Event, b: Event, tol: float = 0.0) -> bool:
    """Compare two events, optionally within an absolute float tolerance.
    Sense is provenance and never compared."""
    if type(a) is not type(b):
        return False
    if isinstance(a, DelayEvent):
        return abs(a.duration - b.duration) <= tol
    if a.generating != b.generating:
        return False
    dph = abs(a.phase - b.phase)
    dph = min(dph, TWO_PI - dph)
    return (dph <= tol and abs(a.angle - b.angle) <= tol
            and abs(a.duration - b.duration) <= tol)


def programs_equivalent(a: SequenceProgram, b: SequenceProgram,
                        tol: float = 1e-12) -> bool:
    """Event-for-event equality of the canonical forms, within ``tol``."""
    ea, eb = canonicalize(a).events, canonicalize(b).events
    if len(ea) != len(eb):
        return False
    return all(events_equal(x, y, tol) for x, y in zip(ea, eb))


def repeat(program: SequenceProgram, n: int) -> SequenceProgram:
    """Concatenate ``n`` whole cycles.  Repetition is the only supported way
    to extend a program; cycle boundaries stay on event boundaries."""
    if not isinstance(n, int) or n < 1:
        raise SequenceError(f"repetition count must be an integer >= 1, got {n}")
    if n == 1:
        return program
    return replace(program, events=program.events * n,
                   repeats=program.repeats * n)


def virtualize(program: SequenceProgram) -> SequenceProgram:
    """Rewrite a tagged concatenated cycle into its virtual-pulse form.

    Each generating pulse is commuted toward the end of the cycle; commuting a
    pi pulse about ``g`` past a later pulse about ``p`` reflects the later
    axis, ``p -> 2*g - p``.  The accumulated generating product must close to
    the identity (up to global phase) at the cycle end, where it is dropped.
    Delays left abutting by a removed pulse are merged, so the output timing
    is the uniformly tiled base cycle.

    The unitary generated by the output (instantaneous ideal pulses) equals
    the input's; `gen_vcdd` builds the same program directly.
    """
    has_tags = any(isinstance(e, PulseEvent) and e.generating
                   for e in program.events)
    if not has_tags:
        if program.family in ("CDD", "CDDS") and program.order >= 2:
            raise SequenceError(
                "concatenated program has no tagged generating pulses")
        return program  # nothing to rewrite
    if program.repeats != 1:
        raise SequenceError("virtualize expects a single cycle, not a train")
    frame = _VirtualFrame()
    out: list[Event] = []
    for ev in program.events:
        if isinstance(ev, PulseEvent):
            if ev.generating:
                frame.absorb(ev.phase)
                continue
            ev = PulseEvent(phase=frame.apply(ev.phase), angle=ev.angle,
                            duration=ev.duration)
        if out and isinstance(ev, DelayEvent) and isinstance(out[-1], DelayEvent):
            out[-1] = DelayEvent(out[-1].duration + ev.duration)
        else:
            out.append(ev)
    if not frame.trivial:
        raise SequenceError("generating pulses do not close to the identity; "
                            "virtualize needs whole concatenated cycles")
    family = {"CDD": "VCDD", "CDDS": "VCDDS"}.get(program.family,
                                                  program.family)
    return replace(program, events=tuple(out), family=family)


# ============================================================
# Text format
# ============================================================

def _exact_degrees(rad: float) -> float:
    """Degree value whose parse maps back to ``rad`` exactly.

    Searches the few representable degree floats around the rounded
    conversion; every phase this library generates has such a preimage.  For
    pathological hand-built phases the nearest value is used (round trip then
    differs by <= 1 ulp).
    """
    d = math.degrees(rad)
    if math.radians(d) == rad:
        return d
    for k in range(1, 4):
        for direction in (math.inf, -math.inf):
            cand = d
            for _ in range(k):
                cand = math.nextafter(cand, direction)
            if math.radians(cand) == rad:
                return cand
    return d


def write_sequence(program: SequenceProgram) -> str:
    """Serialize to the line format::

        #family XY4
        #order 1
        #symmetric 0
        #tau 1e-05
        #tau_p 0.0
        #repeats 1
        D 1e-05
        P 0.0 180.0 0.0 [G]

    ``P`` lines carry phase and angle in degrees and duration in seconds; a
    trailing ``G`` marks a generating pulse.  `read_sequence` inverts this
    bit-exactly for library-generated programs.
    """
    lines = [
        f"#family {program.family}",
        f"#order {program.order}",
        f"#symmetric {int(program.symmetric)}",
        f"#tau {program.tau!r}",
        f"#tau_p {program.tau_p!r}",
        f"#repeats {program.repeats}",
    ]
    for ev in program.events:
        if isinstance(ev, DelayEvent):
            lines.append(f"D {ev.duration!r}")
        else:
            ph = _exact_degrees(ev.phase)
            an = _exact_degrees(ev.angle)
            tag = " G" if ev.generating else ""
            lines.append(f"P {ph!r} {an!r} {ev.duration!r}{tag}")
    return "\n".join(lines) + "\n"


class SequenceParseError(ValueError):
    """Malformed sequence text; the message carries the line number."""


def read_sequence(text: str) -> SequenceProgram:
    """Parse the `write_sequence` format."""
    header: dict[str, str] = {}
    events: list[Event] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split(None, 1)
            if len(parts) != 2:
                raise SequenceParseError(f"line {lineno}: malformed header {raw!r}")
            header[parts[0]] = parts[1].strip()
            continue
        fields = line.split()
        try:
            if fields[0] == "D":
                if len(fields) != 2:
                    raise ValueError
                events.append(DelayEvent(float(fields[1])))
            elif fields[0] == "P":
                if len(fields) == 5 and fields[4] == "G":
                    generating = True
                elif len(fields) == 4:
                    generating = False
                else:
                    raise ValueError
                events.append(PulseEvent(phase=math.radians(float(fields[1])),
                                         angle=math.radians(float(fields[2])),
                                         duration=float(fields[3]),
                                         generating=generating))
            else:
                raise ValueError
        except (ValueError, SequenceError) as exc:
            raise SequenceParseError(
                f"line {lineno}: malformed event line {raw!r}") from exc
    if "family" not in header:
        raise SequenceParseError("missing required header '#family'")
    try:
        return SequenceProgram(
            events=tuple(events),
            family=header.get("family", "FID"),
            order=int(header.get("order", "0")),
            symmetric=bool(int(header.get("symmetric", "0"))),
            tau=float(header.get("tau", "0")),
            tau_p=float(header.get("tau_p", "0")),
            repeats=int(header.get("repeats", "1")),
        )
    except (ValueError, SequenceError) as exc:
        raise SequenceParseError(f"bad header values: {exc}") from exc
