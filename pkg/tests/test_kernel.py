"""Propagation kernel: closed-form rotations, exact noise advance, ensembles."""

import math

import numpy as np
import pytest

from ddkit.kernel import (
    ControlErrors,
    KernelError,
    curve_to_text,
    cycle_propagator,
    ensemble_signal,
    evolve,
    ideal_equivalence,
    propagator_deviation,
    segment_propagator,
)
from ddkit.noise import OUParams, fid_coherence, ou_trajectory
from ddkit.sequences import (
    cycle_time,
    gen_cdd,
    gen_cpmg,
    gen_fid,
    gen_hahn,
    gen_vcdd,
    gen_xy4,
    knill_phases,
    repeat,
)

TAU = 90e-6
TP = 10e-6
OU = OUParams(b_rms=7000.0, tau_c=100e-6, seed=3)


def _apply(u, axis="x"):
    """Bloch vector after u acting on a superposition state along axis."""
    a0 = 1.0 / math.sqrt(2.0)
    b0 = a0 if axis == "x" else 1j * a0
    a = u[0, 0] * a0 + u[0, 1] * b0
    b = u[1, 0] * a0 + u[1, 1] * b0
    ab = np.conj(a) * b
    return 2.0 * ab.real, 2.0 * ab.imag, abs(a) ** 2 - abs(b) ** 2


class TestSegmentPropagator:
    def test_delay_is_z_rotation(self):
        phi = (300.0 + 1200.0) * 2e-5
        u = segment_propagator("delay", [1200.0], ControlErrors(offset=300.0),
                               2e-5)
        want = np.diag([np.exp(-0.5j * phi), np.exp(0.5j * phi)])
        assert np.allclose(u, want, atol=1e-15)

    def test_delta_pulse_flips_z(self):
        u = segment_propagator("pulse", [0.0], ControlErrors(), 0.0)
        z0 = np.array([1.0, 0.0], dtype=complex)
        z1 = u @ z0
        assert abs(z1[0]) < 1e-15
        assert abs(abs(z1[1]) - 1.0) < 1e-15

    def test_finite_pulse_zero_field_matches_delta(self):
        errs = ControlErrors(flip_fraction=0.02)
        a = segment_propagator("pulse", np.zeros(8), errs, TP, phase=0.7)
        b = segment_propagator("pulse", [0.0], errs, 0.0, phase=0.7)
        assert np.allclose(a, b, atol=1e-12)

    def test_flip_error_scales_angle(self):
        eps = 0.03
        u = segment_propagator("pulse", [0.0], ControlErrors(flip_fraction=eps),
                               0.0)
        # trace of a rotation by theta is 2 cos(theta / 2)
        assert np.trace(u).real == pytest.approx(
            2.0 * math.cos(0.5 * math.pi * (1.0 + eps)), abs=1e-12)

    def test_unitary_with_field_on(self):
        u = segment_propagator("pulse", [5000.0, -3000.0, 800.0],
                               ControlErrors(offset=2000.0), TP)
        assert np.allclose(u.conj().T @ u, np.eye(2), atol=1e-12)

    def test_rejects_bad_kind_and_duration(self):
        with pytest.raises(KernelError):
            segment_propagator("drive", [0.0], ControlErrors(), TP)
        with pytest.raises(KernelError):
            segment_propagator("delay", [0.0], ControlErrors(), -1e-6)

    def test_rejects_negative_inhomogeneity(self):
        with pytest.raises(KernelError):
            ControlErrors(inhomogeneity_rms=-0.1)


class TestCyclePropagator:
    @pytest.mark.parametrize("b", [-9000.0, -1000.0, 2500.0, 14000.0])
    def test_xy4_refocuses_static_field(self, b):
        # sqrt(4 - 2|tr|) amplifies trace rounding, floor is sqrt(eps)
        u = cycle_propagator(gen_xy4(TAU, 0.0), static_b=b)
        assert propagator_deviation(u) < 1e-7

    @pytest.mark.parametrize("b", [-5000.0, 3000.0, 11000.0])
    def test_hahn_echo_revives_x(self, b):
        sx, _, _ = _apply(cycle_propagator(gen_hahn(TAU), static_b=b))
        assert sx == pytest.approx(1.0, abs=1e-12)

    def test_fid_dephases_by_accumulated_phase(self):
        b = 4000.0
        sx, sy, _ = _apply(cycle_propagator(gen_fid(TAU), static_b=b))
        assert sx == pytest.approx(math.cos(b * TAU), abs=1e-12)
        assert sy == pytest.approx(math.sin(b * TAU), abs=1e-12)

    def test_matches_evolve_for_static_offset(self):
        prog = repeat(gen_xy4(TAU, TP), 3)
        errs = ControlErrors(flip_fraction=0.04, offset=1500.0)
        want = _apply(cycle_propagator(prog, errs))
        got = evolve(prog, None, errs)[-1][1]
        assert got == pytest.approx(want, abs=1e-9)


class TestEvolve:
    def test_fid_without_noise_stays_put(self):
        out = evolve(repeat(gen_fid(TAU), 5), None, sample_at="events")
        for _, r in out:
            assert r == pytest.approx((1.0, 0.0, 0.0), abs=1e-15)

    @pytest.mark.parametrize("phase_per_tau", [0.1, 0.3])
    def test_xy4_delta_refocuses_offset(self, phase_per_tau):
        # criterion: delta-pulse XY4 restores the signal for offsets up to
        # 0.3 rad of precession per delay
        errs = ControlErrors(offset=phase_per_tau / TAU)
        out = evolve(repeat(gen_xy4(TAU, 0.0), 4), None, errs)
        assert out[-1][1][0] == pytest.approx(1.0, abs=1e-9)

    def test_sampling_modes(self):
        prog = repeat(gen_xy4(TAU, TP), 3)
        cycles = evolve(prog, None)
        events = evolve(prog, None, sample_at="events")
        assert len(cycles) == 4
        assert len(events) == len(prog.events) + 1
        assert cycles[-1][0] == pytest.approx(cycle_time(prog), rel=1e-12)

    def test_rejects_short_trajectory(self):
        traj = ou_trajectory(OU, 100e-6, 10e-6)
        with pytest.raises(KernelError, match="trajectory ends"):
            evolve(repeat(gen_xy4(TAU, TP), 3), traj)

    def test_rejects_bad_arguments(self):
        with pytest.raises(KernelError):
            evolve(gen_fid(TAU), None, init_axis="z")
        with pytest.raises(KernelError):
            evolve(gen_fid(TAU), None, sample_at="end")
        with pytest.raises(KernelError):
            evolve(gen_fid(TAU), None, refine=0)

    def test_unitarity_over_many_segments(self):
        prog = repeat(gen_xy4(TAU, TP), 1250)
        out = evolve(prog, None, ControlErrors(flip_fraction=0.05,
                                               offset=3000.0),
                     sample_at="events")
        assert len(out) - 1 == 10_000
        drift = max(abs(math.hypot(math.hypot(r[0], r[1]), r[2]) - 1.0)
                    for _, r in out)
        assert drift < 1e-9

    def test_substep_refinement_converges(self):
        # pulses start on trajectory grid edges at the operating point, so
        # the piecewise-constant field is already resolved exactly
        errs = ControlErrors(flip_fraction=0.05, offset=2 * math.pi * 1000)
        prog = repeat(gen_xy4(TAU, TP), 4)
        worst = 0.0
        for i in range(10):
            traj = ou_trajectory(OU, cycle_time(prog) * 1.01, OU.tau_c / 10,
                                 index=i)
            s1 = evolve(prog, traj, errs)[-1][1]
            s2 = evolve(prog, traj, errs, refine=2)[-1][1]
            worst = max(worst, max(abs(p - q) for p, q in zip(s1, s2)))
        assert worst < 1e-4

    def test_substep_error_shrinks_when_misaligned(self):
        # tau = 95 us pushes pulse interiors across grid edges; the
        # held-field error is first order in the substep length
        errs = ControlErrors(flip_fraction=0.05, offset=2 * math.pi * 1000)
        prog = repeat(gen_xy4(95e-6, TP), 4)
        d12, d24 = 0.0, 0.0
        for i in range(10):
            traj = ou_trajectory(OU, cycle_time(prog) * 1.01, OU.tau_c / 50,
                                 index=i)
            s1 = evolve(prog, traj, errs)[-1][1]
            s2 = evolve(prog, traj, errs, refine=2)[-1][1]
            s4 = evolve(prog, traj, errs, refine=4)[-1][1]
            d12 = max(d12, max(abs(p - q) for p, q in zip(s1, s2)))
            d24 = max(d24, max(abs(p - q) for p, q in zip(s2, s4)))
        assert 0.0 < d24 < d12 < 0.02


class TestEnsembleSignal:
    def test_noise_free_ensemble_is_unity(self):
        quiet = OUParams(b_rms=0.0, tau_c=100e-6, seed=0)
        curve = ensemble_signal(repeat(gen_xy4(TAU, TP), 5), quiet, n_traj=3)
        assert np.allclose(curve.signal_mean, 1.0, atol=1e-12)
        # stderr floor comes from rounding in the compensated mean
        assert np.all(curve.signal_stderr < 1e-15)

    def test_fid_matches_analytic_coherence(self):
        curve = ensemble_signal(repeat(gen_fid(50e-6), 12), OU, n_traj=4000)
        want = fid_coherence(OU, curve.times)
        z = np.abs(curve.signal_mean - want) / np.where(
            curve.signal_stderr > 0.0, curve.signal_stderr, 1.0)
        assert z.max() < 3.0

    def test_chunk_invariance(self):
        prog = repeat(gen_xy4(TAU, TP), 3)
        errs = ControlErrors(flip_fraction=0.02, inhomogeneity_rms=0.05)
        base = ensemble_signal(prog, OU, errs, n_traj=300)
        for chunk in (7, 64, 299):
            again = ensemble_signal(prog, OU, errs, n_traj=300, chunk=chunk)
            assert np.array_equal(base.signal_mean, again.signal_mean)
            assert np.array_equal(base.signal_stderr, again.signal_stderr)

    def test_deterministic_and_seed_sensitive(self):
        prog = repeat(gen_hahn(TAU, TP), 4)
        one = ensemble_signal(prog, OU, n_traj=200)
        two = ensemble_signal(prog, OU, n_traj=200)
        other = ensemble_signal(prog, OU, n_traj=200, master_seed=11)
        assert np.array_equal(one.signal_mean, two.signal_mean)
        assert not np.array_equal(one.signal_mean, other.signal_mean)
        assert "seed=3" in one.digest and "seed=11" in other.digest

    def test_times_and_bounds(self):
        prog = repeat(gen_xy4(TAU, TP), 6)
        curve = ensemble_signal(prog, OU, n_traj=400)
        base = cycle_time(gen_xy4(TAU, TP))
        assert curve.times == pytest.approx(base * np.arange(7), rel=1e-12)
        assert np.all(np.abs(curve.signal_mean) <= 1.0 + 1e-12)
        assert np.all(curve.signal_stderr[1:] > 0.0)
        assert curve.n_traj == 400
        assert "family=XY4" in curve.digest

    def test_xy_initial_states_agree(self):
        # same master seed, so the residual is physics not sampling
        prog = repeat(gen_xy4(40e-6, TP), 10)
        errs = ControlErrors(flip_fraction=0.05, offset=2 * math.pi * 500,
                             inhomogeneity_rms=0.10)
        px = ensemble_signal(prog, OU, errs, init_axis="x", n_traj=2000)
        py = ensemble_signal(prog, OU, errs, init_axis="y", n_traj=2000)
        diff = np.abs(px.signal_mean - py.signal_mean)
        comb = np.hypot(px.signal_stderr, py.signal_stderr)
        assert diff.max() < 0.05
        assert (diff / np.where(comb > 0.0, comb, 1.0)).max() < 3.0

    def test_rejects_bad_arguments(self):
        with pytest.raises(KernelError):
            ensemble_signal(gen_fid(TAU), OU, n_traj=0)
        with pytest.raises(KernelError):
            ensemble_signal(gen_fid(TAU), OU, init_axis="z")


class TestErrorScaling:
    EPS = np.array([1e-3, 3e-3, 1e-2, 3e-2])

    @staticmethod
    def _slope(devs):
        return np.polyfit(np.log(TestErrorScaling.EPS), np.log(devs), 1)[0]

    @staticmethod
    def _dev_curve(prog):
        ideal = cycle_propagator(prog)
        return [propagator_deviation(
            cycle_propagator(prog, ControlErrors(flip_fraction=e)), ideal)
            for e in TestErrorScaling.EPS]

    def test_single_pulse_is_first_order(self):
        slope = self._slope(self._dev_curve(gen_cpmg(0.0, 0.0, 1)))
        assert slope == pytest.approx(1.0, abs=0.1)

    def test_xy4_is_second_order(self):
        assert self._slope(self._dev_curve(gen_xy4(0.0, 0.0))) >= 1.9

    def test_vcdd2_sub_blocks_are_second_order(self):
        pulses = gen_vcdd(2, 0.0, 0.0).pulses
        assert len(pulses) == 16
        for w in range(4):
            devs = []
            ideal = None
            for e in [0.0, *self.EPS]:
                u = np.eye(2, dtype=complex)
                for p in pulses[4 * w:4 * w + 4]:
                    u = segment_propagator(
                        "pulse", [0.0], ControlErrors(flip_fraction=e),
                        0.0, phase=p.phase) @ u
                if ideal is None:
                    ideal = u
                else:
                    devs.append(propagator_deviation(u, ideal))
            assert self._slope(devs) >= 1.9

    def test_knill_composite_is_second_order(self):
        phases = [math.radians(d) for d in knill_phases(0.0)]
        devs = []
        ideal = None
        for e in [0.0, *self.EPS]:
            u = np.eye(2, dtype=complex)
            for ph in phases:
                u = segment_propagator(
                    "pulse", [0.0], ControlErrors(flip_fraction=e),
                    0.0, phase=ph) @ u
            if ideal is None:
                ideal = u
            else:
                devs.append(propagator_deviation(u, ideal))
        assert self._slope(devs) >= 1.9


class TestIdealEquivalence:
    FIELDS = np.linspace(-14000.0, 14000.0, 5)

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_cdd_matches_its_virtualization(self, n):
        v = ideal_equivalence(gen_cdd(n, TAU, 0.0), gen_vcdd(n, TAU, 0.0),
                              self.FIELDS)
        assert v < 1e-10

    def test_identical_programs_score_zero(self):
        prog = gen_xy4(TAU, 0.0)
        assert ideal_equivalence(prog, prog, self.FIELDS) < 1e-12

    def test_distinct_programs_score_high(self):
        v = ideal_equivalence(gen_hahn(TAU), gen_fid(2 * TAU), self.FIELDS)
        assert v > 1e-3

    def test_rejects_finite_pulses(self):
        with pytest.raises(KernelError, match="zero-length"):
            ideal_equivalence(gen_xy4(TAU, TP), gen_xy4(TAU, TP), self.FIELDS)


class TestCurveText:
    def test_three_column_format(self):
        curve = ensemble_signal(repeat(gen_hahn(TAU, TP), 3), OU, n_traj=50)
        text = curve_to_text(curve)
        lines = text.strip().split("\n")
        assert len(lines) == 4
        for line, t, s, e in zip(lines, curve.times, curve.signal_mean,
                                 curve.signal_stderr):
            ft, fs, fe = (float(tok) for tok in line.split())
            assert (ft, fs, fe) == (t, s, e)
