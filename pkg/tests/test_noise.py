"""Unit tests for the stochastic dephasing field."""

import math

import numpy as np
import pytest

from ddkit.noise import (
    NoiseError,
    OUParams,
    fid_coherence,
    ou_psd,
    ou_step_factors,
    ou_trajectory,
    trajectory_seed,
    trajectory_to_text,
)

PARAMS = OUParams(b_rms=7000.0, tau_c=100e-6, seed=3)


def test_parameter_validation():
    with pytest.raises(NoiseError):
        OUParams(b_rms=-1.0, tau_c=1e-4)
    with pytest.raises(NoiseError):
        OUParams(b_rms=1.0, tau_c=0.0)
    with pytest.raises(NoiseError):
        OUParams(b_rms=1.0, tau_c=1e-4, seed="abc")
    with pytest.raises(NoiseError):
        ou_trajectory(PARAMS, duration=0.0, dt=1e-6)
    with pytest.raises(NoiseError):
        # coarser than tau_c / 10
        ou_trajectory(PARAMS, duration=1e-3, dt=2e-5)


def test_zero_field_is_identically_zero():
    traj = ou_trajectory(OUParams(0.0, 1e-4, 1), duration=1e-3, dt=1e-5)
    assert np.all(traj.values == 0.0)


def test_grid_covers_duration():
    traj = ou_trajectory(PARAMS, duration=9.5e-5, dt=1e-5)
    assert traj.times[0] == 0.0
    assert traj.times[-1] >= 9.5e-5
    assert (np.diff(traj.times) > 0).all()
    assert np.isfinite(traj.values).all()


def test_frozen_noise_limit():
    # correlation time vastly longer than the window: the field is static
    slow = OUParams(b_rms=7000.0, tau_c=1e4, seed=11)
    traj = ou_trajectory(slow, duration=1e-3, dt=1e-4)
    drift = np.abs(traj.values - traj.values[0]).max()
    assert drift < 1e-3 * slow.b_rms


def test_deterministic_and_index_independent():
    a = ou_trajectory(PARAMS, 1e-3, 1e-5, index=5)
    b = ou_trajectory(PARAMS, 1e-3, 1e-5, index=5)
    c = ou_trajectory(PARAMS, 1e-3, 1e-5, index=6)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_update_rule_reproduces_trajectory():
    """The published recursion applied to the documented seed stream must
    reproduce ou_trajectory sample for sample."""
    traj = ou_trajectory(PARAMS, 5e-4, 1e-5, index=9)
    rng = np.random.default_rng(trajectory_seed(PARAMS.seed, 9))
    xi = rng.standard_normal(traj.values.size)
    rho = math.exp(-1e-5 / PARAMS.tau_c)
    sigma = PARAMS.b_rms * math.sqrt(1.0 - rho ** 2)
    b = PARAMS.b_rms * xi[0]
    assert traj.values[0] == b
    for k in range(1, xi.size):
        b = b * rho + sigma * xi[k]
        assert traj.values[k] == pytest.approx(b, rel=1e-12)


def test_step_factors_limits():
    rho, sigma = ou_step_factors(PARAMS, np.array([0.0, 1e-9, 1e3]))
    assert rho[0] == 1.0 and sigma[0] == 0.0
    # short step: sigma ~ b sqrt(2 dt / tau_c), no cancellation loss
    expect = PARAMS.b_rms * math.sqrt(2e-9 / PARAMS.tau_c)
    assert sigma[1] == pytest.approx(expect, rel=2e-5)
    assert rho[2] == 0.0 and sigma[2] == PARAMS.b_rms
    with pytest.raises(NoiseError):
        ou_step_factors(PARAMS, np.array([-1e-6]))


def test_ensemble_moments_and_autocorrelation():
    n_traj, lag = 20_000, 10
    first = np.empty(n_traj)
    at_lag = np.empty(n_traj)
    for i in range(n_traj):
        traj = ou_trajectory(PARAMS, 2 * PARAMS.tau_c, PARAMS.tau_c / 10,
                             index=i)
        first[i] = traj.values[0]
        at_lag[i] = traj.values[lag]
    se_mean = first.std(ddof=1) / math.sqrt(n_traj)
    assert abs(first.mean()) < 3 * se_mean
    var = first.var(ddof=1)
    se_var = var * math.sqrt(2.0 / (n_traj - 1))
    assert abs(var - PARAMS.b_rms ** 2) < 3 * se_var
    prod = first * at_lag
    se_ac = prod.std(ddof=1) / math.sqrt(n_traj)
    assert abs(prod.mean() - PARAMS.b_rms ** 2 / math.e) < 3 * se_ac


def test_psd_shape_and_total_power():
    peak = ou_psd(PARAMS, 0.0)
    assert peak == 2.0 * PARAMS.b_rms ** 2 * PARAMS.tau_c
    assert ou_psd(PARAMS, 1.0 / PARAMS.tau_c) == pytest.approx(peak / 2)
    from scipy.integrate import quad
    total, _ = quad(lambda w: ou_psd(PARAMS, w), -np.inf, np.inf)
    assert total / (2 * math.pi) == pytest.approx(PARAMS.b_rms ** 2,
                                                  rel=1e-4)


def test_coherence_limits():
    ts = np.array([1e-7, 3e-7, 1e-6])
    gauss = np.exp(-0.5 * PARAMS.b_rms ** 2 * ts ** 2)
    assert np.allclose(fid_coherence(PARAMS, ts), gauss, rtol=1e-5)
    # motional-narrowed tail: pure exponential at rate b^2 tau_c
    t1, t2 = 30 * PARAMS.tau_c, 60 * PARAMS.tau_c
    ratio = fid_coherence(PARAMS, t2) / fid_coherence(PARAMS, t1)
    assert math.log(ratio) == pytest.approx(
        -PARAMS.b_rms ** 2 * PARAMS.tau_c * (t2 - t1), rel=1e-6)
    dense = fid_coherence(PARAMS, np.linspace(0.0, 1e-3, 200))
    assert (np.diff(dense) < 0).all() and dense[0] == 1.0


def test_trajectory_text_round_trip():
    traj = ou_trajectory(PARAMS, 1e-4, 1e-5, index=2)
    rows = [ln.split() for ln in trajectory_to_text(traj).strip().splitlines()]
    assert len(rows) == traj.times.size
    assert [float(r[0]) for r in rows] == traj.times.tolist()
    assert [float(r[1]) for r in rows] == traj.values.tolist()
