"""Stochastic dephasing fields.

The bath is modelled as a classical Ornstein-Uhlenbeck process b_z(t):
stationary, Gaussian, zero mean, variance b_rms^2, exponential
autocovariance with correlation time tau_c, Lorentzian power spectrum.
Sampling uses the exact conditional update

    b_{k+1} = b_k e^{-dt/tau_c} + b_rms sqrt(1 - e^{-2 dt/tau_c}) xi_k

with xi_k standard normal, so the discretization introduces no bias at any
step size.  Static per-trajectory deviates (field inhomogeneity) share the
same seed-derivation scheme on a separate stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "NoiseError", "OUParams", "NoiseTrajectory", "trajectory_seed",
    "ou_step_factors", "ou_trajectory", "ou_psd", "fid_coherence",
    "trajectory_to_text",
]


class NoiseError(ValueError):
    """Invalid noise parameters or sampling request."""


@dataclass(frozen=True)
class OUParams:
    """Ornstein-Uhlenbeck field parameters.

    b_rms is the stationary standard deviation in rad/s, tau_c the
    correlation time in seconds, seed the 64-bit master seed from which all
    trajectory streams derive.
    """

    b_rms: float
    tau_c: float
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.b_rms >= 0.0:
            raise NoiseError(f"b_rms must be >= 0, got {self.b_rms}")
        if not self.tau_c > 0.0:
            raise NoiseError(f"tau_c must be > 0, got {self.tau_c}")
        if not isinstance(self.seed, int):
            raise NoiseError(f"seed must be an integer, got {self.seed!r}")


@dataclass(frozen=True)
class NoiseTrajectory:
    times: np.ndarray
    values: np.ndarray
    params: OUParams


def trajectory_seed(seed: int, index: int,
                    stream: int = 0) -> np.random.SeedSequence:
    """Seed stream of trajectory `index` under master `seed`.

    Stream 0 drives the fluctuating field, stream 1 the static
    per-trajectory deviates; distinct (index, stream) pairs give
    statistically independent generators and any subset can be produced in
    isolation, so ensembles parallelize without coordination.
    """
    return np.random.SeedSequence(seed, spawn_key=(index, stream))


def ou_step_factors(params: OUParams,
                    dts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Decay factor and innovation scale of the exact update for each step.

    Returns (rho, sigma) with rho = e^{-dt/tau_c} and
    sigma = b_rms sqrt(1 - e^{-2 dt/tau_c}); the latter is computed through
    expm1 so short steps keep full precision.
    """
    dts = np.asarray(dts, dtype=float)
    if (dts < 0.0).any():
        raise NoiseError("step lengths must be >= 0")
    rho = np.exp(-dts / params.tau_c)
    sigma = params.b_rms * np.sqrt(-np.expm1(-2.0 * dts / params.tau_c))
    return rho, sigma


def ou_trajectory(params: OUParams, duration: float, dt: float,
                  index: int = 0) -> NoiseTrajectory:
    """Sample one trajectory of b_z on a uniform grid covering [0, duration].

    b_0 is drawn from the stationary distribution, so any window of the
    trajectory is statistically identical.  dt must not exceed tau_c / 10;
    a coarser grid would hide decorrelation between samples from downstream
    consumers.  Fully determined by (params.seed, index).
    """
    if not duration > 0.0:
        raise NoiseError(f"duration must be > 0, got {duration}")
    if not 0.0 < dt <= params.tau_c / 10.0:
        raise NoiseError(
            f"dt must satisfy 0 < dt <= tau_c/10 = {params.tau_c / 10.0:g}, "
            f"got {dt}")
    n = int(math.ceil(duration / dt))
    times = dt * np.arange(n + 1)
    if params.b_rms == 0.0:
        return NoiseTrajectory(times=times, values=np.zeros(n + 1),
                               params=params)
    rng = np.random.default_rng(trajectory_seed(params.seed, index))
    xi = rng.standard_normal(n + 1)
    rho = math.exp(-dt / params.tau_c)
    sigma = params.b_rms * math.sqrt(-math.expm1(-2.0 * dt / params.tau_c))
    values = np.empty(n + 1)
    values[0] = params.b_rms * xi[0]
    for k in range(n):
        values[k + 1] = values[k] * rho + sigma * xi[k + 1]
    return NoiseTrajectory(times=times, values=values, params=params)


def ou_psd(params: OUParams, omega) -> np.ndarray | float:
    """Two-sided power spectral density S(w) = 2 b_rms^2 tau_c / (1 + w^2 tau_c^2)."""
    wt = np.asarray(omega, dtype=float) * params.tau_c
    out = 2.0 * params.b_rms ** 2 * params.tau_c / (1.0 + wt ** 2)
    return out if out.ndim else float(out)


def fid_coherence(params: OUParams, times) -> np.ndarray | float:
    """Ensemble-average free-evolution signal under the OU field.

    <cos(phi(t))> for the Gaussian phase phi = integral of b_z, i.e.
    exp(-b_rms^2 tau_c^2 (t/tau_c - 1 + e^{-t/tau_c})): Gaussian decay for
    t << tau_c, exponential with rate b_rms^2 tau_c for t >> tau_c.
    """
    t = np.asarray(times, dtype=float) / params.tau_c
    g = t + np.expm1(-t)
    out = np.exp(-(params.b_rms * params.tau_c) ** 2 * g)
    return out if out.ndim else float(out)


def trajectory_to_text(traj: NoiseTrajectory) -> str:
    """Two columns: t b."""
    lines = [f"{float(t)!r} {float(b)!r}"
             for t, b in zip(traj.times, traj.values)]
    return "\n".join(lines) + "\n"
