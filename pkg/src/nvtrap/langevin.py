"""Overdamped Brownian motion of the trapped particle.

Produces the five-segment position traces the measurement pipeline
consumes: 10 s at the parking laser alone, then parking plus blue,
plus reference, plus red probes, then parking alone again. Motion is
an Ornstein-Uhlenbeck process per segment; only the stiffness changes
at segment boundaries.

Stiffness convention: the trap potential is U = kappa x^2, so the
restoring constant is 2*kappa by default. The alternative F = -kappa x
convention stays available behind the `restoring` flag, and the
flag-aware true corner frequency lives in `true_corner_frequency`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import k as K_BOLTZMANN
from scipy.signal import lfilter

SEGMENT_LABELS = ("660", "660+blue", "660+ref", "660+red", "660")
RESTORING_FACTORS = {"two_kappa": 2.0, "kappa": 1.0}


@dataclass(frozen=True)
class FluidEnvironment:
    temperature: float = 295.0
    viscosity: float = 8.9e-4
    drag_model: str = "stokes"

    def __post_init__(self):
        if self.temperature <= 0 or self.viscosity <= 0:
            raise ValueError("temperature and viscosity must be positive")
        if self.drag_model != "stokes":
            raise ValueError("only the stokes drag model is implemented")


@dataclass(frozen=True)
class SegmentedAcquisition:
    dt: float
    samples: np.ndarray
    segment_labels: tuple = SEGMENT_LABELS
    segment_duration: float = 10.0

    def segment_slices(self):
        per = int(round(self.segment_duration / self.dt))
        return [
            (label, slice(i * per, (i + 1) * per))
            for i, label in enumerate(self.segment_labels)
        ]


def drag_coefficient(radius: float, env: FluidEnvironment) -> float:
    """Stokes drag of a sphere, kg/s."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    return 6.0 * math.pi * env.viscosity * radius


def corner_frequency_truth(kappa: float, beta: float) -> float:
    # the measurement-side conversion kappa = 2 pi beta f_c, inverted
    return kappa / (2.0 * math.pi * beta)


def true_corner_frequency(
    kappa: float, beta: float, restoring: str = "two_kappa"
) -> float:
    """Actual spectral corner of a trace simulated at model stiffness kappa."""
    return RESTORING_FACTORS[restoring] * kappa / (2.0 * math.pi * beta)


def ou_stationary_variance(
    kappa: float, env: FluidEnvironment, restoring: str = "two_kappa"
) -> float:
    return K_BOLTZMANN * env.temperature / (RESTORING_FACTORS[restoring] * kappa)


def simulate_trace(
    kappa_per_segment,
    radius: float,
    env: FluidEnvironment,
    dt: float = 1e-5,
    seed: int = 0,
    restoring: str = "two_kappa",
    segment_duration: float = 10.0,
    integrator: str = "euler",
    kappa_step: tuple[float, float] | None = None,
    readout_noise_sd: float = 0.0,
) -> SegmentedAcquisition:
    """Five-segment overdamped Langevin trace, deterministic per seed.

    `kappa_step=(t_s, factor)` multiplies the stiffness by `factor` from
    time t_s onward, emulating an anomalous event such as a second
    particle joining the trap. `integrator` is "euler" (Euler-Maruyama)
    or "exact" (exact OU update over each step).
    """
    kappas = np.asarray(kappa_per_segment, dtype=float)
    if kappas.shape != (len(SEGMENT_LABELS),):
        raise ValueError(f"expected {len(SEGMENT_LABELS)} stiffness values")
    if np.any(kappas <= 0):
        raise ValueError("all stiffness values must be positive")
    if restoring not in RESTORING_FACTORS:
        raise ValueError("restoring must be 'two_kappa' or 'kappa'")
    if integrator not in ("euler", "exact"):
        raise ValueError("integrator must be 'euler' or 'exact'")

    factor = RESTORING_FACTORS[restoring]
    beta = drag_coefficient(radius, env)
    k_restoring = factor * kappas
    # Euler stability guard, stated in terms of the actual restoring constant
    if dt > 0.1 * beta / k_restoring.max():
        raise ValueError(
            f"dt={dt:g} violates the stability bound 0.1*beta/k = "
            f"{0.1 * beta / k_restoring.max():g} s"
        )

    per = int(round(segment_duration / dt))
    # runs of constant stiffness: five segments, optionally split by the step
    runs = [(per, k) for k in k_restoring]
    if kappa_step is not None:
        t_step, mult = kappa_step
        idx = int(round(t_step / dt))
        total = per * len(runs)
        if not 0 < idx < total:
            raise ValueError("kappa_step time outside the trace")
        new_runs, start = [], 0
        for length, k in runs:
            end = start + length
            if start < idx < end:
                new_runs.append((idx - start, k))
                new_runs.append((end - idx, k * mult))
            elif start >= idx:
                new_runs.append((length, k * mult))
            else:
                new_runs.append((length, k))
            start = end
        runs = new_runs

    rng = np.random.default_rng(seed)
    kbt = K_BOLTZMANN * env.temperature
    x_prev = rng.normal(0.0, math.sqrt(kbt / runs[0][1]))
    chunks = []
    for length, k in runs:
        theta = k / beta
        if integrator == "euler":
            a = 1.0 - theta * dt
            noise_sd = math.sqrt(2.0 * kbt * dt / beta)
        else:
            a = math.exp(-theta * dt)
            noise_sd = math.sqrt(kbt / k * (1.0 - a * a))
        drive = rng.normal(0.0, noise_sd, size=length)
        # AR(1) recursion x[i] = a x[i-1] + drive[i] as an IIR filter
        zi = np.array([a * x_prev])
        xs, _ = lfilter([1.0], [1.0, -a], drive, zi=zi)
        chunks.append(xs)
        x_prev = xs[-1]

    samples = np.concatenate(chunks)
    if readout_noise_sd > 0.0:
        samples = samples + rng.normal(0.0, readout_noise_sd, size=samples.size)
    return SegmentedAcquisition(
        dt=dt, samples=samples, segment_duration=segment_duration
    )
