"""Trap composition and the spectroscopic observables.

The total stiffness splits into a classical Rayleigh part from the
diamond matrix and a quantum part from the embedded emitters, either
treated as independent (closed form) or cooperatively (delegated to the
collective solver). Experimental observables are stiffness ratio curves
normalized at a reference wavelength and their high/low-doping
difference Xi.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.constants import c as C_LIGHT
from scipy.constants import epsilon_0 as EPS0
from scipy.constants import hbar as HBAR

from .collective import Nanodiamond, ensemble_quantum_stiffness
from .photophysics import (
    DriveField,
    NVPhotophysics,
    rabi_frequency,
    saturation_parameter,
    zpl_dipole_moment,
)

TWO_PI = 2.0 * math.pi
LAMBDA_REF = 639.13e-9
SWEEP_MIN = 629.0e-9
SWEEP_MAX = 648.0e-9


@dataclass(frozen=True)
class BeamConfig:
    wavelength: float
    power: float
    w0_ref: float = 470e-9
    w0_ref_wavelength: float = 640e-9
    n_medium: float = 1.33
    waist_law: str = "linear"

    def __post_init__(self):
        if self.power < 0:
            raise ValueError("power must be non-negative")
        if self.w0_ref <= 0:
            raise ValueError("w0_ref must be positive")
        if self.waist_law not in ("constant", "linear"):
            raise ValueError("waist_law must be 'constant' or 'linear'")

    @property
    def omega(self) -> float:
        return TWO_PI * C_LIGHT / self.wavelength

    @property
    def w0(self) -> float:
        """Waist at the operating wavelength under the configured dispersion law."""
        if self.waist_law == "constant":
            return self.w0_ref
        return self.w0_ref * self.wavelength / self.w0_ref_wavelength


@dataclass(frozen=True)
class StiffnessBreakdown:
    wavelength: float
    kappa_cl: float
    kappa_q: float

    @property
    def kappa_tot(self) -> float:
        return self.kappa_cl + self.kappa_q


@dataclass(frozen=True)
class RatioCurve:
    wavelengths: np.ndarray
    ratios: np.ndarray
    lambda_ref: float = LAMBDA_REF


def field_amplitude(beam: BeamConfig) -> float:
    """Peak field of a Gaussian beam carrying the configured power."""
    w0 = beam.w0
    return math.sqrt(
        4.0 * beam.power / (math.pi * w0**2 * beam.n_medium * EPS0 * C_LIGHT)
    )


def drive_field(beam: BeamConfig, x: float = 0.0) -> DriveField:
    return DriveField(omega=beam.omega, e0=field_amplitude(beam), x=x, w0=beam.w0)


def classical_stiffness(nd_radius: float, beam: BeamConfig, n_host: float) -> float:
    """Rayleigh-regime trap stiffness of the bare dielectric sphere."""
    if nd_radius > beam.wavelength / 4.0:
        warnings.warn(
            "particle radius above lambda/4, Rayleigh treatment is marginal",
            stacklevel=2,
        )
    m = n_host / beam.n_medium
    e0 = field_amplitude(beam)
    return (
        4.0 * math.pi * EPS0 * beam.n_medium * nd_radius**3 / beam.w0**2
        * ((m**2 - 1.0) / (m**2 + 2.0))
        * e0**2
    )


def independent_quantum_stiffness(
    nd: Nanodiamond, phys: NVPhotophysics, beam: BeamConfig
) -> float:
    """Quantum stiffness for N emitters responding independently.

    Closed form: kappa_q = -N (hbar Delta / 2 eta)(Gamma/2 gamma)(4/w0^2)
    s0/(1+s0), positive (trap-reinforcing) for red detuning.
    """
    field = drive_field(beam)
    d = zpl_dipole_moment(phys)
    rabi0 = rabi_frequency(d, field)
    delta = beam.omega - nd.zpl_center
    s0 = saturation_parameter(phys, delta, rabi0)
    return (
        -nd.n_nv
        * (HBAR * delta / (2.0 * phys.eta))
        * (phys.gamma_total / (2.0 * phys.gamma))
        * (4.0 / beam.w0**2)
        * s0
        / (1.0 + s0)
    )


def total_stiffness_curve(
    nd: Nanodiamond,
    phys: NVPhotophysics,
    beam_template: BeamConfig,
    wavelengths,
    mode: str = "collective",
    grain_width: float = TWO_PI * 100e9,
    response_table=None,
    **collective_kw,
) -> list[StiffnessBreakdown]:
    """kappa_cl + kappa_q across a wavelength sweep, either ensemble model."""
    if mode not in ("independent", "collective"):
        raise ValueError("mode must be 'independent' or 'collective'")
    out = []
    for lam in np.asarray(wavelengths, dtype=float):
        beam = replace(beam_template, wavelength=float(lam))
        k_cl = classical_stiffness(nd.radius, beam, phys.n_host)
        if mode == "independent":
            k_q = independent_quantum_stiffness(nd, phys, beam)
        elif response_table is not None:
            k_q = response_table.ensemble_stiffness(nd, drive_field(beam), grain_width)
        else:
            k_q = ensemble_quantum_stiffness(
                nd, phys, drive_field(beam), grain_width, **collective_kw
            )
        out.append(StiffnessBreakdown(wavelength=float(lam), kappa_cl=k_cl, kappa_q=k_q))
    return out


def ratio_curve(
    breakdowns: list[StiffnessBreakdown], lambda_ref: float = LAMBDA_REF
) -> RatioCurve:
    """Normalize a stiffness sweep at the reference wavelength.

    The reference must be a grid point; the curve value there is 1.0
    bit-exactly by construction.
    """
    lams = np.array([b.wavelength for b in breakdowns])
    tots = np.array([b.kappa_tot for b in breakdowns])
    hits = np.isclose(lams, lambda_ref, rtol=1e-12, atol=0.0)
    if not np.any(hits):
        raise ValueError("lambda_ref is not on the wavelength grid")
    ref = tots[np.argmax(hits)]
    if ref == 0.0:
        raise ZeroDivisionError("total stiffness vanishes at the reference wavelength")
    return RatioCurve(wavelengths=lams, ratios=tots / ref, lambda_ref=lambda_ref)


def xi_curve(high_curve: RatioCurve, low_curve: RatioCurve) -> list[tuple[float, float]]:
    """Doping contrast Xi(lambda): high-doping ratio minus low-doping ratio."""
    if high_curve.wavelengths.shape != low_curve.wavelengths.shape or not np.allclose(
        high_curve.wavelengths, low_curve.wavelengths, rtol=1e-12
    ):
        raise ValueError("ratio curves are on different wavelength grids")
    xi = high_curve.ratios - low_curve.ratios
    return list(zip(high_curve.wavelengths.tolist(), xi.tolist()))


def default_wavelength_grid() -> np.ndarray:
    """The diode sweep: 0.5 nm steps over 629-648 nm plus the reference line."""
    grid = np.arange(SWEEP_MIN, SWEEP_MAX + 0.25e-9, 0.5e-9)
    grid = np.append(grid, LAMBDA_REF)
    return np.unique(np.round(grid, 15))
