"""Single-emitter dipole physics for an NV-like three-level system.

Level scheme: ground |g>, zero-phonon excited |e>, and a lumped
phonon-sideband level |p> that collects sideband emission from |e>
(rate gamma_sb) and relaxes back to |g> (rate gamma_ph). The optical
coherence lives on the g-e transition only.

All rates and frequencies are angular (rad/s), all lengths are metres.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import c as C_LIGHT
from scipy.constants import epsilon_0 as EPS0
from scipy.constants import hbar as HBAR

TWO_PI = 2.0 * math.pi

# spectroscopy-grade defaults for the emitter family we model
DEFAULT_TOTAL_RATE = TWO_PI * 13e6
DEFAULT_GAMMA_PH = TWO_PI * 38e9
DEFAULT_TRANSVERSE = TWO_PI * 1e12
DEFAULT_DEBYE_WALLER = 0.04
DEFAULT_N_HOST = 2.40
DEFAULT_ZPL_WAVELENGTH = 639.08e-9


@dataclass(frozen=True)
class NVPhotophysics:
    """Emitter rate constants. Immutable; derived rates are properties."""

    gamma_zpl: float
    gamma_sb: float
    gamma_ph: float
    gamma_c: float
    omega0: float
    debye_waller: float = DEFAULT_DEBYE_WALLER
    n_host: float = DEFAULT_N_HOST

    def __post_init__(self):
        for name in ("gamma_zpl", "gamma_sb", "gamma_ph", "gamma_c", "omega0"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if not 0.0 < self.debye_waller <= 1.0:
            raise ValueError("debye_waller must lie in (0, 1]")
        if self.n_host <= 0:
            raise ValueError("n_host must be positive")

    @property
    def gamma_total(self) -> float:
        """Total radiative decay of |e>, ZPL plus sidebands."""
        return self.gamma_zpl + self.gamma_sb

    @property
    def gamma(self) -> float:
        """Transverse (coherence) decay rate: gamma_total/2 + gamma_c."""
        return 0.5 * self.gamma_total + self.gamma_c

    @property
    def eta(self) -> float:
        """Sideband bottleneck factor (2*gamma_ph + gamma_sb) / (2*gamma_ph)."""
        return (2.0 * self.gamma_ph + self.gamma_sb) / (2.0 * self.gamma_ph)

    @classmethod
    def from_total_rate(
        cls,
        gamma_total: float = DEFAULT_TOTAL_RATE,
        omega0: float = TWO_PI * C_LIGHT / DEFAULT_ZPL_WAVELENGTH,
        debye_waller: float = DEFAULT_DEBYE_WALLER,
        gamma_ph: float = DEFAULT_GAMMA_PH,
        gamma_c: float | None = None,
        n_host: float = DEFAULT_N_HOST,
    ) -> "NVPhotophysics":
        """Split a total decay rate into ZPL and sideband parts.

        gamma_c defaults to whatever makes the transverse rate equal
        2*pi*1 THz, the room-temperature dephasing we model.
        """
        gamma_zpl = debye_waller * gamma_total
        gamma_sb = gamma_total - gamma_zpl
        if gamma_c is None:
            gamma_c = DEFAULT_TRANSVERSE - 0.5 * gamma_total
        return cls(
            gamma_zpl=gamma_zpl,
            gamma_sb=gamma_sb,
            gamma_ph=gamma_ph,
            gamma_c=gamma_c,
            omega0=omega0,
            debye_waller=debye_waller,
            n_host=n_host,
        )


@dataclass(frozen=True)
class DriveField:
    """Trapping beam as seen by one emitter at position x along the scan axis."""

    omega: float
    e0: float
    x: float
    w0: float

    def __post_init__(self):
        if self.e0 < 0:
            raise ValueError("e0 must be non-negative")
        if self.w0 <= 0:
            raise ValueError("w0 must be positive")


@dataclass(frozen=True)
class BlochSteadyState:
    rho_ee: float
    rho_gg: float
    rho_pp: float
    coherence: complex

    def __post_init__(self):
        tol = 1e-12
        for name in ("rho_ee", "rho_gg", "rho_pp"):
            p = getattr(self, name)
            if not -tol <= p <= 1.0 + tol:
                raise ValueError(f"{name} outside [0, 1]")
        if abs(self.rho_ee + self.rho_gg + self.rho_pp - 1.0) > 1e-12:
            raise ValueError("populations must sum to one")
        if abs(self.coherence) > 0.5 + 1e-12:
            raise ValueError("coherence magnitude exceeds 1/2")


def zpl_dipole_moment(phys: NVPhotophysics) -> float:
    """Transition dipole moment of the zero-phonon line, in C m.

    In-medium spontaneous emission at rate gamma_zpl fixes the dipole
    through the host-index-corrected Weisskopf-Wigner relation.
    """
    return math.sqrt(
        phys.gamma_zpl * 3.0 * math.pi * EPS0 * C_LIGHT**3 * HBAR
        / (phys.n_host * phys.omega0**3)
    )


def rabi_frequency(d_zpl: float, field: DriveField) -> float:
    # sqrt(2/3): time-averaged field times isotropic orientation average,
    # applied exactly once, here.
    envelope = math.exp(-(field.x**2) / field.w0**2)
    return math.sqrt(2.0 / 3.0) * d_zpl * field.e0 * envelope / HBAR


def saturation_parameter(phys: NVPhotophysics, detuning: float, rabi: float) -> float:
    """Three-level saturation parameter s(Delta, Omega)."""
    g = phys.gamma
    return (
        phys.eta * rabi**2 / (phys.gamma_total * g * (1.0 + detuning**2 / g**2))
    )


def bloch_steady_state(
    phys: NVPhotophysics, omega: float, rabi: float
) -> BlochSteadyState:
    """Steady state of the driven three-level system.

    Solved as a real 5x5 linear system in (ee, gg, pp, Re c, Im c) with
    the trace condition replacing the redundant ground-state equation.
    No iteration, no closed-form shortcuts; the analytic expressions
    serve as an independent check in the test suite instead.
    """
    if rabi < 0:
        raise ValueError("rabi must be non-negative")
    delta = omega - phys.omega0
    gt = phys.gamma_total
    g = phys.gamma

    # unknowns: [ee, gg, pp, re_c, im_c], coherence c = rho_eg
    a = np.zeros((5, 5))
    b = np.zeros(5)
    # d(ee)/dt = -Omega*Im c - Gamma*ee = 0
    a[0] = [-gt, 0.0, 0.0, 0.0, -rabi]
    # trace replaces the gg equation (rank closure)
    a[1] = [1.0, 1.0, 1.0, 0.0, 0.0]
    b[1] = 1.0
    # d(pp)/dt = Gamma_SB*ee - Gamma_Ph*pp = 0
    a[2] = [phys.gamma_sb, 0.0, -phys.gamma_ph, 0.0, 0.0]
    # d(c)/dt = -(gamma - i*Delta)c + i*(Omega/2)(ee - gg) = 0, split re/im
    a[3] = [0.0, 0.0, 0.0, -g, -delta]
    a[4] = [0.5 * rabi, -0.5 * rabi, 0.0, delta, -g]

    try:
        x = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:  # cannot happen for positive rates
        raise ArithmeticError("Bloch steady-state system is singular") from exc

    ee, gg, pp, re_c, im_c = x
    clip = lambda p: min(max(p, 0.0), 1.0)
    ee, pp = clip(ee), clip(pp)
    gg = 1.0 - ee - pp
    return BlochSteadyState(
        rho_ee=ee, rho_gg=gg, rho_pp=pp, coherence=complex(re_c, im_c)
    )


def _drive_scalars(phys: NVPhotophysics, field: DriveField):
    d = zpl_dipole_moment(phys)
    rabi = rabi_frequency(d, field)
    delta = field.omega - phys.omega0
    s = saturation_parameter(phys, delta, rabi)
    return rabi, delta, s


def dipole_force_analytic(phys: NVPhotophysics, field: DriveField) -> float:
    """Dipole force along x from the closed-form gradient expression.

    Attractive toward the beam centre for red detuning. The spatial
    dependence enters solely through s(x) proportional to Omega(x)^2.
    """
    _, delta, s = _drive_scalars(phys, field)
    ds_dx = -4.0 * field.x / field.w0**2 * s
    return (
        -(1.0 / phys.eta)
        * (HBAR * delta / 2.0)
        * (phys.gamma_total / (2.0 * phys.gamma))
        * ds_dx
        / (1.0 + s)
    )


def dipole_force_from_coherence(phys: NVPhotophysics, field: DriveField) -> float:
    """Same force, second route: -hbar * Re[conj(Omega) <sigma>] * dlog|Omega|/dx.

    Uses the numerically solved steady-state coherence, so it exercises a
    different code path than the closed form. For a real drive this is
    -hbar * Re(rho_eg) * dOmega/dx.
    """
    d = zpl_dipole_moment(phys)
    rabi = rabi_frequency(d, field)
    state = bloch_steady_state(phys, field.omega, rabi)
    d_rabi_dx = -2.0 * field.x / field.w0**2 * rabi
    return -HBAR * state.coherence.real * d_rabi_dx


def dipole_potential_analytic(phys: NVPhotophysics, field: DriveField) -> float:
    """Optical dipole potential, log form; negative (trapping) for red detuning."""
    _, delta, s = _drive_scalars(phys, field)
    return (
        (1.0 / phys.eta)
        * (HBAR * delta / 2.0)
        * (phys.gamma_total / (2.0 * phys.gamma))
        * math.log1p(s)
    )
