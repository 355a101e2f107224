"""Optical dipole forces and trap stiffness for NV-doped nanodiamonds.

Submodules: photophysics (single-emitter steady states and forces),
collective (Dicke-ladder ensembles and coarse-grained crystals), trap
(classical + quantum stiffness sweeps), langevin (synthetic Brownian
traces), analysis (PSD fits, ratio extraction, outlier filtering),
montecarlo (population variability), cli/config (batch runs).
"""

__version__ = "0.1.0"

from .photophysics import (
    BlochSteadyState,
    DriveField,
    NVPhotophysics,
    bloch_steady_state,
    dipole_force_analytic,
    dipole_force_from_coherence,
    dipole_potential_analytic,
    rabi_frequency,
    saturation_parameter,
    zpl_dipole_moment,
)
from .collective import (
    CollectiveDomain,
    CollectiveSteadyState,
    DickeResponseTable,
    Nanodiamond,
    SteadyStateError,
    build_liouvillian,
    coarse_grain,
    collective_steady_state,
    dicke_operators,
    domain_stiffness,
    ensemble_quantum_stiffness,
    extrapolate_stiffness,
    mean_occupied_size,
    steady_state,
)
from .trap import (
    BeamConfig,
    RatioCurve,
    StiffnessBreakdown,
    classical_stiffness,
    default_wavelength_grid,
    drive_field,
    field_amplitude,
    independent_quantum_stiffness,
    ratio_curve,
    total_stiffness_curve,
    xi_curve,
)
from .langevin import (
    FluidEnvironment,
    SegmentedAcquisition,
    corner_frequency_truth,
    drag_coefficient,
    simulate_trace,
    true_corner_frequency,
)
from .analysis import (
    FitError,
    PSDFit,
    RatioSample,
    distribution_stats,
    extract_ratios,
    fit_lorentzian,
    lof_filter,
    power_spectrum,
    ten_percent_rule,
)
from .montecarlo import (
    MCResult,
    PopulationModel,
    fit_grain_width,
    run_mc,
    sample_nanodiamond,
)

__all__ = [
    "__version__",
    "BlochSteadyState", "DriveField", "NVPhotophysics",
    "bloch_steady_state", "dipole_force_analytic", "dipole_force_from_coherence",
    "dipole_potential_analytic", "rabi_frequency", "saturation_parameter",
    "zpl_dipole_moment",
    "CollectiveDomain", "CollectiveSteadyState", "DickeResponseTable",
    "Nanodiamond", "SteadyStateError", "build_liouvillian", "coarse_grain",
    "collective_steady_state", "dicke_operators", "domain_stiffness",
    "ensemble_quantum_stiffness", "extrapolate_stiffness", "mean_occupied_size",
    "steady_state",
    "BeamConfig", "RatioCurve", "StiffnessBreakdown", "classical_stiffness",
    "default_wavelength_grid", "drive_field", "field_amplitude",
    "independent_quantum_stiffness", "ratio_curve", "total_stiffness_curve",
    "xi_curve",
    "FluidEnvironment", "SegmentedAcquisition", "corner_frequency_truth",
    "drag_coefficient", "simulate_trace", "true_corner_frequency",
    "FitError", "PSDFit", "RatioSample", "distribution_stats", "extract_ratios",
    "fit_lorentzian", "lof_filter", "power_spectrum", "ten_percent_rule",
    "MCResult", "PopulationModel", "fit_grain_width", "run_mc",
    "sample_nanodiamond",
]
