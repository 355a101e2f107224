"""Monte Carlo propagation of crystal-to-crystal variability.

Each trial draws one nanodiamond (size, emitter count via the volume
law, ZPL centre from a two-component mixture, intra-crystal ZPL spread
from a truncated normal), computes its doping-contrast curve Xi(lambda),
and the ensemble of trials yields the mean curve, an empirical 90% band,
and the per-wavelength skewness.

Collective-mode trials are evaluated against a precomputed response
table; sizes beyond the table continuation's trust range are continued
linearly in n (per-spin response saturates, so the total can grow at
most linearly), which keeps rare small-sigma draws from blowing up the
distribution moments.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import c as C_LIGHT, hbar as HBAR

from . import analysis
from .collective import (
    DEFAULT_N_EXACT,
    DickeResponseTable,
    Nanodiamond,
    coarse_grain,
)
from .photophysics import NVPhotophysics, rabi_frequency, zpl_dipole_moment
from .trap import (
    BeamConfig,
    classical_stiffness,
    drive_field,
    independent_quantum_stiffness,
)

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PopulationModel:
    """Measured distributions of the trapped-crystal population."""

    size_mean: float = 150e-9
    size_sd: float = 23e-9
    nv_mean: float = 9500.0
    nv_anchor_size: float = 150e-9
    zpl_mix_means: tuple = (638.2e-9, 639.6e-9)
    zpl_mix_weights: tuple = (0.4, 0.6)
    zpl_mix_sd: float = 0.15e-9
    zpl_sigma_mean: float = 1.82e-9
    zpl_sigma_sd: float = 0.55e-9
    zpl_sigma_min: float = 0.2e-9

    def __post_init__(self):
        if min(self.size_mean, self.nv_mean, self.zpl_sigma_mean) <= 0:
            raise ValueError("population scales must be positive")
        if abs(sum(self.zpl_mix_weights) - 1.0) > 1e-12:
            raise ValueError("mixture weights must sum to one")
        if min(self.size_sd, self.zpl_mix_sd, self.zpl_sigma_sd) < 0:
            raise ValueError("spreads must be non-negative")


@dataclass(frozen=True)
class MCResult:
    wavelengths: np.ndarray
    xi_mean: np.ndarray
    xi_lo90: np.ndarray
    xi_hi90: np.ndarray
    skewness: np.ndarray
    n_trials: int
    n_failed: int
    provenance: dict

    def to_json(self) -> str:
        payload = {
            "wavelengths_nm": (self.wavelengths * 1e9).tolist(),
            "xi_mean": self.xi_mean.tolist(),
            "xi_lo90": self.xi_lo90.tolist(),
            "xi_hi90": self.xi_hi90.tolist(),
            "skewness": self.skewness.tolist(),
            "n_trials": self.n_trials,
            "n_failed": self.n_failed,
            "provenance": self.provenance,
        }
        return json.dumps(payload, indent=2)

    def to_csv_rows(self):
        yield "lambda_nm,xi_mean,xi_lo90,xi_hi90,skewness"
        for i in range(self.wavelengths.size):
            yield (
                f"{self.wavelengths[i] * 1e9:.6f},{self.xi_mean[i]:.9e},"
                f"{self.xi_lo90[i]:.9e},{self.xi_hi90[i]:.9e},{self.skewness[i]:.6f}"
            )


def sample_nanodiamond(model: PopulationModel, rng) -> Nanodiamond:
    """Draw one crystal. `rng` is a numpy Generator (or a seed)."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    size = rng.normal(model.size_mean, model.size_sd)
    while size <= 0:  # six-sigma guard, keeps the draw well-defined
        size = rng.normal(model.size_mean, model.size_sd)
    n_nv = max(1, int(round(model.nv_mean * (size / model.nv_anchor_size) ** 3)))

    comp = rng.choice(len(model.zpl_mix_weights), p=model.zpl_mix_weights)
    lam_c = rng.normal(model.zpl_mix_means[comp], model.zpl_mix_sd)
    sig_lam = rng.normal(model.zpl_sigma_mean, model.zpl_sigma_sd)
    while sig_lam < model.zpl_sigma_min:
        sig_lam = rng.normal(model.zpl_sigma_mean, model.zpl_sigma_sd)

    omega_c = TWO_PI * C_LIGHT / lam_c
    sigma_omega = TWO_PI * C_LIGHT * sig_lam / lam_c**2
    return Nanodiamond(
        radius=0.5 * size, n_nv=n_nv, zpl_center=omega_c, zpl_sigma=sigma_omega
    )


def _trial_physics(phys: NVPhotophysics, nd: Nanodiamond) -> NVPhotophysics:
    # the crystal's mean transition becomes the emitter frequency;
    # rate constants are shared across the population
    return dataclasses.replace(phys, omega0=nd.zpl_center)


def _xi_single(
    nd, phys, beam_template, wavelengths, mode, grain_width, table, trust_n
):
    """Xi(lambda) for one crystal: total-stiffness ratio minus bare-matrix ratio."""
    lam_ref_idx = _ref_index(wavelengths)
    k_cl = np.empty(wavelengths.size)
    k_q = np.empty(wavelengths.size)
    tphys = _trial_physics(phys, nd)
    d = zpl_dipole_moment(tphys)
    for j, lam in enumerate(wavelengths):
        beam = dataclasses.replace(beam_template, wavelength=float(lam))
        k_cl[j] = classical_stiffness(nd.radius, beam, tphys.n_host)
        if mode == "independent":
            k_q[j] = independent_quantum_stiffness(nd, tphys, beam)
        else:
            field = drive_field(beam)
            rabi0 = rabi_frequency(d, field)
            pref = 2.0 * HBAR * rabi0 / field.w0**2
            domains = coarse_grain(nd, grain_width)
            n = np.array([dm.n_coop for dm in domains])
            om = np.array([dm.omega_i for dm in domains])
            keep = n >= 0.5
            if not np.any(keep):
                k_q[j] = 0.0
                continue
            nn = n[keep]
            # linear-in-n continuation beyond the table's trusted range
            scale = np.where(nn > trust_n, nn / trust_n, 1.0)
            nq = np.minimum(nn, trust_n)
            re = table.re_sigma_plus(nq, field.omega - om[keep], rabi0)
            k_q[j] = pref * float((scale * re).sum())
    ratio_tot = (k_cl + k_q) / (k_cl[lam_ref_idx] + k_q[lam_ref_idx])
    ratio_cl = k_cl / k_cl[lam_ref_idx]
    return ratio_tot - ratio_cl


def _ref_index(wavelengths, lambda_ref: float = 639.13e-9) -> int:
    hits = np.isclose(wavelengths, lambda_ref, rtol=1e-12, atol=0.0)
    if not np.any(hits):
        raise ValueError("wavelength grid must contain the reference line")
    return int(np.argmax(hits))


def build_mc_table(
    phys: NVPhotophysics,
    beam_template: BeamConfig,
    wavelengths,
    model: PopulationModel,
    n_exact: int = DEFAULT_N_EXACT,
    **table_kw,
) -> DickeResponseTable:
    """Response table wide enough for every trial the model can draw."""
    wavelengths = np.asarray(wavelengths, dtype=float)
    rabis = []
    for lam in (wavelengths.min(), np.median(wavelengths), wavelengths.max()):
        beam = dataclasses.replace(beam_template, wavelength=float(lam))
        rabis.append(rabi_frequency(zpl_dipole_moment(phys), drive_field(beam)))
    lo, hi = min(rabis), max(rabis)
    # pad covers per-trial dipole-moment variation (+-0.2% from the ZPL
    # centre draw) on top of the sweep's own Rabi span
    pad = 0.01 * hi + 0.03 * (hi - lo)
    nodes = (lo - pad, 0.5 * (lo + hi), hi + pad)

    omega_sweep = TWO_PI * C_LIGHT / wavelengths
    # widest plausible domain offset: an 8-sigma-ish sigma draw
    sig_max = model.zpl_sigma_mean + 6.0 * model.zpl_sigma_sd
    sig_max_omega = TWO_PI * C_LIGHT * sig_max / min(model.zpl_mix_means) ** 2
    centers = [TWO_PI * C_LIGHT / m for m in model.zpl_mix_means]
    delta_max = max(
        abs(omega_sweep.max() - min(centers)), abs(omega_sweep.min() - max(centers))
    ) + 4.0 * sig_max_omega + 6.0 * model.zpl_mix_sd * TWO_PI * C_LIGHT / min(model.zpl_mix_means) ** 2
    return DickeResponseTable.build(
        phys, nodes, delta_max, n_exact=n_exact, **table_kw
    )


def _mc_trial(args):
    (ss, model, phys, beam_template, wavelengths, mode, grain_width, table,
     trust_n, xi_noise_sd) = args
    rng = np.random.default_rng(ss)
    nd = sample_nanodiamond(model, rng)
    try:
        xi = _xi_single(
            nd, phys, beam_template, wavelengths, mode, grain_width, table, trust_n
        )
    except Exception:
        return None
    if xi_noise_sd > 0.0:
        xi = xi + rng.normal(0.0, xi_noise_sd, size=xi.shape)
    return xi


def run_mc(
    model: PopulationModel,
    phys: NVPhotophysics,
    beam_template: BeamConfig,
    wavelengths,
    grain_width: float,
    n_trials: int = 1000,
    seed: int = 0,
    mode: str = "collective",
    response_table: DickeResponseTable | None = None,
    trust_n: int = 320,
    xi_noise_sd: float = 0.0,
    max_failure_fraction: float = 0.01,
    workers: int = 1,
) -> MCResult:
    """Propagate population variability into the Xi(lambda) distribution.

    Each trial gets its own spawned RNG stream, so results are identical
    for any worker count, and aggregation runs in trial order.
    `xi_noise_sd` adds a symmetric per-trial measurement-noise floor on
    top of each Xi value, emulating calibration noise; zero (default)
    gives the noiseless model distribution.
    """
    if n_trials < 100:
        raise ValueError("n_trials must be at least 100")
    if mode not in ("independent", "collective"):
        raise ValueError("mode must be 'independent' or 'collective'")
    wavelengths = np.asarray(wavelengths, dtype=float)
    _ref_index(wavelengths)  # validate early

    table = response_table
    if mode == "collective" and table is None:
        table = build_mc_table(phys, beam_template, wavelengths, model)

    jobs = [
        (ss, model, phys, beam_template, wavelengths, mode, grain_width, table,
         trust_n, xi_noise_sd)
        for ss in np.random.SeedSequence(seed).spawn(n_trials)
    ]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(_mc_trial, jobs, chunksize=max(1, n_trials // (8 * workers)))
            )
    else:
        results = [_mc_trial(j) for j in jobs]

    failed = sum(1 for r in results if r is None)
    if failed > max_failure_fraction * n_trials:
        raise RuntimeError(
            f"{failed}/{n_trials} trials failed, above the "
            f"{max_failure_fraction:.0%} abort threshold"
        )
    good = np.array([r for r in results if r is not None])
    mean = good.mean(axis=0)
    lo = np.percentile(good, 5.0, axis=0)
    hi = np.percentile(good, 95.0, axis=0)
    skewness = np.array(
        [analysis.distribution_stats(good[:, j])[2] for j in range(good.shape[1])]
    )
    return MCResult(
        wavelengths=wavelengths,
        xi_mean=mean,
        xi_lo90=lo,
        xi_hi90=hi,
        skewness=skewness,
        n_trials=n_trials,
        n_failed=failed,
        provenance={
            "seed": seed,
            "n_trials": n_trials,
            "grain_width_rad_s": grain_width,
            "mode": mode,
            "trust_n": trust_n,
            "xi_noise_sd": xi_noise_sd,
        },
    )


def fit_grain_width(
    targets,
    candidate_widths,
    nd: Nanodiamond,
    phys: NVPhotophysics,
    beam_template: BeamConfig,
    response_table: DickeResponseTable | None = None,
    trust_n: int = 320,
):
    """Least-squares scan of the grain width against a target Xi curve.

    `targets` is a sequence of (wavelength_m, xi) pairs on the model
    grid. Returns (best_width, [(width, sse), ...]). A plain scan: the
    objective is cheap and one-dimensional, so nothing fancier is
    warranted.
    """
    candidate_widths = list(candidate_widths)
    if not candidate_widths:
        raise ValueError("no candidate widths supplied")
    targets = np.asarray(targets, dtype=float)
    lams = targets[:, 0]
    want = targets[:, 1]

    table = response_table
    rows = []
    for width in candidate_widths:
        if table is None:
            xi = xi_direct(nd, phys, beam_template, lams, width, trust_n)
        else:
            xi = _xi_single(
                nd, phys, beam_template, lams, "collective", width, table, trust_n
            )
        rows.append((width, float(np.sum((xi - want) ** 2))))
    best = min(rows, key=lambda r: r[1])[0]
    return best, rows


def xi_direct(nd, phys, beam_template, wavelengths, grain_width, trust_n=320):
    """Xi(lambda) for one crystal via direct domain solves (no table).

    Applies the same linear trust-range continuation as the table path
    so the two evaluation routes agree on extreme occupancies.
    """
    from .collective import domain_stiffness

    wavelengths = np.asarray(wavelengths, dtype=float)
    lam_ref_idx = _ref_index(wavelengths)
    tphys = _trial_physics(phys, nd)
    k_cl = np.empty(wavelengths.size)
    k_q = np.empty(wavelengths.size)
    domains = coarse_grain(nd, grain_width)
    for j, lam in enumerate(wavelengths):
        beam = dataclasses.replace(beam_template, wavelength=float(lam))
        k_cl[j] = classical_stiffness(nd.radius, beam, tphys.n_host)
        fld = drive_field(beam)
        total = 0.0
        for dm in domains:
            if dm.n_coop < 0.5:
                continue
            if dm.n_coop > trust_n:
                capped = dataclasses.replace(dm, n_coop=float(trust_n))
                total += domain_stiffness(capped, tphys, fld) * dm.n_coop / trust_n
            else:
                total += domain_stiffness(dm, tphys, fld)
        k_q[j] = total
    ratio_tot = (k_cl + k_q) / (k_cl[lam_ref_idx] + k_q[lam_ref_idx])
    return ratio_tot - k_cl / k_cl[lam_ref_idx]
