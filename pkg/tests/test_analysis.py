"""Spectral estimation, corner fits, ratio extraction, screening filters."""

import math

import numpy as np
import pytest
from scipy.stats import sem

from nvtrap.analysis import (
    FitError,
    distribution_stats,
    extract_ratios,
    fit_lorentzian,
    lof_filter,
    power_spectrum,
    ten_percent_rule,
)
from nvtrap.langevin import (
    FluidEnvironment,
    drag_coefficient,
    ou_stationary_variance,
    simulate_trace,
)

RADIUS = 75e-9


@pytest.fixture(scope="module")
def env():
    return FluidEnvironment()


def _kappa_for_corner(f_c, env):
    # U = kappa x^2 convention: true corner f_c needs kappa = pi beta f_c
    return math.pi * drag_coefficient(RADIUS, env) * f_c


# ----------------------------------------------------------------- spectra


def test_parseval_white_noise():
    rng = np.random.default_rng(1)
    x = rng.normal(0.0, 2.5e-8, size=2**17)
    f, p = power_spectrum(x, dt=1e-5)
    df = f[1] - f[0]
    assert np.sum(p) * df == pytest.approx(x.var(), rel=0.01)


def test_parseval_ou_trace(env):
    kappa = _kappa_for_corner(400.0, env)
    acq = simulate_trace([kappa] * 5, RADIUS, env, dt=1e-5, seed=2, integrator="exact")
    f, p = power_spectrum(acq.samples, acq.dt)
    df = f[1] - f[0]
    assert np.sum(p) * df == pytest.approx(acq.samples.var(), rel=0.01)


def test_power_spectrum_needs_enough_samples():
    with pytest.raises(ValueError, match="samples"):
        power_spectrum(np.zeros(100), dt=1e-5, nperseg=2**14)


# ------------------------------------------------------------- corner fits


def test_exact_lorentzian_recovered():
    f = np.linspace(0.0, 5000.0, 4097)
    for fc_true in (120.0, 400.0, 900.0):
        p = 3.7e-13 / (f**2 + fc_true**2)
        p[0] = p[1]  # keep every bin positive; bin 0 is excluded anyway
        fit = fit_lorentzian(f, p)
        assert fit.f_c == pytest.approx(fc_true, rel=1e-6)
        assert fit.amplitude == pytest.approx(3.7e-13, rel=1e-5)
        assert fit.fit_residual < 1e-8


def test_flat_spectrum_raises():
    f = np.linspace(0.0, 5000.0, 1025)
    with pytest.raises(FitError, match="flat"):
        fit_lorentzian(f, np.full_like(f, 1e-12))


def test_too_few_bins_raises():
    f = np.linspace(0.0, 5000.0, 12)
    p = 1e-12 / (f**2 + 400.0**2)
    with pytest.raises(FitError, match="too few"):
        fit_lorentzian(f, p)


@pytest.mark.parametrize("fc_true", [100.0, 400.0, 1000.0])
def test_ou_corner_roundtrip(env, fc_true):
    """Simulated corner recovered by the Welch+Lorentzian chain.

    Single-fit scatter is a couple of percent; the median over seeds must
    land within 3%.
    """
    kappa = _kappa_for_corner(fc_true, env)
    errs = []
    for seed in range(5):
        acq = simulate_trace(
            [kappa] * 5, RADIUS, env, dt=1e-5, seed=seed,
            integrator="exact", segment_duration=4.0,
        )
        f, p = power_spectrum(acq.samples, acq.dt)
        fit = fit_lorentzian(f, p)
        errs.append(abs(fit.f_c - fc_true) / fc_true)
    assert np.median(errs) < 0.03


# --------------------------------------------------------- ratio pipeline


def test_ten_percent_rule_boundaries():
    assert ten_percent_rule(400.0, 400.0)
    assert ten_percent_rule(400.0, 400.0 * 1.0999)
    assert not ten_percent_rule(400.0, 400.0 * 1.1001)
    assert ten_percent_rule(400.0, 400.0 * 0.9001)
    assert not ten_percent_rule(400.0, 400.0 * 0.8999)


def test_extract_ratios_recovers_programmed_steps(env):
    """Known stiffness staircase comes back through the full chain."""
    k0 = _kappa_for_corner(300.0, env)
    kappas = [k0, 1.20 * k0, 1.10 * k0, 1.05 * k0, k0]
    acq = simulate_trace(kappas, RADIUS, env, dt=1e-5, seed=40, integrator="exact")
    rs = extract_ratios(acq)
    assert rs.accepted, rs.reason
    # expected ratios from the programmed corners: (1.20-1)/(1.10-1) = 2,
    # (1.05-1)/(1.10-1) = 0.5, smeared by a few percent of fit noise
    assert rs.r_blue == pytest.approx(2.0, abs=0.35)
    assert rs.r_red == pytest.approx(0.5, abs=0.25)
    assert rs.f660_start == pytest.approx(300.0, rel=0.05)
    assert rs.f660_end == pytest.approx(300.0, rel=0.05)


def test_extract_ratios_flags_parking_drift(env):
    k0 = _kappa_for_corner(300.0, env)
    kappas = [k0, 1.2 * k0, 1.1 * k0, 1.05 * k0, k0]
    acq = simulate_trace(
        kappas, RADIUS, env, dt=1e-5, seed=41, integrator="exact",
        kappa_step=(40.0, 1.3),
    )
    rs = extract_ratios(acq)
    assert not rs.accepted
    assert "drifted" in rs.reason
    # ratios are still reported for diagnostics
    assert np.isfinite(rs.r_blue) and np.isfinite(rs.r_red)


def test_extract_ratios_flags_fit_failure(env):
    k0 = _kappa_for_corner(300.0, env)
    acq = simulate_trace(
        [k0] * 5, RADIUS, env, dt=1e-4 / 3.0, seed=42, integrator="exact",
        segment_duration=0.05,
    )
    rs = extract_ratios(acq)  # segments shorter than one Welch window
    assert not rs.accepted
    assert "fit failed" in rs.reason
    assert "'660'" in rs.reason


# ------------------------------------------------------------- LOF screen


def _lof_bruteforce(pts, k):
    """Textbook local outlier factor with exactly k neighbors."""
    d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    np.fill_diagonal(d, np.inf)
    order = np.argsort(d, axis=1)
    knn = order[:, :k]
    kdist = d[np.arange(len(pts)), order[:, k - 1]]
    lrd = np.empty(len(pts))
    for i in range(len(pts)):
        reach = np.maximum(kdist[knn[i]], d[i, knn[i]])
        lrd[i] = 1.0 / reach.mean()
    return np.array([lrd[knn[i]].mean() / lrd[i] for i in range(len(pts))])


def test_lof_scores_match_bruteforce_oracle():
    rng = np.random.default_rng(7)
    pts = rng.normal(size=(40, 2))
    _, _, scores = lof_filter(pts, k=6, standardize=False)
    expect = _lof_bruteforce(pts, 6)
    assert np.allclose(scores, expect, rtol=1e-8)


def test_lof_standardization_gives_scale_invariance():
    rng = np.random.default_rng(8)
    pts = rng.normal(size=(60, 2))
    scaled = pts * np.array([1.0, 1000.0])
    _, _, s_plain = lof_filter(pts, k=6)
    _, _, s_scaled = lof_filter(scaled, k=6)
    assert np.allclose(s_plain, s_scaled, rtol=1e-9)
    _, _, s_raw = lof_filter(scaled, k=6, standardize=False)
    assert not np.allclose(s_plain, s_raw, rtol=1e-3)


def test_lof_keeps_regular_grid():
    xx, yy = np.meshgrid(np.arange(8.0), np.arange(8.0))
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    kept, removed, _ = lof_filter(pts, k=6)
    assert removed.size == 0
    assert kept.size == 64


def test_lof_removes_far_outlier():
    rng = np.random.default_rng(9)
    pts = np.vstack([rng.normal(size=(60, 2)), [[100.0, 100.0]]])
    kept, removed, scores = lof_filter(pts, k=6)
    assert 60 in removed
    assert scores[60] > scores[kept].max()


def test_lof_input_validation():
    with pytest.raises(ValueError, match="points"):
        lof_filter(np.zeros((10, 3)))
    with pytest.raises(ValueError, match="at least"):
        lof_filter(np.zeros((4, 2)), k=6)


# ---------------------------------------------------------- distributions


def test_distribution_stats_against_scipy():
    rng = np.random.default_rng(10)
    x = rng.normal(3.0, 2.0, size=500)
    mean, se, _ = distribution_stats(x)
    assert mean == pytest.approx(x.mean(), rel=1e-12)
    assert se == pytest.approx(sem(x), rel=1e-12)


def test_distribution_stats_exponential_skewness():
    rng = np.random.default_rng(11)
    x = rng.exponential(scale=1.7, size=100_000)
    _, _, sk = distribution_stats(x)
    assert sk == pytest.approx(2.0, rel=0.05)


def test_distribution_stats_degenerate_inputs():
    with pytest.raises(ValueError):
        distribution_stats([])
    assert distribution_stats([4.2]) == (4.2, 0.0, 0.0)
    assert distribution_stats([1.5, 1.5, 1.5]) == (1.5, 0.0, 0.0)
    mean, se, sk = distribution_stats([1.0, 2.0])
    assert mean == 1.5 and se > 0.0 and sk == 0.0


def test_distribution_stats_symmetric_sample_has_small_skew():
    rng = np.random.default_rng(12)
    x = rng.normal(size=50_000)
    _, _, sk = distribution_stats(x)
    assert abs(sk) < 0.05
