"""Measurement pipeline: spectra, corner-frequency fits, ratio extraction,
screening filters, and distribution statistics.

Mirrors how the real experiment treats its traces. The probe/parking
segment structure gives, per acquisition, the normalized ratios
(f_blue - f_660)/(f_ref - f_660) and (f_red - f_660)/(f_ref - f_660);
drift screening uses the relative change between the two parking
segments; population-level outliers are removed with a local outlier
factor cut.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import welch
from scipy.stats import skew as _skew

from .langevin import SegmentedAcquisition

DEFAULT_NPERSEG = 2**14
TEN_PERCENT = 0.10


class FitError(RuntimeError):
    """Lorentzian fit could not converge or the spectrum is degenerate."""


@dataclass(frozen=True)
class PSDFit:
    f_c: float
    amplitude: float
    fit_residual: float
    covariance: np.ndarray


@dataclass(frozen=True)
class RatioSample:
    r_blue: float
    r_red: float
    f660_start: float
    f660_end: float
    accepted: bool
    reason: str = ""


def power_spectrum(samples, dt: float, nperseg: int = DEFAULT_NPERSEG):
    """One-sided Welch PSD, Hann window, 50% overlap, density scaling."""
    samples = np.asarray(samples, dtype=float)
    if samples.size < nperseg:
        raise ValueError(f"need at least {nperseg} samples, got {samples.size}")
    return welch(
        samples,
        fs=1.0 / dt,
        window="hann",
        nperseg=nperseg,
        noverlap=nperseg // 2,
        detrend="constant",
        return_onesided=True,
        scaling="density",
    )


def fit_lorentzian(
    freqs,
    psd,
    exclude_low_bins: int = 3,
    max_fraction_of_nyquist: float = 0.25,
    max_iterations: int = 200,
) -> PSDFit:
    """Fit P(f) = A/(f^2 + f_c^2) in log-power space.

    The lowest bins carry drift and the top of the band carries aliasing
    and readout artifacts, so both are excluded. The initial corner comes
    from the half-power point of the retained band.
    """
    freqs = np.asarray(freqs, dtype=float)
    psd = np.asarray(psd, dtype=float)
    keep = np.ones(freqs.size, dtype=bool)
    keep[:exclude_low_bins] = False
    keep &= freqs <= freqs.max() * max_fraction_of_nyquist
    f = freqs[keep]
    p = psd[keep]
    if f.size < 8 or np.any(p <= 0):
        raise FitError("too few usable spectral bins")

    p0 = np.median(p[:8])
    below = np.nonzero(p < 0.5 * p0)[0]
    if below.size == 0:
        raise FitError("flat spectrum: no half-power point in the fit band")
    fc0 = f[below[0]]
    log_p = np.log(p)

    def resid(params):
        log_a, fc = params
        return log_a - np.log(f**2 + fc**2) - log_p

    sol = least_squares(
        resid,
        x0=[np.log(p0 * fc0**2), fc0],
        bounds=([-np.inf, 1e-12], [np.inf, np.inf]),
        max_nfev=max_iterations,
    )
    if not sol.success:
        raise FitError(f"Lorentzian fit did not converge: {sol.message}")
    log_a, fc = sol.x
    rss = float(np.sum(sol.fun**2))
    dof = max(f.size - 2, 1)
    # Gauss-Newton covariance of (logA, f_c) from the final Jacobian
    jtj = sol.jac.T @ sol.jac
    try:
        cov = np.linalg.inv(jtj) * rss / dof
    except np.linalg.LinAlgError:
        cov = np.full((2, 2), np.nan)
    return PSDFit(
        f_c=float(fc),
        amplitude=float(np.exp(log_a)),
        fit_residual=float(np.sqrt(rss / f.size)),
        covariance=cov,
    )


def ten_percent_rule(f_start: float, f_end: float) -> bool:
    """True = accept. Rejects when the parking corner drifted by 10% or more."""
    return abs(f_end - f_start) / f_start < TEN_PERCENT


def extract_ratios(acq: SegmentedAcquisition, nperseg: int = DEFAULT_NPERSEG) -> RatioSample:
    """Normalized probe/reference stiffness ratios from one acquisition."""
    fits = []
    for label, sl in acq.segment_slices():
        try:
            f, p = power_spectrum(acq.samples[sl], acq.dt, nperseg=nperseg)
            fits.append(fit_lorentzian(f, p))
        except (FitError, ValueError) as exc:
            return RatioSample(
                r_blue=np.nan, r_red=np.nan, f660_start=np.nan, f660_end=np.nan,
                accepted=False, reason=f"segment '{label}' fit failed: {exc}",
            )
    f660_start, f_blue, f_ref, f_red, f660_end = (ft.f_c for ft in fits)
    f660 = 0.5 * (f660_start + f660_end)
    denom = f_ref - f660
    if denom == 0.0:
        return RatioSample(
            r_blue=np.nan, r_red=np.nan, f660_start=f660_start, f660_end=f660_end,
            accepted=False, reason="reference segment indistinguishable from parking",
        )
    r_blue = (f_blue - f660) / denom
    r_red = (f_red - f660) / denom
    if not ten_percent_rule(f660_start, f660_end):
        return RatioSample(
            r_blue=r_blue, r_red=r_red, f660_start=f660_start, f660_end=f660_end,
            accepted=False, reason="parking corner drifted by 10% or more",
        )
    return RatioSample(
        r_blue=r_blue, r_red=r_red, f660_start=f660_start, f660_end=f660_end,
        accepted=True,
    )


def lof_filter(points, k: int = 6, threshold: float = 5.7, standardize: bool = True):
    """Local-outlier-factor cut on 2D samples.

    Returns (kept_indices, removed_indices, scores). Scores are the
    positive LOF values; a point is removed when its score exceeds the
    threshold. Per-axis standardization makes the cut invariant under
    rescaling either coordinate.
    """
    from sklearn.neighbors import LocalOutlierFactor

    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be an (m, 2) array")
    if pts.shape[0] < k + 1:
        raise ValueError(f"need at least {k + 1} points for k={k}")
    work = pts.copy()
    if standardize:
        sd = work.std(axis=0, ddof=1)
        sd[sd == 0.0] = 1.0
        work = (work - work.mean(axis=0)) / sd
    lof = LocalOutlierFactor(n_neighbors=k)
    lof.fit(work)
    scores = -lof.negative_outlier_factor_
    removed = np.nonzero(scores > threshold)[0]
    kept = np.nonzero(scores <= threshold)[0]
    return kept, removed, scores


def distribution_stats(samples) -> tuple[float, float, float]:
    """(mean, standard error, bias-corrected skewness) of a sample.

    Degenerate inputs (constant data, or fewer than three points) report
    zero spread and zero skewness rather than NaN.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("empty sample")
    mean = float(x.mean())
    if x.size < 2 or np.ptp(x) == 0.0:
        return mean, 0.0, 0.0
    se = float(x.std(ddof=1) / np.sqrt(x.size))
    if x.size < 3:
        return mean, se, 0.0
    return mean, se, float(_skew(x, bias=False))
