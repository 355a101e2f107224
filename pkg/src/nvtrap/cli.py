"""Batch CLI: `nvtrap run --config run.toml` and `nvtrap validate`.

Pipelines write plot-ready CSV (UTF-8, comma, '.' decimal, LF) plus a
manifest JSON with the config hash, seed, and library versions. The
manifest is written before the pipeline starts and finalized after, so
it exists even when a run dies on a numerical failure.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
import sys
import tempfile

import numpy as np
import scipy
import sklearn

from . import __version__, analysis, langevin, montecarlo
from .collective import SteadyStateError, ensemble_quantum_stiffness
from .config import ConfigError, RunConfig, build_run_config, load_raw, validate_config
from .langevin import (
    SEGMENT_LABELS,
    FluidEnvironment,
    SegmentedAcquisition,
    drag_coefficient,
    simulate_trace,
    true_corner_frequency,
)
from .trap import (
    classical_stiffness,
    drive_field,
    independent_quantum_stiffness,
    ratio_curve,
    total_stiffness_curve,
)
from .photophysics import (
    dipole_force_analytic,
    dipole_potential_analytic,
    rabi_frequency,
    saturation_parameter,
    zpl_dipole_moment,
)

log = logging.getLogger("nvtrap")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

NUMERICAL_ERRORS = (
    analysis.FitError,
    SteadyStateError,
    np.linalg.LinAlgError,
    FloatingPointError,
    ZeroDivisionError,
    RuntimeError,
    ValueError,
)


def _atomic_write(path: str, text: str) -> None:
    """Write-then-rename so readers never observe a partial file."""
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".nvtrap-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def _write_csv(path: str, header: str, rows) -> None:
    _atomic_write(path, header + "\n" + "\n".join(rows) + "\n")


def _manifest(rc: RunConfig, cfg_hash: str, status: str, extra=None) -> str:
    payload = {
        "pipeline": rc.pipeline,
        "status": status,
        "config_sha256": cfg_hash,
        "seed": rc.seed,
        "workers": rc.workers,
        "versions": {
            "nvtrap": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "scikit-learn": sklearn.__version__,
        },
    }
    if extra:
        payload.update(extra)
    return json.dumps(payload, indent=2)


def _sweep_grid(rc: RunConfig) -> np.ndarray:
    s = rc.sweep
    grid = np.arange(s["lambda_min"], s["lambda_max"] + 0.5 * s["lambda_step"], s["lambda_step"])
    grid = np.append(grid, s["lambda_ref"])
    return np.unique(np.round(grid, 15))


# ---------------------------------------------------------------- pipelines


def _pipe_forces(rc: RunConfig, out: str) -> None:
    """Per-emitter dipole force/potential across the beam profile."""
    d = zpl_dipole_moment(rc.physics)
    detuning = rc.beam.omega - rc.crystal.zpl_center
    phys = dataclasses.replace(rc.physics, omega0=rc.crystal.zpl_center)
    w0 = rc.beam.w0
    rows = []
    for x in np.linspace(-2.0 * w0, 2.0 * w0, 201):
        fld = drive_field(rc.beam, x=float(x))
        rabi = rabi_frequency(d, fld)
        s = saturation_parameter(phys, detuning, rabi)
        f1 = dipole_force_analytic(phys, fld)
        u1 = dipole_potential_analytic(phys, fld)
        rows.append(
            f"{x:.9e},{rabi:.9e},{s:.9e},{f1:.9e},{u1:.9e},"
            f"{rc.crystal.n_nv * f1:.9e}"
        )
    _write_csv(
        os.path.join(out, "forces.csv"),
        "x_m,rabi_rad_s,saturation,force_per_nv_N,potential_per_nv_J,force_total_N",
        rows,
    )


def _pipe_sweep(rc: RunConfig, out: str) -> None:
    """Stiffness decomposition and normalized ratio across the diode sweep."""
    grid = _sweep_grid(rc)
    s = rc.sweep
    bds = total_stiffness_curve(
        rc.crystal,
        rc.physics,
        rc.beam,
        grid,
        mode=s["mode"],
        grain_width=s["grain_width"],
        workers=rc.workers,
    )
    tot = ratio_curve(bds, s["lambda_ref"])
    cl_only = [dataclasses.replace(b, kappa_q=0.0) for b in bds]
    cl = ratio_curve(cl_only, s["lambda_ref"])
    xi = tot.ratios - cl.ratios
    rows = [
        f"{b.wavelength * 1e9:.6f},{b.kappa_cl:.9e},{b.kappa_q:.9e},"
        f"{b.kappa_tot:.9e},{tot.ratios[i]:.9e},{xi[i]:.9e}"
        for i, b in enumerate(bds)
    ]
    _write_csv(
        os.path.join(out, "sweep.csv"),
        "wavelength_nm,kappa_cl,kappa_q,kappa_tot,ratio,xi",
        rows,
    )


def _segment_kappas(rc: RunConfig, lam_blue: float, lam_red: float) -> list:
    """Trap stiffness per acquisition segment: parking, then parking+probe."""
    ex = rc.experiment
    s = rc.sweep

    def kappa(lam: float, power: float) -> float:
        beam = dataclasses.replace(rc.beam, wavelength=lam, power=power)
        k_cl = classical_stiffness(rc.crystal.radius, beam, rc.physics.n_host)
        if ex["mode"] == "independent":
            k_q = independent_quantum_stiffness(rc.crystal, rc.physics, beam)
        else:
            k_q = ensemble_quantum_stiffness(
                rc.crystal, rc.physics, drive_field(beam), s["grain_width"]
            )
        return k_cl + k_q

    k_park = kappa(ex["parking_wavelength"], ex["power_parking"])
    k_blue = kappa(lam_blue, ex["power_probe"])
    k_ref = kappa(s["lambda_ref"], ex["power_probe"])
    k_red = kappa(lam_red, ex["power_probe"])
    return [k_park, k_park + k_blue, k_park + k_ref, k_park + k_red, k_park]


def _pipe_virtual_experiment(rc: RunConfig, out: str) -> None:
    """Synthetic acquisitions end to end: traces, ratios, filtered stats."""
    ex = rc.experiment
    sim = rc.sim
    an = rc.analyze
    samples = []
    meta = []
    trace_dir = os.path.join(out, "traces")
    if ex["write_traces"]:
        os.makedirs(trace_dir, exist_ok=True)
    for ip, (lam_b, lam_r) in enumerate(ex["pairs"]):
        kappas = _segment_kappas(rc, lam_b, lam_r)
        log.info(
            "pair %d: corners %s Hz",
            ip,
            [
                f"{true_corner_frequency(k, drag_coefficient(rc.crystal.radius, rc.environment), sim['restoring']):.1f}"
                for k in kappas
            ],
        )
        for rep in range(ex["repeats"]):
            seed = rc.seed + 1000 * ip + rep
            acq = simulate_trace(
                kappas,
                rc.crystal.radius,
                rc.environment,
                dt=sim["dt"],
                seed=seed,
                restoring=sim["restoring"],
                segment_duration=sim["segment_duration"],
                integrator=sim["integrator"],
                readout_noise_sd=sim["readout_noise_sd"],
            )
            if ex["write_traces"]:
                _write_trace_csv(os.path.join(trace_dir, f"acq_{ip:03d}_{rep:03d}.csv"), acq)
            samples.append(analysis.extract_ratios(acq, nperseg=an["nperseg"]))
            meta.append((ip, rep, lam_b, lam_r))
    _write_ratio_outputs(rc, out, samples, meta)


def _write_trace_csv(path: str, acq: SegmentedAcquisition) -> None:
    labels = np.empty(acq.samples.size, dtype=object)
    for label, sl in acq.segment_slices():
        labels[sl] = label
    t = np.arange(acq.samples.size) * acq.dt
    rows = (
        f"{t[i]:.9e},{acq.samples[i]:.9e},{labels[i]}" for i in range(acq.samples.size)
    )
    _write_csv(path, "t_s,x_m,segment_label", rows)


def _write_ratio_outputs(rc: RunConfig, out: str, samples, meta) -> None:
    an = rc.analyze
    rows = []
    for (ip, rep, lam_b, lam_r), s in zip(meta, samples):
        rows.append(
            f"{ip},{rep},{lam_b * 1e9:.6f},{lam_r * 1e9:.6f},"
            f"{s.r_blue:.9e},{s.r_red:.9e},{s.f660_start:.6e},{s.f660_end:.6e},"
            f"{int(s.accepted)},{s.reason}"
        )
    _write_csv(
        os.path.join(out, "ratios.csv"),
        "pair,repeat,lambda_blue_nm,lambda_red_nm,r_blue,r_red,"
        "f660_start_hz,f660_end_hz,accepted,reason",
        rows,
    )

    kept = [s for s in samples if s.accepted]
    stats = {
        "n_total": len(samples),
        "n_accepted": len(kept),
        "n_after_lof": len(kept),
        "lof_removed": 0,
    }
    if kept:
        pts = np.array([[s.r_blue, s.r_red] for s in kept])
        if an["lof"] and pts.shape[0] >= an["lof_k"] + 2:
            kept_idx, removed_idx, _ = analysis.lof_filter(
                pts, k=an["lof_k"], threshold=an["lof_threshold"]
            )
            stats["n_after_lof"] = int(kept_idx.size)
            stats["lof_removed"] = int(removed_idx.size)
            pts = pts[kept_idx]
        for j, side in enumerate(("r_blue", "r_red")):
            mean, se, skew = analysis.distribution_stats(pts[:, j])
            stats[side] = {"mean": mean, "se": se, "skewness": skew}
    _atomic_write(os.path.join(out, "stats.json"), json.dumps(stats, indent=2))


def _read_trace_csv(path: str) -> SegmentedAcquisition:
    ts = []
    xs = []
    boundaries = []
    labels = []
    prev = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:3] != ["t_s", "x_m", "segment_label"]:
            raise ValueError(f"{path}: expected columns t_s,x_m,segment_label")
        for i, row in enumerate(reader):
            ts.append(float(row[0]))
            xs.append(float(row[1]))
            if row[2] != prev:
                boundaries.append(i)
                labels.append(row[2])
                prev = row[2]
    if len(xs) < 10:
        raise ValueError(f"{path}: trace too short")
    n_seg = len(labels)
    dt = ts[1] - ts[0]
    seg_lengths = np.diff(boundaries + [len(xs)])
    if np.ptp(seg_lengths) > 1:
        raise ValueError(f"{path}: segments are unequal, cannot analyze")
    return SegmentedAcquisition(
        dt=dt,
        samples=np.asarray(xs),
        segment_labels=tuple(labels),
        segment_duration=len(xs) * dt / n_seg,
    )


def _pipe_analyze(rc: RunConfig, out: str) -> None:
    """Ratio extraction + filtering on stored traces (file or glob)."""
    import glob as globmod

    pattern = rc.analyze["trace_csv"]
    if not pattern:
        raise ConfigError("analyze.trace_csv is required for the analyze pipeline")
    paths = sorted(globmod.glob(pattern)) if any(c in pattern for c in "*?[") else [pattern]
    if not paths:
        raise FileNotFoundError(f"no traces match {pattern!r}")
    samples = []
    meta = []
    for i, p in enumerate(paths):
        acq = _read_trace_csv(p)
        samples.append(analysis.extract_ratios(acq, nperseg=rc.analyze["nperseg"]))
        meta.append((i, 0, 0.0, 0.0))
    _write_ratio_outputs(rc, out, samples, meta)


def _pipe_mc(rc: RunConfig, out: str) -> None:
    """Population Monte Carlo of the doping contrast curve."""
    grid = _sweep_grid(rc)
    mc = rc.mc
    result = montecarlo.run_mc(
        rc.population,
        rc.physics,
        rc.beam,
        grid,
        grain_width=rc.sweep["grain_width"],
        n_trials=mc["n_trials"],
        seed=rc.seed,
        mode=mc["mode"],
        trust_n=mc["trust_n"],
        xi_noise_sd=mc["xi_noise_sd"],
        workers=rc.workers,
    )
    _atomic_write(
        os.path.join(out, "mc_curve.csv"), "\n".join(result.to_csv_rows()) + "\n"
    )
    _atomic_write(os.path.join(out, "mc_result.json"), result.to_json())


def _pipe_fit_grain(rc: RunConfig, out: str) -> None:
    """Scan grain widths against a target contrast curve."""
    fg = rc.fit_grain
    grid = _sweep_grid(rc)
    if fg["target_csv"]:
        data = np.loadtxt(fg["target_csv"], delimiter=",", skiprows=1, usecols=(0, 1))
        targets = [(lam * 1e-9, xi) for lam, xi in np.atleast_2d(data)]
    elif fg["synthesize_width"] is not None:
        xi = montecarlo.xi_direct(
            rc.crystal, rc.physics, rc.beam, grid, fg["synthesize_width"], rc.mc["trust_n"]
        )
        targets = list(zip(grid.tolist(), xi.tolist()))
    else:
        raise ConfigError("fit_grain needs target_csv or synthesize_width")
    best, rows = montecarlo.fit_grain_width(
        targets, fg["candidates"], rc.crystal, rc.physics, rc.beam,
        trust_n=rc.mc["trust_n"],
    )
    payload = {
        "best_grain_width_rad_s": best,
        "best_grain_width_GHz_over_2pi": best / (2.0 * math.pi * 1e9),
        "scan": [{"grain_width_rad_s": w, "sse": sse} for w, sse in rows],
    }
    _atomic_write(os.path.join(out, "fit_grain.json"), json.dumps(payload, indent=2))


PIPELINES = {
    "forces": _pipe_forces,
    "sweep": _pipe_sweep,
    "virtual-experiment": _pipe_virtual_experiment,
    "analyze": _pipe_analyze,
    "mc": _pipe_mc,
    "fit-grain": _pipe_fit_grain,
}


# ------------------------------------------------------------------ driver


def _setup_logging() -> None:
    level = os.environ.get("NVTRAP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))


def _load(args) -> tuple[RunConfig, str]:
    raw = load_raw(args.config)
    with open(args.config, "rb") as fh:
        cfg_hash = hashlib.sha256(fh.read()).hexdigest()
    rc = build_run_config(raw)
    if getattr(args, "out", None):
        rc = dataclasses.replace(rc, out_dir=args.out)
    if getattr(args, "seed", None) is not None:
        rc = dataclasses.replace(rc, seed=args.seed)
    if getattr(args, "workers", None) is not None:
        rc = dataclasses.replace(rc, workers=args.workers)
    if getattr(args, "deterministic", False):
        rc = dataclasses.replace(rc, workers=1)
    return rc, cfg_hash


def _cmd_run(args) -> int:
    try:
        rc, cfg_hash = _load(args)
        diags = validate_config(load_raw(args.config))
        errors = [d for d in diags if d.startswith("error")]
        if errors:
            for d in errors:
                print(d, file=sys.stderr)
            return EXIT_CONFIG
        for d in diags:
            log.warning(d)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        os.makedirs(rc.out_dir, exist_ok=True)
        manifest_path = os.path.join(rc.out_dir, "manifest.json")
        _atomic_write(manifest_path, _manifest(rc, cfg_hash, "running"))
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO

    try:
        PIPELINES[rc.pipeline](rc, rc.out_dir)
    except ConfigError as exc:
        _atomic_write(manifest_path, _manifest(rc, cfg_hash, "config-error", {"error": str(exc)}))
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        _atomic_write(manifest_path, _manifest(rc, cfg_hash, "numerical-failure", {"error": str(exc)}))
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        with contextlib.suppress(OSError):
            _atomic_write(manifest_path, _manifest(rc, cfg_hash, "io-error", {"error": str(exc)}))
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    _atomic_write(manifest_path, _manifest(rc, cfg_hash, "success"))
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        raw = load_raw(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    diags = validate_config(raw)
    for d in diags:
        print(d)
    return EXIT_CONFIG if any(d.startswith("error") for d in diags) else EXIT_OK


def main(argv=None) -> int:
    _setup_logging()
    parser = argparse.ArgumentParser(
        prog="nvtrap",
        description="Optical trap stiffness pipelines for NV-doped nanodiamonds",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute the pipeline named in the config")
    run_p.add_argument("--config", required=True, help="TOML or JSON run config")
    run_p.add_argument("--out", help="output directory (overrides config)")
    run_p.add_argument("--seed", type=int, help="RNG seed (overrides config)")
    run_p.add_argument("--workers", type=int, help="parallel worker budget")
    run_p.add_argument(
        "--deterministic",
        action="store_true",
        help="force single-worker execution for byte-identical outputs",
    )
    run_p.set_defaults(func=_cmd_run)

    val_p = sub.add_parser("validate", help="schema and plausibility checks only")
    val_p.add_argument("--config", required=True)
    val_p.set_defaults(func=_cmd_validate)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
