#!/usr/bin/env python3
"""Seed sweep checking spectral recovery of known trap stiffnesses.

Simulates the five-segment acquisition (parking, blue probe, reference,
red probe, parking) with a known stiffness staircase, runs the Lorentzian
pipeline on each trace, and prints median recovery errors. The staircase
[k, 1.6k, 1.4k, 1.2k, k] makes the normalized ratios exactly 1.5 (blue)
and 0.5 (red), so pipeline bias shows up directly.

Example:
    python scripts/brownian_calibration.py --seeds 50
"""

import argparse
import math
import statistics
import sys

from nvtrap.analysis import extract_ratios
from nvtrap.langevin import (
    FluidEnvironment,
    drag_coefficient,
    simulate_trace,
    true_corner_frequency,
)

STAIRCASE = (1.0, 1.6, 1.4, 1.2, 1.0)
R_BLUE_TRUE = 1.5
R_RED_TRUE = 0.5


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=50)
    ap.add_argument("--seed0", type=int, default=0)
    ap.add_argument("--corner-hz", type=float, default=400.0)
    ap.add_argument("--radius-nm", type=float, default=75.0)
    ap.add_argument("--dt", type=float, default=1e-5)
    ap.add_argument("--segment-s", type=float, default=10.0)
    ap.add_argument("--integrator", choices=("euler", "exact"), default="exact")
    ap.add_argument("--nperseg", type=int, default=2**14)
    args = ap.parse_args()

    env = FluidEnvironment()
    radius = args.radius_nm * 1e-9
    beta = drag_coefficient(radius, env)
    # two-kappa restoring: the spectral corner sits at 2k/(2 pi beta)
    k0 = math.pi * beta * args.corner_hz
    assert abs(true_corner_frequency(k0, beta) - args.corner_hz) < 1e-9
    kappas = [f * k0 for f in STAIRCASE]

    corner_errs, blue_errs, red_errs, rejects = [], [], [], 0
    for i in range(args.seeds):
        acq = simulate_trace(
            kappas, radius, env, dt=args.dt, seed=args.seed0 + i,
            segment_duration=args.segment_s, integrator=args.integrator,
        )
        samp = extract_ratios(acq, nperseg=args.nperseg)
        if not samp.accepted:
            rejects += 1
            print(f"seed {args.seed0 + i}: rejected ({samp.reason})",
                  file=sys.stderr)
            continue
        f660 = 0.5 * (samp.f660_start + samp.f660_end)
        corner_errs.append(abs(f660 - args.corner_hz) / args.corner_hz)
        blue_errs.append(abs(samp.r_blue - R_BLUE_TRUE) / R_BLUE_TRUE)
        red_errs.append(abs(samp.r_red - R_RED_TRUE) / R_RED_TRUE)

    n_ok = len(corner_errs)
    print(f"accepted {n_ok}/{args.seeds} traces ({rejects} rejected)")
    if n_ok:
        print(f"median corner error : {statistics.median(corner_errs):7.4f}")
        print(f"median r_blue error : {statistics.median(blue_errs):7.4f}")
        print(f"median r_red error  : {statistics.median(red_errs):7.4f}")
    return 0 if n_ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
