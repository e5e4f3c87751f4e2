#!/usr/bin/env python3
"""Monte Carlo calibration of the orientation-estimator tolerance.

Renders the three-plane defocused stack at the true orientation
(polar 40 deg, azimuth 28 deg), adds 5% Gaussian pixel noise with 100
different seeds, and reports the error distribution of
estimate_orientation.  The test-suite tolerances (+-3 deg polar,
+-2 deg azimuth) were frozen from this run.

Usage: python scripts/calibrate_orientation_tolerance.py [n_seeds]
"""

import sys
import time

import numpy as np

import photonlab as pl


def main(n_seeds: int = 100) -> int:
    optics = pl.OpticsConfig()
    truth = pl.DipoleOrientation(40.0, 28.0)
    stack = [pl.render_defocused_image(truth, optics, dz) for dz in (500.0, 720.0, 1320.0)]

    polar_err, azimuth_err = [], []
    start = time.monotonic()
    for seed in range(n_seeds):
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        noisy = []
        for im in stack:
            sigma = 0.05 * im.pixels.max()
            px = np.clip(im.pixels + rng.normal(0.0, sigma, im.pixels.shape), 0.0, None)
            noisy.append(pl.DefocusedImage(px, im.defocus_nm, optics))
        est = pl.estimate_orientation(noisy, search_deg=2.0)
        polar_err.append(est.orientation.polar_deg - truth.polar_deg)
        azimuth_err.append(est.orientation.azimuth_deg - truth.azimuth_deg)
    elapsed = time.monotonic() - start

    polar_err = np.abs(polar_err)
    azimuth_err = np.abs(azimuth_err)
    print(f"{n_seeds} seeds in {elapsed:.1f} s ({elapsed / n_seeds * 1000:.0f} ms/seed)")
    for name, err, frozen in (("polar", polar_err, 3.0), ("azimuth", azimuth_err, 2.0)):
        print(
            f"|{name} error| deg: mean {err.mean():.3f}  p95 {np.percentile(err, 95):.3f}  "
            f"max {err.max():.3f}  -> frozen tolerance +-{frozen}"
        )
        if err.max() >= frozen:
            print(f"WARNING: {name} tolerance exceeded; tests would be flaky")
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main(int(sys.argv[1]) if len(sys.argv) > 1 else 100))
