"""Static vector-graphic plots of data products with fit overlays.

SVGs are written with a fixed hash salt and no date metadata so repeated
runs produce identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "photonlab"
import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.savefig(path, metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_spectrum(spectrum, fit, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.plot(spectrum.wavelength_nm, spectrum.counts, "k-", lw=0.8, label="spectrum")
    if fit is not None and fit.converged:
        p = fit.parameters
        wl = np.linspace(spectrum.wavelength_nm[0], spectrum.wavelength_nm[-1], 600)
        h = 0.5 * p["fwhm_nm"]
        model = p["offset"] + p["amplitude"] * h**2 / ((wl - p["center_nm"]) ** 2 + h**2)
        ax.plot(wl, model, "r-", lw=1.2, label="Lorentzian fit")
    ax.set_xlabel("wavelength (nm)")
    ax.set_ylabel("counts")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_interferogram(interferogram, envelope, fit, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.4))
    ax.plot(interferogram.opd_nm / 1000.0, interferogram.intensity, "k.", ms=1.5, label="samples")
    if envelope:
        opd = np.array([p[0] for p in envelope]) / 1000.0
        vis = np.array([p[1] for p in envelope])
        mean = interferogram.intensity.mean()
        ax.plot(opd, mean * (1 + vis), "bo", ms=3, label="fringe maxima envelope")
        if fit is not None and fit.converged:
            xx = np.linspace(interferogram.opd_nm.min(), interferogram.opd_nm.max(), 400) / 1000.0
            v = fit.parameters["v0"] * np.exp(-np.abs(xx) / fit.parameters["l_coh_um"])
            ax.plot(xx, mean * (1 + v), "r-", lw=1.2, label="exponential fit")
    ax.set_xlabel("optical path difference (um)")
    ax.set_ylabel("counts")
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def plot_g2(hist, fit, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.step(hist.tau_ps / 1000.0, hist.g2, "k-", lw=0.8, where="mid", label="g2 estimate")
    if fit is not None and fit.converged:
        p = fit.parameters
        tau = np.linspace(hist.tau_ps.min(), hist.tau_ps.max(), 600)
        model = p["baseline"] * (1 - p["contrast"] * np.exp(-np.abs(tau) / p["antibunching_time_ps"]))
        ax.plot(tau / 1000.0, model, "r-", lw=1.2, label="dip fit")
    ax.axhline(1.0, color="0.6", lw=0.6, ls="--")
    ax.set_xlabel("delay tau (ns)")
    ax.set_ylabel("g2(tau)")
    ax.set_ylim(bottom=0)
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_lifetime(time_ps, counts, fit, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.semilogy(np.asarray(time_ps) / 1000.0, np.maximum(counts, 0.5), "k.", ms=2, label="histogram")
    if fit is not None and fit.converged:
        p = fit.parameters
        t0 = p.get("window_start_ps", 0.0)
        tt = np.linspace(t0, max(time_ps), 400)
        model = p["amplitude"] * np.exp(-(tt - t0) / p["tau_ps"]) + p["background"]
        ax.semilogy(tt / 1000.0, model, "r-", lw=1.2, label=f"tau = {p['tau_ns']:.2f} ns")
    ax.set_xlabel("time after pulse (ns)")
    ax.set_ylabel("counts")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_polarization(sweeps, path) -> Path:
    """sweeps: list of (angles_deg, counts, fit, label)."""
    fig, ax = plt.subplots(figsize=(5, 3.4))
    colors = ["k", "b", "g"]
    for i, (angles, counts, fit, label) in enumerate(sweeps):
        c = colors[i % len(colors)]
        ax.plot(angles, counts, c + "o", ms=3, label=label)
        if fit is not None and fit.converged and "dipole_azimuth_deg" in fit.parameters:
            p = fit.parameters
            m = 4.0 if "hwp" in label else 2.0
            xx = np.linspace(min(angles), max(angles), 400)
            model = p["offset"] + p["amplitude"] * np.cos(
                m * np.radians(xx) - 2 * np.radians(p["dipole_azimuth_deg"])
            )
            ax.plot(xx, model, c + "-", lw=1.0)
    ax.set_xlabel("angle (deg)")
    ax.set_ylabel("counts")
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def plot_image_row(images, labels, path, suptitle: str | None = None) -> Path:
    fig, axes = plt.subplots(1, len(images), figsize=(2.6 * len(images), 2.9))
    if len(images) == 1:
        axes = [axes]
    for ax, im, label in zip(axes, images, labels):
        extent_um = im.optics.pixel_pitch_sample_plane_nm * im.optics.grid_size / 2000.0
        ax.imshow(
            im.pixels,
            origin="lower",
            cmap="inferno",
            extent=[-extent_um, extent_um, -extent_um, extent_um],
        )
        ax.set_title(label, fontsize=8)
        ax.set_xticks([])
        ax.set_yticks([])
    if suptitle:
        fig.suptitle(suptitle, fontsize=9)
    return _save(fig, path)
