"""Estimators that recover emitter parameters from measurement records.

All fits run through the shared damped Gauss-Newton engine in
:mod:`photonlab.fitting`; count data is weighted by sqrt(max(y, 1)).
Derived quantities (coherence length from a line fit, coherence time
from a length) are added to the result with first-order propagated
errors.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .emitter import (
    SPEED_OF_LIGHT_UM_PER_PS,
    LorentzianLine,
    coherence_length_um,
    coherence_time_ps,
    lorentzian_value,
)
from .errors import EstimationError, UsageError
from .fitting import FitResult, least_squares_fit
from .interferometry import CorrelationHistogram, Interferogram
from .photostream import PS_PER_NS, PS_PER_S, TimeTagStream

logger = logging.getLogger(__name__)

DEFAULT_LIFETIME_WINDOW_START_PS = 500.0
POLARIZATION_PERIOD_DEG = {"hwp": 90.0, "polarizer": 180.0}


@dataclass(frozen=True)
class Spectrum:
    """Sampled luminescence spectrum: counts versus wavelength in nm."""

    wavelength_nm: np.ndarray
    counts: np.ndarray
    integration_time_s: float = 1.0

    def __post_init__(self):
        wl = np.asarray(self.wavelength_nm, dtype=float)
        y = np.asarray(self.counts, dtype=float)
        if wl.shape != y.shape or wl.ndim != 1:
            raise UsageError("wavelength_nm and counts must be 1-d arrays of equal length")
        if np.any(np.diff(wl) <= 0):
            raise UsageError("wavelengths must be strictly increasing")
        if np.any(y < 0):
            raise UsageError("counts must be non-negative")
        object.__setattr__(self, "wavelength_nm", wl)
        object.__setattr__(self, "counts", y)


def synthesize_spectrum(
    line: LorentzianLine, wavelength_nm, seed: int, integration_time_s: float = 1.0
) -> Spectrum:
    """Poisson-noisy spectrometer record of a Lorentzian line."""
    wl = np.asarray(wavelength_nm, dtype=float)
    mean = lorentzian_value(line, wl)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    return Spectrum(wl, rng.poisson(mean).astype(float), integration_time_s)


def _poisson_sigma(y: np.ndarray) -> np.ndarray:
    return np.sqrt(np.maximum(y, 1.0))


def _add_coherence_params(result: FitResult, center: float, fwhm: float, s_center: float, s_fwhm: float) -> None:
    l_um = coherence_length_um(center, fwhm)
    # l = lambda^2 / (2 pi dlambda): relative errors add in quadrature
    rel = math.sqrt((2.0 * s_center / center) ** 2 + (s_fwhm / fwhm) ** 2)
    result.parameters["coherence_length_um"] = l_um
    result.standard_errors["coherence_length_um"] = l_um * rel
    result.parameters["coherence_time_ps"] = coherence_time_ps(l_um)
    result.standard_errors["coherence_time_ps"] = coherence_time_ps(l_um) * rel


def fit_lorentzian(spectrum: Spectrum) -> FitResult:
    """Fit a Lorentzian line to a spectrum; also reports the implied
    coherence length and time with propagated errors."""
    wl = spectrum.wavelength_nm
    y = spectrum.counts
    if wl.size < 8:
        raise UsageError(f"need at least 8 spectrum samples, got {wl.size}")
    span = float(wl[-1] - wl[0])
    i_max = int(np.argmax(y))
    offset0 = float(y.min())
    amp0 = float(y.max() - offset0)
    if amp0 > 0:
        above = np.flatnonzero(y >= offset0 + 0.5 * amp0)
        fwhm0 = float(wl[above[-1]] - wl[above[0]]) if above.size >= 2 else span / 4.0
    else:
        fwhm0 = span / 4.0  # featureless data: let the rank check decide
    fwhm0 = max(fwhm0, float(np.median(np.diff(wl))))
    if span <= 2.0 * fwhm0:
        raise UsageError(
            f"spectrum span {span:.3g} nm does not cover twice the initial "
            f"width guess {fwhm0:.3g} nm; widen the scan"
        )

    def model(x, p):
        center, fwhm, amplitude, offset = p
        h = 0.5 * fwhm
        return offset + amplitude * h**2 / ((x - center) ** 2 + h**2)

    result = least_squares_fit(
        model,
        wl,
        y,
        _poisson_sigma(y),
        [wl[i_max], fwhm0, amp0, offset0],
        bounds=(
            [wl[0] - span, 1e-6 * span, 0.0, 0.0],
            [wl[-1] + span, 10.0 * span, np.inf, np.inf],
        ),
        names=["center_nm", "fwhm_nm", "amplitude", "offset"],
    )
    if i_max in (0, wl.size - 1):
        result.flags.append("peak_at_edge")
    p, s = result.parameters, result.standard_errors
    if result.converged and p["fwhm_nm"] > 0:
        _add_coherence_params(result, p["center_nm"], p["fwhm_nm"], s["center_nm"], s["fwhm_nm"])
    return result


def extract_envelope(
    interferogram: Interferogram,
    center_wavelength_hint_nm: float,
    return_details: bool = False,
):
    """Fringe visibility versus path difference from a step-and-scan record.

    The record is split into piezo segments (detected from gaps in the OPD
    sampling); each segment gets a fixed-frequency sinusoid fit
    I = A (1 + V cos(2 pi opd / lambda + phi)) with the carrier wavelength
    shared across segments.  Segments whose fit fails are dropped and
    counted in a log message.
    """
    opd = interferogram.opd_nm
    y = interferogram.intensity
    lam = float(center_wavelength_hint_nm)
    if opd.size < 12:
        raise UsageError("interferogram too short to segment")
    diffs = np.diff(opd)
    med = float(np.median(diffs))
    if med >= lam / 2.0:
        raise UsageError(
            f"OPD sampling of {med:.1f} nm does not resolve the fringes: "
            f"needs < lambda/2 = {lam / 2:.1f} nm (mirror steps < lambda/4)"
        )
    boundary = np.flatnonzero(diffs > 3.0 * med) + 1
    segments = np.split(np.arange(opd.size), boundary)
    if len(segments) == 1 and opd[-1] - opd[0] > 8.0 * lam:
        # continuous scan: chop into windows of ~4 fringes
        win = max(int(round(4.0 * lam / med)), 8)
        segments = [np.arange(i, min(i + win, opd.size)) for i in range(0, opd.size, win)]

    k = 2.0 * math.pi / lam
    details = []
    dropped = 0
    for idx in segments:
        if idx.size < 9 or opd[idx[-1]] - opd[idx[0]] < lam:
            dropped += 1
            continue
        x = opd[idx]
        yy = y[idx]
        sig = _poisson_sigma(yy)
        w = 1.0 / sig**2
        center = float(x.mean())
        span_x = float(x[-1] - x[0])
        # quadrature amplitudes plus their first-order drift across the
        # segment: the envelope decays within a window of a few fringes and
        # a constant-V model would bias V by ~1e-3
        u = (x - center) / span_x

        def model(xx, p, _u=u, _k=k):
            cosk, sink = np.cos(_k * xx), np.sin(_k * xx)
            return p[0] + (p[1] + p[3] * _u) * cosk + (p[2] + p[4] * _u) * sink

        design = np.column_stack(
            [np.ones_like(x), np.cos(k * x), np.sin(k * x), u * np.cos(k * x), u * np.sin(k * x)]
        )
        try:
            coef, *_ = np.linalg.lstsq(design * np.sqrt(w)[:, None], yy * np.sqrt(w), rcond=None)
        except np.linalg.LinAlgError:
            dropped += 1
            continue

        fit = least_squares_fit(
            model, x, yy, sig, coef,
            names=["mean", "cos_amp", "sin_amp", "cos_slope", "sin_slope"],
        )
        a, b, c = (fit.parameters[n] for n in ("mean", "cos_amp", "sin_amp"))
        if not fit.converged or a <= 0:
            dropped += 1
            continue
        visibility = math.hypot(b, c) / a
        phase = math.atan2(-c, b)
        details.append(
            {
                "opd_nm": center,
                "visibility": float(visibility),
                "phase_rad": float(phase),
                "mean_counts": float(a),
                "fit": fit,
            }
        )
    if dropped:
        logger.info("extract_envelope: dropped %d of %d segments", dropped, len(segments))
    if len(details) < 3:
        raise EstimationError(
            f"only {len(details)} usable piezo segments ({dropped} dropped); "
            f"need at least 3 for an envelope"
        )
    if return_details:
        return details
    return [(d["opd_nm"], d["visibility"]) for d in details]


def extract_envelope_peaks(interferogram: Interferogram, center_wavelength_hint_nm: float):
    """Cross-check envelope: per-segment fringe contrast from the sampled
    extremes, V = (Imax - Imin)/(Imax + Imin).

    Cruder than the sinusoid fit (sampling rarely lands exactly on a peak,
    biasing V low by up to ~(pi * spacing / lambda)^2 / 2), but it must
    agree with the primary method on clean data.
    """
    opd = interferogram.opd_nm
    y = interferogram.intensity
    lam = float(center_wavelength_hint_nm)
    if opd.size < 12:
        raise UsageError("interferogram too short to segment")
    diffs = np.diff(opd)
    med = float(np.median(diffs))
    boundary = np.flatnonzero(diffs > 3.0 * med) + 1
    segments = np.split(np.arange(opd.size), boundary)
    points = []
    for idx in segments:
        if idx.size < 9 or opd[idx[-1]] - opd[idx[0]] < 2.0 * lam:
            continue
        hi = float(y[idx].max())
        lo = float(y[idx].min())
        if hi + lo <= 0:
            continue
        points.append((float(opd[idx].mean()), (hi - lo) / (hi + lo)))
    if len(points) < 3:
        raise EstimationError(f"only {len(points)} usable segments for peak-picking")
    return points


def fit_coherence_length(envelope, sigma=None) -> FitResult:
    """Fit V = V0 exp(-|opd|/l_coh) to visibility-versus-OPD points (nm)."""
    pts = np.asarray([(p[0], p[1]) for p in envelope], dtype=float)
    if pts.shape[0] < 5:
        raise UsageError(f"need at least 5 envelope points, got {pts.shape[0]}")
    opd_um = np.abs(pts[:, 0]) / 1000.0
    vis = pts[:, 1]
    span = float(opd_um.max() - opd_um.min()) or 1.0
    order = np.argsort(opd_um)
    v0 = float(np.clip(vis[order[0]], 1e-3, 2.0))
    below = np.flatnonzero(vis[order] < v0 / math.e)
    l0 = float(opd_um[order[below[0]]]) if below.size else 2.0 * span
    l0 = min(max(l0, span * 1e-2), span * 1e3)

    def model(x, p):
        return p[1] * np.exp(-x / p[0])

    result = least_squares_fit(
        model,
        opd_um,
        vis,
        1.0 if sigma is None else sigma,
        [l0, v0],
        bounds=([span * 1e-3, 1e-6], [span * 1e4, 2.0]),
        names=["l_coh_um", "v0"],
    )
    p, s = result.parameters, result.standard_errors
    result.parameters["coherence_time_ps"] = p["l_coh_um"] / SPEED_OF_LIGHT_UM_PER_PS
    result.standard_errors["coherence_time_ps"] = s["l_coh_um"] / SPEED_OF_LIGHT_UM_PER_PS
    return result


def fit_g2_dip(hist: CorrelationHistogram) -> FitResult:
    """Fit g2(tau) = baseline (1 - C exp(-|tau|/tau_a)) to a correlation
    histogram, weighting bins by the Poisson error of their raw counts."""
    tau = np.asarray(hist.tau_ps, dtype=float)
    g2 = np.asarray(hist.g2, dtype=float)
    raw = np.asarray(hist.raw, dtype=float)
    if tau.size < 11:
        raise UsageError(f"need at least 11 histogram bins, got {tau.size}")
    outer = np.abs(tau) >= 0.6 * np.abs(tau).max()
    baseline0 = float(g2[outer].mean()) or 1.0
    depth = baseline0 - g2
    c0 = float(np.clip(depth.max() / baseline0, 0.05, 1.0))
    half = depth > 0.5 * depth.max()
    tau_half = float(np.abs(tau[half]).max()) if half.any() else np.abs(tau).max() / 10.0
    tau0 = max(tau_half / math.log(2.0), hist.bin_width_ps)

    # one uncorrelated-baseline normalization constant relates raw counts
    # to g2 in every bin; recover it from the data so CSV round trips fit
    # identically to in-memory histograms
    mask = (raw > 0) & (g2 > 0)
    if mask.any():
        norm = float(np.median(raw[mask] / g2[mask]))
    else:
        norm = hist.rate0_cps * hist.rate1_cps * (hist.bin_width_ps / PS_PER_S) * (
            hist.duration_ps / PS_PER_S
        )
    sigma = np.sqrt(np.maximum(raw, 1.0)) / norm
    half_bin = hist.bin_width_ps / 2.0

    def model(x, p):
        # bin-integrated: the |tau| cusp otherwise biases the contrast low
        c, tau_a, baseline = p
        a = x - half_bin
        b = x + half_bin
        g = lambda u: np.sign(u) * tau_a * (1.0 - np.exp(-np.abs(u) / tau_a))
        mean_exp = (g(b) - g(a)) / (b - a)
        return baseline * (1.0 - c * mean_exp)

    result = least_squares_fit(
        model,
        tau,
        g2,
        sigma,
        [c0, tau0, baseline0],
        bounds=([0.0, hist.bin_width_ps / 10.0, 1e-6], [1.2, 100.0 * np.abs(tau).max(), 10.0]),
        names=["contrast", "antibunching_time_ps", "baseline"],
    )
    if int(np.argmin(g2)) in (0, tau.size - 1):
        result.flags.append("dip_at_edge")
    result.parameters["antibunching_time_ns"] = result.parameters["antibunching_time_ps"] / PS_PER_NS
    result.standard_errors["antibunching_time_ns"] = (
        result.standard_errors["antibunching_time_ps"] / PS_PER_NS
    )
    return result


def lifetime_histogram(stream: TimeTagStream, bin_width_ps: float = 64.0):
    """Fold a pulsed stream modulo the pulse period into a TCSPC histogram.

    Returns (bin centers in ps, counts).
    """
    origin = stream.origin
    if origin.get("kind") != "pulsed":
        raise UsageError("lifetime_histogram needs a pulsed stream (origin kind 'pulsed')")
    period_ps = float(origin["excitation"]["pulse_period_ns"]) * PS_PER_NS
    folded = np.mod(stream.timestamps.astype(float), period_ps)
    n_bins = max(int(math.ceil(period_ps / bin_width_ps)), 1)  # cover the whole period
    counts, edges = np.histogram(folded, bins=n_bins, range=(0.0, n_bins * bin_width_ps))
    centers = 0.5 * (edges[:-1] + edges[1:])
    return centers, counts.astype(float)


def fit_lifetime(
    time_ps,
    counts,
    fit_window_start_ps: float = DEFAULT_LIFETIME_WINDOW_START_PS,
) -> FitResult:
    """Fit A exp(-(t - t_start)/tau) + B on t >= fit_window_start with
    Poisson weights; the early window is excluded rather than deconvolved."""
    t = np.asarray(time_ps, dtype=float)
    y = np.asarray(counts, dtype=float)
    sel = t >= fit_window_start_ps
    if not np.any(sel):
        raise UsageError(
            f"fit window starting at {fit_window_start_ps} ps excludes all "
            f"{t.size} histogram bins"
        )
    t_w, y_w = t[sel], y[sel]
    if t_w.size < 10:
        raise UsageError(f"need at least 10 bins in the fit window, got {t_w.size}")
    t0 = float(t_w[0])
    n_tail = max(t_w.size // 10, 3)
    b0 = float(y_w[-n_tail:].mean())
    a0 = max(float(y_w[:3].mean()) - b0, 1.0)
    target = b0 + a0 / math.e
    below = np.flatnonzero(y_w < target)
    tau0 = float(t_w[below[0]] - t0) if below.size else (t_w[-1] - t0) / 3.0
    tau0 = max(tau0, float(np.median(np.diff(t_w))))

    def model(x, p):
        tau, amplitude, background = p
        return amplitude * np.exp(-(x - t0) / tau) + background

    result = least_squares_fit(
        model,
        t_w,
        y_w,
        _poisson_sigma(y_w),
        [tau0, a0, b0],
        bounds=([1e-3, -np.inf, -np.inf], [1e12, np.inf, np.inf]),
        names=["tau_ps", "amplitude", "background"],
    )
    result.parameters["tau_ns"] = result.parameters["tau_ps"] / PS_PER_NS
    result.standard_errors["tau_ns"] = result.standard_errors["tau_ps"] / PS_PER_NS
    result.parameters["window_start_ps"] = t0  # amplitude is referenced here
    result.standard_errors["window_start_ps"] = 0.0
    return result


def fit_polarization(angles_deg, counts, mode: str, sigma=None) -> FitResult:
    """Fit the polarization sweep of the given mode and report the dipole
    azimuth in [0, 180).

    Mode "hwp" fits A + B cos(4a - 2phi) against the waveplate angle (the
    rotation of the polarization is twice the plate angle, so the fitted
    phase in plate angle is half the azimuth); mode "polarizer" fits
    A + B cos(2b - 2phi).  If the modulation amplitude is statistically
    consistent with zero the result is flagged "unpolarized" and no
    azimuth is reported.
    """
    if mode not in POLARIZATION_PERIOD_DEG:
        raise UsageError(f"mode must be one of {sorted(POLARIZATION_PERIOD_DEG)}, got {mode!r}")
    angles = np.asarray(angles_deg, dtype=float)
    y = np.asarray(counts, dtype=float)
    period = POLARIZATION_PERIOD_DEG[mode]
    if angles.max() - angles.min() < period - 1e-9:
        raise UsageError(
            f"{mode} sweep must span at least one period ({period} deg); "
            f"got {angles.max() - angles.min():.1f} deg"
        )
    m = 4.0 if mode == "hwp" else 2.0
    a_rad = np.radians(angles)
    mean = float(y.mean())
    z = np.sum((y - mean) * np.exp(-1j * m * a_rad))
    amp0 = max(2.0 * abs(z) / y.size, 1e-9)
    phi0 = math.degrees(-np.angle(z) / 2.0) % 180.0

    def model(x, p):
        offset, amplitude, azimuth_deg = p
        return offset + amplitude * np.cos(m * np.radians(x) - 2.0 * math.radians(azimuth_deg))

    result = least_squares_fit(
        model,
        angles,
        y,
        _poisson_sigma(y) if sigma is None else sigma,
        [mean, amp0, phi0],
        names=["offset", "amplitude", "dipole_azimuth_deg"],
    )
    p, s = result.parameters, result.standard_errors
    if p["amplitude"] < 0:
        p["amplitude"] = -p["amplitude"]
        p["dipole_azimuth_deg"] += 90.0
    p["dipole_azimuth_deg"] %= 180.0
    s["dipole_azimuth_deg"] = min(s["dipole_azimuth_deg"], 90.0)  # wrapped error

    if p["amplitude"] < 2.0 * s["amplitude"]:
        result.flags.append("unpolarized")
        del p["dipole_azimuth_deg"]
        del s["dipole_azimuth_deg"]
        return result

    if mode == "hwp":
        p["phase_deg"] = p["dipole_azimuth_deg"] / 2.0
        s["phase_deg"] = s["dipole_azimuth_deg"] / 2.0
    else:
        p["phase_deg"] = p["dipole_azimuth_deg"]
        s["phase_deg"] = s["dipole_azimuth_deg"]
    return result
