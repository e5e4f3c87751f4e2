"""First- and second-order coherence instruments.

The Michelson arm models the step-and-scan protocol from a motorized
stage carrying a retroreflector (one unit of mirror travel is two units
of optical path difference) with a piezo flexure resolving the fringes.
Fringe visibility is computed analytically from the Lorentzian line:
V(opd) = exp(-|opd| / l_coh), the decaying-exponential Fourier partner of
the line under the package's coherence-length convention (l_coh is the
inverse FWHM of the line in wavenumber).

The HBT side estimates g2(tau) from two-channel time-tag streams by full
cross-correlation (every pair within the window, not start-stop),
normalized to the uncorrelated baseline rate0*rate1*bin_width*duration.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .emitter import Emitter, coherence_length_um
from .errors import ConfigError, EstimationError, UsageError
from .photostream import PS_PER_S, TimeTagStream

MIRROR_TO_OPD = 2.0  # retroreflector: mirror displacement doubles the path shift
NM_PER_UM = 1000.0


@dataclass(frozen=True)
class ScanProtocol:
    """Step-and-scan sampling plan, centered on the zeroth-order fringe.

    Motor positions are coarse increments of the mirror carriage; at each
    one the piezo sweeps ``piezo_span_um`` in steps of
    ``piezo_sample_spacing_nm``.  All positions are mirror displacements;
    the optical path difference is twice each position.
    """

    motor_step_um: float = 5.0
    piezo_span_um: float = 1.6
    piezo_sample_spacing_nm: float = 40.0
    n_motor_steps: int = 39
    dwell_time_s: float = 1.0
    mirror_displacement_to_opd_factor: float = MIRROR_TO_OPD
    # optional instability knob; the measured interferometer stayed stable,
    # so the default adds no drift
    phase_drift_rad_per_sample: float = 0.0

    def __post_init__(self):
        if self.motor_step_um <= 0 or self.piezo_span_um <= 0:
            raise ConfigError("motor_step_um and piezo_span_um must be positive")
        if self.piezo_sample_spacing_nm <= 0:
            raise ConfigError("piezo_sample_spacing_nm must be positive")
        if self.n_motor_steps < 1:
            raise ConfigError("n_motor_steps must be at least 1")
        if self.dwell_time_s < 0:
            raise ConfigError("dwell_time_s must be non-negative")
        if self.mirror_displacement_to_opd_factor != MIRROR_TO_OPD:
            raise ConfigError("mirror_displacement_to_opd_factor is fixed at 2")

    def validate_for(self, center_wavelength_nm: float) -> None:
        if self.piezo_sample_spacing_nm >= center_wavelength_nm / 4.0:
            raise ConfigError(
                f"piezo_sample_spacing_nm={self.piezo_sample_spacing_nm} does not resolve "
                f"fringes; must be below lambda/4 = {center_wavelength_nm / 4.0:.1f} nm"
            )

    def mirror_positions_nm(self) -> np.ndarray:
        """All sampled mirror positions (nm), ordered by the scan pattern."""
        centering = (self.n_motor_steps - 1) / 2.0
        piezo = np.arange(0.0, self.piezo_span_um * NM_PER_UM + 1e-9, self.piezo_sample_spacing_nm)
        positions = [
            (m - centering) * self.motor_step_um * NM_PER_UM + piezo
            for m in range(self.n_motor_steps)
        ]
        return np.concatenate(positions)


@dataclass(frozen=True)
class Interferogram:
    """Sampled intensity versus optical path difference (nm), opd ascending."""

    opd_nm: np.ndarray
    intensity: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        opd = np.asarray(self.opd_nm, dtype=float)
        inten = np.asarray(self.intensity, dtype=float)
        if opd.shape != inten.shape:
            raise UsageError("opd_nm and intensity must have equal length")
        if np.any(np.diff(opd) < 0):
            order = np.argsort(opd, kind="stable")
            opd, inten = opd[order], inten[order]
        if np.any(inten < 0):
            raise UsageError("intensities must be non-negative")
        object.__setattr__(self, "opd_nm", opd)
        object.__setattr__(self, "intensity", inten)


@dataclass(frozen=True)
class CorrelationHistogram:
    """Binned g2 estimate with its normalization metadata."""

    tau_ps: np.ndarray
    g2: np.ndarray
    raw: np.ndarray
    bin_width_ps: float
    rate0_cps: float
    rate1_cps: float
    duration_ps: int
    metadata: dict = field(default_factory=dict)


def analytic_visibility(emitter: Emitter, opd_nm) -> float | np.ndarray:
    """First-order fringe visibility at an optical path difference (nm)."""
    l_coh_nm = coherence_length_um(emitter.center_wavelength_nm, emitter.fwhm_nm) * NM_PER_UM
    return np.exp(-np.abs(opd_nm) / l_coh_nm)


def analytic_interferogram(emitter: Emitter, opd_nm, dwell_time_s: float = 1.0) -> Interferogram:
    """Noise-free interferometer output I = I0 (1 + V cos(2 pi opd/lambda)),
    with I0 = detected_rate * dwell_time / 2 (half the light exits the
    unused port on average)."""
    opd = np.asarray(opd_nm, dtype=float)
    i0 = emitter.detected_rate_cps * dwell_time_s / 2.0
    v = analytic_visibility(emitter, opd)
    intensity = i0 * (1.0 + v * np.cos(2.0 * math.pi * opd / emitter.center_wavelength_nm))
    meta = {"emitter": _emitter_meta(emitter), "dwell_time_s": dwell_time_s, "analytic": True}
    return Interferogram(opd, intensity, meta)


def simulate_michelson_scan(emitter: Emitter, protocol: ScanProtocol, noise_seed: int) -> Interferogram:
    """Step-and-scan measurement with Poisson shot noise on every sample."""
    protocol.validate_for(emitter.center_wavelength_nm)
    mirror_nm = protocol.mirror_positions_nm()
    opd = protocol.mirror_displacement_to_opd_factor * mirror_nm
    if protocol.phase_drift_rad_per_sample != 0.0:
        i0 = emitter.detected_rate_cps * protocol.dwell_time_s / 2.0
        drift = protocol.phase_drift_rad_per_sample * np.arange(opd.size)
        v = analytic_visibility(emitter, opd)
        mean = i0 * (1.0 + v * np.cos(2.0 * math.pi * opd / emitter.center_wavelength_nm + drift))
        clean = Interferogram(opd, np.maximum(mean, 0.0), {"analytic": True})
    else:
        clean = analytic_interferogram(emitter, opd, protocol.dwell_time_s)
    rng = np.random.default_rng(np.random.SeedSequence(noise_seed))
    counts = rng.poisson(clean.intensity).astype(float)
    meta = {
        "emitter": _emitter_meta(emitter),
        "protocol": _protocol_meta(protocol),
        "noise_seed": int(noise_seed),
        "analytic": False,
    }
    return Interferogram(opd, counts, meta)


def _emitter_meta(e: Emitter) -> dict:
    return {
        "center_wavelength_nm": e.center_wavelength_nm,
        "fwhm_nm": e.fwhm_nm,
        "detected_rate_cps": e.detected_rate_cps,
    }


def _protocol_meta(p: ScanProtocol) -> dict:
    from dataclasses import asdict

    return asdict(p)


def resolve_n_workers(n_workers: int | None = None) -> int:
    """Worker count for chunked correlation; capped by PHOTONLAB_THREADS."""
    cap = os.environ.get("PHOTONLAB_THREADS")
    if n_workers is None:
        n_workers = int(cap) if cap else 1
    elif cap:
        n_workers = min(n_workers, int(cap))
    return max(n_workers, 1)


def _correlate_chunk(
    t0: np.ndarray, t1: np.ndarray, window_ps: float, bin_width_ps: float, n_bins_half: int
) -> np.ndarray:
    """Histogram of pairwise delays t1 - t0 onto bins centered at integer
    multiples of the bin width.

    Delays are assigned to the nearest bin center (ties to even), which is
    symmetric under negation: mirrored pair sets give exactly mirrored
    histograms.
    """
    lo = np.searchsorted(t1, t0 - window_ps, side="left")
    hi = np.searchsorted(t1, t0 + window_ps, side="right")
    counts = hi - lo
    total = int(counts.sum())
    n_bins = 2 * n_bins_half + 1
    if total == 0:
        return np.zeros(n_bins, dtype=np.int64)
    starts = np.cumsum(counts) - counts
    j = np.arange(total, dtype=np.int64) - np.repeat(starts, counts)
    delays = t1[np.repeat(lo, counts) + j] - np.repeat(t0, counts)
    idx = np.rint(delays / bin_width_ps).astype(np.int64)
    idx = idx[np.abs(idx) <= n_bins_half] + n_bins_half
    return np.bincount(idx, minlength=n_bins).astype(np.int64)


def compute_g2(
    stream: TimeTagStream,
    bin_width_ps: float,
    max_tau_ps: float,
    n_workers: int | None = None,
    chunk_size: int = 200_000,
) -> CorrelationHistogram:
    """Full cross-correlation histogram of a two-channel stream.

    Bins are centered on integer multiples of ``bin_width_ps`` (symmetric
    about tau = 0).  Chunks of channel-0 tags may be processed on a thread
    pool; per-chunk histograms are merged by addition, so the result is
    identical to the serial computation.
    """
    if bin_width_ps <= 0:
        raise UsageError("bin_width_ps must be positive")
    t0 = np.asarray(stream.channel(0), dtype=np.int64)
    t1 = np.asarray(stream.channel(1), dtype=np.int64)
    for name, arr in (("0", t0), ("1", t1)):
        if arr.size == 0:
            raise EstimationError(
                f"channel {name} of the stream is empty; need two populated channels "
                f"(did you forget split_hbt?)"
            )

    n_bins_half = int(math.floor(max_tau_ps / bin_width_ps))
    centers = np.arange(-n_bins_half, n_bins_half + 1) * bin_width_ps
    window = centers[-1] + bin_width_ps / 2.0  # include the full outermost bins

    chunks = [t0[i : i + chunk_size] for i in range(0, t0.size, chunk_size)]
    workers = resolve_n_workers(n_workers)
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(
                pool.map(lambda c: _correlate_chunk(c, t1, window, bin_width_ps, n_bins_half), chunks)
            )
    else:
        parts = [_correlate_chunk(c, t1, window, bin_width_ps, n_bins_half) for c in chunks]
    raw = np.sum(parts, axis=0)

    duration_s = stream.duration_ps / PS_PER_S
    rate0 = t0.size / duration_s
    rate1 = t1.size / duration_s
    norm = rate0 * rate1 * (bin_width_ps / PS_PER_S) * duration_s
    g2 = raw / norm
    meta = {"origin": stream.origin, "n_tags": stream.n_tags}
    return CorrelationHistogram(
        centers, g2, raw.astype(np.int64), float(bin_width_ps), rate0, rate1, stream.duration_ps, meta
    )


def estimate_emitter_count(contrast: float, signal_fraction: float) -> tuple[float, int]:
    """Invert the 1/N dip-contrast law: contrast = p^2 / N."""
    if not 0.0 < contrast <= 1.0:
        raise UsageError(f"contrast must lie in (0, 1], got {contrast}")
    if not 0.0 < signal_fraction <= 1.0:
        raise UsageError(f"signal_fraction must lie in (0, 1], got {signal_fraction}")
    # small relative slack: rounded inputs such as p = 0.806 = sqrt(0.65) to
    # three digits must not trip the impossibility check
    if contrast > signal_fraction**2 * (1.0 + 1e-3):
        raise UsageError(
            f"contrast {contrast} exceeds signal_fraction^2 = {signal_fraction**2:.4g}; "
            f"impossible under the background-dilution model"
        )
    n_est = signal_fraction**2 / contrast
    return n_est, max(int(round(n_est)), 1)
