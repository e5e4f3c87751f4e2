"""Shared fixtures: the paper emitter and the expensive simulated records
(10^7-event HBT streams, reproduction output trees) built once per session."""

from __future__ import annotations

import dataclasses

import numpy as np
import pytest

import photonlab as pl
from photonlab import analysis
from photonlab.config import paper_config
from photonlab.reproduce import run_reproduction

PAPER_L_COH_UM = 62.8212502  # 794.7^2 / (2 pi 1.6) nm, by hand


@pytest.fixture(scope="session")
def paper_emitter() -> pl.Emitter:
    return pl.Emitter(
        center_wavelength_nm=794.7,
        fwhm_nm=1.6,
        excited_lifetime_ns=1.5,
        dipole=pl.DipoleOrientation(40.0, 28.0),
        detected_rate_cps=2.0e4,
        signal_fraction=0.806,
    )


@pytest.fixture(scope="session")
def ideal_detector() -> pl.DetectorConfig:
    return pl.DetectorConfig()


@pytest.fixture(scope="session")
def cw_excitation() -> pl.ExcitationConfig:
    return pl.ExcitationConfig(mode="cw", cw_excitation_rate_per_ns=0.02)


def make_hbt_g2(
    emitter: pl.Emitter,
    n_emitters: int,
    signal_fraction: float,
    n_events: float,
    seed: int,
    bin_width_ps: float = 256.0,
    max_tau_ps: float = 50_000.0,
    k_exc_per_ns: float = 0.02,
):
    """CW stream -> 50:50 split -> g2 histogram, sized to ~n_events tags."""
    em = dataclasses.replace(emitter, signal_fraction=signal_fraction)
    exc = pl.ExcitationConfig(mode="cw", cw_excitation_rate_per_ns=k_exc_per_ns)
    det = pl.DetectorConfig()
    rate_per_ns = n_emitters * pl.cw_emission_rate_per_ns(k_exc_per_ns, em.excited_lifetime_ns)
    rate_per_ns /= signal_fraction
    duration_ps = n_events / rate_per_ns * 1000.0
    stream = pl.simulate_cw_stream([em] * n_emitters, exc, det, duration_ps, seed)
    pair = pl.split_hbt(stream, seed + 1)
    hist = pl.compute_g2(pair, bin_width_ps, max_tau_ps)
    return stream, pair, hist


@pytest.fixture(scope="session")
def hbt_n1_ideal(paper_emitter):
    """Single emitter, no background (p=1), ~1e7 events."""
    return make_hbt_g2(paper_emitter, 1, 1.0, 1e7, seed=101)


@pytest.fixture(scope="session")
def hbt_n1_bg(paper_emitter):
    """Single emitter with the calibrated 0.806 signal fraction, ~1e7 events."""
    return make_hbt_g2(paper_emitter, 1, 0.806, 1e7, seed=201)


@pytest.fixture(scope="session")
def hbt_n2(paper_emitter):
    return make_hbt_g2(paper_emitter, 2, 1.0, 1e7, seed=301)


@pytest.fixture(scope="session")
def hbt_n3(paper_emitter):
    return make_hbt_g2(paper_emitter, 3, 1.0, 1e7, seed=401)


@pytest.fixture(scope="session")
def lifetime_fit(paper_emitter, ideal_detector):
    """Pulsed run at 1e6 pulses with the published source parameters."""
    exc = pl.ExcitationConfig(
        mode="pulsed", pulse_period_ns=50.0, pulse_excitation_prob=0.9, pulse_width_ps=130.0
    )
    stream = pl.simulate_pulsed_stream(paper_emitter, exc, ideal_detector, 1_000_000, seed=501)
    t_ps, counts = analysis.lifetime_histogram(stream, 64.0)
    fit = analysis.fit_lifetime(t_ps, counts)
    return stream, t_ps, counts, fit


@pytest.fixture(scope="session")
def michelson_fit(paper_emitter):
    """Full first-order pipeline: scan -> envelope -> exponential fit."""
    protocol = pl.ScanProtocol()  # +-195 um OPD, 1e4 mean counts/sample
    interferogram = pl.simulate_michelson_scan(paper_emitter, protocol, noise_seed=601)
    envelope = analysis.extract_envelope(interferogram, paper_emitter.center_wavelength_nm)
    fit = analysis.fit_coherence_length(envelope)
    return interferogram, envelope, fit


@pytest.fixture(scope="session")
def reproduction_dirs(tmp_path_factory):
    """Two identical full reproduction runs (fixed seed) for determinism checks."""
    cfg = paper_config()
    out_a = tmp_path_factory.mktemp("repro_a")
    out_b = tmp_path_factory.mktemp("repro_b")
    report_a = run_reproduction(cfg, out_a, quick=False, make_plots=True)
    report_b = run_reproduction(cfg, out_b, quick=False, make_plots=True)
    return out_a, out_b, report_a, report_b


@pytest.fixture(scope="session")
def orientation_stack(paper_emitter):
    """The Fig.-4 style stack: three defocus planes at the true orientation."""
    optics = pl.OpticsConfig()
    stack = [
        pl.render_defocused_image(paper_emitter.dipole, optics, dz) for dz in (500.0, 720.0, 1320.0)
    ]
    return optics, stack


def add_pixel_noise(stack, fraction: float, seed: int):
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    noisy = []
    for im in stack:
        sigma = fraction * im.pixels.max()
        px = np.clip(im.pixels + rng.normal(0.0, sigma, im.pixels.shape), 0.0, None)
        noisy.append(pl.DefocusedImage(px, im.defocus_nm, im.optics))
    return noisy
