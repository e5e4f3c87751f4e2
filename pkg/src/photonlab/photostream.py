"""Monte Carlo generation of detection time-tag streams.

Emitters are two-level systems pumped at a constant rate: an excitation
wait ~ Exp(k_exc) alternates with an emission wait ~ Exp(tau_exc), so the
mean emission rate is k_exc / (1 + k_exc * tau_exc).  Detection applies,
in order: efficiency thinning, Gaussian timing jitter, dark counts,
merging and sorting, quantization to integer picoseconds, and a
non-paralyzable per-channel dead time.

Randomness comes from numpy's PCG64 generator.  Every operation takes an
integer seed, and independent sub-streams (one per emitter, one for the
background, one per detector stage) are derived with
``numpy.random.SeedSequence.spawn`` so results do not depend on how the
work is scheduled.  Identical (configs, seed) give bit-identical streams.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .emitter import Emitter
from .errors import ConfigError, UsageError

PS_PER_NS = 1000.0
PS_PER_S = 1e12


@dataclass(frozen=True)
class ExcitationConfig:
    """Optical pumping settings; only the fields of the active mode are used."""

    mode: str = "cw"  # "cw" or "pulsed"
    cw_excitation_rate_per_ns: float = 0.02
    pulse_period_ns: float = 50.0
    pulse_excitation_prob: float = 0.9
    pulse_width_ps: float = 130.0

    def __post_init__(self):
        if self.mode not in ("cw", "pulsed"):
            raise ConfigError(f"excitation mode must be 'cw' or 'pulsed', got {self.mode!r}")
        if self.mode == "cw":
            if self.cw_excitation_rate_per_ns <= 0:
                raise ConfigError("cw_excitation_rate_per_ns must be positive")
        else:
            if self.pulse_period_ns <= 0:
                raise ConfigError("pulse_period_ns must be positive")
            if not 0.0 <= self.pulse_excitation_prob <= 1.0:
                raise ConfigError("pulse_excitation_prob must lie in [0, 1]")
            if self.pulse_width_ps < 0:
                raise ConfigError("pulse_width_ps must be non-negative")


@dataclass(frozen=True)
class DetectorConfig:
    """Single-photon detector model."""

    efficiency: float = 1.0
    dark_rate_cps: float = 0.0
    jitter_sigma_ps: float = 0.0
    dead_time_ns: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.efficiency <= 1.0:
            raise ConfigError("efficiency must lie in (0, 1]")
        if self.dark_rate_cps < 0:
            raise ConfigError("dark_rate_cps must be non-negative")
        if self.jitter_sigma_ps < 0:
            raise ConfigError("jitter_sigma_ps must be non-negative")
        if self.dead_time_ns < 0:
            raise ConfigError("dead_time_ns must be non-negative")


@dataclass(frozen=True)
class TimeTagStream:
    """Ordered photon detection record.

    ``timestamps`` are integer picoseconds sorted ascending; ``channels``
    holds the detector channel of each tag.  Within a channel timestamps
    are strictly increasing (quantization to 1 ps allows at most one count
    per picosecond per channel).  ``origin`` is a JSON-ready provenance
    record (seed and configs) sufficient to regenerate the stream.
    """

    timestamps: np.ndarray
    channels: np.ndarray
    duration_ps: int
    origin: dict = field(default_factory=dict)

    @property
    def n_tags(self) -> int:
        return int(self.timestamps.size)

    @property
    def n_channels(self) -> int:
        return int(self.channels.max()) + 1 if self.channels.size else 1

    def channel(self, c: int) -> np.ndarray:
        return self.timestamps[self.channels == c]

    def rate_cps(self, c: int | None = None) -> float:
        n = self.n_tags if c is None else int(np.count_nonzero(self.channels == c))
        return n / (self.duration_ps / PS_PER_S)


def _dead_time_filter(times: np.ndarray, min_gap_ps: int) -> np.ndarray:
    """Non-paralyzable dead time on a sorted int64 array.

    Iteratively removes tags closer than ``min_gap_ps`` to the previous
    *kept* tag.  A violator directly following a kept tag is definitely
    blocked; violators following other violators are re-examined on the
    next pass, which reproduces the sequential filter exactly.
    """
    if times.size == 0 or min_gap_ps <= 0:
        return times
    while True:
        gaps = np.diff(times)
        bad = np.concatenate(([False], gaps < min_gap_ps))
        if not bad.any():
            return times
        after_good = bad & ~np.concatenate(([False], bad[:-1]))
        times = times[~after_good]


def _detect(times_ps: np.ndarray, detector: DetectorConfig, rng: np.random.Generator) -> np.ndarray:
    """Efficiency thinning followed by Gaussian jitter (float ps in, float ps out)."""
    if detector.efficiency < 1.0:
        times_ps = times_ps[rng.random(times_ps.size) < detector.efficiency]
    if detector.jitter_sigma_ps > 0 and times_ps.size:
        times_ps = times_ps + rng.normal(0.0, detector.jitter_sigma_ps, times_ps.size)
    return times_ps


def _poisson_times(rate_cps: float, duration_ps: float, rng: np.random.Generator) -> np.ndarray:
    mean = rate_cps * duration_ps / PS_PER_S
    n = rng.poisson(mean) if mean > 0 else 0
    return rng.random(n) * duration_ps


def _finalize(times_ps: np.ndarray, duration_ps: float, detector: DetectorConfig) -> np.ndarray:
    """Sort, clip to [0, duration], quantize to int ps, apply dead time."""
    times_ps = times_ps[(times_ps >= 0.0) & (times_ps <= duration_ps)]
    ts = np.sort(np.rint(times_ps).astype(np.int64))
    min_gap = max(int(round(detector.dead_time_ns * PS_PER_NS)), 1)
    return _dead_time_filter(ts, min_gap)


def _renewal_emission_times(
    k_exc_per_ns: float, tau_exc_ns: float, duration_ps: float, rng: np.random.Generator
) -> np.ndarray:
    """Emission times of one two-level emitter over [0, duration]."""
    scale_exc = PS_PER_NS / k_exc_per_ns
    scale_em = PS_PER_NS * tau_exc_ns
    mean_cycle = scale_exc + scale_em
    expected = duration_ps / mean_cycle
    chunk = int(expected * 1.05 + 10.0 * np.sqrt(expected + 1.0) + 64)
    pieces = []
    t_last = 0.0
    while t_last <= duration_ps:
        waits = rng.exponential(scale_exc, chunk) + rng.exponential(scale_em, chunk)
        times = t_last + np.cumsum(waits)
        pieces.append(times)
        t_last = times[-1]
    times = np.concatenate(pieces)
    return times[times <= duration_ps]


def cw_emission_rate_per_ns(k_exc_per_ns: float, tau_exc_ns: float) -> float:
    """Mean photon emission rate of the two-level cycle, per ns."""
    return k_exc_per_ns / (1.0 + k_exc_per_ns * tau_exc_ns)


def _background_rate_cps(
    emitters: Sequence[Emitter], excitation: ExcitationConfig, detector: DetectorConfig
) -> float:
    """Poisson background rate that realizes the configured signal fraction.

    Dark counts are uncorrelated background too, so they are deducted from
    the required rate; it is a config error to ask for a signal fraction
    that the dark rate alone already exceeds.
    """
    p = emitters[0].signal_fraction
    if any(e.signal_fraction != p for e in emitters):
        raise ConfigError("all emitters in one stream must share signal_fraction")
    signal_cps = sum(
        detector.efficiency
        * cw_emission_rate_per_ns(excitation.cw_excitation_rate_per_ns, e.excited_lifetime_ns)
        * 1e9
        for e in emitters
    )
    required = signal_cps * (1.0 - p) / p
    bg = required - detector.dark_rate_cps
    if bg < -1e-9:
        raise ConfigError(
            f"dark_rate_cps={detector.dark_rate_cps} exceeds the background "
            f"budget {required:.3g} cps implied by signal_fraction={p}"
        )
    return max(bg, 0.0)


def simulate_cw_stream(
    emitters: Sequence[Emitter],
    excitation: ExcitationConfig,
    detector: DetectorConfig,
    duration_ps: float,
    seed: int,
) -> TimeTagStream:
    """Single-channel detection stream from N independent emitters under CW
    pumping, plus uncorrelated background chosen so the measured signal
    fraction matches the emitters' ``signal_fraction``."""
    if excitation.mode != "cw":
        raise ConfigError("simulate_cw_stream requires excitation mode 'cw'")
    if duration_ps < 0:
        raise ConfigError("duration_ps must be non-negative")

    n = len(emitters)
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(n + 2)  # one per emitter, background, dark
    sources = []
    if duration_ps > 0:
        for emitter, child in zip(emitters, children[:n]):
            rng = np.random.default_rng(child)
            times = _renewal_emission_times(
                excitation.cw_excitation_rate_per_ns,
                emitter.excited_lifetime_ns,
                duration_ps,
                rng,
            )
            sources.append(_detect(times, detector, rng))
        if n:
            bg_rng = np.random.default_rng(children[n])
            bg_cps = _background_rate_cps(emitters, excitation, detector)
            sources.append(_poisson_times(bg_cps, duration_ps, bg_rng))
        dark_rng = np.random.default_rng(children[n + 1])
        sources.append(_poisson_times(detector.dark_rate_cps, duration_ps, dark_rng))

    merged = np.concatenate(sources) if sources else np.empty(0)
    ts = _finalize(merged, duration_ps, detector)
    origin = {
        "kind": "cw",
        "seed": int(seed),
        "emitters": [_emitter_dict(e) for e in emitters],
        "excitation": _as_dict(excitation),
        "detector": _as_dict(detector),
        "duration_ps": float(duration_ps),
    }
    return TimeTagStream(ts, np.zeros(ts.size, dtype=np.uint8), int(duration_ps), origin)


def simulate_pulsed_stream(
    emitter: Emitter,
    excitation: ExcitationConfig,
    detector: DetectorConfig,
    n_pulses: int,
    seed: int,
) -> TimeTagStream:
    """Detection stream under pulsed excitation: per pulse, at most one
    photon, delayed by the pulse envelope plus an exponential lifetime."""
    if excitation.mode != "pulsed":
        raise ConfigError("simulate_pulsed_stream requires excitation mode 'pulsed'")
    if n_pulses < 0:
        raise ConfigError("n_pulses must be non-negative")

    period_ps = excitation.pulse_period_ns * PS_PER_NS
    duration_ps = n_pulses * period_ps
    ss = np.random.SeedSequence(seed)
    child_em, child_dark = ss.spawn(2)
    rng = np.random.default_rng(child_em)

    excited = np.flatnonzero(rng.random(n_pulses) < excitation.pulse_excitation_prob)
    sigma = excitation.pulse_width_ps / 2.355  # FWHM -> Gaussian sigma
    times = excited * period_ps
    if excited.size:
        times = times + rng.normal(0.0, sigma, excited.size) if sigma > 0 else times.astype(float)
        times = times + rng.exponential(emitter.excited_lifetime_ns * PS_PER_NS, excited.size)
    times = _detect(np.asarray(times, dtype=float), detector, rng)

    dark_rng = np.random.default_rng(child_dark)
    dark = _poisson_times(detector.dark_rate_cps, duration_ps, dark_rng)

    ts = _finalize(np.concatenate([times, dark]), duration_ps, detector)
    origin = {
        "kind": "pulsed",
        "seed": int(seed),
        "emitters": [_emitter_dict(emitter)],
        "excitation": _as_dict(excitation),
        "detector": _as_dict(detector),
        "duration_ps": float(duration_ps),
        "n_pulses": int(n_pulses),
    }
    return TimeTagStream(ts, np.zeros(ts.size, dtype=np.uint8), int(duration_ps), origin)


def split_hbt(stream: TimeTagStream, seed: int) -> TimeTagStream:
    """Route a single-channel stream through a 50:50 splitter onto two
    detectors; each tag goes to channel 0 or 1 by a fair Bernoulli draw and
    the per-channel dead time is re-applied."""
    if stream.n_channels != 1:
        raise UsageError("split_hbt expects a single-channel stream")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    route = rng.integers(0, 2, stream.n_tags).astype(np.uint8)

    dead_ns = float(stream.origin.get("detector", {}).get("dead_time_ns", 0.0))
    min_gap = max(int(round(dead_ns * PS_PER_NS)), 1)
    parts = []
    for c in (0, 1):
        ts = _dead_time_filter(stream.timestamps[route == c], min_gap)
        parts.append((ts, np.full(ts.size, c, dtype=np.uint8)))
    ts = np.concatenate([p[0] for p in parts])
    ch = np.concatenate([p[1] for p in parts])
    order = np.argsort(ts, kind="stable")
    origin = dict(stream.origin)
    origin["split_seed"] = int(seed)
    return TimeTagStream(ts[order], ch[order], stream.duration_ps, origin)


def _as_dict(cfg) -> dict:
    from dataclasses import asdict

    return asdict(cfg)


def _emitter_dict(e: Emitter) -> dict:
    from dataclasses import asdict

    return asdict(e)
