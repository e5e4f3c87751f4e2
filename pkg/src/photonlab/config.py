"""Experiment configuration: one JSON document drives every CLI run.

The schema is versioned and strict: unknown keys are rejected with the
offending dotted path, and all values are validated by the dataclasses
they populate.  The shipped defaults (``photonlab/data/paper_config.json``)
carry the emitter and instrument parameters used throughout the
reproduction pipeline.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .dipole import OpticsConfig
from .emitter import DipoleOrientation, Emitter
from .errors import ConfigError
from .interferometry import ScanProtocol
from .photostream import DetectorConfig, ExcitationConfig

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class StreamSettings:
    duration_ms: float = 500.0

    def __post_init__(self):
        if self.duration_ms < 0:
            raise ConfigError("duration_ms must be non-negative")


@dataclass(frozen=True)
class CorrelatorSettings:
    bin_width_ps: float = 256.0
    max_tau_ns: float = 50.0

    def __post_init__(self):
        if self.bin_width_ps <= 0 or self.max_tau_ns <= 0:
            raise ConfigError("bin_width_ps and max_tau_ns must be positive")


@dataclass(frozen=True)
class LifetimeSettings:
    n_pulses: int = 1_000_000
    bin_width_ps: float = 64.0
    fit_window_start_ps: float = 500.0

    def __post_init__(self):
        if self.n_pulses < 0:
            raise ConfigError("n_pulses must be non-negative")
        if self.bin_width_ps <= 0:
            raise ConfigError("bin_width_ps must be positive")


@dataclass(frozen=True)
class PolarizationSettings:
    """Polarization sweeps carry their own azimuths: the absorption and
    emission dipole angles are measured by different instruments and are
    not forced to agree with the imaging orientation."""

    angle_step_deg: float = 5.0
    peak_counts: float = 2000.0
    background_counts: float = 50.0
    hwp_contrast: float = 1.0
    absorption_azimuth_deg: float = 28.6
    emission_azimuth_deg: float = 29.9

    def __post_init__(self):
        if self.angle_step_deg <= 0:
            raise ConfigError("angle_step_deg must be positive")
        if self.peak_counts <= 0:
            raise ConfigError("peak_counts must be positive")
        if self.background_counts < 0:
            raise ConfigError("background_counts must be non-negative")
        if not 0.0 <= self.hwp_contrast <= 1.0:
            raise ConfigError("hwp_contrast must lie in [0, 1]")


@dataclass(frozen=True)
class ImagingSettings:
    optics: OpticsConfig = field(default_factory=OpticsConfig)
    defocus_list_nm: tuple = (500.0, 720.0, 1320.0)
    noise_fraction: float = 0.05
    search_deg: float = 2.0

    def __post_init__(self):
        if self.noise_fraction < 0:
            raise ConfigError("noise_fraction must be non-negative")
        if self.search_deg <= 0:
            raise ConfigError("search_deg must be positive")
        object.__setattr__(self, "defocus_list_nm", tuple(float(v) for v in self.defocus_list_nm))


@dataclass(frozen=True)
class ExperimentConfig:
    emitter: Emitter
    n_emitters: int = 1
    excitation: ExcitationConfig = field(default_factory=ExcitationConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    michelson: ScanProtocol = field(default_factory=ScanProtocol)
    stream: StreamSettings = field(default_factory=StreamSettings)
    correlator: CorrelatorSettings = field(default_factory=CorrelatorSettings)
    lifetime: LifetimeSettings = field(default_factory=LifetimeSettings)
    polarization: PolarizationSettings = field(default_factory=PolarizationSettings)
    imaging: ImagingSettings = field(default_factory=ImagingSettings)
    seed: int = 20100794
    output_dir: str | None = None

    def __post_init__(self):
        if self.n_emitters < 0:
            raise ConfigError("n_emitters must be non-negative")

    def emitters(self) -> list[Emitter]:
        return [self.emitter] * self.n_emitters


def _build(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"config section {path!r} must be an object")
    allowed = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in allowed:
            raise ConfigError(f"unknown config key {path + '.' + key!r}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"invalid config section {path!r}: {exc}") from exc


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config document must be a JSON object")
    data = dict(raw)
    version = data.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}; this build reads {SCHEMA_VERSION}")

    top_allowed = {
        "seed",
        "output_dir",
        "emitter",
        "n_emitters",
        "excitation",
        "detector",
        "instruments",
    }
    for key in data:
        if key not in top_allowed:
            raise ConfigError(f"unknown config key {key!r}")

    emitter_raw = dict(data.get("emitter", {}))
    dipole_raw = emitter_raw.pop("dipole", None)
    if dipole_raw is not None:
        emitter_raw["dipole"] = _build(DipoleOrientation, dipole_raw, "emitter.dipole")
    emitter = _build(Emitter, emitter_raw, "emitter")

    instruments = dict(data.get("instruments", {}))
    inst_allowed = {"michelson", "stream", "correlator", "lifetime", "polarization", "imaging"}
    for key in instruments:
        if key not in inst_allowed:
            raise ConfigError(f"unknown config key {'instruments.' + key!r}")
    imaging_raw = dict(instruments.get("imaging", {}))
    optics_raw = imaging_raw.pop("optics", None)
    if optics_raw is not None:
        imaging_raw["optics"] = _build(OpticsConfig, optics_raw, "instruments.imaging.optics")

    return ExperimentConfig(
        emitter=emitter,
        n_emitters=int(data.get("n_emitters", 1)),
        excitation=_build(ExcitationConfig, data.get("excitation", {}), "excitation"),
        detector=_build(DetectorConfig, data.get("detector", {}), "detector"),
        michelson=_build(ScanProtocol, instruments.get("michelson", {}), "instruments.michelson"),
        stream=_build(StreamSettings, instruments.get("stream", {}), "instruments.stream"),
        correlator=_build(CorrelatorSettings, instruments.get("correlator", {}), "instruments.correlator"),
        lifetime=_build(LifetimeSettings, instruments.get("lifetime", {}), "instruments.lifetime"),
        polarization=_build(
            PolarizationSettings, instruments.get("polarization", {}), "instruments.polarization"
        ),
        imaging=_build(ImagingSettings, imaging_raw, "instruments.imaging"),
        seed=int(data.get("seed", 20100794)),
        output_dir=data.get("output_dir"),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(raw)


def paper_config() -> ExperimentConfig:
    """The shipped defaults: the emitter and instruments of the reproduction."""
    text = resources.files("photonlab").joinpath("data/paper_config.json").read_text()
    return config_from_dict(json.loads(text))


def config_to_dict(cfg: ExperimentConfig) -> dict:
    d = dataclasses.asdict(cfg)
    imaging = d.pop("imaging")
    d["instruments"] = {
        "michelson": d.pop("michelson"),
        "stream": d.pop("stream"),
        "correlator": d.pop("correlator"),
        "lifetime": d.pop("lifetime"),
        "polarization": d.pop("polarization"),
        "imaging": {**{k: v for k, v in imaging.items() if k != "optics"}, "optics": imaging["optics"]},
    }
    d["instruments"]["imaging"]["defocus_list_nm"] = list(
        d["instruments"]["imaging"]["defocus_list_nm"]
    )
    d["schema_version"] = SCHEMA_VERSION
    return d
