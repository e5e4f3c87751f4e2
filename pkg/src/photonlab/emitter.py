"""Ground-truth emitter model and closed-form coherence conversions.

Unit conventions used throughout the package: lengths in nm (coherence
lengths reported in um), times in ps at the core (lifetimes configured in
ns), angles in degrees at the API boundary and radians internally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigError

# CODATA exact value, expressed in the internal unit system.
SPEED_OF_LIGHT_M_PER_S = 2.99792458e8
SPEED_OF_LIGHT_UM_PER_PS = SPEED_OF_LIGHT_M_PER_S * 1e-6  # 0.299792458 um/ps


@dataclass(frozen=True)
class DipoleOrientation:
    """Orientation of a dipole axis: polar angle from the optical axis and
    azimuth in the sample plane, both in degrees.

    A dipole is a line, not a vector, so orientations are canonicalized to
    polar in [0, 90] and azimuth in [0, 180).  Folding the azimuth mod 180
    collapses (polar, azimuth) with (polar, azimuth+180); estimators report
    in this reduced range.
    """

    polar_deg: float
    azimuth_deg: float

    def canonical(self) -> "DipoleOrientation":
        theta = self.polar_deg % 360.0
        phi = self.azimuth_deg
        if theta > 180.0:
            # same axis as its reflection through the origin
            theta = 360.0 - theta
            phi += 180.0
        if theta > 90.0:
            theta = 180.0 - theta
            phi += 180.0
        phi %= 180.0
        if phi >= 180.0:  # float modulo of a tiny negative rounds to the period
            phi = 0.0
        if theta == 0.0:
            phi = 0.0
        return DipoleOrientation(theta, phi)

    def unit_vector(self) -> tuple[float, float, float]:
        """Cartesian direction cosines (x, y, z) with z along the optical axis."""
        th = math.radians(self.polar_deg)
        ph = math.radians(self.azimuth_deg)
        return (math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th))


@dataclass(frozen=True)
class LorentzianLine:
    """Lorentzian spectral line: counts versus wavelength in nm."""

    center_nm: float
    fwhm_nm: float
    amplitude: float
    offset: float = 0.0

    def __post_init__(self):
        if self.fwhm_nm <= 0:
            raise ConfigError(f"fwhm_nm must be positive, got {self.fwhm_nm}")
        if self.amplitude <= 0:
            raise ConfigError(f"amplitude must be positive, got {self.amplitude}")
        if self.offset < 0:
            raise ConfigError(f"offset must be non-negative, got {self.offset}")


@dataclass(frozen=True)
class Emitter:
    """Ground-truth physical parameters of a single dipole emitter."""

    center_wavelength_nm: float
    fwhm_nm: float
    excited_lifetime_ns: float
    dipole: DipoleOrientation = field(default_factory=lambda: DipoleOrientation(40.0, 28.0))
    detected_rate_cps: float = 2.0e4
    signal_fraction: float = 1.0

    def __post_init__(self):
        if self.center_wavelength_nm <= 0:
            raise ConfigError("center_wavelength_nm must be positive")
        if self.fwhm_nm <= 0:
            raise ConfigError("fwhm_nm must be positive")
        if self.fwhm_nm >= self.center_wavelength_nm:
            raise ConfigError("fwhm_nm must be smaller than center_wavelength_nm")
        if self.excited_lifetime_ns <= 0:
            raise ConfigError("excited_lifetime_ns must be positive")
        if self.detected_rate_cps <= 0:
            raise ConfigError("detected_rate_cps must be positive")
        if not 0.0 < self.signal_fraction <= 1.0:
            raise ConfigError("signal_fraction must lie in (0, 1]")

    @property
    def coherence_length_um(self) -> float:
        return coherence_length_um(self.center_wavelength_nm, self.fwhm_nm)

    @property
    def coherence_time_ps(self) -> float:
        return coherence_time_ps(self.coherence_length_um)


def coherence_length_um(center_wavelength_nm: float, fwhm_nm: float) -> float:
    """Coherence length lambda^2 / (2 pi dlambda), returned in um.

    This is the package-wide definition of coherence length: the inverse of
    the line's full width expressed in wavenumber, 1/dk with
    dk = 2 pi dlambda / lambda^2.  Fringe visibility decays as
    exp(-|opd| / l_coh) under this convention.
    """
    if center_wavelength_nm <= 0:
        raise ValueError(f"center wavelength must be positive, got {center_wavelength_nm}")
    if fwhm_nm <= 0:
        raise ValueError(f"fwhm must be positive, got {fwhm_nm}")
    return center_wavelength_nm**2 / (2.0 * math.pi * fwhm_nm) * 1e-3


def coherence_time_ps(coherence_length_um: float) -> float:
    """Coherence time l_coh / c in ps for a coherence length in um."""
    if coherence_length_um <= 0:
        raise ValueError(f"coherence length must be positive, got {coherence_length_um}")
    return coherence_length_um / SPEED_OF_LIGHT_UM_PER_PS


def time_bandwidth_ratio(excited_lifetime_ps: float, coherence_time_ps: float) -> float:
    """Ratio 2 tau_exc / tau_coh; equals 1 for a transform-limited source.

    Both arguments in ps.
    """
    if excited_lifetime_ps <= 0:
        raise ValueError(f"excited lifetime must be positive, got {excited_lifetime_ps}")
    if coherence_time_ps <= 0:
        raise ValueError(f"coherence time must be positive, got {coherence_time_ps}")
    return 2.0 * excited_lifetime_ps / coherence_time_ps


def lorentzian_value(line: LorentzianLine, wavelength_nm) -> float:
    """Evaluate the line at a wavelength (nm): offset + amplitude at the
    peak, half that amplitude at center +- fwhm/2."""
    half = 0.5 * line.fwhm_nm
    return line.offset + line.amplitude * half**2 / ((wavelength_nm - line.center_nm) ** 2 + half**2)
