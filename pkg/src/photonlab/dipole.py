"""Dipole polarization responses and defocused wide-field imaging.

The imaging model is the angular-spectrum description of an electric
dipole radiator seen through an aplanatic objective: plane-wave
components at aperture angles eta in [0, asin(NA/n)] carry the defocus
phase exp(i k n dz cos eta) and apodization sqrt(cos eta), and the
image-plane field collapses onto three azimuthal orders whose radial
profiles are integrals against J0, J1, J2 of (k n r sin eta).  The
emitter is treated as embedded in a homogeneous medium of the immersion
index (no interface corrections), and coordinates are referred back to
the sample plane.

Because the detected intensity is quadratic in the dipole direction
cosines, every image is a fixed 6-component contraction
I = sum_ab p_a p_b M_ab(r).  The M basis depends only on (optics,
defocus) and is cached, which makes orientation grid searches cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import j0, j1, jv

from .emitter import DipoleOrientation
from .errors import ConfigError, EstimationError, RankDeficiencyError, UsageError
from .fitting import FitResult, least_squares_fit

QUADRATURE_PIXEL_TOL = 1e-8
MAX_DEFOCUS_NM = 5000.0


@dataclass(frozen=True)
class OpticsConfig:
    """Imaging optics; the grid is square, odd-sized, and centered."""

    numerical_aperture: float = 1.3
    immersion_index: float = 1.515
    emission_wavelength_nm: float = 794.7
    magnification: float = 100.0
    pixel_pitch_sample_plane_nm: float = 50.0
    grid_size: int = 41

    def __post_init__(self):
        if not 0.0 < self.numerical_aperture < self.immersion_index:
            raise ConfigError(
                f"numerical_aperture must satisfy 0 < NA < immersion_index "
                f"(got NA={self.numerical_aperture}, n={self.immersion_index})"
            )
        if self.emission_wavelength_nm <= 0:
            raise ConfigError("emission_wavelength_nm must be positive")
        if self.magnification <= 0:
            raise ConfigError("magnification must be positive")
        if self.pixel_pitch_sample_plane_nm <= 0:
            raise ConfigError("pixel_pitch_sample_plane_nm must be positive")
        if self.grid_size < 3 or self.grid_size % 2 == 0:
            raise ConfigError("grid_size must be an odd integer >= 3")


@dataclass(frozen=True)
class DefocusedImage:
    """Relative-intensity grid with its optics and defocus metadata."""

    pixels: np.ndarray
    defocus_nm: float
    optics: OpticsConfig
    orientation: DipoleOrientation | None = None

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=float)
        if px.shape != (self.optics.grid_size, self.optics.grid_size):
            raise UsageError("pixel grid does not match optics.grid_size")
        if not np.all(np.isfinite(px)):
            raise UsageError("pixels must be finite")
        if np.any(px < 0):
            raise UsageError("pixels must be non-negative")
        object.__setattr__(self, "pixels", px)


def absorption_response(hwp_angle_deg, dipole_azimuth_deg, contrast: float = 1.0):
    """Relative excitation of the in-plane dipole for a half-wave plate at
    the given physical angle.

    The HWP rotates the linear excitation polarization by twice its own
    angle, so the Malus projection is cos^2(2*hwp - azimuth) and the
    response is 90-degree periodic in the plate angle.  ``contrast`` < 1
    models a retarder used away from its design wavelength (modulation
    shrinks, maximum stays at 1).
    """
    if not 0.0 <= contrast <= 1.0:
        raise UsageError("contrast must lie in [0, 1]")
    delta = 2.0 * np.radians(hwp_angle_deg) - np.radians(dipole_azimuth_deg)
    return 1.0 - contrast * np.sin(delta) ** 2


def emission_polarizer_response(polarizer_angle_deg, emission_azimuth_deg, contrast: float = 1.0):
    """Malus-law transmission of the emitted light through an analyzer;
    independent of how the emitter was excited."""
    if not 0.0 <= contrast <= 1.0:
        raise UsageError("contrast must lie in [0, 1]")
    delta = np.radians(polarizer_angle_deg) - np.radians(emission_azimuth_deg)
    return 1.0 - contrast * np.sin(delta) ** 2


def simulate_polarization_sweep(
    angles_deg,
    dipole_azimuth_deg: float,
    mode: str,
    peak_counts: float,
    background_counts: float,
    seed: int,
    contrast: float = 1.0,
) -> np.ndarray:
    """Poisson-noisy detected counts for a waveplate or analyzer sweep."""
    angles = np.asarray(angles_deg, dtype=float)
    if mode == "hwp":
        resp = absorption_response(angles, dipole_azimuth_deg, contrast)
    elif mode == "polarizer":
        resp = emission_polarizer_response(angles, dipole_azimuth_deg, contrast)
    else:
        raise ConfigError(f"mode must be 'hwp' or 'polarizer', got {mode!r}")
    mean = background_counts + peak_counts * resp
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    return rng.poisson(mean).astype(float)


def _unique_radii(optics: OpticsConfig) -> tuple[np.ndarray, np.ndarray]:
    n = optics.grid_size
    idx = np.arange(n) - n // 2
    r2 = idx[None, :] ** 2 + idx[:, None] ** 2  # integer pixel-squared radii
    uniq, inverse = np.unique(r2.ravel(), return_inverse=True)
    radii_nm = optics.pixel_pitch_sample_plane_nm * np.sqrt(uniq.astype(float))
    return radii_nm, inverse


def _radial_integrals(
    optics: OpticsConfig, defocus_nm: float, radii_nm: np.ndarray, order: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    k = 2.0 * math.pi / optics.emission_wavelength_nm
    n_med = optics.immersion_index
    eta_max = math.asin(optics.numerical_aperture / n_med)
    nodes, weights = leggauss(order)
    eta = 0.5 * (nodes + 1.0) * eta_max
    w = weights * 0.5 * eta_max
    s, c = np.sin(eta), np.cos(eta)
    common = w * np.sqrt(c) * s * np.exp(1j * k * n_med * defocus_nm * c)
    arg = np.outer(k * n_med * s, radii_nm)
    i0 = (common * (1.0 + c)) @ j0(arg)
    i1 = (common * s) @ j1(arg)
    i2 = (common * (1.0 - c)) @ jv(2, arg)
    return i0, i1, i2


@lru_cache(maxsize=64)
def _basis_images(optics: OpticsConfig, defocus_nm: float) -> np.ndarray:
    """Quadratic-form basis (6, grid, grid): I = q . basis with
    q = (px^2, py^2, pz^2, px*py, px*pz, py*pz)."""
    radii, inverse = _unique_radii(optics)
    order = 32
    i0, i1, i2 = _radial_integrals(optics, defocus_nm, radii, order)
    while order <= 2048:
        i0b, i1b, i2b = _radial_integrals(optics, defocus_nm, radii, 2 * order)
        scale = max(np.abs(i0b).max(), 1e-300)
        delta = max(
            np.abs(i0 - i0b).max(), np.abs(i1 - i1b).max(), np.abs(i2 - i2b).max()
        )
        i0, i1, i2 = i0b, i1b, i2b
        if delta < QUADRATURE_PIXEL_TOL * scale:
            break
        order *= 2

    n = optics.grid_size
    shape = (n, n)
    i0g = i0[inverse].reshape(shape)
    i1g = i1[inverse].reshape(shape)
    i2g = i2[inverse].reshape(shape)

    idx = np.arange(n) - n // 2
    x = idx[None, :].astype(float)
    y = idx[:, None].astype(float)
    psi = np.arctan2(y, x)
    cos_psi, sin_psi = np.cos(psi), np.sin(psi)
    cos_2psi, sin_2psi = np.cos(2.0 * psi), np.sin(2.0 * psi)

    a = i0g + i2g * cos_2psi
    b = i2g * sin_2psi
    d = i0g - i2g * cos_2psi
    cx = i1g * cos_psi
    cy = i1g * sin_psi

    basis = np.empty((6, n, n))
    basis[0] = np.abs(a) ** 2 + np.abs(b) ** 2
    basis[1] = np.abs(b) ** 2 + np.abs(d) ** 2
    basis[2] = 4.0 * np.abs(i1g) ** 2
    basis[3] = 2.0 * ((a * np.conj(b)).real + (b * np.conj(d)).real)
    basis[4] = -4.0 * ((a * np.conj(cx)).imag + (b * np.conj(cy)).imag)
    basis[5] = -4.0 * ((b * np.conj(cx)).imag + (d * np.conj(cy)).imag)
    basis.setflags(write=False)
    return basis


def orientation_coefficients(orientation: DipoleOrientation) -> np.ndarray:
    px, py, pz = orientation.unit_vector()
    return np.array([px * px, py * py, pz * pz, px * py, px * pz, py * pz])


def render_defocused_image(
    orientation: DipoleOrientation, optics: OpticsConfig, defocus_nm: float
) -> DefocusedImage:
    """Image of a dipole at the given defocus, normalized so the total
    grid energy of the in-focus (defocus 0) image of the same dipole is 1.

    The orientation is used exactly as given (no canonicalization):
    antiparallel orientations produce identical images, but azimuths 180
    degrees apart are genuinely different once defocused.
    """
    if not 0.0 <= defocus_nm <= MAX_DEFOCUS_NM:
        raise UsageError(f"defocus_nm must lie in [0, {MAX_DEFOCUS_NM:g}] nm, got {defocus_nm}")
    q = orientation_coefficients(orientation)
    basis = _basis_images(optics, float(defocus_nm))
    raw = np.tensordot(q, basis, axes=1)
    energy0 = float(q @ _basis_images(optics, 0.0).sum(axis=(1, 2)))
    pixels = np.clip(raw / energy0, 0.0, None)
    return DefocusedImage(pixels, float(defocus_nm), optics, orientation)


@dataclass
class OrientationEstimate:
    """Result of fitting rendered dipole images to a measured stack."""

    orientation: DipoleOrientation
    residual: float
    defocus_refined_nm: list
    azimuth_uncertain: bool
    fit: FitResult | None = None


def _profile_sse(q: np.ndarray, stats: dict) -> np.ndarray:
    """Residual sum of squares after optimal per-image scale and background.

    Uses the 6x6 Gram reduction: rendered image R = q.B, so all the
    regression sums are 6-dimensional contractions.
    """
    npix = stats["npix"]
    sr = q @ stats["b1"]
    sry = q @ stats["by"]
    srr = np.einsum("ci,ij,cj->c", q, stats["gram"], q)
    var = srr - sr * sr / npix
    cov = sry - sr * stats["sy"] / npix
    syy_c = stats["syy"] - stats["sy"] ** 2 / npix
    good = var > 1e-300
    sse = np.where(good, syy_c - np.where(good, cov, 0.0) ** 2 / np.where(good, var, 1.0), syy_c)
    return sse


def estimate_orientation(
    stack: Sequence[DefocusedImage],
    search_deg: float = 2.0,
    refine_defocus: bool = False,
) -> OrientationEstimate:
    """Recover the dipole orientation from a stack of defocused images.

    Coarse grid search over the polar angle in [0, 90] and the azimuth in
    [0, 360) at ``search_deg`` resolution (per-image intensity scale and
    background are profiled out exactly), followed by a local
    damped-Gauss-Newton refinement of (polar, azimuth, scales,
    backgrounds) and optionally the per-image defocus.  The reported
    orientation is canonical; ``residual`` is the mean squared residual
    per pixel, which scales quadratically with the stack intensity.

    ``azimuth_uncertain`` is set when the residual surface is flat in the
    azimuth (near-axial dipole), in which case the azimuth value carries
    no information.
    """
    if len(stack) == 0:
        raise UsageError("need at least one image")
    optics = stack[0].optics
    if any(im.optics != optics for im in stack):
        raise UsageError("all images in a stack must share the same optics")
    if search_deg <= 0 or search_deg > 45:
        raise UsageError("search_deg must lie in (0, 45]")
    for im in stack:
        if not np.any(im.pixels > 0):
            raise EstimationError("an image in the stack is all zero; nothing to fit")

    npix = optics.grid_size**2
    per_image = []
    for im in stack:
        flat_basis = _basis_images(optics, float(im.defocus_nm)).reshape(6, npix)
        y = im.pixels.ravel().astype(float)
        per_image.append(
            {
                "y": y,
                "basis": flat_basis,
                "b1": flat_basis.sum(axis=1),
                "by": flat_basis @ y,
                "gram": flat_basis @ flat_basis.T,
                "sy": float(y.sum()),
                "syy": float(y @ y),
                "npix": npix,
                "defocus_nm": float(im.defocus_nm),
                "optics": optics,
            }
        )

    thetas = np.arange(0.0, 90.0 + 1e-9, search_deg)
    phis = np.arange(0.0, 360.0, search_deg)
    tt, pp = np.meshgrid(thetas, phis, indexing="ij")
    th = np.radians(tt.ravel())
    ph = np.radians(pp.ravel())
    px = np.sin(th) * np.cos(ph)
    py = np.sin(th) * np.sin(ph)
    pz = np.cos(th)
    q_all = np.stack([px * px, py * py, pz * pz, px * py, px * pz, py * pz], axis=1)

    total = np.zeros(q_all.shape[0])
    for stats in per_image:
        total += _profile_sse(q_all, stats)
    surface = total.reshape(tt.shape)
    best_flat = int(np.argmin(total))
    best_i, best_j = np.unravel_index(best_flat, tt.shape)
    theta0, phi0 = float(thetas[best_i]), float(phis[best_j])

    # flat-in-azimuth residual surface means the azimuth is undetermined
    global_range = float(surface.max() - surface.min())
    phi_range = float(surface[best_i].max() - surface[best_i].min())
    azimuth_uncertain = bool(
        global_range <= 0.0
        or phi_range < 1e-3 * global_range
        or theta0 < max(2.0 * search_deg, 4.0)
    )

    defocus = [im.defocus_nm for im in stack]
    try:
        fit = _refine(per_image, theta0, phi0, refine_defocus)
    except RankDeficiencyError:
        # degenerate geometry (e.g. an axial dipole in focus): the grid
        # optimum is the answer and the flat direction is flagged
        orientation = DipoleOrientation(theta0, phi0).canonical()
        residual = max(float(total[best_flat]), 0.0) / (npix * len(stack))
        return OrientationEstimate(orientation, residual, defocus, azimuth_uncertain, None)
    params = fit.parameters
    orientation = DipoleOrientation(params["polar_deg"], params["azimuth_deg"]).canonical()
    if refine_defocus:
        defocus = [params[f"defocus_{j}_nm"] for j in range(len(stack))]
    residual = fit.residual_norm**2 / (npix * len(stack))
    return OrientationEstimate(orientation, residual, defocus, azimuth_uncertain, fit)


def _refine(per_image, theta0: float, phi0: float, refine_defocus: bool) -> FitResult:
    j_imgs = len(per_image)
    optics_free = refine_defocus

    def initial_scales():
        q0 = _q_of(theta0, phi0)
        inits = []
        for stats in per_image:
            sr = float(q0 @ stats["b1"])
            sry = float(q0 @ stats["by"])
            srr = float(q0 @ stats["gram"] @ q0)
            npix = stats["npix"]
            var = srr - sr * sr / npix
            a = (sry - sr * stats["sy"] / npix) / var if var > 0 else 1.0
            b = (stats["sy"] - a * sr) / npix
            inits.extend([a, b])
        return inits

    names = ["polar_deg", "azimuth_deg"]
    p0 = [theta0, phi0]
    for jj in range(j_imgs):
        names += [f"scale_{jj}", f"background_{jj}"]
    p0 += initial_scales()
    if optics_free:
        for jj, stats in enumerate(per_image):
            names.append(f"defocus_{jj}_nm")
            p0.append(stats["defocus_nm"])

    y_all = np.concatenate([stats["y"] for stats in per_image])

    def model(_x, params):
        q = _q_of(params[0], params[1])
        preds = []
        for jj, stats in enumerate(per_image):
            a = params[2 + 2 * jj]
            b = params[3 + 2 * jj]
            if optics_free:
                dz = float(np.clip(params[2 + 2 * j_imgs + jj], 0.0, MAX_DEFOCUS_NM))
                basis = _basis_images(stats["optics"], dz).reshape(6, stats["npix"])
            else:
                basis = stats["basis"]
            preds.append(a * (q @ basis) + b)
        return np.concatenate(preds)

    return least_squares_fit(model, None, y_all, 1.0, p0, names=names)


def _q_of(theta_deg: float, phi_deg: float) -> np.ndarray:
    th, ph = math.radians(theta_deg), math.radians(phi_deg)
    px = math.sin(th) * math.cos(ph)
    py = math.sin(th) * math.sin(ph)
    pz = math.cos(th)
    return np.array([px * px, py * py, pz * pz, px * py, px * pz, py * pz])
