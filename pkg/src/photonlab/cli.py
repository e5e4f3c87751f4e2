"""Command-line front end.

    photonlab simulate <sub> -c config.json -o dir [--seed N]
    photonlab analyze <sub> -i file [--plot out.svg] [options]
    photonlab reproduce-paper -o dir [--seed N] [--quick]

Exit codes: 0 success, 1 analysis failure, 2 config error, 3 I/O error.
The environment variable PHOTONLAB_THREADS caps internal parallelism.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, io
from .config import ExperimentConfig, load_config, paper_config
from .dipole import DefocusedImage, estimate_orientation, render_defocused_image, simulate_polarization_sweep
from .errors import ConfigError, EstimationError, FormatError, UsageError
from .interferometry import estimate_emitter_count, simulate_michelson_scan
from .photostream import simulate_cw_stream, simulate_pulsed_stream, split_hbt
from .reproduce import run_reproduction

EXIT_OK = 0
EXIT_ANALYSIS = 1
EXIT_CONFIG = 2
EXIT_IO = 3

SIMULATE_SUBS = ("stream", "michelson", "hbt", "lifetime", "polarization", "dipole-image")
ANALYZE_SUBS = ("spectrum", "envelope", "g2", "lifetime", "polarization", "orientation")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="photonlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a data product from a config")
    sim.add_argument("subcommand", choices=SIMULATE_SUBS)
    sim.add_argument("-c", "--config", help="JSON config file (defaults to the shipped parameters)")
    sim.add_argument("-o", "--output", default=None, help="output directory")
    sim.add_argument("--seed", type=int, default=None, help="override the config seed")

    ana = sub.add_parser("analyze", help="fit a recorded data product")
    ana.add_argument("subcommand", choices=ANALYZE_SUBS)
    ana.add_argument("-i", "--input", nargs="+", required=True, help="input data file(s)")
    ana.add_argument("--plot", default=None, help="write a data+fit SVG to this path")
    ana.add_argument("--signal-fraction", type=float, default=None,
                     help="g2: signal fraction for the emitter-count estimate")
    ana.add_argument("--mode", choices=("hwp", "polarizer"), default=None,
                     help="polarization: sweep type (default: file provenance)")
    ana.add_argument("--window-start-ps", type=float, default=analysis.DEFAULT_LIFETIME_WINDOW_START_PS,
                     help="lifetime: start of the fit window after the pulse")
    ana.add_argument("--hint-nm", type=float, default=None,
                     help="envelope: carrier wavelength hint (default: file provenance)")
    ana.add_argument("--search-deg", type=float, default=2.0,
                     help="orientation: coarse grid resolution")

    rep = sub.add_parser("reproduce-paper", help="run the full measurement reproduction")
    rep.add_argument("-o", "--output", required=True, help="output directory")
    rep.add_argument("--seed", type=int, default=None)
    rep.add_argument("--quick", action="store_true",
                     help="1/100 event counts, 3x tolerances, < 60 s")
    rep.add_argument("--no-plots", action="store_true", help="skip SVG rendering")
    return parser


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else paper_config()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if getattr(args, "output", None):
        cfg = dataclasses.replace(cfg, output_dir=args.output)
    return cfg


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = _out_dir(cfg)
    seeds = [int(s) for s in np.random.SeedSequence(cfg.seed).generate_state(8)]
    sub = args.subcommand

    if sub in ("stream", "hbt"):
        duration_ps = cfg.stream.duration_ms * 1e9
        stream = simulate_cw_stream(cfg.emitters(), cfg.excitation, cfg.detector, duration_ps, seeds[0])
        if sub == "hbt":
            stream = split_hbt(stream, seeds[1])
        path = io.write_ptag(stream, out / f"{sub}.ptag")
        print(path)
    elif sub == "michelson":
        ig = simulate_michelson_scan(cfg.emitter, cfg.michelson, seeds[2])
        path = io.write_interferogram_csv(
            ig.opd_nm, ig.intensity, out / "michelson.csv",
            {"seed": seeds[2], "emitter": ig.metadata["emitter"]},
        )
        print(path)
    elif sub == "lifetime":
        exc = dataclasses.replace(cfg.excitation, mode="pulsed")
        stream = simulate_pulsed_stream(cfg.emitter, exc, cfg.detector, cfg.lifetime.n_pulses, seeds[3])
        print(io.write_ptag(stream, out / "lifetime.ptag"))
    elif sub == "polarization":
        pol = cfg.polarization
        angles_hwp = np.arange(0.0, 180.0 + 1e-9, pol.angle_step_deg)
        counts = simulate_polarization_sweep(
            angles_hwp, pol.absorption_azimuth_deg, "hwp", pol.peak_counts,
            pol.background_counts, seeds[4], contrast=pol.hwp_contrast,
        )
        print(io.write_sweep_csv(angles_hwp, counts, out / "polarization_hwp.csv",
                                 {"mode": "hwp", "seed": seeds[4]}))
        angles_pol = np.arange(0.0, 360.0 + 1e-9, pol.angle_step_deg)
        for tag, factor, seed in (("a", 1.0, seeds[5]), ("b", 0.4, seeds[6])):
            counts = simulate_polarization_sweep(
                angles_pol, pol.emission_azimuth_deg, "polarizer",
                pol.peak_counts * factor, pol.background_counts, seed,
            )
            print(io.write_sweep_csv(angles_pol, counts, out / f"polarization_emission_{tag}.csv",
                                     {"mode": "polarizer", "seed": seed}))
    elif sub == "dipole-image":
        imaging = cfg.imaging
        rng = np.random.default_rng(np.random.SeedSequence(seeds[7]))
        for dz in imaging.defocus_list_nm:
            clean = render_defocused_image(cfg.emitter.dipole, imaging.optics, dz)
            pixels = clean.pixels
            if imaging.noise_fraction > 0:
                pixels = np.clip(
                    pixels + rng.normal(0.0, imaging.noise_fraction * pixels.max(), pixels.shape),
                    0.0, None,
                )
            img = DefocusedImage(pixels, dz, imaging.optics)
            path = io.write_image(img, out / f"image_dz{int(dz)}.f64")
            io.write_pgm(img, out / f"image_dz{int(dz)}.pgm")
            print(path)
    return EXIT_OK


def _single_input(args) -> Path:
    if len(args.input) != 1:
        raise UsageError(f"analyze {args.subcommand} takes exactly one input file")
    return Path(args.input[0])


def cmd_analyze(args) -> int:
    sub = args.subcommand
    payload: dict
    plot_path = args.plot

    if sub == "spectrum":
        wl, counts, _ = io.read_spectrum_csv(_single_input(args))
        spectrum = analysis.Spectrum(wl, counts)
        fit = analysis.fit_lorentzian(spectrum)
        payload = fit.to_dict()
        if plot_path:
            from . import plots

            plots.plot_spectrum(spectrum, fit, plot_path)
    elif sub == "envelope":
        opd, intensity, prov = io.read_interferogram_csv(_single_input(args))
        from .interferometry import Interferogram

        hint = args.hint_nm or prov.get("emitter", {}).get("center_wavelength_nm")
        if hint is None:
            raise UsageError("no carrier wavelength in file provenance; pass --hint-nm")
        ig = Interferogram(opd, intensity, prov)
        envelope = analysis.extract_envelope(ig, float(hint))
        fit = analysis.fit_coherence_length(envelope)
        payload = fit.to_dict()
        if plot_path:
            from . import plots

            plots.plot_interferogram(ig, envelope, fit, plot_path)
    elif sub == "g2":
        tau, g2, raw, prov = io.read_histogram_csv(_single_input(args))
        from .interferometry import CorrelationHistogram

        if tau.size < 2:
            raise FormatError("histogram has fewer than 2 bins")
        bin_width = float(np.median(np.diff(tau)))
        hist = CorrelationHistogram(tau, g2, raw, bin_width, 0.0, 0.0, 0, prov)
        fit = analysis.fit_g2_dip(hist)
        payload = fit.to_dict()
        p_sig = args.signal_fraction
        if p_sig is None:
            emitters = prov.get("origin", {}).get("emitters") or []
            if emitters:
                p_sig = emitters[0].get("signal_fraction")
        if p_sig is not None and fit.converged and fit.parameters["contrast"] > 0:
            n_est, n_round = estimate_emitter_count(
                min(fit.parameters["contrast"], float(p_sig) ** 2), float(p_sig)
            )
            payload["emitter_count"] = {"n_est": n_est, "n_rounded": n_round,
                                        "signal_fraction": float(p_sig)}
        if plot_path:
            from . import plots

            plots.plot_g2(hist, fit, plot_path)
    elif sub == "lifetime":
        stream = io.read_ptag(_single_input(args))
        t_ps, counts = analysis.lifetime_histogram(stream)
        fit = analysis.fit_lifetime(t_ps, counts, args.window_start_ps)
        payload = fit.to_dict()
        if plot_path:
            from . import plots

            plots.plot_lifetime(t_ps, counts, fit, plot_path)
    elif sub == "polarization":
        angles, counts, prov = io.read_sweep_csv(_single_input(args))
        mode = args.mode or prov.get("mode")
        if mode not in ("hwp", "polarizer"):
            raise UsageError("sweep mode not in file provenance; pass --mode hwp|polarizer")
        fit = analysis.fit_polarization(angles, counts, mode)
        payload = fit.to_dict()
        if plot_path:
            from . import plots

            plots.plot_polarization([(angles, counts, fit, f"{mode} sweep")], plot_path)
    elif sub == "orientation":
        images = [io.read_image(Path(p)) for p in args.input]
        est = estimate_orientation(images, args.search_deg)
        payload = {
            "polar_deg": est.orientation.polar_deg,
            "azimuth_deg": est.orientation.azimuth_deg,
            "residual": est.residual,
            "azimuth_uncertain": est.azimuth_uncertain,
            "defocus_refined_nm": est.defocus_refined_nm,
            "fit": est.fit.to_dict() if est.fit is not None else None,
        }
        if plot_path:
            from . import plots

            plots.plot_image_row(images, [f"dz = {im.defocus_nm:g} nm" for im in images], plot_path)

    print(json.dumps(payload, indent=2, sort_keys=True))
    converged = payload.get("converged", True)
    if isinstance(payload.get("fit"), dict):
        converged = payload["fit"].get("converged", True)
    return EXIT_OK if converged else EXIT_ANALYSIS


def cmd_reproduce(args) -> int:
    cfg = paper_config()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    report = run_reproduction(cfg, args.output, quick=args.quick, make_plots=not args.no_plots)
    print(report.format_table())
    return EXIT_OK if report.overall_pass else EXIT_ANALYSIS


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "analyze":
            return cmd_analyze(args)
        return cmd_reproduce(args)
    except (ConfigError, UsageError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except EstimationError as exc:
        print(f"analysis error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS


if __name__ == "__main__":
    sys.exit(main())
