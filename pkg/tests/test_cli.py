import json
import subprocess
import sys

import numpy as np
import pytest

import photonlab as pl
from photonlab import io
from photonlab.cli import main
from photonlab.config import config_to_dict, paper_config


@pytest.fixture()
def quick_config(tmp_path):
    """Paper parameters with a short stream so CLI runs stay fast."""
    raw = config_to_dict(paper_config())
    raw["instruments"]["stream"]["duration_ms"] = 40.0
    raw["instruments"]["lifetime"]["n_pulses"] = 100_000
    raw["seed"] = 424242
    path = tmp_path / "config.json"
    path.write_text(json.dumps(raw))
    return path


def run(args):
    return main([str(a) for a in args])


class TestSimulate:
    def test_hbt_happy_path(self, quick_config, tmp_path, capsys):
        out = tmp_path / "out"
        assert run(["simulate", "hbt", "-c", quick_config, "-o", out]) == 0
        stream = io.read_ptag(out / "hbt.ptag")
        assert stream.n_channels == 2
        assert stream.n_tags > 100_000
        assert (out / "hbt.ptag.json").exists()

    def test_invalid_na_exits_2_citing_constraint(self, tmp_path, capsys):
        raw = config_to_dict(paper_config())
        raw["instruments"]["imaging"]["optics"]["numerical_aperture"] = 1.6
        raw["instruments"]["imaging"]["optics"]["immersion_index"] = 1.518
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(raw))
        code = run(["simulate", "dipole-image", "-c", path, "-o", tmp_path / "o"])
        assert code == 2
        err = capsys.readouterr().err
        assert "immersion_index" in err and "1.6" in err

    def test_determinism_byte_identical(self, quick_config, tmp_path):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert run(["simulate", "stream", "-c", quick_config, "-o", out1]) == 0
        assert run(["simulate", "stream", "-c", quick_config, "-o", out2]) == 0
        assert (out1 / "stream.ptag").read_bytes() == (out2 / "stream.ptag").read_bytes()
        assert (out1 / "stream.ptag.json").read_text() == (out2 / "stream.ptag.json").read_text()

    def test_michelson_and_polarization_products(self, quick_config, tmp_path):
        out = tmp_path / "m"
        assert run(["simulate", "michelson", "-c", quick_config, "-o", out]) == 0
        assert (out / "michelson.csv").exists()
        assert run(["simulate", "polarization", "-c", quick_config, "-o", out]) == 0
        for name in ("polarization_hwp.csv", "polarization_emission_a.csv", "polarization_emission_b.csv"):
            assert (out / name).exists()

    def test_dipole_image_products(self, quick_config, tmp_path):
        out = tmp_path / "img"
        assert run(["simulate", "dipole-image", "-c", quick_config, "-o", out]) == 0
        for dz in (500, 720, 1320):
            assert (out / f"image_dz{dz}.f64").exists()
            assert (out / f"image_dz{dz}.f64.json").exists()
            assert (out / f"image_dz{dz}.pgm").exists()


class TestAnalyze:
    def test_g2_pipeline(self, quick_config, tmp_path, capsys):
        out = tmp_path / "g2"
        assert run(["simulate", "hbt", "-c", quick_config, "-o", out]) == 0
        capsys.readouterr()
        stream = io.read_ptag(out / "hbt.ptag")
        hist = pl.compute_g2(stream, 256.0, 50_000.0)
        io.write_histogram_csv(hist.tau_ps, hist.g2, hist.raw, out / "g2.csv",
                               {"origin": stream.origin})
        code = run(["analyze", "g2", "-i", out / "g2.csv"])
        payload = json.loads(capsys.readouterr().out)
        assert code == 0
        assert payload["parameters"]["contrast"] == pytest.approx(0.65, abs=0.06)
        assert payload["emitter_count"]["n_rounded"] == 1

    def test_lifetime_pipeline(self, quick_config, tmp_path, capsys):
        out = tmp_path / "lt"
        assert run(["simulate", "lifetime", "-c", quick_config, "-o", out]) == 0
        capsys.readouterr()
        code = run(["analyze", "lifetime", "-i", out / "lifetime.ptag"])
        payload = json.loads(capsys.readouterr().out)
        assert code == 0
        assert payload["parameters"]["tau_ns"] == pytest.approx(1.5, rel=0.05)

    def test_polarization_mode_from_provenance(self, quick_config, tmp_path, capsys):
        out = tmp_path / "pol"
        assert run(["simulate", "polarization", "-c", quick_config, "-o", out]) == 0
        capsys.readouterr()
        code = run(["analyze", "polarization", "-i", out / "polarization_hwp.csv"])
        payload = json.loads(capsys.readouterr().out)
        assert code == 0
        assert payload["parameters"]["phase_deg"] == pytest.approx(14.3, abs=1.0)

    def test_orientation_stack(self, quick_config, tmp_path, capsys):
        out = tmp_path / "ori"
        assert run(["simulate", "dipole-image", "-c", quick_config, "-o", out]) == 0
        capsys.readouterr()
        inputs = [out / f"image_dz{dz}.f64" for dz in (500, 720, 1320)]
        code = run(["analyze", "orientation", "-i", *inputs])
        payload = json.loads(capsys.readouterr().out)
        assert code == 0
        assert payload["polar_deg"] == pytest.approx(40.0, abs=3.0)
        assert payload["azimuth_deg"] == pytest.approx(28.0, abs=2.0)

    def test_envelope_with_plot(self, quick_config, tmp_path, capsys):
        out = tmp_path / "env"
        assert run(["simulate", "michelson", "-c", quick_config, "-o", out]) == 0
        capsys.readouterr()
        svg = out / "envelope.svg"
        code = run(["analyze", "envelope", "-i", out / "michelson.csv", "--plot", svg])
        payload = json.loads(capsys.readouterr().out)
        assert code == 0
        assert payload["parameters"]["l_coh_um"] == pytest.approx(62.82, rel=0.05)
        assert svg.exists() and svg.read_bytes().startswith(b"<?xml")

    def test_spectrum_csv(self, tmp_path, capsys):
        from photonlab import analysis

        line = pl.LorentzianLine(794.7, 1.6, 1e4, 100.0)
        wl = np.arange(786.7, 802.7, 0.05)
        spec = analysis.synthesize_spectrum(line, wl, seed=5)
        path = io.write_spectrum_csv(spec.wavelength_nm, spec.counts, tmp_path / "s.csv")
        code = run(["analyze", "spectrum", "-i", path])
        payload = json.loads(capsys.readouterr().out)
        assert code == 0
        assert payload["parameters"]["fwhm_nm"] == pytest.approx(1.6, abs=0.1)

    def test_empty_file_nonzero_exit(self, tmp_path, capsys):
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        assert run(["analyze", "spectrum", "-i", empty]) == 3
        assert "expected" in capsys.readouterr().err

    def test_wrong_file_type_diagnostic(self, quick_config, tmp_path, capsys):
        out = tmp_path / "w"
        assert run(["simulate", "lifetime", "-c", quick_config, "-o", out]) == 0
        capsys.readouterr()
        code = run(["analyze", "spectrum", "-i", out / "lifetime.ptag"])
        assert code == 3
        assert "wavelength_nm,counts" in capsys.readouterr().err

    def test_not_a_ptag(self, tmp_path, capsys):
        path = tmp_path / "fake.ptag"
        path.write_bytes(b"garbage")
        assert run(["analyze", "lifetime", "-i", path]) == 3
        assert "PTAG1" in capsys.readouterr().err


class TestReproduce:
    def test_quick_mode_passes_and_schema_stable(self, tmp_path, capsys):
        out1, out2 = tmp_path / "q1", tmp_path / "q2"
        assert run(["reproduce-paper", "-o", out1, "--quick", "--seed", "11", "--no-plots"]) == 0
        table = capsys.readouterr().out
        assert "overall: PASS" in table
        assert run(["reproduce-paper", "-o", out2, "--quick", "--seed", "12", "--no-plots"]) == 0
        capsys.readouterr()
        r1 = json.loads((out1 / "report.json").read_text())
        r2 = json.loads((out2 / "report.json").read_text())
        assert [row["quantity"] for row in r1["rows"]] == [row["quantity"] for row in r2["rows"]]
        assert set(r1) == set(r2) == {"rows", "notes", "overall_pass"}

    def test_console_entry_point(self, tmp_path):
        result = subprocess.run(
            [sys.executable, "-m", "photonlab.cli", "reproduce-paper", "-o",
             str(tmp_path / "sub"), "--quick", "--no-plots"],
            capture_output=True, text=True, timeout=300,
        )
        assert result.returncode == 0, result.stderr
        assert "overall: PASS" in result.stdout
