import json

import pytest

import photonlab as pl
from photonlab.config import (
    config_from_dict,
    config_to_dict,
    load_config,
    paper_config,
)


def test_paper_config_loads():
    cfg = paper_config()
    assert cfg.emitter.center_wavelength_nm == 794.7
    assert cfg.emitter.fwhm_nm == 1.6
    assert cfg.emitter.excited_lifetime_ns == 1.5
    assert cfg.emitter.signal_fraction == 0.806
    assert cfg.imaging.defocus_list_nm == (500.0, 720.0, 1320.0)
    assert cfg.imaging.optics.numerical_aperture == 1.3


def test_round_trip_through_dict():
    cfg = paper_config()
    again = config_from_dict(config_to_dict(cfg))
    assert again == cfg


def test_unknown_top_level_key_named():
    with pytest.raises(pl.ConfigError, match="bogus"):
        config_from_dict({"bogus": 1, "emitter": {"center_wavelength_nm": 794.7,
                                                  "fwhm_nm": 1.6, "excited_lifetime_ns": 1.5}})


def test_unknown_nested_key_named_with_path():
    raw = config_to_dict(paper_config())
    raw["detector"]["gain"] = 2.0
    with pytest.raises(pl.ConfigError, match="detector.gain"):
        config_from_dict(raw)


def test_unknown_instrument_key():
    raw = config_to_dict(paper_config())
    raw["instruments"]["oscilloscope"] = {}
    with pytest.raises(pl.ConfigError, match="instruments.oscilloscope"):
        config_from_dict(raw)


def test_na_versus_index_constraint_cited():
    raw = config_to_dict(paper_config())
    raw["instruments"]["imaging"]["optics"]["numerical_aperture"] = 1.6
    raw["instruments"]["imaging"]["optics"]["immersion_index"] = 1.518
    with pytest.raises(pl.ConfigError, match="immersion_index"):
        config_from_dict(raw)


def test_schema_version_checked():
    raw = config_to_dict(paper_config())
    raw["schema_version"] = 99
    with pytest.raises(pl.ConfigError, match="schema_version"):
        config_from_dict(raw)


def test_invalid_mode():
    raw = config_to_dict(paper_config())
    raw["excitation"]["mode"] = "chopped"
    with pytest.raises(pl.ConfigError, match="mode"):
        config_from_dict(raw)


def test_load_config_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(pl.ConfigError, match="JSON"):
        load_config(path)


def test_load_config_missing_file(tmp_path):
    with pytest.raises(pl.ConfigError):
        load_config(tmp_path / "missing.json")


def test_emitters_list():
    cfg = paper_config()
    import dataclasses

    cfg3 = dataclasses.replace(cfg, n_emitters=3)
    assert len(cfg3.emitters()) == 3
    assert all(e == cfg.emitter for e in cfg3.emitters())


def test_shipped_defaults_file_is_valid_json():
    from importlib import resources

    text = resources.files("photonlab").joinpath("data/paper_config.json").read_text()
    raw = json.loads(text)
    assert raw["schema_version"] == 1
