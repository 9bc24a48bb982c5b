import json

import pytest

from brainnetgen import InputError
from brainnetgen.config import ExperimentConfig, OtsuThreshold, load_config, write_resolved


def test_defaults():
    cfg = load_config(None)
    assert cfg.protocol.ratios == [0.6] and cfg.protocol.repeats == 10
    assert cfg.cohort.autism.p_in == 0.8 and cfg.cohort.control.p_out == 0.3


def test_unknown_keys_rejected(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"generator": {"hidden": 4}}))
    with pytest.raises(InputError, match="invalid config"):
        load_config(p)


def test_threshold_union(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"preprocessing": {"threshold": {"kind": "otsu", "bins": 64}}}))
    cfg = load_config(p)
    assert isinstance(cfg.preprocessing.threshold, OtsuThreshold)
    assert cfg.preprocessing.threshold.bins == 64


@pytest.mark.parametrize(
    "doc",
    [
        {"protocol": {"ratios": [1.2]}},
        {"protocol": {"arms": []}},
        {"preprocessing": {"transforms": ["flip"]}},
        {"preprocessing": {"threshold": {"kind": "fixed", "tau": 2}}},
    ],
)
def test_invalid_values(tmp_path, doc):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(InputError):
        load_config(p)


def test_missing_and_malformed(tmp_path):
    with pytest.raises(InputError, match="not found"):
        load_config(tmp_path / "nope.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(InputError, match="invalid JSON"):
        load_config(tmp_path / "bad.json")


def test_relative_paths_resolve_against_config(tmp_path):
    (tmp_path / "sub").mkdir()
    p = tmp_path / "sub" / "c.json"
    p.write_text(json.dumps({"io": {"raw_cohort": "../cohort"}}))
    assert load_config(p).io.raw_cohort == str((tmp_path / "cohort").resolve())


def test_write_resolved_roundtrip(tmp_path):
    cfg = ExperimentConfig()
    write_resolved(cfg, tmp_path)
    back = ExperimentConfig.model_validate_json((tmp_path / "config.json").read_text())
    assert back == cfg
