import json

import pytest

from markedratio.config import ConfigError, ExperimentConfig, TruthConfig
from markedratio.simulation import example1


def test_defaults_build():
    cfg = ExperimentConfig()
    truth, spec = cfg.truth.build()
    ref_truth, ref_spec = example1()
    assert spec == ref_spec
    assert truth.params().to_vector().tolist() == ref_truth.params().to_vector().tolist()


def test_round_trip_through_dict():
    cfg = ExperimentConfig(experiment="lob", seed=2 ** 64 - 1, days=3, lob={"horizon": 600.0})
    again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again.to_dict() == cfg.to_dict()


@pytest.mark.parametrize("raw, msg", [
    ({"experimant": "lob"}, r"unknown keys \['experimant'\]"),
    ({"truth": {"raw_sides": []}}, r"truth: unknown keys"),
    ({"prediction": {"hawkes": True}}, r"prediction: unknown keys"),
    ({"qbe": {"n_samplez": 3}}, r"qbe: unknown keys"),
    ({"lob": {"horizont": 3}}, r"unknown LOB config keys"),
    ({"experiment": "table"}, "experiment must be one of"),
    ({"estimator": "mle"}, "estimator must be one of"),
    ({"seed": -1}, "unsigned 64-bit"),
    ({"seed": 2 ** 64}, "unsigned 64-bit"),
    ({"horizons": [100, -1]}, "horizons must be positive"),
    ({"replications": 1.5}, "replications"),
    ({"candidates": {"side": ["1x"]}}, "candidates"),
    ({"prediction": {"marked_sets": [["1", "2"]]}}, "marked_sets"),
    ({"inputs": [{"covariates": "c.csv"}]}, "inputs"),
])
def test_invalid_configs_rejected(raw, msg):
    with pytest.raises(ConfigError, match=msg):
        ExperimentConfig.from_dict(raw)


def test_truth_needs_chain_rates():
    with pytest.raises(ConfigError, match="no chain rate"):
        TruthConfig.from_dict({"chain_rates": {"X1": 0.5}})


def test_load_reports_json_line(tmp_path):
    f = tmp_path / "c.json"
    f.write_text('{\n "seed": 1,\n "days": ,\n}')
    with pytest.raises(ConfigError, match=r"c\.json:3: invalid JSON"):
        ExperimentConfig.load(f)
    with pytest.raises(ConfigError, match="cannot read"):
        ExperimentConfig.load(tmp_path / "missing.json")
