from pathlib import Path

import pytest
import yaml

from chlab.errors import ConfigError, InvalidParameter
from chlab.experiments import REGISTRY, get_experiment, list_experiments, run_experiment, validate_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def test_registry_lists_all_experiments():
    names = [n for n, _ in list_experiments()]
    assert len(names) == 17
    assert len(set(names)) == 17
    assert {e.module for e in REGISTRY.values()} == {
        "soliton", "dynamics", "scattering", "linops", "modulation", "multisoliton", "gkdv"
    }


def test_unknown_experiment_suggests_names():
    with pytest.raises(ConfigError) as info:
        get_experiment("profile-identity")
    assert "profile-identities" in info.value.suggestions
    assert "did you mean" in str(info.value)


def test_config_error_is_an_invalid_parameter():
    assert issubclass(ConfigError, InvalidParameter)


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_configs_validate(path):
    cfg = validate_config(yaml.safe_load(path.read_text()))
    assert cfg["experiment"] == path.stem
    assert cfg == validate_config({"experiment": path.stem})


def test_defaults_are_filled_in():
    cfg = validate_config({"experiment": "profile-identities", "physics": {"c": 5}})
    assert cfg["physics"] == {"c": 5.0, "omega": 1.0}
    assert cfg["grid"] == {"n": 1024, "length": 80.0}
    assert cfg["seed"] == 0 and cfg["output"] == ""


@pytest.mark.parametrize(
    "raw,match",
    [
        ([], "mapping"),
        ({}, "experiment"),
        ({"experiment": "profile-identities", "extra": 1}, "unknown top-level"),
        ({"experiment": "profile-identities", "physics": {"speed": 4}}, "unknown keys"),
        ({"experiment": "profile-identities", "physics": {"c": "fast"}}, "must be a number"),
        ({"experiment": "profile-identities", "physics": {"c": float("nan")}}, "finite"),
        ({"experiment": "profile-identities", "grid": {"n": 1000.5}}, "integer"),
        ({"experiment": "profile-identities", "grid": {"n": 100}}, "power of two"),
        ({"experiment": "profile-identities", "seed": -1}, "seed"),
        ({"experiment": "profile-identities", "seed": True}, "seed"),
        ({"experiment": "profile-identities", "output": 3}, "output"),
        ({"experiment": "profile-identities", "physics": []}, "mapping"),
        ({"experiment": "profile-identities", "physics": {"omega": 0}}, "omega"),
        ({"experiment": "spectrum-weighted", "physics": {"a": -0.9}}, "weight"),
        ({"experiment": "train-stability", "physics": {"speeds": [1.5, 3.0]}}, "invalid speed"),
        ({"experiment": "train-stability", "physics": {"speeds": [3.0, True]}}, "list of numbers"),
    ],
)
def test_invalid_configs(raw, match):
    with pytest.raises(ConfigError, match=match):
        validate_config(raw)


def test_speed_at_threshold_message():
    with pytest.raises(ConfigError, match="c ≤ 2ω"):
        validate_config({"experiment": "profile-identities", "physics": {"c": 2.0, "omega": 1.0}})


def test_run_writes_report_and_files(tmp_path):
    cfg = validate_config({"experiment": "liouville-potential"})
    rep = run_experiment(cfg, tmp_path / "run")
    assert rep["status"] == "pass"
    assert (tmp_path / "run" / "report.json").is_file()
    assert [f["path"] for f in rep["files"]] == ["potential.csv"]
    assert rep["measured"]["V_at_0"] == pytest.approx(-15.0, abs=1e-12)
    assert rep["measured"]["deviation_from_reference_rational_form"] > 1


def test_failed_assertions_mark_the_run(tmp_path):
    cfg = validate_config({"experiment": "profile-identities", "grid": {"n": 128}})
    rep = run_experiment(cfg, tmp_path)
    assert rep["status"] == "fail"
    assert not all(a["passed"] for a in rep["assertions"])


def test_module_errors_propagate(tmp_path):
    cfg = validate_config({"experiment": "profile-identities", "grid": {"n": 256, "length": 10.0}})
    with pytest.raises(InvalidParameter, match="grid too small"):
        run_experiment(cfg, tmp_path)


@pytest.mark.parametrize("name", ["profile-identities", "invariant-closed-forms", "operator-algebra",
                                  "spectrum-weighted", "semigroup-decay", "kdv-toolkit", "mkdv-toolkit"])
def test_fast_experiments_pass(name, tmp_path):
    rep = run_experiment(validate_config({"experiment": name}), tmp_path)
    failed = [a["id"] for a in rep["assertions"] if not a["passed"]]
    assert rep["status"] == "pass", failed


@pytest.mark.slow
@pytest.mark.parametrize("name", ["evolve-soliton", "scattering-unitarity", "discrete-spectrum", "completeness",
                                  "modulation-track", "monotonicity", "asymptotic-single", "train-stability",
                                  "exact-two-soliton"])
def test_slow_experiments_pass(name, tmp_path):
    rep = run_experiment(validate_config({"experiment": name}), tmp_path)
    failed = [a["id"] for a in rep["assertions"] if not a["passed"]]
    assert rep["status"] == "pass", failed
