import json

import pytest
import yaml

from ipswsim.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, main
from ipswsim.config import config_from_dict, config_to_dict, dump_config, parse_config
from ipswsim.errors import ConfigError
from ipswsim.montecarlo import default_config
from ipswsim.reporting import DASH, sha256_file

SMALL = {
    "replications": 3,
    "master_seed": 11,
    "populations": {n: {"n_simulated": 2000} for n in
                    ("registry", "pcornet_disease", "pcornet_overall", "us_census")},
}
CLINIC = {"role": "target", "n_simulated": 2000, "age_mean": 58, "age_sd": 11,
          "female": 0.5, "race_black": 0.2, "race_other": 0.1, "hispanic": 0.1,
          "hypertension": 0.6, "heart_failure": None, "cad": 0.2, "pad": 0.1}


def test_empty_config_is_default(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("")
    assert parse_config(path) == default_config()
    assert parse_config(None) == default_config()


@pytest.mark.parametrize("data,where", [
    ({"replications": 0}, "replications"),
    ({"replications": 2.5}, "replications"),
    ({"colour": "blue"}, "colour"),
    ({"populations": {"trial": {"age_sd": -1}}}, "populations.trial.age_sd"),
    ({"populations": {"trial": {"height": 1}}}, "populations.trial.height"),
    ({"populations": {"clinic": {"role": "target"}}}, "populations.clinic.age_mean"),
    ({"effect_scales": [1.0, 0.0]}, "effect_scales[1]"),
    ({"select_scenarios": ["nope"]}, "select_scenarios"),
])
def test_invalid_configs_name_the_field(data, where):
    with pytest.raises(ConfigError) as exc:
        config_from_dict(data)
    assert exc.value.path == where


def test_sixth_population_added_and_skipped_where_unmeasured():
    cfg = config_from_dict({"populations": {"clinic": CLINIC}})
    assert [p.name for p in cfg.populations][-1] == "clinic"
    skipped = {(s.weighting_model, s.target) for s in cfg.pairs()[1]}
    assert ("dem_clin", "clinic") in skipped and ("dem_only", "clinic") not in skipped


def test_round_trip():
    cfg = config_from_dict({**SMALL, "populations": {**SMALL["populations"], "clinic": CLINIC},
                            "scenarios": {"custom": {"modifiers": ["age", "race"], "delta": 2.0}},
                            "effect_scales": [0.5, 1.5], "excluded_pairs": [["dem_only", "registry"]]})
    again = config_from_dict(yaml.safe_load(dump_config(cfg)))
    assert again == cfg
    assert config_to_dict(again) == config_to_dict(cfg)


@pytest.fixture
def small_yaml(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(yaml.safe_dump(SMALL))
    return path


def _digests(out):
    return {p.name: sha256_file(p) for p in sorted(out.iterdir()) if p.name != "manifest.json"}


def test_cli_run_outputs(small_yaml, tmp_path):
    out = tmp_path / "run"
    assert main(["run", "--config", str(small_yaml), "--out", str(out), "--diagnostics"]) == EXIT_OK
    names = {p.name for p in out.iterdir()}
    assert names == {"population_table.csv", "balance_table.csv", "love_plot_data.csv", "summary_table.csv",
                     "bias_draws.csv", "skip_log.csv", "summary_report.txt", "diagnostics.csv",
                     "resolved_config.yaml", "manifest.json"}
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["master_seed"] == 11
    assert manifest["files"] == _digests(out)
    table = (out / "population_table.csv").read_text()
    assert DASH in table
    assert "dem_clin,us_census" in (out / "skip_log.csv").read_text()
    # resolved config reproduces the run's configuration
    assert parse_config(out / "resolved_config.yaml") == parse_config(small_yaml)


def test_cli_rerun_identical_and_worker_independent(small_yaml, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", str(small_yaml), "--out", str(a), "--workers", "1"]) == EXIT_OK
    assert main(["run", "--config", str(small_yaml), "--out", str(b), "--workers", "2"]) == EXIT_OK
    assert _digests(a) == _digests(b)


def test_cli_scenario_filter_and_sweep(small_yaml, tmp_path):
    out = tmp_path / "s"
    assert main(["sweep", "--config", str(small_yaml), "--out", str(out), "--scenario", "one_modifier",
                 "--scale", "1", "--scale", "2"]) == EXIT_OK
    text = (out / "summary_table.csv").read_text().splitlines()
    assert all(line.startswith("one_modifier") for line in text[1:])
    assert len(text) == 1 + 2 * 8


@pytest.mark.parametrize("argv", [["--reps", "0"], ["--scenario", "nope"], ["--scale", "0"]])
def test_cli_config_errors(small_yaml, tmp_path, argv, capsys):
    out = tmp_path / "bad"
    assert main(["run", "--config", str(small_yaml), "--out", str(out), *argv]) == EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err
    assert not out.exists() or not any(out.iterdir())


def test_cli_bad_yaml(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("replications: [\n")
    assert main(["config", "--config", str(bad)]) == EXIT_CONFIG


def test_cli_missing_config_is_io_error(tmp_path):
    assert main(["config", "--config", str(tmp_path / "missing.yaml")]) == EXIT_IO


def test_cli_balance_and_config(tmp_path, capsys):
    assert main(["balance", "--out", str(tmp_path / "bal")]) == EXIT_OK
    assert {p.name for p in (tmp_path / "bal").iterdir()} == {"balance_table.csv", "love_plot_data.csv"}
    assert main(["config"]) == EXIT_OK
    assert config_from_dict(yaml.safe_load(capsys.readouterr().out)) == default_config()
