import pytest
import yaml

from backfillsim import ConfigError, DEFAULTS, config_hash, dump_defaults, load_config
from backfillsim.cli import main
from backfillsim.config import validate_config
from backfillsim.scenarios import resolve_config


def write_yaml(path, data):
    path.write_text(yaml.safe_dump(data))
    return path


def test_defaults_are_valid():
    assert validate_config(DEFAULTS) == []


def test_dump_defaults_round_trips():
    assert yaml.safe_load(dump_defaults()) == DEFAULTS


def test_unknown_keys_are_named_in_errors(tmp_path):
    p = write_yaml(tmp_path / "c.yaml", {"scenario": "efficiency",
                                         "broker": {"n_broker": 4},
                                         "mystery": 1})
    with pytest.raises(ConfigError) as err:
        load_config(p)
    text = str(err.value)
    assert "broker.n_broker" in text and "mystery" in text


def test_background_source_must_be_exactly_one(tmp_path):
    p = write_yaml(tmp_path / "c.yaml",
                   {"scenario": "efficiency",
                    "background": {"target_utilization": 0.9,
                                   "trace_path": "jobs.swf"}})
    with pytest.raises(ConfigError, match="exactly one"):
        load_config(p)
    p2 = write_yaml(tmp_path / "c2.yaml",
                    {"scenario": "efficiency",
                     "background": {"target_utilization": 0.0}})
    with pytest.raises(ConfigError, match="exactly one"):
        load_config(p2)


def test_extends_merges_parent_first(tmp_path):
    write_yaml(tmp_path / "base.yaml", {"seed": 9, "broker": {"n_brokers": 7}})
    child = write_yaml(tmp_path / "child.yaml",
                       {"extends": "base.yaml", "broker": {"poll_interval_s": 30}})
    cfg = load_config(child)
    assert cfg["seed"] == 9
    assert cfg["broker"]["n_brokers"] == 7
    assert cfg["broker"]["poll_interval_s"] == 30


def test_circular_extends_detected(tmp_path):
    write_yaml(tmp_path / "a.yaml", {"extends": "b.yaml"})
    write_yaml(tmp_path / "b.yaml", {"extends": "a.yaml"})
    with pytest.raises(ConfigError, match="circular"):
        load_config(tmp_path / "a.yaml")


def test_config_hash_is_stable_and_sensitive():
    a = resolve_config({"scenario": "weak_scaling"})
    b = resolve_config({"scenario": "weak_scaling"})
    c = resolve_config({"scenario": "weak_scaling", "seed": 2})
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(c)


def test_scenario_presets_fill_experiment_defaults():
    strong = resolve_config({"scenario": "strong_scaling"})
    assert strong["pilot"]["units_total"] == 2048
    assert strong["pilot"]["nodes_list"] == [256, 512, 1024, 2048]
    weak = resolve_config({"scenario": "weak_scaling"})
    assert weak["pilot"]["units_total"] is None
    # user overrides beat presets
    custom = resolve_config({"scenario": "strong_scaling",
                             "pilot": {"units_total": 64}})
    assert custom["pilot"]["units_total"] == 64


# -- CLI -------------------------------------------------------------------------


def test_cli_print_defaults(capsys):
    assert main(["print-defaults"]) == 0
    out = capsys.readouterr().out
    assert yaml.safe_load(out) == DEFAULTS


def test_cli_validate_ok_and_failure(tmp_path, capsys):
    good = write_yaml(tmp_path / "good.yaml", {"scenario": "weak_scaling"})
    assert main(["validate", str(good)]) == 0
    bad = write_yaml(tmp_path / "bad.yaml", {"scenario": "weak_scaling",
                                             "pilot": {"walltime_s": -5}})
    assert main(["validate", str(bad)]) == 2
    assert "walltime_s" in capsys.readouterr().err


def test_cli_run_writes_manifest(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "tiny.yaml",
                     {"scenario": "weak_scaling", "output_dir": "out",
                      "pilot": {"nodes_list": [8, 16]}})
    assert main(["run", str(cfg), "--base-dir", str(tmp_path)]) == 0
    assert (tmp_path / "out" / "manifest.json").exists()
    assert (tmp_path / "out" / "scaling.csv").exists()


def test_cli_sweep_runs_each_value(tmp_path):
    cfg = write_yaml(tmp_path / "tiny.yaml",
                     {"scenario": "weak_scaling", "output_dir": "sweep",
                      "pilot": {"nodes_list": [8]}})
    assert main(["sweep", str(cfg), "--param", "seed=1,2",
                 "--base-dir", str(tmp_path)]) == 0
    assert (tmp_path / "sweep" / "seed=1" / "scaling.csv").exists()
    assert (tmp_path / "sweep" / "seed=2" / "scaling.csv").exists()


def test_cli_ingest_stats_poll_trace(tmp_path, capsys):
    p = tmp_path / "t.csv"
    p.write_text("timestamp_s,nodes,walltime_s\n0,691,7560\n60,691,7560\n")
    assert main(["ingest-stats", str(p)]) == 0
    assert "mean nodes 691.0" in capsys.readouterr().out


def test_cli_ingest_stats_swf(tmp_path, capsys):
    p = tmp_path / "jobs.swf"
    p.write_text("1 0 -1 100 4 -1 -1 4 200 -1 -1 -1 -1 -1 -1 -1 -1 -1\n")
    assert main(["ingest-stats", str(p)]) == 0
    assert "1 jobs" in capsys.readouterr().out


def test_cli_errors_exit_nonzero(tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    assert main(["ingest-stats", str(missing)]) == 1
    bad = tmp_path / "bad.csv"
    bad.write_text("wrong,header\n")
    assert main(["ingest-stats", str(bad)]) == 1


def test_cli_sweep_rejects_malformed_param(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "t.yaml", {"scenario": "weak_scaling"})
    assert main(["sweep", str(cfg), "--param", "justakey"]) == 2
    assert "key=v1,v2" in capsys.readouterr().err
