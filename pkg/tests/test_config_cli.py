"""Config validation, the experiment runner's reproducibility contract, and
the command-line interface."""

import json
import os

import pytest
from click.testing import CliRunner

from mpctrack.cli import main
from mpctrack.config import (ExperimentConfig, config_to_dict,
                             validate_config)
from mpctrack.experiment import run_experiment, run_single
from mpctrack.model import HyperParams

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def write(tmp_path, doc):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(doc))
    return str(p)


class TestValidateConfig:
    def test_empty_file_is_parse_error(self, tmp_path):
        p = tmp_path / "empty.json"
        p.write_text("")
        report = validate_config(str(p))
        assert not report.ok
        assert "not valid JSON" in report.errors[0][1]

    def test_missing_file(self, tmp_path):
        report = validate_config(str(tmp_path / "nope.json"))
        assert not report.ok

    def test_range_error_field_path(self, tmp_path):
        path = write(tmp_path, {"hyper": {"p_s": 1.5}})
        report = validate_config(path)
        assert not report.ok
        assert any(f == "hyper.p_s" for f, _ in report.errors)

    def test_unknown_field_reported(self, tmp_path):
        path = write(tmp_path, {"hyper": {"particles": 10}})
        report = validate_config(path)
        assert any(f == "hyper.particles" for f, _ in report.errors)

    def test_defaulting_report_notes_J(self, tmp_path):
        path = write(tmp_path, {"mode": "fully_synthetic",
                                "hyper": {"p_s": 0.99}})
        report = validate_config(path)
        assert report.ok
        filled = dict(report.defaults_filled)
        assert filled.get("hyper.J") == 10000
        assert filled.get("hyper.P") == 5000
        assert report.config.hyper.p_s == 0.99

    def test_bad_mode(self, tmp_path):
        path = write(tmp_path, {"mode": "streaming"})
        report = validate_config(path)
        assert any(f == "mode" for f, _ in report.errors)

    def test_bundled_configs_validate(self):
        for name in ("desk.json", "desk_fast_far.json",
                     "paper_standard.json", "pipeline_radio.json"):
            report = validate_config(os.path.join(REPO, "configs", name))
            assert report.ok, (name, report.errors)

    def test_config_echo_round_trips(self, tmp_path):
        from mpctrack.config import config_from_dict
        cfg = ExperimentConfig(runs=3, base_seed=9)
        doc = config_to_dict(cfg)
        report = config_from_dict(doc)
        assert report.ok
        assert report.config.runs == 3
        assert report.config.base_seed == 9


def small_cfg(out_dir, **hyper):
    hyper.setdefault("J", 300)
    cfg = ExperimentConfig(scenario="desk", runs=2, base_seed=5,
                           out_dir=str(out_dir))
    cfg.hyper = HyperParams(**hyper)
    return cfg


class TestRunExperiment:
    def test_smoke_artifacts(self, tmp_path):
        cfg = small_cfg(tmp_path / "out")
        run_experiment(cfg)
        names = sorted(os.listdir(tmp_path / "out"))
        assert names == ["config_echo.json", "run_000.csv", "run_001.csv",
                         "summary.csv"]

    def test_byte_identical_reruns(self, tmp_path):
        cfg1 = small_cfg(tmp_path / "a")
        cfg2 = small_cfg(tmp_path / "b")
        run_experiment(cfg1)
        run_experiment(cfg2)
        for name in ("run_000.csv", "run_001.csv", "summary.csv"):
            a = (tmp_path / "a" / name).read_bytes()
            b = (tmp_path / "b" / name).read_bytes()
            assert a == b, name

    def test_runs_independent_of_execution_order(self, tmp_path):
        cfg = small_cfg(tmp_path / "out")
        lg1 = run_single(cfg, 1)
        lg0 = run_single(cfg, 0)
        cfg2 = small_cfg(tmp_path / "out2")
        assert run_single(cfg2, 0).records == lg0.records
        assert run_single(cfg2, 1).records == lg1.records

    def test_workers_match_serial(self, tmp_path):
        cfg_s = small_cfg(tmp_path / "serial")
        run_experiment(cfg_s)
        cfg_p = small_cfg(tmp_path / "parallel")
        cfg_p.workers = 2
        run_experiment(cfg_p)
        for name in ("run_000.csv", "run_001.csv", "summary.csv"):
            assert (tmp_path / "serial" / name).read_bytes() == \
                (tmp_path / "parallel" / name).read_bytes()

    def test_invalid_config_raises(self, tmp_path):
        cfg = small_cfg(tmp_path / "out", p_s=2.0)
        with pytest.raises(ValueError):
            run_experiment(cfg)

    def test_single_track_no_clutter_nom(self, tmp_path):
        # One high-amplitude component with clutter effectively disabled:
        # the detected count settles at exactly one.
        import numpy as np
        from mpctrack.scenario import Scenario, desk_scenario

        base = desk_scenario()
        scn = Scenario(base.steps, base.tracks[:1],
                       np.full(base.steps, 1e-6), base.u_de, 0)
        path = tmp_path / "single.json"
        scn.save(path)
        cfg = ExperimentConfig(scenario=str(path), runs=1, base_seed=11,
                               out_dir=str(tmp_path / "out"))
        cfg.hyper = HyperParams(J=500)
        log = run_single(cfg, 0)
        nom = log.column("nom_hat")[10:]
        assert np.mean(nom == 1) >= 0.95


class TestCli:
    def test_validate_ok_and_exit_codes(self, tmp_path):
        runner = CliRunner()
        path = write(tmp_path, {"mode": "fully_synthetic"})
        res = runner.invoke(main, ["validate", path])
        assert res.exit_code == 0
        out = json.loads(res.output)
        assert out["ok"] is True

        bad = write(tmp_path, {"hyper": {"p_s": 7}})
        res = runner.invoke(main, ["validate", bad])
        assert res.exit_code == 2
        assert json.loads(res.output)["ok"] is False

    def test_run_smoke_and_overrides(self, tmp_path):
        runner = CliRunner()
        path = write(tmp_path, {"scenario": "desk", "runs": 5,
                                "hyper": {"J": 200}})
        out_dir = str(tmp_path / "cli_out")
        res = runner.invoke(main, ["run", path, "--runs", "1", "--out",
                                   out_dir, "--seed", "3"])
        assert res.exit_code == 0, res.output
        assert os.path.exists(os.path.join(out_dir, "run_000.csv"))
        assert os.path.exists(os.path.join(out_dir, "summary.csv"))
        payload = json.loads(res.output)
        assert payload["ok"] and payload["runs"] == 1

    def test_run_invalid_config_fails(self, tmp_path):
        runner = CliRunner()
        path = write(tmp_path, {"hyper": {"p_s": 7}})
        res = runner.invoke(main, ["run", path])
        assert res.exit_code == 2

    def test_scenario_emit(self, tmp_path):
        runner = CliRunner()
        dest = str(tmp_path / "scn.json")
        res = runner.invoke(main, ["scenario", "emit", "desk", dest])
        assert res.exit_code == 0, res.output
        doc = json.loads(open(dest).read())
        assert doc["schema_version"] == 1
        assert len(doc["tracks"]) == 3
