#!/usr/bin/env python3
"""
Tests for experiment configs, the run logger, the runner and the CLI
"""

import csv
import json
import math
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from experiments.cli import build_parser, main
from experiments.config import (
    EXPERIMENTS,
    ConfigError,
    load_config,
    load_environment,
    parse_config,
)
from experiments.run_logger import EventType, RunLogger, Severity
from experiments.runner import (
    DETERMINISTIC,
    EXIT_CONFIG,
    EXIT_FAILED,
    EXIT_OK,
    REGISTRY,
    run_experiment,
)
from experiments.vqe import error_bar_bound, vqe_demo
from sqpe_estimators.shot_sim import RngStream

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")


def _write(path, data):
    path.write_text(json.dumps(data))
    return str(path)


class TestConfig:
    """Config validation"""

    def test_shipped_configs_parse(self):
        """Every config under configs/ validates and names a known experiment"""
        names = set()
        for filename in sorted(os.listdir(CONFIG_DIR)):
            config = load_config(os.path.join(CONFIG_DIR, filename))
            names.add(config.experiment)
        assert names == set(EXPERIMENTS)

    def test_defaults(self):
        """Deuteron ground state is the default target"""
        config = parse_config({"experiment": "oa_curve", "seeds": [1]})
        obs = config.build_observable()
        assert config.is_deuteron
        assert config.build_state(obs).amplitudes.shape == (2,)
        assert len(config.oa.shot_schedule) == 33

    def test_custom_observable_and_state(self):
        """Explicit expansion, angle and amplitude states"""
        config = parse_config({
            "experiment": "oa_curve",
            "seeds": [1],
            "observable": {"identity_coeff": 1.0, "terms": [{"weight": 2.0, "string": "Z"}]},
            "state": {"theta": 0.5},
        })
        obs = config.build_observable()
        assert obs.term_count == 1
        assert not config.is_deuteron
        amp = parse_config({"experiment": "oa_curve", "seeds": [1], "state": {"amplitudes": [[1, 0], [1, 0]]}})
        assert abs(amp.build_state(obs).amplitudes[0]) == pytest.approx(1 / math.sqrt(2))

    @pytest.mark.parametrize("data", [
        {"experiment": "unknown", "seeds": [1]},
        {"experiment": "oa_curve", "seeds": []},
        {"experiment": "oa_curve", "seeds": [1], "extra": True},
        {"experiment": "oa_curve", "seeds": [1], "schema_version": 2},
        {"experiment": "oa_curve", "seeds": [1], "oa": {"shot_schedule": [100, 100]}},
        {"experiment": "noise_budget", "seeds": [1], "noise": {"flip_probabilities": [0.5]}},
        {"experiment": "sqpe_cubic", "seeds": [1], "sqpe": {"block_size": 1}},
        {"experiment": "oa_curve", "seeds": [1], "observable": {"terms": [{"weight": -1.0, "string": "X"}]}},
    ])
    def test_invalid_configs(self, data):
        """Invalid fields raise ConfigError"""
        with pytest.raises(ConfigError):
            parse_config(data)

    def test_missing_and_malformed_files(self, tmp_path):
        """Unreadable files are config errors"""
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(bad)
        listing = tmp_path / "list.json"
        listing.write_text("[1, 2]")
        with pytest.raises(ConfigError):
            load_config(listing)

    def test_environment(self, monkeypatch):
        """Worker count and log level from the environment"""
        monkeypatch.setenv("SQPE_WORKERS", "3")
        monkeypatch.setenv("SQPE_LOG_LEVEL", "debug")
        env = load_environment()
        assert env.workers == 3
        assert env.log_level == "DEBUG"
        monkeypatch.setenv("SQPE_WORKERS", "many")
        with pytest.raises(ConfigError):
            load_environment()


class TestRunLogger:
    """JSON-lines event log"""

    def test_events_written(self, tmp_path):
        """Events land in run.jsonl; failures also in failures.jsonl"""
        log = RunLogger(str(tmp_path))
        log.log_event(EventType.RUN_STARTED, run_id="r1", experiment="oa_curve")
        log.log_acceptance("r1", "oa_curve", "accuracy_budget", 3.08e7, "+/- 1%", True)
        log.log_acceptance("r1", "oa_curve", "shots_to_1pct", None, "[6e6, 1.4e7]", False)
        log.close()

        lines = (tmp_path / "run.jsonl").read_text().splitlines()
        assert len(lines) == 3
        assert json.loads(lines[0])["event_type"] == "run_started"
        failures = (tmp_path / "failures.jsonl").read_text().splitlines()
        assert len(failures) == 1
        assert json.loads(failures[0])["additional_data"]["check"] == "shots_to_1pct"

    def test_informational_check_not_a_failure(self, tmp_path):
        """A non-gating check that misses stays out of failures.jsonl"""
        log = RunLogger(str(tmp_path))
        log.log_acceptance("r1", "sqpe_cubic", "median_design_pair", [0.3, 0.5], "(0.15, 0.30)", False,
                           gating=False)
        log.close()
        event = json.loads((tmp_path / "run.jsonl").read_text().splitlines()[0])
        assert event["severity"] == Severity.LOW.value
        assert event["additional_data"]["gating"] is False
        assert (tmp_path / "failures.jsonl").read_text() == ""

    def test_experiment_context_records_errors(self, tmp_path):
        """Exceptions are logged and re-raised"""
        log = RunLogger(str(tmp_path))
        with pytest.raises(RuntimeError):
            with log.experiment_context("r2", "sqpe_linear", 7):
                raise RuntimeError("boom")
        with log.experiment_context("r2", "sqpe_linear", 8):
            pass
        summary = log.summarize("r2")
        log.close()
        assert summary["counts"] == {"error": 1, "seed_completed": 1}
        assert summary["errors"] == ["boom"]

    def test_recent_events_filter(self, tmp_path):
        """Filter by type, newest first"""
        log = RunLogger(str(tmp_path))
        log.log_event(EventType.CONFIG_ERROR, severity=Severity.HIGH, error_message="bad")
        log.log_event(EventType.RUN_STARTED)
        recent = log.get_recent_events(event_type=EventType.CONFIG_ERROR)
        log.close()
        assert [e.error_message for e in recent] == ["bad"]


class TestRunner:
    """Config-driven runs"""

    def test_registry_covers_experiments(self):
        """One handler per experiment kind"""
        assert set(REGISTRY) == set(EXPERIMENTS)
        assert DETERMINISTIC <= set(EXPERIMENTS)

    def test_deterministic_runs_once(self, tmp_path):
        """Exact computations use only the first seed"""
        config = parse_config({
            "experiment": "conditions_eigen", "seeds": [3, 4],
            "conditions": {"grid": 16, "K_range": [1, 2]},
        })
        outcome = run_experiment(config, tmp_path)
        assert outcome.exit_code == EXIT_OK
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["seeds"] == [3]
        assert summary["status"] == "pass"
        with open(tmp_path / "conditions_eigen.csv", newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["mode", "K", "x", "y_boundary"]
        assert len(rows) == 1 + 32

    def test_channel_landmark(self, tmp_path):
        """PTM constructions agree to 1e-12"""
        config = load_config(os.path.join(CONFIG_DIR, "channel_ptm.json"))
        outcome = run_experiment(config, tmp_path)
        assert outcome.exit_code == EXIT_OK
        assert outcome.headline["max_error"] <= 1e-12

    def test_csv_is_reproducible(self, tmp_path):
        """Same config and seeds give byte-identical CSVs"""
        config = parse_config({
            "experiment": "oa_curve", "seeds": [2, 1],
            "oa": {"shot_schedule": [1000, 10000]},
        })
        run_experiment(config, tmp_path / "a")
        run_experiment(config, tmp_path / "b")
        first = (tmp_path / "a" / "oa_curve.csv").read_bytes()
        assert first == (tmp_path / "b" / "oa_curve.csv").read_bytes()
        rows = first.decode().splitlines()
        assert len(rows) == 5
        assert [r.split(",")[0] for r in rows[1:]] == ["1", "1", "2", "2"]

    def test_accuracy_budget_landmark(self, tmp_path):
        """N_A(1%) is reported in the headline"""
        config = parse_config({"experiment": "oa_curve", "seeds": [1], "oa": {"shot_schedule": [1000]}})
        outcome = run_experiment(config, tmp_path)
        assert outcome.headline["accuracy_budget"] == pytest.approx(3.0794e7, rel=1e-3)
        assert outcome.landmarks[0].passed

    def test_infeasible_target(self, tmp_path):
        """A time step whose bias exceeds the target fails the run"""
        config = parse_config({
            "experiment": "sqpe_linear", "seeds": [1],
            "sqpe": {"tau": 1.0, "tau_scales": [1.0], "include_inverse_norm": False},
        })
        outcome = run_experiment(config, tmp_path)
        assert outcome.exit_code == EXIT_FAILED
        assert json.loads((tmp_path / "summary.json").read_text())["status"] == "fail"
        assert "error" in (tmp_path / "failures.jsonl").read_text()


class TestVqe:
    """Nelder-Mead over the ansatz angle"""

    def test_error_bar_bound(self):
        """||O_T||_2 sqrt(L / N) = 4.008 at 1000 shots"""
        assert error_bar_bound(1000) == pytest.approx(4.008, abs=1e-3)

    def test_residuals_within_bound(self):
        """RMS energy residual stays below the worst-case error bar"""
        result = vqe_demo(1000, RngStream(801))
        rms = float(np.sqrt(np.mean(np.square(result.residuals))))
        assert rms <= 1.5 * error_bar_bound(1000)
        assert result.trace[0].iteration == 0
        assert result.evaluations == len(result.residuals)
        assert math.isfinite(result.theta)

    def test_same_seed_same_path(self):
        """Deterministic per seed"""
        a = vqe_demo(1000, RngStream(5), maxiter=10)
        b = vqe_demo(1000, RngStream(5), maxiter=10)
        assert a.theta == b.theta

    def test_invalid_shots(self):
        """At least one shot per evaluation"""
        with pytest.raises(ValueError):
            vqe_demo(0, RngStream(1))


class TestCli:
    """Command-line surface"""

    def test_parser_requires_command(self):
        """A subcommand is mandatory"""
        with pytest.raises(SystemExit):
            build_parser().parse_args([])

    def test_list(self, capsys):
        """Lists every experiment kind"""
        assert main(["list"]) == 0
        assert capsys.readouterr().out.split() == list(EXPERIMENTS)

    def test_deuteron_summary(self, capsys):
        """Reference numbers as JSON"""
        assert main(["deuteron", "--summary"]) == 0
        refs = json.loads(capsys.readouterr().out)
        assert refs["traceless_one_norm"] == 117.5

    def test_missing_config_exit_code(self, tmp_path):
        """Unusable configs exit with 2"""
        assert main(["run", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_unknown_experiment_exit_code(self, tmp_path):
        """An unknown experiment name is a config error"""
        path = _write(tmp_path / "c.json", {"experiment": "unknown_scan", "seeds": [1]})
        assert main(["run", "--config", path, "--out", str(tmp_path / "out")]) == EXIT_CONFIG
        assert "config_error" in (tmp_path / "out" / "failures.jsonl").read_text()

    def test_run_and_seed_override(self, tmp_path, capsys):
        """A passing run exits 0 with the overriding seed"""
        path = _write(tmp_path / "c.json", {
            "experiment": "conditions_eigen", "seeds": [1, 2],
            "conditions": {"grid": 16, "K_range": [1]},
        })
        out = tmp_path / "out"
        code = main(["run", "--config", path, "--seed-override", "9", "--out", str(out), "--workers", "1"])
        assert code == EXIT_OK
        assert json.loads((out / "summary.json").read_text())["seeds"] == [9]
        assert "[PASS]" in capsys.readouterr().out


if __name__ == "__main__":
    pytest.main([__file__, "-v", "--tb=short"])
