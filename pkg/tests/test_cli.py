import json

import numpy as np
import pytest

from incproc.cli import (DEFAULT_SEED, RunReport, main, run, validate_config)
from incproc.errors import ConfigError

WALK2 = {"sites": ["a", "b"], "rates": [[0.0, 1.0], [1.0, 0.0]]}
WALK3 = {"sites": ["0", "1", "2"],
         "rates": [[0.0, 0.7, 0.3], [0.3, 0.0, 0.7], [0.7, 0.3, 0.0]]}


def stationary_cfg(**extra):
    cfg = {"schema_version": 1, "kind": "stationary", "seed": 5,
           "walk": WALK2, "params": {"n": 2, "d_N": 0.1}}
    cfg.update(extra)
    return cfg


class TestValidation:
    def test_accepts_valid(self):
        assert validate_config(stationary_cfg())["kind"] == "stationary"

    def test_rejects_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown field"):
            validate_config(stationary_cfg(bogus=1))

    def test_rejects_missing_required(self):
        cfg = stationary_cfg()
        del cfg["params"]
        with pytest.raises(ConfigError, match="params"):
            validate_config(cfg)

    def test_rejects_negative_d(self):
        cfg = stationary_cfg()
        cfg["params"] = {"n": 2, "d_N": -0.1}
        with pytest.raises(ConfigError, match="params.d_N"):
            validate_config(cfg)

    def test_rejects_bad_schema_version(self):
        cfg = stationary_cfg()
        cfg["schema_version"] = 99
        with pytest.raises(ConfigError, match="schema_version"):
            validate_config(cfg)

    def test_rejects_unknown_kind(self):
        cfg = stationary_cfg()
        cfg["kind"] = "mystery"
        with pytest.raises(ConfigError, match="kind"):
            validate_config(cfg)

    def test_rejects_bad_walk(self):
        cfg = stationary_cfg()
        cfg["walk"] = {"sites": ["a", "b"], "rates": [[1.0, 1.0], [1.0, 0.0]]}
        with pytest.raises(ConfigError, match="walk"):
            validate_config(cfg)


class TestRun:
    def test_stationary_artifacts(self, tmp_path):
        report = run(stationary_cfg(compare_closed_form=True), out_dir=tmp_path)
        csv = (tmp_path / "distribution.csv").read_text().splitlines()
        assert len(csv) == 4  # header + 3 states
        assert report.checks["closed_form_agreement"]
        assert report.metrics["E_mass"] == pytest.approx(22 / 24)
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["E_mass"] == pytest.approx(22 / 24)

    def test_config_echo_round_trip(self, tmp_path):
        cfg = stationary_cfg()
        report = run(cfg, out_dir=tmp_path)
        assert report.config == cfg
        echoed = json.loads((tmp_path / "report.json").read_text())["config"]
        assert echoed == cfg

    def test_byte_identical_artifacts(self, tmp_path):
        run(stationary_cfg(), out_dir=tmp_path / "a")
        run(stationary_cfg(), out_dir=tmp_path / "b")
        assert ((tmp_path / "a" / "distribution.csv").read_bytes()
                == (tmp_path / "b" / "distribution.csv").read_bytes())
        assert ((tmp_path / "a" / "summary.json").read_bytes()
                == (tmp_path / "b" / "summary.json").read_bytes())

    def test_meanrate_with_mc(self, tmp_path):
        cfg = {"schema_version": 1, "kind": "meanrate", "seed": 9,
               "walk": WALK2, "params": {"n": 2, "d_N": 0.1},
               "a_set": [0, 1], "mc_replicas": 60, "mc_horizon": 50.0}
        report = run(cfg, out_dir=tmp_path)
        assert report.checks["mc_within_3_sigma"]
        rows = (tmp_path / "meanrate.csv").read_text().splitlines()
        assert rows[0] == "site_from,site_to,rate,normalized,predicted"
        assert len(rows) == 3

    def test_classify_artifact(self, tmp_path):
        cfg = {"schema_version": 1, "kind": "classify", "walk": WALK3}
        run(cfg, out_dir=tmp_path)
        payload = json.loads((tmp_path / "classify.json").read_text())
        assert payload["S0"] == ["0", "1", "2"]
        assert payload["limit_nrv"]["scale"] == "1/(N*d_N)"

    def test_simulate_with_trace(self, tmp_path):
        cfg = {"schema_version": 1, "kind": "simulate", "seed": 3,
               "walk": WALK2, "params": {"n": 3, "d_N": 0.2},
               "initial": {"site": 0}, "horizon": 50.0, "trace_set": [0, 1]}
        report = run(cfg, out_dir=tmp_path)
        lines = (tmp_path / "trajectory.csv").read_text().splitlines()
        assert lines[0] == "time,site_from,site_to"
        assert report.metrics["events"] == len(lines) - 1
        trace = json.loads((tmp_path / "trace.json").read_text())
        assert trace["trace_time"] + trace["off_time"] == pytest.approx(50.0)

    def test_nucleation_run(self, tmp_path):
        cfg = {"schema_version": 1, "kind": "nucleation", "seed": 2,
               "walk": {"sites": ["0", "1", "2"],
                        "rates": [[0.0, 1.0, 1.0], [1.0, 0.0, 1.0],
                                  [1.0, 1.0, 0.0]]},
               "sizes": [18, 36, 72], "delta": 1.0, "replicas": 80,
               "d_schedule": {"type": "power", "coeff": 1.0, "exponent": 3.0}}
        report = run(cfg, out_dir=tmp_path)
        rows = (tmp_path / "nucleation.csv").read_text().splitlines()
        assert len(rows) == 4
        assert report.checks["bounded_linear_trend"]

    def test_thermo_run(self, tmp_path):
        cfg = {"schema_version": 1, "kind": "thermo", "seed": 4,
               "dim": 1, "sides": [8, 12], "kernel": [[1, 0.8], [-1, 0.2]],
               "rho": 1.0, "dl_schedule": "tt1",
               "regime_assert": "totally_asym", "drift_t": 6.0, "replicas": 1}
        report = run(cfg, out_dir=tmp_path)
        rows = (tmp_path / "thermo.csv").read_text().splitlines()
        assert rows[0] == "L,drift,diffusion,gap,occupation"
        assert len(rows) == 3
        assert report.checks["occupation_negligible"]

    def test_thermo_regime_assert_mismatch(self, tmp_path):
        cfg = {"schema_version": 1, "kind": "thermo", "dim": 1, "sides": [8],
               "kernel": [[1, 0.5], [-1, 0.5]], "rho": 1.0,
               "dl_schedule": "tt1", "regime_assert": "totally_asym"}
        with pytest.raises(ConfigError, match="regime_assert"):
            run(cfg, out_dir=tmp_path)


class TestMain:
    def test_config_file_flow(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(stationary_cfg()))
        code = main(["stationary", "--config", str(cfg_path),
                     "--out", str(tmp_path / "out")])
        assert code == 0
        assert (tmp_path / "out" / "report.json").exists()

    def test_kind_mismatch(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(stationary_cfg()))
        assert main(["classify", "--config", str(cfg_path)]) == 1

    def test_config_error_exit_code(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(stationary_cfg(bogus=1)))
        assert main(["stationary", "--config", str(cfg_path),
                     "--out", str(tmp_path)]) == 1

    def test_seed_override(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(stationary_cfg()))
        code = main(["stationary", "--config", str(cfg_path),
                     "--out", str(tmp_path / "o"), "--seed", "123"])
        assert code == 0
        report = json.loads((tmp_path / "o" / "report.json").read_text())
        assert report["seed"] == 123

    def test_failed_checks_exit_two(self, monkeypatch, tmp_path):
        import incproc.cli as cli
        report = RunReport(config={}, seed=0, checks={"x": False})
        monkeypatch.setattr(cli, "run", lambda *a, **k: report)
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(stationary_cfg()))
        assert main(["stationary", "--config", str(cfg_path)]) == 2

    def test_unknown_verify_level_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["verify", "--level", "bogus"])
        assert exc.value.code == 2

    def test_verify_wiring(self, monkeypatch, tmp_path):
        # stub the suite so the subcommand wiring is cheap to exercise
        import incproc.cli as cli
        from incproc.acceptance import CriterionResult, VerifyReport

        def fake_suite(level, echo=None):
            res = CriterionResult(1, "stub", True, "none")
            return VerifyReport(level=level, results=[res], wall_s=0.01)

        monkeypatch.setattr(cli, "verify_suite", fake_suite)
        assert main(["verify", "--level", "quick", "--out", str(tmp_path)]) == 0
        payload = json.loads((tmp_path / "verify.json").read_text())
        assert payload["level"] == "quick"
        assert payload["criteria"][0]["passed"] is True

    def test_verify_failure_exit_two(self, monkeypatch, tmp_path):
        import incproc.cli as cli
        from incproc.acceptance import CriterionResult, VerifyReport

        def fake_suite(level, echo=None):
            res = CriterionResult(3, "stub", False, "none")
            return VerifyReport(level=level, results=[res], wall_s=0.01)

        monkeypatch.setattr(cli, "verify_suite", fake_suite)
        assert main(["verify", "--level", "full", "--out", str(tmp_path)]) == 2

    def test_thermo_flags(self, tmp_path):
        code = main(["thermo", "--dim", "1", "--side", "8",
                     "--kernel", "[[1,0.8],[-1,0.2]]", "--rho", "1",
                     "--dL-schedule", "tt1", "--regime-assert", "totally_asym",
                     "--out", str(tmp_path), "--replicas", "1"])
        assert code == 0
        assert (tmp_path / "thermo.csv").exists()

    def test_default_seed_recorded(self, tmp_path):
        cfg = stationary_cfg()
        del cfg["seed"]
        report = run(cfg, out_dir=tmp_path)
        assert report.seed == DEFAULT_SEED
