"""JSON config ingestion and the command-line front end."""

import json
import subprocess
import sys

import numpy as np
import pytest

from piezolab.config import (config_from_dict, load_config, toy_config_dict)
from piezolab.errors import ConfigParseError, GaugeViolation
from piezolab.operators import ActuationMode


def _write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def _cli(*args):
    return subprocess.run([sys.executable, "-m", "piezolab.cli", *args],
                          capture_output=True, text=True)


class TestConfigParsing:
    def test_toy_template_loads(self):
        cfg = config_from_dict(toy_config_dict())
        assert cfg.n_cells == 32
        assert cfg.actuation is ActuationMode.NONE
        assert cfg.input_signal.trivial
        assert cfg.initial_state.kind == "modal"

    def test_missing_param_named(self):
        doc = toy_config_dict()
        del doc["params"]["rho"]
        with pytest.raises(ConfigParseError, match="rho"):
            config_from_dict(doc)

    def test_nonpositive_param_named(self):
        doc = toy_config_dict()
        doc["params"]["eps3"] = -1.0
        with pytest.raises(ConfigParseError, match="params.eps3"):
            config_from_dict(doc)

    def test_unknown_key_rejected(self):
        doc = toy_config_dict()
        doc["timestep"] = 0.1
        with pytest.raises(ConfigParseError, match="timestep"):
            config_from_dict(doc)

    def test_t_final_before_dt(self):
        doc = toy_config_dict()
        doc["dt"] = 2.0
        doc["t_final"] = 1.0
        with pytest.raises(ConfigParseError, match="t_final"):
            config_from_dict(doc)

    def test_coarse_grid_rejected(self):
        doc = toy_config_dict(n_cells=4)
        with pytest.raises(ConfigParseError, match="n_cells"):
            config_from_dict(doc)

    def test_actuation_none_rejects_gain(self):
        doc = toy_config_dict()
        doc["feedback_gain"] = 1.0
        with pytest.raises(ConfigParseError, match="actuation"):
            config_from_dict(doc)

    def test_closed_loop_overrides_signal(self):
        doc = toy_config_dict()
        doc["actuation"] = "current"
        doc["feedback_gain"] = 1.0
        doc["input_signal"] = {"kind": "sinusoid", "amplitude": 1.0,
                               "frequency": 2.0}
        cfg = config_from_dict(doc)
        assert cfg.feedback_gain == 1.0
        assert cfg.input_signal.trivial

    def test_sinusoid_signal_function(self):
        doc = toy_config_dict()
        doc["actuation"] = "current"
        doc["input_signal"] = {"kind": "sinusoid", "amplitude": 2.0,
                               "frequency": 0.5, "phase": 0.25}
        fn = config_from_dict(doc).input_signal.as_function()
        assert fn(0.3) == pytest.approx(
            2.0 * np.sin(2.0 * np.pi * 0.5 * 0.3 + 0.25), rel=1e-15)

    def test_tabulated_signal(self, tmp_path):
        csv = tmp_path / "sig.csv"
        csv.write_text("time,value\n0.0,0.0\n1.0,2.0\n2.0,0.0\n",
                       encoding="utf-8")
        doc = toy_config_dict()
        doc["actuation"] = "current"
        doc["input_signal"] = {"kind": "tabulated", "path": "sig.csv"}
        fn = config_from_dict(doc, base_dir=tmp_path).input_signal.as_function()
        assert fn(0.5) == pytest.approx(1.0)

    def test_tabulated_signal_must_increase(self, tmp_path):
        csv = tmp_path / "sig.csv"
        csv.write_text("time,value\n1.0,0.0\n0.5,2.0\n", encoding="utf-8")
        doc = toy_config_dict()
        doc["actuation"] = "current"
        doc["input_signal"] = {"kind": "tabulated", "path": "sig.csv"}
        with pytest.raises(ConfigParseError, match="increasing"):
            config_from_dict(doc, base_dir=tmp_path)

    def test_invalid_json_reports_position(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{\n  \"params\": ,\n}", encoding="utf-8")
        with pytest.raises(ConfigParseError, match="line 2"):
            load_config(path)

    def test_tabulated_state_gauge_projection(self, tmp_path):
        # y3/y6 omitted: the free fields are projected onto the gauge manifold
        from piezolab.dynamics import simulate
        rows = ["field,index,value"]
        rows += [f"y2,{j},{np.sin(np.pi * (j + 1) / 16):.6f}" for j in range(15)]
        csv = tmp_path / "state.csv"
        csv.write_text("\n".join(rows) + "\n", encoding="utf-8")
        doc = toy_config_dict(n_cells=16, t_final=0.05)
        doc["initial_state"] = {"kind": "tabulated", "path": "state.csv"}
        series = simulate(config_from_dict(doc, base_dir=tmp_path))
        assert series.gauge_pos.max() <= 1e-10

    def test_tabulated_state_gauge_violation(self, tmp_path):
        from piezolab.dynamics import simulate
        csv = tmp_path / "state.csv"
        csv.write_text("field,index,value\ny3,0,1.0\n", encoding="utf-8")
        doc = toy_config_dict(n_cells=16, t_final=0.05)
        doc["initial_state"] = {"kind": "tabulated", "path": "state.csv"}
        with pytest.raises(GaugeViolation):
            simulate(config_from_dict(doc, base_dir=tmp_path))


class TestCliExitCodes:
    def test_simulate_success_and_report(self, tmp_path):
        cfg = _write(tmp_path, {**toy_config_dict(n_cells=16, t_final=0.2),
                                "record_stride": 4})
        out = tmp_path / "out"
        res = _cli("simulate", "--config", str(cfg), "--out", str(out))
        assert res.returncode == 0, res.stderr
        report = json.loads((out / "report.json").read_text(encoding="utf-8"))
        assert report["pass_fail"]["energy_drift"] is True
        # declared artifacts exist with nonzero size
        import os
        for path in report["artifact_paths"]:
            assert os.path.getsize(path) > 0

    def test_missing_key_exits_2(self, tmp_path):
        doc = toy_config_dict()
        del doc["params"]["rho"]
        res = _cli("simulate", "--config", str(_write(tmp_path, doc)),
                   "--out", str(tmp_path / "o"))
        assert res.returncode == 2
        assert "rho" in res.stderr

    def test_bad_time_bounds_exit_2(self, tmp_path):
        doc = toy_config_dict()
        doc["dt"] = 2.0
        res = _cli("simulate", "--config", str(_write(tmp_path, doc)),
                   "--out", str(tmp_path / "o"))
        assert res.returncode == 2

    def test_unwritable_out_exits_3(self, tmp_path):
        cfg = _write(tmp_path, toy_config_dict(n_cells=16, t_final=0.1))
        res = _cli("simulate", "--config", str(cfg), "--out", "/proc/nope/dir")
        assert res.returncode == 3

    def test_stabilize_requires_gain(self, tmp_path):
        cfg = _write(tmp_path, toy_config_dict(n_cells=16, t_final=0.1))
        res = _cli("stabilize", "--config", str(cfg),
                   "--out", str(tmp_path / "o"))
        assert res.returncode == 2

    def test_spectrum_success(self, tmp_path):
        cfg = _write(tmp_path, toy_config_dict(n_cells=16, t_final=0.1))
        out = tmp_path / "spec"
        res = _cli("spectrum", "--config", str(cfg), "--out", str(out))
        assert res.returncode == 0, res.stderr
        header = (out / "spectrum.csv").read_text(encoding="utf-8").splitlines()[0]
        assert header == "re,im,bstar_abs,stabilizable,dominant_block"

    def test_paper_suite_filter(self, tmp_path):
        out = tmp_path / "suite"
        res = _cli("paper-suite", "--only", "skewness", "--out", str(out))
        assert res.returncode == 0, res.stderr
        assert "[PASS] skewness" in res.stdout
        assert (out / "acceptance_summary.csv").stat().st_size > 0

    def test_deterministic_artifacts(self, tmp_path):
        cfg = _write(tmp_path, {**toy_config_dict(n_cells=16, t_final=0.2),
                                "record_stride": 4})
        blobs = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            res = _cli("simulate", "--config", str(cfg), "--out", str(out))
            assert res.returncode == 0
            blobs.append((out / "trajectory.csv").read_bytes())
        assert blobs[0] == blobs[1]
