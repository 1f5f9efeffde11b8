import json
import os

import numpy as np
import pytest

from secbeam.cli import (
    EXIT_INFEASIBLE,
    EXIT_OK,
    EXIT_USAGE,
    ExperimentSpec,
    main,
    run_compare_allocation,
    run_solve,
    run_sweep_power,
    run_sweep_secrecy,
)
from secbeam.scenario import ScenarioError, serialize_scenario

from conftest import small_scenario

import oracles


@pytest.fixture(scope="module")
def small_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("scen") / "small.yaml"
    path.write_text(serialize_scenario(small_scenario()))
    return str(path)


@pytest.fixture(scope="module")
def solved_dir(small_file, tmp_path_factory):
    out = tmp_path_factory.mktemp("solved")
    code = main(["solve", "--scenario", small_file, "--out", str(out), "--seed", "3"])
    assert code == EXIT_OK
    return str(out)


class TestSolveCommand:
    def test_outputs_exist(self, solved_dir):
        for name in ("report.json", "beampattern.csv", "trace.jsonl"):
            assert os.path.exists(os.path.join(solved_dir, name))

    def test_report_fields(self, solved_dir):
        doc = json.load(open(os.path.join(solved_dir, "report.json")))
        assert doc["status"] == "feasible"
        assert len(doc["target_illumination_mw"]) == 2
        assert len(doc["eaves_comm_power_mw"]) == 1
        assert doc["secrecy_rate"] >= doc["secrecy_floor"] - 1e-3
        assert doc["num_selected"] == 4
        assert set(np.round(doc["allocation"], 9)) <= {0.0, 1.0}
        assert "mc_power_rel_err_max" in doc["checks"]
        assert doc["checks"]["mc_power_rel_err_max"] <= 0.01

    def test_desired_column_matches_band_membership(self, solved_dir):
        cfg = small_scenario()
        rows = open(os.path.join(solved_dir, "beampattern.csv")).read().strip().split("\n")[1:]
        centers = list(cfg.target_angles) + [cfg.user_angle]
        for row in rows:
            ang, desired, _ = row.split(",")
            inside = any(abs(float(ang) - c) <= cfg.beam_halfwidth for c in centers)
            assert int(desired) == int(inside)

    def test_reported_error_recomputable_from_csv(self, solved_dir):
        doc = json.load(open(os.path.join(solved_dir, "report.json")))
        rows = open(os.path.join(solved_dir, "beampattern.csv")).read().strip().split("\n")[1:]
        parsed = np.array([[float(v) for v in row.split(",")] for row in rows])
        K = np.mean((parsed[:, 2] - doc["mu"] * parsed[:, 1]) ** 2)
        assert abs(K - doc["matching_error"]) <= 1e-6 * doc["matching_error"]

    def test_trace_is_json_lines(self, solved_dir):
        lines = open(os.path.join(solved_dir, "trace.jsonl")).read().strip().split("\n")
        records = [json.loads(line) for line in lines]
        assert all({"outer", "lambda", "status", "objective", "wall_ms"} <= set(r) for r in records)
        assert any(r["outer"] == "polish" for r in records)

    def test_missing_scenario_is_usage_error(self, tmp_path, capsys):
        code = main(["solve", "--scenario", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)])
        assert code == EXIT_USAGE
        assert "nope.yaml" in capsys.readouterr().err

    def test_byte_identical_reports(self, small_file, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["solve", "--scenario", small_file, "--out", str(out1), "--seed", "9"]) == EXIT_OK
        assert main(["solve", "--scenario", small_file, "--out", str(out2), "--seed", "9"]) == EXIT_OK
        assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()

    def test_infeasible_scenario_exit_code(self, tmp_path, capsys):
        path = tmp_path / "bad.yaml"
        path.write_text(serialize_scenario(small_scenario(secrecy_floor=30.0)))
        code = main(["solve", "--scenario", str(path), "--out", str(tmp_path / "out")])
        assert code == EXIT_INFEASIBLE
        assert "secrecy floor" in capsys.readouterr().err

    def test_g_override(self, small_file, tmp_path):
        out = tmp_path / "g3"
        assert main(["solve", "--scenario", small_file, "--out", str(out), "--g", "3"]) == EXIT_OK
        doc = json.load(open(out / "report.json"))
        assert doc["num_selected"] == 3

    def test_lambda_grid_flag(self, small_file, tmp_path):
        out = tmp_path / "lg"
        code = main([
            "solve", "--scenario", small_file, "--out", str(out),
            "--lambda-grid", "0.5,2.0,3",
        ])
        assert code == EXIT_OK


class TestExperimentSpec:
    def test_sweep_values_must_increase(self, small_file, tmp_path):
        spec = ExperimentSpec(
            mode="sweep-secrecy", scenario_path=small_file, out_dir=str(tmp_path),
            sweep_values=(2.0, 1.0), num_rf_links=4,
        )
        with pytest.raises(ScenarioError, match="strictly increasing"):
            spec.validate()

    def test_unknown_mode_rejected(self, small_file, tmp_path):
        spec = ExperimentSpec(mode="dance", scenario_path=small_file, out_dir=str(tmp_path))
        with pytest.raises(ScenarioError, match="mode"):
            spec.validate()


class TestSweeps:
    def test_secrecy_sweep_rows(self, small_file, tmp_path):
        spec = ExperimentSpec(
            mode="sweep-secrecy", scenario_path=small_file, out_dir=str(tmp_path),
            sweep_values=(0.5, 1.0), num_rf_links=4,
        )
        payload = run_sweep_secrecy(spec)
        lines = payload.strip().split("\n")
        assert lines[0].startswith("secrecy_floor,")
        assert len(lines) == 3
        assert all(line.endswith(",ok") for line in lines[1:])
        assert os.path.exists(os.path.join(str(tmp_path), "sweep.csv"))

    def test_secrecy_sweep_requires_g(self, small_file, tmp_path):
        spec = ExperimentSpec(
            mode="sweep-secrecy", scenario_path=small_file, out_dir=str(tmp_path),
            sweep_values=(1.0, 2.0),
        )
        with pytest.raises(ScenarioError, match="--g"):
            run_sweep_secrecy(spec)

    def test_infeasible_point_recorded_in_row(self, small_file, tmp_path):
        spec = ExperimentSpec(
            mode="sweep-secrecy", scenario_path=small_file, out_dir=str(tmp_path),
            sweep_values=(1.0, 30.0), num_rf_links=4,
        )
        payload = run_sweep_secrecy(spec)
        lines = payload.strip().split("\n")
        assert lines[1].endswith(",ok")
        assert "infeasible" in lines[2]

    def test_power_sweep_rows(self, small_file, tmp_path):
        spec = ExperimentSpec(
            mode="sweep-power", scenario_path=small_file, out_dir=str(tmp_path),
            sweep_values=(0.0, 3.0), num_rf_links=4,
        )
        payload = run_sweep_power(spec)
        lines = payload.strip().split("\n")
        assert lines[0].startswith("total_power_dbm,")
        assert len(lines) == 3


class TestCompareAllocation:
    def test_arms_reported_side_by_side(self, small_file, tmp_path):
        spec = ExperimentSpec(
            mode="compare-allocation", scenario_path=small_file, out_dir=str(tmp_path),
        )
        payload, reports = run_compare_allocation(spec)
        lines = payload.strip().split("\n")
        assert len(lines) == 3
        arms = {line.split(",")[1] for line in lines[1:]}
        assert arms == {"aa", "baseline"}
        assert (None, "aa") in reports and (None, "baseline") in reports

    def test_full_array_arms_coincide(self, tmp_path):
        # with as many RF links as antennas there is no allocation freedom
        path = tmp_path / "full.yaml"
        path.write_text(serialize_scenario(small_scenario(num_rf_links=5)))
        spec = ExperimentSpec(
            mode="compare-allocation", scenario_path=str(path), out_dir=str(tmp_path),
            num_rf_links=6,
        )
        _, reports = run_compare_allocation(spec)
        aa = reports[(None, "aa")]
        base = reports[(None, "baseline")]
        assert np.allclose(aa.design.allocation, base.design.allocation)
