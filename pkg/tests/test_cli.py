import json
from pathlib import Path

import numpy as np
import pytest

from uials.cli import main

DEMO_DIR = Path(__file__).resolve().parent.parent / "scripts"
DEMO_SYSTEM = str(DEMO_DIR / "two_state_demo.json")
DEMO_GAINS = str(DEMO_DIR / "two_state_gains.json")


def run_cli(*args):
    return main(list(args))


@pytest.fixture
def bad_system(tmp_path):
    payload = {
        "A": [[1.0, 1.0], [0.0, 1.0]],
        "B": [[0.0], [1.0]],
        "G": [[1.0, 0.0], [0.0, 1.0]],
        "C": [[1.0, 2.0], [1.0, 1.0]],
        "D": [[0.0], [0.0]],
    }
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(payload))
    return str(path)


@pytest.fixture
def non_minimum_phase_system(tmp_path):
    # square invertible feedthrough with a planted zero outside the unit disc
    A = np.array([[1.0, 1.0], [0.0, 1.0]])
    C = A - np.diag([2.0, 0.5])
    payload = {
        "A": A.tolist(),
        "B": np.eye(2).tolist(),
        "G": np.eye(2).tolist(),
        "C": C.tolist(),
        "D": np.eye(2).tolist(),
    }
    path = tmp_path / "nmp.json"
    path.write_text(json.dumps(payload))
    return str(path)


class TestReport:
    def test_demo_summary_contains_rank_table(self, tmp_path, capsys):
        out = tmp_path / "out"
        code = run_cli(
            "report", "--system", DEMO_SYSTEM, "--gains", DEMO_GAINS, "-N", "10", "--out", str(out)
        )
        assert code == 0
        summary = (out / "summary.txt").read_text()
        assert "rank(H)=2, rank(H1)=1, rank(H2)=2" in summary
        assert "H is 40x8" in summary
        report = json.loads((out / "report.json").read_text())
        assert report["identifiability"]["ranks"]["nullity_h"] == 6
        assert report["structural"]["strongly_detectable"]
        assert report["solution"] is not None
        assert (out / "als_problem.json").exists()
        assert (out / "autocov_analytic.csv").exists()

    def test_rerun_is_byte_identical(self, tmp_path):
        out = tmp_path / "out"
        args = (
            "report", "--system", DEMO_SYSTEM, "--gains", DEMO_GAINS,
            "-N", "10", "--nd", "1500", "--seed", "5", "--out", str(out),
        )
        assert run_cli(*args) == 0
        first = (out / "report.json").read_bytes()
        assert run_cli(*args) == 0
        assert (out / "report.json").read_bytes() == first

    def test_report_embeds_version_and_config_hash(self, tmp_path):
        out = tmp_path / "out"
        run_cli("report", "--system", DEMO_SYSTEM, "--gains", DEMO_GAINS, "-N", "10", "--out", str(out))
        report = json.loads((out / "report.json").read_text())
        assert report["version"]
        assert len(report["config_hash"]) == 64


class TestExitCodes:
    def test_parse_failure_is_one(self, capsys):
        assert run_cli("report", "--system", "/does/not/exist.json", "-N", "10") == 1
        assert run_cli("report", "--system", DEMO_SYSTEM) == 1  # missing -N
        assert run_cli("frobnicate") == 1
        assert run_cli() == 1

    def test_validation_failure_is_two(self, bad_system):
        assert run_cli("report", "--system", bad_system, "-N", "10") == 2

    def test_not_strongly_detectable_is_three(self, non_minimum_phase_system):
        assert run_cli("report", "--system", non_minimum_phase_system, "-N", "10") == 3

    def test_unstable_supplied_gains_is_four(self, tmp_path):
        # feasible unbiased gains whose error dynamics have spectral radius 2
        path = tmp_path / "unstable_gains.json"
        path.write_text(json.dumps({"F": [[1.0, -2.0]], "L": [[0.0, 0.0], [0.0, 0.0]]}))
        assert run_cli("report", "--system", DEMO_SYSTEM, "--gains", str(path), "-N", "10") == 4

    def test_solver_infeasible_is_five(self):
        assert (
            run_cli(
                "estimate", "--system", DEMO_SYSTEM, "--gains", DEMO_GAINS,
                "-N", "10", "--reg", "none",
            )
            == 5
        )


class TestSubcommands:
    def test_analyze_prints_structural_json(self, capsys):
        assert run_cli("analyze", "--system", DEMO_SYSTEM) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["structural"]["strongly_detectable"]
        assert payload["validation"]["overall"]

    def test_design_emits_valid_gains(self, tmp_path, capsys):
        out = tmp_path / "o"
        assert run_cli("design", "--system", DEMO_SYSTEM, "--seed", "3", "--out", str(out)) == 0
        gains = json.loads((out / "gains.json").read_text())
        assert "F" in gains and "L" in gains

    def test_simulate_writes_csvs(self, tmp_path):
        out = tmp_path / "o"
        code = run_cli(
            "simulate", "--system", DEMO_SYSTEM, "--gains", DEMO_GAINS,
            "--nd", "100", "--input", "sin:1.0:8", "--out", str(out),
        )
        assert code == 0
        traj = np.loadtxt(out / "trajectory.csv", delimiter=",", skiprows=1)
        assert traj.shape == (100, 6)
        innov = np.loadtxt(out / "innovations.csv", delimiter=",", skiprows=1)
        assert innov.shape == (100, 3)

    def test_estimate_analytic_and_tikhonov(self, capsys):
        code = run_cli(
            "estimate", "--system", DEMO_SYSTEM, "--gains", DEMO_GAINS, "-N", "10", "--reg", "tik:0.01"
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        sol = payload["solutions"][0]
        assert sol["regularization"] == "tikhonov"
        assert sol["lambda"] == 0.01

    def test_estimate_with_known_r(self, tmp_path, capsys):
        rpath = tmp_path / "r.json"
        rpath.write_text(json.dumps({"R": np.eye(2).tolist()}))
        code = run_cli(
            "estimate", "--system", DEMO_SYSTEM, "--gains", DEMO_GAINS,
            "-N", "10", "--r", str(rpath),
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert np.allclose(payload["solutions"][0]["R_hat"], np.eye(2))

    def test_estimate_replicates(self, capsys):
        code = run_cli(
            "estimate", "--system", DEMO_SYSTEM, "--gains", DEMO_GAINS,
            "-N", "10", "--nd", "2000", "--replicates", "3", "--seed", "2",
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert len(payload["solutions"]) == 3

    def test_witness_text(self, capsys):
        assert run_cli("witness", "--system", DEMO_SYSTEM, "--gains", DEMO_GAINS, "-N", "10") == 0
        text = capsys.readouterr().out
        assert "rank(H)=2, rank(H1)=1, rank(H2)=2" in text
        assert "deficient_L" in text

    def test_config_file_overrides_flags(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"N": 10, "gains": DEMO_GAINS}))
        code = run_cli("witness", "--system", DEMO_SYSTEM, "-N", "3", "--config", str(cfg))
        assert code == 0
        assert "rank(H)=2" in capsys.readouterr().out

    def test_unknown_config_key_rejected(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"window_size": 10}))
        assert run_cli("witness", "--system", DEMO_SYSTEM, "--config", str(cfg)) == 1
