import filecmp
import json
import os

import pytest

from glcarleman.cli import main
from glcarleman.config import ConfigError, config_hash, load_config
from glcarleman.solver import load_trajectory


def run_in(tmp_path, argv):
    cwd = os.getcwd()
    os.chdir(tmp_path)
    try:
        return main(argv)
    finally:
        os.chdir(cwd)


BASE = ["--grid", "32", "--seed", "3"]


class TestConfig:
    def test_defaults_validate(self):
        cfg = load_config()
        assert cfg["grid"]["nx"] == 64

    def test_unknown_field_rejected(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text('{"grid": {"nx": 32}, "bogus": 1}')
        with pytest.raises(ConfigError):
            load_config(str(p))

    def test_error_paths_reported(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text('{"grid": {"nx": 4}, "coeffs": {"delta0": 0.5}}')
        with pytest.raises(ConfigError) as exc:
            load_config(str(p))
        msgs = " ".join(exc.value.errors)
        assert "grid.nx" in msgs
        assert "coeffs.delta0" in msgs

    def test_hash_stable(self):
        cfg = load_config()
        assert config_hash(cfg) == config_hash(json.loads(json.dumps(cfg)))


class TestCommands:
    def test_verify_identity_pass(self, tmp_path):
        assert run_in(tmp_path, BASE + ["verify-identity"]) == 0
        runs = list((tmp_path / "runs").iterdir())
        rep = json.loads((runs[0] / "identity_report.json").read_text())
        assert rep["passed"]
        assert rep["worst_max_rel"] <= 1e-6
        assert rep["config"]["grid"]["nx"] == 32  # config round-trip

    def test_verify_identity_corrupt_fails(self, tmp_path):
        assert run_in(tmp_path, BASE + ["verify-identity",
                                        "--corrupt-term", "B"]) == 1

    def test_config_error_exit_code(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{"grid": {"nx": 4}}')
        assert run_in(tmp_path, ["--config", str(p), "solve"]) == 2

    def test_solve_outputs(self, tmp_path):
        assert run_in(tmp_path, BASE + ["solve"]) == 0
        runs = list((tmp_path / "runs").iterdir())
        traj = runs[0] / "trajectory.bin"
        Y, meta = load_trajectory(traj)
        assert meta["nx"] == 32
        energy = (runs[0] / "energy.csv").read_text().splitlines()
        assert energy[0] == "step,t,l2_norm,energy_residual,substeps"
        assert len(energy) == 33

    def test_solve_manufactured_mode(self, tmp_path):
        assert run_in(tmp_path, BASE + ["solve", "--manufactured"]) == 0
        runs = list((tmp_path / "runs").iterdir())
        table = (runs[0] / "manufactured.csv").read_text().splitlines()
        assert table[0] == "n,l2_error,order"
        assert len(table) == 4
        summary = json.loads((runs[0] / "solve_summary.json").read_text())
        assert summary["passed"]
        assert all(1.8 <= p <= 2.2 for p in summary["orders"])

    def test_carleman_scan_outputs(self, tmp_path):
        code = run_in(tmp_path, BASE + ["--lambda", "8,16,32", "--mu", "2",
                                        "carleman-scan"])
        assert code == 0
        runs = list((tmp_path / "runs").iterdir())
        summary = json.loads((runs[0] / "carleman_summary.json").read_text())
        assert summary["passed"]
        assert set(summary["variants"]) == {"interior", "boundary",
                                            "linear_interior", "linear_boundary"}
        csv_lines = (runs[0] / "carleman_scan.csv").read_text().splitlines()
        assert "lambda" in csv_lines[0].split(",")

    def test_stability_outputs(self, tmp_path):
        assert run_in(tmp_path, BASE + ["stability"]) == 0
        runs = list((tmp_path / "runs").iterdir())
        summary = json.loads((runs[0] / "stability_summary.json").read_text())
        assert summary["passed"]

    def test_check_weights(self, tmp_path):
        assert run_in(tmp_path, BASE + ["check-weights"]) == 0
        runs = list((tmp_path / "runs").iterdir())
        rep = json.loads((runs[0] / "weights_report.json").read_text())
        assert rep["passed"]
        assert set(rep["admissibility"]) == {"square_psi1", "disk_psi1",
                                             "square_psi2"}


class TestDeterminism:
    def test_byte_identical_reruns(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        for d in (a, b):
            d.mkdir()
            assert run_in(d, BASE + ["--lambda", "8,16,32", "--mu", "2",
                                     "carleman-scan"]) == 0
            assert run_in(d, BASE + ["stability"]) == 0
        ra = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
        rb = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
        assert ra == rb
        for rel in ra:
            assert filecmp.cmp(a / rel, b / rel, shallow=False), rel
