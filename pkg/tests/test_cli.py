"""End-to-end command-line flows: simulate, fit, predict, evaluate, report."""
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from bivas import io as bio
from bivas.cli import main


def run_cli(*args):
    return main(list(args))


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    code = run_cli("simulate", "--n", "250", "--p", "60", "--k-groups", "6",
                   "--pi", "0.5", "--alpha", "0.6", "--snr", "2.0",
                   "--seed", "11", "--out", str(out))
    assert code == 0
    return out


@pytest.fixture(scope="module")
def fit_dir(sim_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("fit")
    code = run_cli("fit", "--data", str(sim_dir / "data.csv"),
                   "--groups", str(sim_dir / "groups.csv"),
                   "--grid-size", "6", "--threads", "1", "--seed", "3",
                   "--out", str(out))
    assert code == 0
    return out


class TestSimulate:
    def test_artifacts_exist(self, sim_dir):
        for name in ("data.csv", "groups.csv", "truth.json"):
            assert (sim_dir / name).exists()

    def test_truth_alignment(self, sim_dir):
        truth = bio.read_json(str(sim_dir / "truth.json"))
        assert len(truth["coef"]) == 60
        assert len(truth["eta"]) == 6


class TestFit:
    def test_artifacts_exist(self, fit_dir):
        for name in ("model.json", "posterior.csv", "groups.csv",
                     "selection.json"):
            assert (fit_dir / name).exists()

    def test_grid_table_and_weights(self, fit_dir):
        model = bio.read_json(str(fit_dir / "model.json"))
        grid = model["grid"]
        assert len(grid) == 6
        weights = [row["weight"] for row in grid]
        assert sum(weights) == pytest.approx(1.0, abs=1e-12)
        pis = [row["pi"] for row in grid]
        assert pis == sorted(pis)

    def test_selection_respects_threshold(self, sim_dir, fit_dir):
        selection = bio.read_json(str(fit_dir / "selection.json"))
        assert selection["threshold"] == 0.05
        # strong-signal run: something must be found, all below threshold
        assert len(selection["variables"]) > 0
        assert all(v["fdr"] < 0.05 for v in selection["variables"])
        assert all(g["fdr"] < 0.05 for g in selection["groups"])

    def test_grid_size_one(self, sim_dir, tmp_path):
        out = tmp_path / "fit1"
        code = run_cli("fit", "--data", str(sim_dir / "data.csv"),
                       "--groups", str(sim_dir / "groups.csv"),
                       "--grid-size", "1", "--threads", "1",
                       "--out", str(out))
        assert code == 0
        model = bio.read_json(str(out / "model.json"))
        assert len(model["grid"]) == 1
        assert model["grid"][0]["weight"] == 1.0

    def test_same_seed_byte_identical(self, sim_dir, tmp_path):
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / f"rerun_{tag}"
            code = run_cli("fit", "--data", str(sim_dir / "data.csv"),
                           "--groups", str(sim_dir / "groups.csv"),
                           "--grid-size", "4", "--threads", "2",
                           "--seed", "7", "--out", str(out))
            assert code == 0
            outs.append(out)
        for name in ("model.json", "posterior.csv", "groups.csv",
                     "selection.json"):
            assert (outs[0] / name).read_bytes() \
                == (outs[1] / name).read_bytes()


class TestPredict:
    def test_training_round_trip(self, sim_dir, fit_dir, tmp_path):
        from bivas import aggregate, make_pi_grid, predict, run_grid
        from bivas.group_fit import EmOptions

        pred_path = tmp_path / "pred.csv"
        code = run_cli("predict", "--model", str(fit_dir / "model.json"),
                       "--data", str(sim_dir / "data.csv"),
                       "--groups", str(sim_dir / "groups.csv"),
                       "--out", str(pred_path))
        assert code == 0
        rows = pred_path.read_text().strip().splitlines()[1:]
        yhat_cli = np.array([float(v) for v in rows])

        design = bio.load_design(str(sim_dir / "data.csv"),
                                 str(sim_dir / "groups.csv"))
        fit = run_grid(design, make_pi_grid(design.K, 6), EmOptions(),
                       threads=1, seed=3)
        yhat_mem = predict(aggregate(fit), design.Z, design.X)
        assert np.abs(yhat_cli - yhat_mem).max() <= 1e-10


class TestPredictWithoutResponse:
    def test_new_data_has_no_response_column(self, sim_dir, fit_dir,
                                             tmp_path):
        # strip the y column to mimic genuinely new data
        lines = (sim_dir / "data.csv").read_text().strip().splitlines()
        header = lines[0].split(",")
        keep = [i for i, name in enumerate(header) if name != "y"]
        new_data = tmp_path / "new.csv"
        new_data.write_text("\n".join(
            ",".join(row.split(",")[i] for i in keep)
            for row in [lines[0]] + lines[2:]) + "\n")   # drop marker row
        pred = tmp_path / "pred_new.csv"
        code = run_cli("predict", "--model", str(fit_dir / "model.json"),
                       "--data", str(new_data),
                       "--groups", str(sim_dir / "groups.csv"),
                       "--out", str(pred))
        assert code == 0
        rows = pred.read_text().strip().splitlines()[1:]
        assert len(rows) == 250


class TestEvaluateAndReport:
    def test_metrics_row(self, sim_dir, fit_dir, tmp_path):
        metrics_path = tmp_path / "metrics.csv"
        code = run_cli("evaluate", "--fit", str(fit_dir),
                       "--truth", str(sim_dir / "truth.json"),
                       "--out", str(metrics_path))
        assert code == 0
        lines = metrics_path.read_text().strip().splitlines()
        header = lines[0].split(",")
        values = dict(zip(header, map(float, lines[1].split(","))))
        for key in ("auc", "group_auc", "fdr", "power", "mse"):
            assert key in values
        assert 0.0 <= values["auc"] <= 1.0
        assert values["mse"] >= 0.0

    def test_report_aggregates(self, sim_dir, fit_dir, tmp_path):
        m1 = tmp_path / "m1.csv"
        m2 = tmp_path / "m2.csv"
        for path in (m1, m2):
            code = run_cli("evaluate", "--fit", str(fit_dir),
                           "--truth", str(sim_dir / "truth.json"),
                           "--out", str(path))
            assert code == 0
        report = tmp_path / "report.csv"
        code = run_cli("report", "--metrics", str(m1), str(m2),
                       "--out", str(report))
        assert code == 0
        lines = report.read_text().strip().splitlines()
        assert lines[0] == "metric,mean,sd,n"
        rows = {ln.split(",")[0]: ln.split(",") for ln in lines[1:]}
        assert rows["auc"][3] == "2"
        assert float(rows["auc"][2]) == 0.0   # identical replicates


class TestMultifit:
    def test_end_to_end(self, tmp_path):
        sim_out = tmp_path / "mtsim"
        code = run_cli("simulate", "--n", "120,100", "--k-groups", "30",
                       "--pi", "0.3", "--alpha", "0.8", "--snr", "2.0",
                       "--seed", "5", "--out", str(sim_out))
        assert code == 0
        assert (sim_out / "task0.csv").exists()
        assert (sim_out / "task1.csv").exists()

        fit_out = tmp_path / "mtfit"
        code = run_cli("multifit", "--task-data", str(sim_out / "task0.csv"),
                       "--task-data", str(sim_out / "task1.csv"),
                       "--grid-size", "4", "--threads", "1",
                       "--out", str(fit_out))
        assert code == 0
        model = bio.read_json(str(fit_out / "model.json"))
        assert model["model"] == "multitask"
        assert len(model["params"]["sigma_e2"]) == 2
        assert len(model["params"]["omega"]) == 2
        assert len(model["posterior"]["pi_tilde"]) == 30

        metrics_path = tmp_path / "mtmetrics.csv"
        code = run_cli("evaluate", "--fit", str(fit_out),
                       "--truth", str(sim_out / "truth.json"),
                       "--out", str(metrics_path))
        assert code == 0
        header = metrics_path.read_text().splitlines()[0].split(",")
        assert "mse_task0" in header and "mse_task1" in header

        pred_path = tmp_path / "mtpred.csv"
        code = run_cli("predict", "--model", str(fit_out / "model.json"),
                       "--data", str(sim_out / "task1.csv"),
                       "--task", "1", "--out", str(pred_path))
        assert code == 0
        assert len(pred_path.read_text().strip().splitlines()) == 101


class TestThreadsDefault:
    def test_env_var_fallback(self, monkeypatch):
        from bivas.cli import _default_threads
        monkeypatch.setenv("BIVAS_THREADS", "3")
        assert _default_threads() == 3
        monkeypatch.delenv("BIVAS_THREADS")
        assert _default_threads() >= 1


class TestExitCodes:
    def test_missing_required_flag_exits_two(self):
        # argparse reports the missing flag on stderr and exits 2
        proc = subprocess.run(
            [sys.executable, "-m", "bivas.cli", "fit"],
            capture_output=True, text=True)
        assert proc.returncode == 2
        assert "--data" in proc.stderr

    def test_missing_file_exits_two(self, tmp_path):
        code = run_cli("fit", "--data", str(tmp_path / "absent.csv"),
                       "--groups", str(tmp_path / "absent2.csv"),
                       "--out", str(tmp_path))
        assert code == 2

    def test_validation_error_exits_one(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("y,z1,x0\ngroup,,g\n1.0,1.0,nope\n")
        code = run_cli("fit", "--data", str(bad), "--out", str(tmp_path))
        assert code == 1

    def test_standardize_flag(self, sim_dir, tmp_path):
        out = tmp_path / "std"
        code = run_cli("fit", "--data", str(sim_dir / "data.csv"),
                       "--groups", str(sim_dir / "groups.csv"),
                       "--grid-size", "2", "--threads", "1", "--standardize",
                       "--out", str(out))
        assert code == 0
        model = bio.read_json(str(out / "model.json"))
        assert model["standardize"] is not None
        assert len(model["standardize"]["center"]) == 60
