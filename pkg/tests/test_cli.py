import json

import numpy as np
import pytest

from l0qsvm.cli import main
from l0qsvm.datasets import make_ellipse


@pytest.fixture(scope="module")
def ellipse_csv(tmp_path_factory):
    X, y = make_ellipse(200, 0.3, seed=0)
    lines = ["x1,x2,side"]
    for row, lab in zip(X, y):
        lines.append(f"{float(row[0])!r},{float(row[1])!r},{'out' if lab > 0 else 'in'}")
    path = tmp_path_factory.mktemp("data") / "ellipse.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory, ellipse_csv):
    out = tmp_path_factory.mktemp("trained")
    code = main(["train", "--data", ellipse_csv, "--label", "side",
                 "--loss", "ls", "--c", "10", "--k", "4",
                 "--out", str(out)])
    assert code == 0
    return out


def test_train_outputs(trained_dir):
    assert (trained_dir / "model.json").exists()
    assert (trained_dir / "stationarity.json").exists()
    assert (trained_dir / "trace_in.tsv").exists()
    assert (trained_dir / "trace_out.tsv").exists()
    assert (trained_dir / "trace_in.png").exists()
    stationarity = json.loads((trained_dir / "stationarity.json").read_text())
    assert set(stationarity) == {"in", "out"}
    assert all(v["is_lu_zhang"] for v in stationarity.values())


def test_train_no_figures(tmp_path, ellipse_csv):
    out = tmp_path / "nofig"
    code = main(["train", "--data", ellipse_csv, "--label", "side",
                 "--loss", "ls", "--c", "1", "--k", "2",
                 "--out", str(out), "--no-figures"])
    assert code == 0
    assert not list(out.glob("*.png"))


def test_predict_with_accuracy(tmp_path, ellipse_csv, trained_dir, capsys):
    out = tmp_path / "preds"
    code = main(["predict", "--model", str(trained_dir / "model.json"),
                 "--data", ellipse_csv, "--label", "side", "--out", str(out)])
    assert code == 0
    captured = capsys.readouterr().out
    assert "accuracy" in captured
    lines = (out / "predictions.csv").read_text().splitlines()
    assert lines[0] == "row,prediction"
    assert len(lines) == 201
    assert set(l.split(",")[1] for l in lines[1:]) <= {"in", "out"}


def test_cv_subcommand(tmp_path, ellipse_csv):
    out = tmp_path / "cv"
    code = main(["cv", "--data", ellipse_csv, "--label", "side",
                 "--loss", "ls", "--trials", "5", "--seed", "3",
                 "--out", str(out)])
    assert code == 0
    summary = json.loads((out / "cv_summary.json").read_text())
    assert len(summary["per_fold"]) == 5
    assert 0.0 <= summary["mean_accuracy"] <= 1.0
    assert (out / "cv_report.txt").exists()
    assert (out / "trials.tsv").exists()
    assert (out / "timing.tsv").exists()
    assert (out / "cv_accuracy.png").exists()


def test_search_subcommand(tmp_path, ellipse_csv):
    out = tmp_path / "search"
    code = main(["search", "--data", ellipse_csv, "--label", "side",
                 "--loss", "ls", "--trials", "4", "--out", str(out)])
    assert code == 0
    best = json.loads((out / "search_best.json").read_text())
    assert best["k"] >= 1 and best["C"] > 0


def test_sweep_k_subcommand(tmp_path, ellipse_csv):
    out = tmp_path / "sweep"
    code = main(["sweep-k", "--data", ellipse_csv, "--label", "side",
                 "--loss", "ls", "--trials", "3", "--k-min", "1",
                 "--k-max", "3", "--out", str(out)])
    assert code == 0
    lines = (out / "k_sweep.tsv").read_text().splitlines()
    assert len(lines) == 4
    assert (out / "k_sweep.png").exists()


def test_export_boundary_and_magnitudes(tmp_path, trained_dir):
    out = tmp_path / "exports"
    code = main(["export", "--kind", "boundary", "--model",
                 str(trained_dir / "model.json"), "--resolution", "50",
                 "--out", str(out)])
    assert code == 0
    data = (out / "boundary_in.tsv").read_text().splitlines()
    assert len(data) == 50 * 50 + 1
    assert (out / "boundary_in.png").exists()

    code = main(["export", "--kind", "magnitudes", "--model",
                 str(trained_dir / "model.json"), "--out", str(out)])
    assert code == 0
    assert (out / "magnitudes_out.tsv").exists()


def test_export_trace_figure(tmp_path, trained_dir):
    out = tmp_path / "tracefig"
    code = main(["export", "--kind", "trace", "--trace",
                 str(trained_dir / "trace_in.tsv"), "--out", str(out)])
    assert code == 0
    assert (out / "trace.png").exists()


def test_exit_code_config_error(tmp_path, ellipse_csv):
    code = main(["cv", "--data", ellipse_csv, "--label", "nope",
                 "--trials", "2", "--out", str(tmp_path)])
    assert code == 2
    code = main(["export", "--kind", "boundary", "--out", str(tmp_path)])
    assert code == 2


def test_exit_code_data_error(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,label\nxyz,1\n", encoding="utf-8")
    code = main(["train", "--data", str(bad), "--label", "label",
                 "--c", "1", "--k", "1", "--out", str(tmp_path)])
    assert code == 3


def test_exit_code_convergence_failure(tmp_path, ellipse_csv):
    code = main(["train", "--data", ellipse_csv, "--label", "side",
                 "--c", "10", "--k", "3", "--max-outer", "1",
                 "--eps-outer", "1e-12", "--out", str(tmp_path)])
    assert code == 4
