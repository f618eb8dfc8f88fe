import csv
import subprocess
import sys

import pytest

from skyreserve.cli import main
from skyreserve.predictor import load_checkpoint


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["simulate", "--densities", "10,15", "--runs", "2", "--seed", "3", "--out", str(d / "a")]) == 0
    return d


def test_simulate_outputs(workdir):
    a = workdir / "a"
    with open(a / "dataset.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 * 10 + 2 * 15
    with open(a / "run_summary.csv") as fh:
        summary = list(csv.DictReader(fh))
    assert [(r["n_aircraft"], r["run"]) for r in summary] == [("10", "0"), ("10", "1"), ("15", "0"), ("15", "1")]
    assert (a / "simulate_manifest.json").exists()


def test_simulate_deterministic(workdir):
    b = workdir / "b"
    assert main(["simulate", "--densities", "10,15", "--runs", "2", "--seed", "3", "--out", str(b)]) == 0
    assert (b / "dataset.csv").read_bytes() == (workdir / "a" / "dataset.csv").read_bytes()
    assert (b / "run_summary.csv").read_bytes() == (workdir / "a" / "run_summary.csv").read_bytes()


def test_report(workdir, capsys):
    assert main(["report", str(workdir / "a" / "dataset.csv"), "--out", str(workdir / "r")]) == 0
    for name in ("overhead_stats.csv", "conflict_fraction.csv", "overhead_histogram.csv"):
        assert (workdir / "r" / name).exists()
    assert "median%" in capsys.readouterr().out


def test_train_evaluate_predict(workdir, capsys):
    ds = str(workdir / "a" / "dataset.csv")
    with pytest.warns(UserWarning):
        assert main(["train", ds, "--epochs", "3", "--out", str(workdir / "m")]) == 0
    ckpt = workdir / "m" / "model.ckpt"
    assert main(["evaluate", str(ckpt), ds, "--out", str(workdir / "e")]) == 0
    with open(workdir / "e" / "metrics.csv") as fh:
        metrics = {r["metric"]: float(r["value"]) for r in csv.DictReader(fh)}
    assert metrics["nll"] == pytest.approx(load_checkpoint(ckpt).best_val_nll, rel=1e-8)
    with open(workdir / "e" / "predictions.csv") as fh:
        header = next(csv.reader(fh))
    assert header[3:] == ["delta_e_obs", "delta_e_mean", "q05", "q10", "q50", "q90", "q95"]
    capsys.readouterr()
    assert main(["predict", str(ckpt), "--n-aircraft", "20", "--agent", "3"]) == 0
    assert "90% upper bound" in capsys.readouterr().out
    row = ",".join(["0"] * 12 + ["1"])
    assert main(["predict", str(ckpt), "--features", row]) == 0
    assert main(["predict", str(ckpt), "--features", "1,2"]) == 2


def test_exit_codes(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[scenario]\nruns = lots\n")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert main(["simulate", "--densities", "1", "--out", str(tmp_path / "x")]) == 2
    assert main(["report", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "y")]) == 3
    with pytest.raises(SystemExit) as ei:
        main(["nonsense"])
    assert ei.value.code == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "skyreserve", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "skyreserve" in out.stdout
