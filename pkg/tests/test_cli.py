import json
import subprocess
import sys

import numpy as np
import pytest

from feddbn.cli import main
from feddbn.dbn import WeightedDbn, load_json, save_json, threshold
from feddbn.metrics import write_gold


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def generated(tmp_path, capsys):
    code, out, _ = run(["generate", "--d", "4", "--p", "1", "--realizations", "40", "--length", "4",
                        "--seed", "3", "--out-dir", str(tmp_path)], capsys)
    assert code == 0
    return tmp_path


def test_generate_outputs(generated):
    for name in ("series.csv", "truth.json", "truth_W.csv", "truth_A.csv"):
        assert (generated / name).exists()
    assert (generated / "series.csv").read_text().splitlines()[0] == "realization,t,v0,v1,v2,v3"


def test_generate_heterogeneous(tmp_path, capsys):
    code, out, _ = run(["generate", "--d", "3", "--clients", "2", "--heterogeneous", "--realizations", "5",
                        "--out-dir", str(tmp_path)], capsys)
    assert code == 0
    assert len(json.loads(out)["written"]) == 8
    assert (tmp_path / "client1_truth.json").exists()


@pytest.mark.parametrize("method", ["fdbnl", "pfdbnl", "dynotears", "ave"])
def test_fit_methods(generated, capsys, method):
    out_dir = generated / method
    code, out, err = run(["fit", "--series", str(generated / "series.csv"), "--method", method,
                          "--clients", "10 per client", "--max-rounds", "20", "--phi2", "1.03",
                          "--truth", str(generated / "truth.json"), "--out-dir", str(out_dir)], capsys)
    assert code == 0, err
    summary = json.loads(out)
    assert summary["clients"] == 4
    assert len(summary["metrics"]) in (1, 4)
    if method == "pfdbnl":
        assert (out_dir / "client3_model.json").exists() and (out_dir / "global.json").exists()
    else:
        assert load_json(out_dir / "model.json").d == 4
    if method in ("fdbnl", "pfdbnl"):
        assert (out_dir / "trace.csv").exists()


def test_experiment_and_threads_identical(tmp_path, capsys):
    args = ["experiment", "--scenario", "single_run", "--set", "d=4", "--set", "K=2", "--set", "n=40",
            "--set", "seeds=1,2", "--set", "max_rounds=10", "--methods", "fdbnl,ave",
            "--set", "baseline_max_iter=10"]
    assert run(args + ["--out-dir", str(tmp_path / "a"), "--threads", "1"], capsys)[0] == 0
    code, out, _ = run(args + ["--out-dir", str(tmp_path / "b"), "--threads", "2"], capsys)
    assert code == 0
    assert json.loads(out)["rows"] == 8
    assert (tmp_path / "a/results.csv").read_bytes() == (tmp_path / "b/results.csv").read_bytes()
    assert (tmp_path / "a/results.json").exists()


def test_experiment_config_file(tmp_path, capsys):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("scenario = single_run\nd = 4\nK = 2\nn = 40\nmethods = alldata\nseeds = 0\n")
    code, out, _ = run(["experiment", "--config", str(cfg), "--out-dir", str(tmp_path)], capsys)
    assert code == 0 and json.loads(out)["rows"] == 2


def test_evaluate_perfect(tmp_path, capsys):
    W = np.zeros((4, 4))
    W[0, 1], W[2, 3] = 0.4, -0.5
    save_json(WeightedDbn(W, np.zeros((4, 4))), tmp_path / "m.json")
    write_gold(threshold(WeightedDbn(W, np.zeros((4, 4))), 0, 0).W_matrix(), tmp_path / "gold.tsv")
    code, out, _ = run(["evaluate", "--model", str(tmp_path / "m.json"), "--gold", str(tmp_path / "gold.tsv"),
                        "--out-dir", str(tmp_path)], capsys)
    assert code == 0
    res = json.loads(out)
    assert res["auroc"] == 1.0 and res["aupr"] == 1.0
    assert json.loads((tmp_path / "evaluation.json").read_text())["auroc"] == 1.0


@pytest.mark.parametrize("argv, code", [
    (["fit", "--series", "/nonexistent.csv"], 7),
    (["experiment"], 2),
    (["experiment", "--scenario", "vary_d", "--set", "bogus=1"], 2),
])
def test_error_exit_codes(tmp_path, capsys, argv, code):
    got, _, err = run(argv + ["--out-dir", str(tmp_path)], capsys)
    assert got == code
    doc = json.loads(err.strip().splitlines()[-1])
    assert doc["exit_code"] == code and doc["error"]


def test_ingestion_error_code(tmp_path, capsys):
    (tmp_path / "bad.csv").write_text("realization,t,v0\n0,0,x\n")
    got, _, err = run(["fit", "--series", str(tmp_path / "bad.csv"), "--out-dir", str(tmp_path)], capsys)
    assert got == 3 and "line 2" in err


def test_metric_error_code(tmp_path, capsys):
    save_json(WeightedDbn.zeros(3, 1), tmp_path / "m.json")
    (tmp_path / "gold.tsv").write_text("G1 G2 0\n")
    got, _, _ = run(["evaluate", "--model", str(tmp_path / "m.json"), "--gold", str(tmp_path / "gold.tsv"),
                     "--out-dir", str(tmp_path)], capsys)
    assert got == 6


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "feddbn", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "experiment" in res.stdout
