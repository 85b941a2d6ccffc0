import json
import subprocess
import sys

import numpy as np
import pytest

from robust_tr.cli import CvConfig, crossval, load_csv, main, stratified_folds
from robust_tr.exceptions import ValidationError
from robust_tr.moments import LabeledDataset
from robust_tr.robust import RobustConfig
from robust_tr.sim import build_scenario
from robust_tr.contaminate import sample_contaminated

FAST = RobustConfig(n_initial_subsets=100)


def write(path, text):
    path.write_text(text)
    return path


def test_load_csv_toy_matches_hand_built(tmp_path):
    f = write(tmp_path / "toy.csv", "a,b,cls\n0,1,x\n1,0,x\n5,6,y\n6,5,y\n")
    d = load_csv(f, "cls")
    ref = LabeledDataset(np.array([[0.0, 1], [1, 0], [5, 6], [6, 5]]), np.array([1, 1, 2, 2]), ("x", "y"), ("a", "b"))
    assert np.array_equal(d.x, ref.x)
    assert np.array_equal(d.labels, ref.labels)
    assert d.classes == ref.classes and d.columns == ref.columns


def test_load_csv_drops_missing_rows_and_constant_columns(tmp_path):
    f = write(tmp_path / "d.csv", "a,const,b,y\n0,1,1,p\n1,1,2,p\n2,1,,q\n3,1,5,q\n4,1,4,q\n")
    d, rep = load_csv(f, "y", return_report=True)
    assert d.n == 4 and d.p == 2
    assert rep.dropped_rows == (3,)
    assert rep.dropped_columns == ("const",)


def test_load_csv_errors(tmp_path):
    f = write(tmp_path / "bad.csv", "a,y\n1,p\nabc,q\n")
    with pytest.raises(ValidationError, match=r"row 2, column 'a'"):
        load_csv(f, "y")
    with pytest.raises(ValidationError, match="label column"):
        load_csv(write(tmp_path / "ok.csv", "a,y\n1,p\n2,q\n"), "z")
    with pytest.raises(ValidationError, match="2 classes"):
        load_csv(write(tmp_path / "one.csv", "a,y\n1,p\n2,p\n"), "y")


def test_stratified_folds_balance():
    labels = np.repeat([1, 2, 3], [23, 17, 40])
    f = stratified_folds(labels, 10, seed=4)
    for c in (1, 2, 3):
        counts = np.bincount(f[labels == c], minlength=10)
        assert counts.max() - counts.min() <= 1
    sizes = np.bincount(f, minlength=10)
    assert sizes.max() - sizes.min() <= 1
    assert np.array_equal(f, stratified_folds(labels, 10, seed=4))
    with pytest.raises(ValidationError):
        stratified_folds(labels, 18)


def scenario_data(seed, n=60):
    spec = build_scenario("I")
    return sample_contaminated(spec.models, None, n, seed=seed)


def test_crossval_separable():
    r = np.random.default_rng(0)
    labels = np.repeat([1, 2, 3], 30)
    x = r.standard_normal((90, 3)) * 0.1 + np.array([[0, 0, 0], [10, 0, 0], [0, 10, 0]])[labels - 1]
    res = crossval(LabeledDataset(x, labels), CvConfig(folds=5, robust=FAST))
    assert all(res.median(k) == 1.0 for k in res.k_values)
    assert res.median("rLDA") == 1.0


def test_crossval_shuffled_labels_is_chance():
    for seed in range(5):
        r = np.random.default_rng(seed)
        labels = np.repeat([1, 2, 3], [50, 30, 20])
        x = r.standard_normal((100, 3))
        res = crossval(LabeledDataset(x, r.permutation(labels)), CvConfig(folds=5, seed=seed, robust=FAST))
        for k in res.k_values:
            assert abs(res.median(k) - 0.5) <= 0.1 + 0.1


def test_crossval_full_rank_fda_matches_rlda():
    d = scenario_data(3)
    res = crossval(d, CvConfig(folds=5, robust=FAST))
    assert abs(res.median(3) - res.median("rLDA")) <= 0.03


def test_crossval_singular_within_scatter_uses_range():
    d = scenario_data(4, n=40)
    x = np.column_stack([d.x, d.x[:, 0] + d.x[:, 1]])
    res = crossval(LabeledDataset(x, d.labels), CvConfig(folds=4, estimator="classical", robust=FAST))
    assert not res.failures
    assert res.median(3) > 0.9


def test_simulate_command_is_reproducible(tmp_path):
    args = ["simulate", "--scenario", "I", "--reps", "2", "--n-train", "30", "--n-test", "10",
            "--eps", "0,0.1", "--methods", "cTR,rFDA,tQDA", "--seed", "7"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--threads", "2"]) == 0
    for name in ("simulation.csv", "summary.json"):
        a = (tmp_path / "a" / name).read_bytes()
        b = (tmp_path / "b" / name).read_bytes()
        if name == "simulation.csv":
            assert a == b
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["config"]["seed"] == 7


def test_simulate_from_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"scenario": "II", "replications": 1, "n_train": 30, "n_test": 5,
                               "epsilons": [0.0], "methods": ["tTR", "cFDA"]}))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert len((tmp_path / "simulation.csv").read_text().splitlines()) == 3


def test_reduce_command_scenario_one(tmp_path):
    assert main(["reduce", "--scenario", "I", "--method", "tr", "--k", "2", "--out", str(tmp_path),
                 "--save-pair", str(tmp_path / "pair.json")]) == 0
    v = np.loadtxt(tmp_path / "projection.csv", delimiter=",", skiprows=1)
    v = v / v[np.argmax(np.abs(v), axis=0), [0, 1]]
    assert np.abs(v - [[1, 0], [0, 1], [0, 0.654 / 0.757]]).max() < 5e-3
    # the same from the saved pair file
    out2 = tmp_path / "again"
    assert main(["reduce", "--pair", str(tmp_path / "pair.json"), "--k", "2", "--out", str(out2)]) == 0
    assert (out2 / "projection.csv").read_text() == (tmp_path / "projection.csv").read_text()
    prof = np.loadtxt(tmp_path / "rho_profile.csv", delimiter=",", skiprows=1)
    assert prof.shape == (2, 5)


def test_bound_check_command(tmp_path):
    assert main(["bound-check", "--scenario", "I", "--eps", "1e-4,1e-3", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "bound_check.csv").read_text().splitlines()
    assert len(lines) == 3
    assert all(line.endswith("True") for line in lines[1:])


def test_scan_conjecture_command(tmp_path):
    assert main(["scan-conjecture", "--n", "20", "--seed", "1", "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "conjecture_summary.json").read_text())
    assert data["pencils"] == 20


def test_crossval_command(tmp_path):
    d = scenario_data(5, n=30)
    rows = ["x1,x2,x3,label"] + [",".join(map(str, r)) + f",g{l}" for r, l in zip(d.x, d.labels)]
    f = write(tmp_path / "data.csv", "\n".join(rows) + "\n")
    assert main(["crossval", str(f), "--label", "label", "--folds", "3", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "crossval.csv").read_text().splitlines()[0] == "k,median_accuracy,folds_ok,folds_failed"


def test_exit_codes_and_error_json(tmp_path, capsys):
    assert main(["reduce", "--scenario", "I", "--k", "7", "--out", str(tmp_path)]) == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "ValidationError" and err["exit_code"] == 1
    pair = tmp_path / "sing.json"
    pair.write_text(json.dumps({"b": [[1, 0], [0, 1]], "w": [[1, 0], [0, 0]]}))
    assert main(["reduce", "--pair", str(pair), "--method", "fda", "--k", "1", "--out", str(tmp_path)]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["exit_code"] == 2


def test_threads_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("ROBUST_TR_THREADS", "nope")
    assert main(["scan-conjecture", "--n", "1", "--out", str(tmp_path)]) == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "robust_tr", "reduce", "--scenario", "II", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
