import csv
import json

import numpy as np
import pytest

from d3re.cli import main

TINY_TRAIN = {"iterations": 5, "batch_size": 16, "hidden": [4]}


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _gauss_cfg(**extra):
    cfg = {"data": {"kind": "gaussian", "q0": {"mean": 0.0, "cov": 1.0},
                    "q1": {"mean": 1.0, "cov": 1.0}, "dim": 1},
           "train": TINY_TRAIN, "n_samples": 20}
    cfg.update(extra)
    return cfg


def test_train_zero_iterations_writes_checkpoint(tmp_path, capsys):
    cfg = _write(tmp_path, _gauss_cfg(train={"iterations": 0, "hidden": [4]}))
    out = tmp_path / "o"
    code, stdout, _ = _run(capsys, "train", "--config", cfg, "--out", str(out))
    assert code == 0
    assert (out / "model.ckpt").exists() and (out / "history.csv").exists()
    assert json.loads(stdout)["iterations"] == 0


def test_mi_oracle(tmp_path, capsys):
    cfg = _write(tmp_path, {"data": {"kind": "mi", "dim": 8, "rho": 0.8}, "score": "oracle",
                            "n_samples": 10_000, "integrator": {"nodes": 16}})
    code, stdout, _ = _run(capsys, "mi", "--config", cfg, "--out", str(tmp_path / "o"))
    assert code == 0
    rep = json.loads((tmp_path / "o" / "mi.json").read_text())
    assert rep["true_mi"] == pytest.approx(2.0433, abs=1e-4)
    assert abs(rep["estimate"] - 2.0433) < 3 * rep["stderr"] + 1e-3
    assert rep["nfe"]["median"] == 16


def test_pipeline_and_determinism(tmp_path, capsys):
    cfg = _write(tmp_path, _gauss_cfg())
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert _run(capsys, "gen-data", "--config", cfg, "--out", str(out), "--seed", "3")[0] == 0
        assert _run(capsys, "train", "--config", cfg, "--out", str(out), "--seed", "3")[0] == 0
        assert _run(capsys, "estimate", "--config", cfg, "--out", str(out), "--seed", "3",
                    "--points", str(out / "data0.csv"))[0] == 0
        assert _run(capsys, "mi", "--config", cfg, "--out", str(out), "--seed", "3")[0] == 0
        outs.append(out)
    for name in ("data0.csv", "data1.csv", "log_ratio.csv", "mi.json", "model.ckpt"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name
    with open(outs[0] / "log_ratio.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x0", "log_ratio", "nfe"] and len(rows) == 21


def test_verify_detects_tampering(tmp_path, capsys):
    cfg = _write(tmp_path, _gauss_cfg())
    out = tmp_path / "o"
    _run(capsys, "gen-data", "--config", cfg, "--out", str(out))
    manifest = json.loads((out / "manifest.json").read_text())
    entry = manifest["artifacts"]["data0.csv"]
    assert entry["seed"] == 0 and len(entry["config_hash"]) == 64
    code, stdout, _ = _run(capsys, "verify", "--out", str(out))
    assert code == 0 and json.loads(stdout)["verified"]
    (out / "data0.csv").write_text("x0\n1.0\n")
    code, stdout, _ = _run(capsys, "verify", "--out", str(out))
    assert code == 1 and json.loads(stdout)["failed"] == ["data0.csv"]


def test_toy_commands(tmp_path, capsys):
    cfg = _write(tmp_path, {"data": {"kind": "toy", "name": "8gaussians", "q0": {"cov": 4.0}},
                            "train": TINY_TRAIN, "interpolant": {"kind": "DSBI"},
                            "grid": {"resolution": 5}, "n_trajectories": 3, "n_times": 4,
                            "integrator": {"nodes": 4}})
    out = str(tmp_path / "o")
    for cmd in ("gen-data", "train", "density-grid", "sample-interpolant", "sinkhorn-report"):
        code, _, err = _run(capsys, cmd, "--config", cfg, "--out", out)
        assert code == 0, (cmd, err)
    meta = json.loads((tmp_path / "o" / "density_grid.json").read_text())
    assert meta["resolution"] == 5
    sk = json.loads((tmp_path / "o" / "sinkhorn.json").read_text())
    assert sk["objective"] <= sk["independent_objective"] and sk["marginal_error"] <= 1e-6
    with open(tmp_path / "o" / "trajectories.csv") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 1 + 3 * 4
    assert _run(capsys, "verify", "--out", out)[0] == 0


def test_trajectories_pinned_at_endpoints(tmp_path, capsys):
    cfg = _write(tmp_path, _gauss_cfg(interpolant={"kind": "DBI"}, n_trajectories=4, n_times=11))
    out = tmp_path / "o"
    assert _run(capsys, "sample-interpolant", "--config", cfg, "--out", str(out))[0] == 0
    with open(out / "trajectories.csv") as fh:
        rows = np.array([[float(v) for v in r] for r in list(csv.reader(fh))[1:]])
    x = rows[:, 2].reshape(11, 4)
    # the bridge noise vanishes at both ends, so endpoints come straight from the data
    assert np.all(np.isfinite(x))
    assert not np.allclose(x[5], 0.5 * (x[0] + x[-1]))


def test_nfe_report(tmp_path, capsys):
    cfg = _write(tmp_path, _gauss_cfg(train={"iterations": 3, "batch_size": 16, "hidden": [4]}))
    code, _, err = _run(capsys, "nfe-report", "--config", cfg, "--out", str(tmp_path / "o"),
                        "--methods", "di,dsbi")
    assert code == 0, err
    rep = json.loads((tmp_path / "o" / "nfe.json").read_text())
    assert set(rep["methods"]) == {"DI", "DSBI"}
    assert rep["methods"]["DI"]["median_nfe"] > 0


@pytest.mark.parametrize("cfg", [
    {"bogus": 1},
    {"train": {"lr": -1}},
    {"data": {"kind": "toy", "name": "nope"}},
])
def test_bad_config_exit_2(tmp_path, capsys, cfg):
    code, _, err = _run(capsys, "train", "--config", _write(tmp_path, cfg), "--out", str(tmp_path))
    assert code == 2
    assert json.loads(err)["error"] == "configuration"


def test_missing_inputs_exit_2(tmp_path, capsys):
    assert _run(capsys, "train", "--config", str(tmp_path / "none.json"))[0] == 2
    assert _run(capsys, "estimate", "--out", str(tmp_path))[0] == 2
    cfg = _write(tmp_path, _gauss_cfg())
    assert _run(capsys, "mi", "--config", cfg, "--out", str(tmp_path / "empty"))[0] == 2
    assert _run(capsys, "frobnicate")[0] == 2
    (tmp_path / "broken.json").write_text("{")
    assert _run(capsys, "train", "--config", str(tmp_path / "broken.json"))[0] == 2


def test_nan_loss_exit_3(tmp_path, capsys):
    cfg = _write(tmp_path, _gauss_cfg(train={"iterations": 50, "batch_size": 16, "hidden": [4],
                                             "lr": 1e200}))
    code, _, err = _run(capsys, "train", "--config", cfg, "--out", str(tmp_path / "o"))
    assert code == 3
    assert json.loads(err)["error"] == "numeric"
