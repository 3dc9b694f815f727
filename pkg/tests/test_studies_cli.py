import csv
import json
import math
import os
import subprocess
import sys

import pytest

from volterra_sens.config import ExperimentConfig
from volterra_sens.studies import (
    CSV_COLUMNS,
    run_compare,
    run_greek,
    run_study,
    write_csv,
)

_ENV = dict(os.environ, NUMBA_THREADING_LAYER="workqueue")


def _run_cli(*args):
    proc = subprocess.run(
        [sys.executable, "-m", "volterra_sens.cli", *args],
        capture_output=True, text=True, env=_ENV,
    )
    return proc


def _write_cfg(tmp_path, payload, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(payload, indent=1))
    return p


def _gauss_cfg(**over):
    base = {
        "model": {"name": "gaussian", "overrides": {"H": 0.25}},
        "grid": {"t0": 0.0, "T": 1.0, "n": 64},
        "payoff": {"name": "identity"},
        "direction": {"kind": "power_law", "gamma_exp": 1.0},
        "estimator": {"name": "bel", "control_variate": True},
        "n_paths": 4000,
        "seed": 321,
    }
    base.update(over)
    return base


def _read_rows(path):
    with open(path, newline="") as fp:
        return list(csv.DictReader(fp))


# -- simulate -------------------------------------------------------------------


def test_cmd_simulate_writes_dump_and_summary(tmp_path):
    cfg = _write_cfg(tmp_path, _gauss_cfg())
    out = tmp_path / "out"
    proc = _run_cli("simulate", "--config", str(cfg), "--out", str(out))
    assert proc.returncode == 0, proc.stderr
    summary = json.loads((out / "summary.json").read_text())
    assert (out / "paths.bin").exists()
    # sample variance close to the closed form
    assert summary["var_X_T"] == pytest.approx(summary["var_closed_form"], rel=0.1)
    assert "mean X_T" in proc.stdout and "var X_T" in proc.stdout


def test_cmd_simulate_missing_file_exits_2(tmp_path):
    proc = _run_cli("simulate", "--config", str(tmp_path / "nope.json"),
                    "--out", str(tmp_path / "o"))
    assert proc.returncode == 2
    assert "not found" in proc.stderr


def test_cmd_greek_invalid_hypothesis_exits_2(tmp_path):
    payload = _gauss_cfg(
        payoff={"name": "abs_power", "params": {"beta": 0.5}},
        estimator={"name": "fractional", "alpha": 0.4, "inner_budget": 8},
    )
    cfg = _write_cfg(tmp_path, payload)
    proc = _run_cli("greek", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert proc.returncode == 2
    assert "alpha < beta/2" in proc.stderr


def test_cmd_greek_writes_row_and_prints_value(tmp_path):
    cfg = _write_cfg(tmp_path, _gauss_cfg(n_paths=2000))
    out = tmp_path / "out"
    proc = _run_cli("greek", "--config", str(cfg), "--out", str(out))
    assert proc.returncode == 0, proc.stderr
    rows = _read_rows(out / "result.csv")
    assert len(rows) == 1
    assert list(rows[0]) == list(CSV_COLUMNS)
    assert rows[0]["estimator"] == "bel"
    assert abs(float(rows[0]["value"]) - 1.0) < 0.1
    assert "+/-" in proc.stdout
    meta = json.loads((out / "meta.json").read_text())
    assert meta["master_seed"] == 321


def test_cmd_greek_seed_override(tmp_path):
    cfg = _write_cfg(tmp_path, _gauss_cfg(n_paths=500))
    out1, out2 = tmp_path / "a", tmp_path / "b"
    _run_cli("greek", "--config", str(cfg), "--out", str(out1), "--seed", "11")
    _run_cli("greek", "--config", str(cfg), "--out", str(out2), "--seed", "12")
    r1 = _read_rows(out1 / "result.csv")[0]
    r2 = _read_rows(out2 / "result.csv")[0]
    assert r1["seed"] == "11" and r2["seed"] == "12"
    assert r1["value"] != r2["value"]


def test_runtime_failure_exits_3(tmp_path):
    payload = _gauss_cfg(
        model={"custom": {
            "b": {"kind": "linear", "c0": 0.0, "c1": 1.0e8},
            "sigma": {"kind": "constant", "c0": 1.0},
            "K_b": {"kind": "power_law", "H": 0.4},
            "K_sigma": {"kind": "power_law", "H": 0.4},
        }},
    )
    cfg = _write_cfg(tmp_path, payload)
    proc = _run_cli("greek", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert proc.returncode == 3
    assert "runtime failure" in proc.stderr


# -- compare --------------------------------------------------------------------


def test_compare_requires_two_estimators(tmp_path):
    payload = _gauss_cfg(compare=[{"name": "bel", "control_variate": True}])
    cfg = _write_cfg(tmp_path, payload)
    proc = _run_cli("compare", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert proc.returncode == 2


def test_compare_bel_fd_chain_flags_clear(tmp_path):
    payload = _gauss_cfg(
        model={"name": "tanh-drift"},
        payoff={"name": "sin"},
        n_paths=4000,
        compare=[
            {"name": "bel", "control_variate": True},
            {"name": "fd", "epsilon": 1e-3},
            {"name": "chain_rule"},
        ],
    )
    cfg = _write_cfg(tmp_path, payload)
    out = tmp_path / "out"
    proc = _run_cli("compare", "--config", str(cfg), "--out", str(out))
    assert proc.returncode == 0, proc.stderr
    rows = _read_rows(out / "result.csv")
    assert {r["estimator"] for r in rows} == {"bel", "fd", "chain_rule"}
    pairs = _read_rows(out / "pairs.csv")
    assert len(pairs) == 3
    assert all(p["flag"] == "0" for p in pairs), pairs
    assert "within 3 combined SEs" in proc.stdout


def test_compare_bel_vs_fractional_in_process():
    cfg = ExperimentConfig.from_dict(_gauss_cfg(
        model={"name": "tanh-drift"},
        grid={"t0": 0.0, "T": 1.0, "n": 48},
        n_paths=3000,
        compare=[
            {"name": "bel", "control_variate": True},
            {"name": "fractional", "alpha": 0.1, "inner_budget": 16},
        ],
    ))
    res = run_compare(cfg)
    assert all(p["flag"] == 0 for p in res.pair_rows), res.pair_rows


# -- studies --------------------------------------------------------------------


def test_alpha_sweep_flat(tmp_path):
    cfg = ExperimentConfig.from_dict(_gauss_cfg(
        grid={"t0": 0.0, "T": 1.0, "n": 64},
        n_paths=4000,
        estimator={},
        study={"kind": "alpha_sweep", "alphas": [0.05, 0.15, 0.3], "inner_budget": 32},
    ))
    res = run_study(cfg)
    vals = [r["value"] for r in res.rows]
    ses = [r["std_error"] for r in res.rows]
    for v, s in zip(vals, ses):
        assert abs(v - 1.0) <= 3 * s
    # all alphas estimate the same derivative
    for i in range(len(vals)):
        for j in range(i + 1, len(vals)):
            assert abs(vals[i] - vals[j]) <= 3 * math.hypot(ses[i], ses[j])


def test_delta_limit_study(tmp_path):
    cfg = ExperimentConfig.from_dict(_gauss_cfg(
        model={"name": "gaussian", "overrides": {"H": 0.1}},
        n_paths=2000,
        estimator={},
        study={"kind": "delta_limit", "alpha": 0.3, "inner_budget": 16,
               "gamma_exp": 0.7, "delta_sequence": [0.1, 0.05, 0.025]},
    ))
    res = run_study(cfg)
    assert len(res.rows) == 4  # base + three deltas
    dists = [float(r["params"].split("direction_distance=")[1].split(";")[0])
             for r in res.rows[1:]]
    assert dists[0] > dists[1] > dists[2]


def test_variance_profile_study():
    cfg = ExperimentConfig.from_dict(_gauss_cfg(
        n_paths=2000,
        estimator={},
        study={"kind": "variance_profile", "gammas": [0.9, 1.2, 1.5]},
    ))
    res = run_study(cfg)
    assert len(res.rows) == 3
    # Ito isometry: weight variance tracks the squared direction norm
    for row in res.rows:
        norm = float(row["params"].split("direction_norm=")[1].split(";")[0])
        assert row["value"] == pytest.approx(norm**2, rel=0.2)


def test_maturity_scaling_study():
    cfg = ExperimentConfig.from_dict(_gauss_cfg(
        model={"name": "gaussian", "overrides": {"H": 0.1}},
        direction={"kind": "power_law", "gamma_exp": 0.7},
        n_paths=3000,
        estimator={},
        study={"kind": "maturity_scaling", "maturities": [0.25, 0.5, 1.0],
               "alpha": 0.3, "inner_budget": 16},
    ))
    res = run_study(cfg)
    slope_row = [r for r in res.rows if r["estimator"] == "maturity_slope"][0]
    assert abs(slope_row["value"] - 0.2) < 0.3  # gamma - 1/2, beta = 1
    predicted = float(slope_row["params"].split("predicted_slope=")[1].split(";")[0])
    assert predicted == pytest.approx(0.2, abs=1e-12)


def test_unknown_study_kind():
    cfg = ExperimentConfig.from_dict(_gauss_cfg(study={"kind": "zzz"}))
    with pytest.raises(ValueError):
        run_study(cfg)


# -- reproducibility ---------------------------------------------------------------


def _strip_wall(text: str) -> str:
    lines = text.strip().splitlines()
    return "\n".join(",".join(line.split(",")[:-1]) for line in lines)


def test_study_rerun_byte_identical_any_thread_count(tmp_path):
    payload = _gauss_cfg(
        n_paths=1500,
        estimator={},
        study={"kind": "alpha_sweep", "alphas": [0.1, 0.2], "inner_budget": 8},
    )
    cfg = _write_cfg(tmp_path, payload)
    outs = []
    for threads, tag in ((1, "a"), (2, "b"), (1, "c")):
        out = tmp_path / tag
        proc = _run_cli("study", "--config", str(cfg), "--out", str(out),
                        "--threads", str(threads))
        assert proc.returncode == 0, proc.stderr
        outs.append(out)
    texts = [(o / "result.csv").read_text() for o in outs]
    assert _strip_wall(texts[0]) == _strip_wall(texts[1]) == _strip_wall(texts[2])
    metas = [(o / "meta.json").read_text() for o in outs]
    assert metas[0] == metas[1] == metas[2]


def test_greek_rerun_identical_in_process():
    cfg = ExperimentConfig.from_dict(_gauss_cfg(n_paths=800))
    r1 = run_greek(cfg)
    r2 = run_greek(cfg)
    a, b = r1.rows[0], r2.rows[0]
    assert a["value"] == b["value"] and a["std_error"] == b["std_error"]


def test_csv_format_fixed_columns(tmp_path):
    cfg = ExperimentConfig.from_dict(_gauss_cfg(n_paths=500))
    res = run_greek(cfg)
    path = tmp_path / "r.csv"
    write_csv(res, path)
    header = path.read_text().splitlines()[0]
    assert header == ",".join(CSV_COLUMNS)
