"""Experiment orchestration: run configured estimators and emit CSV rows.

All estimators in one invocation share the same seed specification, so their
path batches are coupled by common random numbers.  CSV columns are fixed:

    experiment_id, estimator, params, value, std_error, n_paths, seed, wall_ms

and rows are reproducible byte for byte from (config, seed) except for the
trailing wall_ms column.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__ as _version
from .config import (
    ExperimentConfig,
    build_direction,
    build_grid,
    build_model,
    build_payoff,
)
from .directions import DirectionSpec, direction_norm
from .engine import simulate, simulate_rough_vol, simulate_tangent
from .estimators import (
    Estimate,
    bel_weight,
    chain_rule_oracle,
    estimate_additive,
    estimate_bel,
    estimate_fractional,
    estimate_fractional_singular,
    estimate_rough_vol_greek,
    estimate_second_order,
    fd_oracle,
    kernel_direction_cells,
    martingale_tracks,
)
from .models import RoughVolModel
from .seeds import SeedSpec

__all__ = ["StudyResult", "run_greek", "run_compare", "run_study",
           "run_simulate_summary", "write_csv", "CSV_COLUMNS"]

CSV_COLUMNS = ("experiment_id", "estimator", "params", "value", "std_error",
               "n_paths", "seed", "wall_ms")


@dataclass
class StudyResult:
    rows: list[dict] = field(default_factory=list)
    pair_rows: list[dict] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def add(self, experiment_id: str, est: Estimate, extra_params: dict | None = None):
        params = dict(est.params)
        if extra_params:
            params.update(extra_params)
        self.rows.append({
            "experiment_id": experiment_id,
            "estimator": est.estimator,
            "params": _format_params(params),
            "value": est.value,
            "std_error": est.std_error,
            "n_paths": est.n_paths,
            "seed": est.seed_descriptor.get("master_seed"),
            "wall_ms": est.wall_ms,
        })


def _format_params(params: dict) -> str:
    return ";".join(f"{k}={_fmt_param(params[k])}" for k in sorted(params))


def _fmt_param(v) -> str:
    if isinstance(v, (bool, str)) or v is None:
        return repr(v)
    if isinstance(v, (int, np.integer)):
        return repr(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return repr(v)


class _Runner:
    """Shared batches and nested tracks for one configuration."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.grid = build_grid(cfg)
        self.model = build_model(cfg)
        self.payoff = build_payoff(cfg)
        self.rough = isinstance(self.model, RoughVolModel)
        self.seed = SeedSpec(int(cfg.seed))
        self.n_paths = int(cfg.n_paths)
        self._batch = None
        self._tracks: dict[int, np.ndarray] = {}

    @property
    def kernel(self):
        return (self.model.variance_model.K_sigma if self.rough
                else self.model.K_sigma)

    def direction(self, spec: dict | None = None) -> DirectionSpec:
        spec = spec if spec is not None else self.cfg.direction
        if spec is None:
            raise ValueError("configuration carries no direction")
        return build_direction(spec, self.grid)

    def batch(self):
        if self._batch is None:
            if self.rough:
                self._batch = simulate_rough_vol(
                    self.model, self.grid, self.n_paths, self.seed
                )
            else:
                self._batch = simulate(self.model, self.grid, self.n_paths, self.seed)
        return self._batch

    def tracks(self, inner_budget: int) -> np.ndarray:
        if inner_budget not in self._tracks:
            m, _ = martingale_tracks(
                self.batch(), self.model, self.payoff, inner_budget, self.seed
            )
            self._tracks[inner_budget] = m
        return self._tracks[inner_budget]

    def run(self, est: dict) -> list[tuple[Estimate, dict]]:
        """Run one estimator spec; returns (estimate, extra params) rows."""
        name = est["name"]
        if name == "bel":
            e = estimate_bel(self.batch(), self.model, self.payoff, self.direction(),
                             control_variate=bool(est.get("control_variate", True)))
            return [(e, {})]
        if name == "fractional":
            alpha = float(est["alpha"])
            budget = int(est["inner_budget"])
            e = estimate_fractional(
                self.batch(), self.model, self.payoff, self.direction(),
                alpha, budget, self.seed, tracks=self.tracks(budget),
                variant=est.get("variant", "increments"),
                inner_noise_threshold=est.get("inner_noise_threshold"),
            )
            return [(e, {"inner_budget": budget})]
        if name == "fractional_singular":
            alpha = float(est["alpha"])
            budget = int(est["inner_budget"])
            base, records = estimate_fractional_singular(
                self.batch(), self.model, self.payoff,
                gamma_exp=float(est["gamma_exp"]), alpha=alpha,
                delta_sequence=tuple(est["delta_sequence"]),
                amplitude=float(est.get("amplitude", 1.0)),
                inner_budget=budget, seed=self.seed,
                tracks=self.tracks(budget),
            )
            rows = [(base, {"gamma_exp": est["gamma_exp"], "delta": 0.0})]
            for rec in records:
                e = Estimate(
                    value=rec["estimate"], std_error=rec["std_error"],
                    n_paths=self.n_paths, estimator="fractional_singular",
                    seed_descriptor=self.seed.describe("paths"),
                    params={"alpha": alpha},
                )
                rows.append((e, {
                    "gamma_exp": est["gamma_exp"], "delta": rec["delta"],
                    "gap": rec["gap"],
                    "direction_distance": rec["direction_distance"],
                }))
            return rows
        if name == "additive":
            dspec = self.cfg.direction or {}
            if dspec.get("kind") == "kernel_at_start":
                cells, h_T = kernel_direction_cells(self.model, self.grid)
            else:
                d = self.direction(dspec)
                cells = d.h_cell_averages(self.grid, self.kernel)
                h_T = float(d.h_values(self.grid, self.kernel)[-1])
            e = estimate_additive(self.batch(), self.model, self.payoff, cells, h_T)
            return [(e, {})]
        if name == "second_order":
            d_h = self.direction()
            d_g = self.direction(est["direction_g"])
            e = estimate_second_order(self.batch(), self.model, self.payoff, d_g, d_h)
            return [(e, {})]
        if name == "rough_vol":
            e = estimate_rough_vol_greek(
                self.batch(), self.model, self.payoff, self.direction(),
                control_variate=bool(est.get("control_variate", True)),
            )
            return [(e, {})]
        if name == "fd":
            e = fd_oracle(self.model, self.payoff, self.direction(),
                          float(est["epsilon"]), self.grid, self.n_paths, self.seed,
                          decouple_seeds=bool(est.get("decouple_seeds", False)))
            return [(e, {})]
        if name == "chain_rule":
            tangent = simulate_tangent(self.batch(), self.model, self.direction())
            e = chain_rule_oracle(self.batch(), tangent, self.payoff)
            return [(e, {})]
        raise ValueError(f"unknown estimator {name!r}")


def _provenance(cfg: ExperimentConfig) -> dict:
    return {
        "config_hash": cfg.config_hash(),
        "master_seed": int(cfg.seed),
        "code_version": _version,
    }


def run_simulate_summary(cfg: ExperimentConfig):
    """Simulate the configured batch; returns (batch, summary dict)."""
    runner = _Runner(cfg)
    batch = runner.batch()
    xT = batch.X[:, -1, 0] if batch.is_rough_vol else batch.X[:, -1]
    summary = {
        "n_paths": batch.n_paths,
        "n_steps": batch.grid.n,
        "mean_X_T": float(xT.mean()),
        "var_X_T": float(xT.var(ddof=1)),
        "provenance": _provenance(cfg),
    }
    if not runner.rough and runner.model.is_gaussian:
        cont, disc = runner.model.gaussian_variance(batch.grid)
        summary["var_closed_form"] = cont
        summary["var_grid_exact"] = disc
    return batch, summary


def run_greek(cfg: ExperimentConfig) -> StudyResult:
    runner = _Runner(cfg)
    result = StudyResult(provenance=_provenance(cfg))
    eid = cfg.config_hash()
    for est, extra in runner.run(cfg.estimator):
        result.add(eid, est, extra)
    return result


def run_compare(cfg: ExperimentConfig) -> StudyResult:
    if not cfg.compare or len(cfg.compare) < 2:
        raise ValueError("compare needs at least two estimator entries")
    runner = _Runner(cfg)
    result = StudyResult(provenance=_provenance(cfg))
    eid = cfg.config_hash()
    estimates: list[Estimate] = []
    for est_spec in cfg.compare:
        rows = runner.run(est_spec)
        for est, extra in rows:
            result.add(eid, est, extra)
        estimates.append(rows[0][0])
    for i in range(len(estimates)):
        for j in range(i + 1, len(estimates)):
            a, b = estimates[i], estimates[j]
            comb = math.hypot(a.std_error, b.std_error)
            ratio = abs(a.value - b.value) / comb if comb > 0 else math.inf
            result.pair_rows.append({
                "experiment_id": eid,
                "pair": f"{a.estimator}|{b.estimator}",
                "abs_delta": abs(a.value - b.value),
                "combined_se": comb,
                "ratio": ratio,
                "flag": int(ratio > 3.0),
            })
    return result


def run_study(cfg: ExperimentConfig) -> StudyResult:
    if not cfg.study or "kind" not in cfg.study:
        raise ValueError("study config needs a 'kind'")
    kind = cfg.study["kind"]
    if kind == "alpha_sweep":
        return _study_alpha_sweep(cfg)
    if kind == "maturity_scaling":
        return _study_maturity_scaling(cfg)
    if kind == "delta_limit":
        return _study_delta_limit(cfg)
    if kind == "variance_profile":
        return _study_variance_profile(cfg)
    raise ValueError(f"unknown study kind {kind!r}")


def _study_alpha_sweep(cfg: ExperimentConfig) -> StudyResult:
    runner = _Runner(cfg)
    study = cfg.study
    alphas = [float(a) for a in study["alphas"]]
    budget = int(study["inner_budget"])
    result = StudyResult(provenance=_provenance(cfg))
    eid = cfg.config_hash()
    tracks = runner.tracks(budget)
    for alpha in alphas:
        e = estimate_fractional(
            runner.batch(), runner.model, runner.payoff, runner.direction(),
            alpha, budget, runner.seed, tracks=tracks,
        )
        result.add(eid, e, {"inner_budget": budget})
    return result


def _study_maturity_scaling(cfg: ExperimentConfig) -> StudyResult:
    """|fractional estimate| vs maturity, with a log-log slope fit.

    For a power-law direction of exponent gamma - 1/2 and a payoff of
    declared regularity beta the predicted slope is
    gamma - 1/2 + H (beta - 1).
    """
    study = cfg.study
    maturities = [float(m) for m in study["maturities"]]
    alpha = float(study["alpha"])
    budget = int(study["inner_budget"])
    result = StudyResult(provenance=_provenance(cfg))
    eid = cfg.config_hash()
    logs = []
    for mat in maturities:
        sub = ExperimentConfig.from_dict(cfg.to_dict())
        sub.grid = {"t0": cfg.grid["t0"], "T": cfg.grid["t0"] + mat, "n": cfg.grid["n"]}
        runner = _Runner(sub)
        e = estimate_fractional(
            runner.batch(), runner.model, runner.payoff, runner.direction(),
            alpha, budget, runner.seed, tracks=runner.tracks(budget),
        )
        result.add(eid, e, {"maturity": mat, "inner_budget": budget})
        logs.append((math.log(mat), math.log(abs(e.value))))
    xs = np.array([p[0] for p in logs])
    ys = np.array([p[1] for p in logs])
    slope = float(np.polyfit(xs, ys, 1)[0])
    runner = _Runner(cfg)
    H = runner.kernel.H
    beta = runner.payoff.holder_beta or 1.0
    d = runner.direction()
    predicted = d.gamma_exp - 0.5 + H * (beta - 1.0)
    summary = Estimate(value=slope, std_error=0.0, n_paths=int(cfg.n_paths),
                       estimator="maturity_slope",
                       seed_descriptor={"master_seed": int(cfg.seed)},
                       params={"predicted": predicted})
    result.add(eid, summary, {"predicted_slope": predicted})
    return result


def _study_delta_limit(cfg: ExperimentConfig) -> StudyResult:
    runner = _Runner(cfg)
    study = cfg.study
    result = StudyResult(provenance=_provenance(cfg))
    eid = cfg.config_hash()
    est_spec = {
        "name": "fractional_singular",
        "alpha": study["alpha"],
        "inner_budget": study["inner_budget"],
        "gamma_exp": study["gamma_exp"],
        "delta_sequence": study["delta_sequence"],
        "amplitude": study.get("amplitude", 1.0),
    }
    for est, extra in runner.run(est_spec):
        result.add(eid, est, extra)
    return result


def _study_variance_profile(cfg: ExperimentConfig) -> StudyResult:
    """Weight variance against the direction norm over a direction family."""
    runner = _Runner(cfg)
    study = cfg.study
    gammas = [float(x) for x in study["gammas"]]
    result = StudyResult(provenance=_provenance(cfg))
    eid = cfg.config_hash()
    batch = runner.batch()
    for g_exp in gammas:
        d = DirectionSpec("power_law", gamma_exp=g_exp)
        cells = d.preimage_cell_averages(runner.grid, runner.kernel)
        w = bel_weight(batch, runner.model, cells)
        norm = direction_norm(d, 0.0, runner.grid, runner.kernel)
        diag = w.diagnostics()
        e = Estimate(value=diag["weight_var"], std_error=0.0,
                     n_paths=batch.n_paths, estimator="weight_variance",
                     seed_descriptor=batch.seed_descriptor,
                     params={"gamma_exp": g_exp, "direction_norm": norm})
        result.add(eid, e, {})
    return result


# ---------------------------------------------------------------------------
# CSV / JSON emission


def write_csv(result: StudyResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fp:
        writer = csv.DictWriter(fp, fieldnames=list(CSV_COLUMNS))
        writer.writeheader()
        for row in result.rows:
            writer.writerow({k: _fmt(row.get(k)) for k in CSV_COLUMNS})


def write_pairs_csv(result: StudyResult, path) -> None:
    cols = ("experiment_id", "pair", "abs_delta", "combined_se", "ratio", "flag")
    with open(path, "w", newline="", encoding="utf-8") as fp:
        writer = csv.DictWriter(fp, fieldnames=list(cols))
        writer.writeheader()
        for row in result.pair_rows:
            writer.writerow({k: _fmt(row.get(k)) for k in cols})


def write_meta(result: StudyResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        json.dump(result.provenance, fp, indent=2, sort_keys=True)
        fp.write("\n")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v
