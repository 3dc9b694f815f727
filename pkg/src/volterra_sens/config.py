"""Experiment configuration: schema, validation, and builders.

Configs are JSON trees with every numeric knob explicit: n_paths, seed, and
any estimator parameter (alpha, inner_budget, epsilon, ...) must be present
in the file, never defaulted silently.  ``validate_config`` checks the
hypotheses of the selected estimator mechanically and returns a list of
violations (empty = valid); it never raises on bad content.

Schema (JSON object):

    {
      "model":     {"name": "gaussian", "overrides": {"H": 0.25}}
                   or {"custom": {"b": {...}, "sigma": {...},
                                  "K_b": {...}, "K_sigma": {...}, "x0": 0.0}},
      "grid":      {"t0": 0.0, "T": 1.0, "n": 256},
      "payoff":    {"name": "identity", "params": {}},
      "direction": {"kind": "power_law", "gamma_exp": 1.0, "amplitude": 1.0},
      "estimator": {"name": "bel", ...parameters...},
      "compare":   [ {estimator...}, {estimator...} ],        # cmd_compare only
      "study":     {"kind": "alpha_sweep", ...parameters...}, # cmd_study only
      "n_paths":   100000,
      "seed":      12345,
      "threads":   0
    }

Estimator names and their required parameters:

    bel                 control_variate (bool)
    fractional          alpha, inner_budget
    fractional_singular alpha, inner_budget, gamma_exp, delta_sequence
    additive            (direction may be {"kind": "kernel_at_start"})
    second_order        direction_g (a direction object)
    rough_vol           control_variate (bool)
    fd                  epsilon
    chain_rule          -
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .directions import DirectionSpec
from .grids import GridFunction, TimeGrid
from .kernels import KernelSpec
from .models import (
    Coefficient1D,
    CoefficientSet,
    PayoffSpec,
    RoughVolModel,
    SVEModel,
    builtin_models,
    builtin_payoffs,
    make_model,
    make_payoff,
)

__all__ = [
    "ExperimentConfig",
    "validate_config",
    "build_grid",
    "build_model",
    "build_payoff",
    "build_direction",
]

_ESTIMATORS = (
    "bel",
    "fractional",
    "fractional_singular",
    "additive",
    "second_order",
    "rough_vol",
    "fd",
    "chain_rule",
)


@dataclass
class ExperimentConfig:
    model: dict
    grid: dict
    payoff: dict
    estimator: dict = field(default_factory=dict)
    direction: dict | None = None
    compare: list | None = None
    study: dict | None = None
    n_paths: int | None = None
    seed: int | None = None
    threads: int = 0

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: v for k, v in d.items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fp:
            return cls.from_json(fp.read())

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fp:
            fp.write(self.to_json())

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# builders


def build_grid(cfg: ExperimentConfig) -> TimeGrid:
    g = cfg.grid
    return TimeGrid(float(g["t0"]), float(g["T"]), int(g["n"]))


def _build_kernel(d: dict) -> KernelSpec:
    return KernelSpec(
        kind=d["kind"],
        H=float(d.get("H", 0.5)),
        level=float(d.get("level", 1.0)),
        c_K=float(d.get("c_K", 1.0)),
    )


def build_model(cfg: ExperimentConfig):
    grid = build_grid(cfg)
    spec = cfg.model
    if "name" in spec:
        return make_model(spec["name"], grid=grid, **spec.get("overrides", {}))
    custom = spec["custom"]
    coeffs = CoefficientSet(
        b=Coefficient1D.from_dict(custom["b"]),
        sigma=Coefficient1D.from_dict(custom["sigma"]),
    )
    return SVEModel(
        name=custom.get("label", "custom"),
        coeffs=coeffs,
        K_b=_build_kernel(custom["K_b"]),
        K_sigma=_build_kernel(custom["K_sigma"]),
        x0=float(custom.get("x0", 0.0)),
        grid=grid,
    )


def build_payoff(cfg: ExperimentConfig) -> PayoffSpec:
    return make_payoff(cfg.payoff["name"], **cfg.payoff.get("params", {}))


def build_direction(spec: dict, grid: TimeGrid | None = None) -> DirectionSpec:
    kind = spec["kind"]
    if kind == "preimage_given":
        if grid is None:
            raise ValueError("preimage_given needs the grid to carry values")
        return DirectionSpec(
            "preimage_given",
            hstar=GridFunction(grid, np.asarray(spec["values"], dtype=float)),
        )
    return DirectionSpec(
        kind,
        gamma_exp=float(spec.get("gamma_exp", 1.0)),
        amplitude=float(spec.get("amplitude", 1.0)),
        level=float(spec.get("level", 1.0)),
        delta=float(spec.get("delta", 0.0)),
        alpha_weight=spec.get("alpha_weight"),
    )


# ---------------------------------------------------------------------------
# validation


def _direction_violations(
    dspec: dict | None,
    est: dict,
    model,
    grid: TimeGrid,
    out: list,
    slot: str = "direction",
) -> None:
    name = est.get("name")
    if dspec is None:
        if name in ("bel", "fractional", "second_order", "rough_vol", "fd",
                    "chain_rule", "additive"):
            out.append(f"{slot}: estimator {name!r} needs a direction")
        return
    try:
        d = build_direction(dspec, grid)
    except Exception as exc:
        out.append(f"{slot}: {exc}")
        return
    kernel = (
        model.variance_model.K_sigma
        if isinstance(model, RoughVolModel)
        else model.K_sigma
    )
    if name in ("bel", "second_order", "rough_vol"):
        if not d.in_h(kernel):
            out.append(
                f"{slot}: direction has no square-integrable preimage "
                "(constant or too-singular directions are excluded at alpha = 0)"
            )
    if name == "fractional":
        alpha = est.get("alpha")
        if alpha is not None and not d.in_h_alpha(float(alpha), kernel):
            out.append(
                f"{slot}: direction not admissible at alpha={alpha} "
                f"(constant needs alpha > H = {kernel.H})"
            )
    if name in ("fd", "chain_rule"):
        if d.kind == "power_law" and d.gamma_exp < 0.5:
            out.append(f"{slot}: {name} needs a direction finite at every node")


def validate_config(cfg: ExperimentConfig) -> list[str]:
    """Mechanical hypothesis checks; returns a list of violations."""
    out: list[str] = []
    # grid
    try:
        grid = build_grid(cfg)
    except Exception as exc:
        out.append(f"grid: {exc}")
        return out
    # explicit numerics
    if cfg.n_paths is None:
        out.append("n_paths: required, no default")
    elif int(cfg.n_paths) < 2:
        out.append("n_paths: must be >= 2")
    if cfg.seed is None:
        out.append("seed: required, no default")
    # model
    spec = cfg.model
    if "name" in spec:
        if spec["name"] not in builtin_models():
            out.append(f"model: unknown builtin {spec['name']!r}")
            return out
    elif "custom" not in spec:
        out.append("model: needs 'name' or 'custom'")
        return out
    try:
        model = build_model(cfg)
    except Exception as exc:
        out.append(f"model: {exc}")
        return out
    rough = isinstance(model, RoughVolModel)
    # payoff
    if cfg.payoff.get("name") not in builtin_payoffs():
        out.append(f"payoff: unknown {cfg.payoff.get('name')!r}")
        return out
    try:
        payoff = build_payoff(cfg)
    except Exception as exc:
        out.append(f"payoff: {exc}")
        return out

    estimators = list(cfg.compare) if cfg.compare else []
    if cfg.estimator:
        estimators.append(cfg.estimator)
    for est in estimators:
        name = est.get("name")
        if name not in _ESTIMATORS:
            out.append(f"estimator: unknown {name!r}")
            continue
        if name == "fractional" or name == "fractional_singular":
            alpha = est.get("alpha")
            if alpha is None:
                out.append(f"{name}: alpha required, no default")
            if est.get("inner_budget") is None:
                out.append(f"{name}: inner_budget required, no default")
            if payoff.kind != "state":
                out.append(f"{name}: requires a state payoff")
            beta = payoff.holder_beta
            if beta is None:
                out.append(
                    f"{name}: payoff {payoff.name!r} declares no Holder exponent"
                )
            elif alpha is not None and not 0.0 < float(alpha) < 0.5 * beta:
                out.append(
                    f"{name}: needs 0 < alpha < beta/2 = {0.5 * beta}, got {alpha}"
                )
            if rough:
                out.append(f"{name}: not available on rough-volatility models")
        if name == "fractional_singular":
            gexp = est.get("gamma_exp")
            alpha = est.get("alpha")
            if gexp is None:
                out.append("fractional_singular: gamma_exp required")
            if not est.get("delta_sequence"):
                out.append("fractional_singular: delta_sequence required")
            if gexp is not None and alpha is not None and not rough:
                H = model.K_sigma.H
                if not float(gexp) > 0.5 + H - float(alpha):
                    out.append(
                        "fractional_singular: needs gamma > 1/2 + H - alpha "
                        f"= {0.5 + H - float(alpha)}"
                    )
                if not float(alpha) > H:
                    out.append("fractional_singular: needs alpha > H")
        if name == "additive":
            if rough:
                out.append("additive: not available on rough-volatility models")
            else:
                if not model.is_additive:
                    out.append("additive: requires state-independent sigma")
                if not model.equal_kernels:
                    out.append("additive: requires K_b = K_sigma")
                if payoff.kind != "state":
                    out.append("additive: requires a state payoff")
        if name == "second_order":
            if rough:
                out.append("second_order: not available on rough-volatility models")
            if est.get("direction_g") is None:
                out.append("second_order: direction_g required")
            else:
                _direction_violations(est["direction_g"], est, model, grid, out,
                                      slot="direction_g")
        if name == "rough_vol" and not rough:
            out.append("rough_vol: model is not a rough-volatility model")
        if name in ("bel", "second_order") and rough:
            out.append(f"{name}: use the rough_vol estimator on this model")
        if name == "fd":
            eps = est.get("epsilon")
            if eps is None:
                out.append("fd: epsilon required, no default")
            elif float(eps) <= 0.0:
                out.append("fd: epsilon must be positive")
        if name == "chain_rule":
            if payoff.gradient is None:
                out.append(f"chain_rule: payoff {payoff.name!r} has no gradient")
            if rough:
                out.append("chain_rule: not available on rough-volatility models")
        if name == "additive" and cfg.direction is not None and \
                cfg.direction.get("kind") == "kernel_at_start":
            pass  # resolved by the runner against the model kernel
        elif name == "fractional_singular":
            pass  # carries its own direction family
        else:
            _direction_violations(cfg.direction, est, model, grid, out)
    return out
