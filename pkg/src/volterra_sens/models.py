"""Model, payoff, and coefficient catalogs.

Coefficients come from a small closed catalog of smooth primitives (zero,
constant, linear, scaled tanh, sin/tanh affine) rather than arbitrary
callables.  That keeps config files declarative, makes the regularity
contracts checkable, and lets the path engine compile one jitted kernel for
every model.  All built-in models are scalar (d = m = 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .grids import TimeGrid
from .kernels import KernelSpec, lag_cell_averages

__all__ = [
    "Coefficient1D",
    "CoefficientSet",
    "SVEModel",
    "RoughVolModel",
    "PayoffSpec",
    "builtin_models",
    "make_model",
    "builtin_payoffs",
    "make_payoff",
]

# numeric codes consumed by the jitted engine kernels
_COEF_CODES = {"zero": 0, "constant": 1, "linear": 2, "scaled_tanh": 3,
               "sin_affine": 4, "tanh_affine": 5}


@dataclass(frozen=True)
class Coefficient1D:
    """One scalar coefficient function x -> f(x) from the closed catalog.

    kind        f(x)
    ----        ----
    zero        0
    constant    c0
    linear      c0 + c1 x
    scaled_tanh c0 tanh(c1 x)
    sin_affine  c0 + c1 sin(c2 x)
    tanh_affine c0 + c1 tanh(c2 x)
    """

    kind: str
    c0: float = 0.0
    c1: float = 0.0
    c2: float = 1.0

    def __post_init__(self):
        if self.kind not in _COEF_CODES:
            raise ValueError(f"unknown coefficient kind {self.kind!r}")

    @property
    def code(self) -> int:
        return _COEF_CODES[self.kind]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "constant":
            return np.full_like(x, self.c0)
        if self.kind == "linear":
            return self.c0 + self.c1 * x
        if self.kind == "scaled_tanh":
            return self.c0 * np.tanh(self.c1 * x)
        if self.kind == "sin_affine":
            return self.c0 + self.c1 * np.sin(self.c2 * x)
        return self.c0 + self.c1 * np.tanh(self.c2 * x)

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind in ("zero", "constant"):
            return np.zeros_like(x)
        if self.kind == "linear":
            return np.full_like(x, self.c1)
        if self.kind == "scaled_tanh":
            return self.c0 * self.c1 / np.cosh(self.c1 * x) ** 2
        if self.kind == "sin_affine":
            return self.c1 * self.c2 * np.cos(self.c2 * x)
        return self.c1 * self.c2 / np.cosh(self.c2 * x) ** 2

    def sup_bound(self) -> float:
        """Declared sup-norm bound (inf when unbounded)."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return abs(self.c0)
        if self.kind == "linear":
            return math.inf if self.c1 != 0.0 else abs(self.c0)
        if self.kind == "scaled_tanh":
            return abs(self.c0)
        return abs(self.c0) + abs(self.c1)

    def deriv_bound(self) -> float:
        if self.kind in ("zero", "constant"):
            return 0.0
        if self.kind == "linear":
            return abs(self.c1)
        if self.kind == "scaled_tanh":
            return abs(self.c0 * self.c1)
        return abs(self.c1 * self.c2)

    def range_min(self) -> float:
        """Lower bound of f over the real line (used for ellipticity)."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return self.c0
        if self.kind == "linear":
            return -math.inf if self.c1 != 0.0 else self.c0
        if self.kind == "scaled_tanh":
            return -abs(self.c0)
        return self.c0 - abs(self.c1)

    @property
    def is_constant(self) -> bool:
        return self.kind in ("zero", "constant")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "c0": self.c0, "c1": self.c1, "c2": self.c2}

    @classmethod
    def from_dict(cls, d: dict) -> "Coefficient1D":
        return cls(d["kind"], d.get("c0", 0.0), d.get("c1", 0.0), d.get("c2", 1.0))


@dataclass(frozen=True)
class CoefficientSet:
    """Drift and diffusion (with right inverse) for a scalar SVE.

    The diffusion must be bounded away from zero so that xi = 1/sigma is a
    bounded right inverse; ``probe`` checks both that contract and the
    declared sup-norm bounds at randomised points.
    """

    b: Coefficient1D
    sigma: Coefficient1D
    d: int = 1
    m: int = 1

    def __post_init__(self):
        if self.d != 1 or self.m != 1:
            raise NotImplementedError("only scalar models (d = m = 1) are built in")
        if self.sigma.range_min() <= 0.0:
            raise ValueError(
                "diffusion must be bounded away from zero (right-inverse contract)"
            )

    def xi(self, x):
        return 1.0 / self.sigma(x)

    def xi_bound(self) -> float:
        return 1.0 / self.sigma.range_min()

    def probe(self, n_points: int = 64, seed: int = 0, tol: float = 1e-10) -> None:
        """Check sigma * xi = 1 and declared bounds at randomised states."""
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(n_points) * 5.0
        err = np.abs(self.sigma(x) * self.xi(x) - 1.0).max()
        if err > tol:
            raise AssertionError(f"right-inverse probe failed: |sigma*xi - 1| = {err}")
        for coef, bound in (
            (self.sigma, self.sigma.sup_bound()),
            (self.b, self.b.sup_bound()),
        ):
            vals = np.abs(coef(x))
            if bound < math.inf and vals.max() > bound + tol:
                raise AssertionError(f"declared bound violated for {coef.kind}")
        for coef, bound in (
            (self.sigma, self.sigma.deriv_bound()),
            (self.b, self.b.deriv_bound()),
        ):
            vals = np.abs(coef.deriv(x))
            if vals.max() > bound + tol:
                raise AssertionError(f"declared gradient bound violated for {coef.kind}")


@dataclass(frozen=True)
class SVEModel:
    """Scalar stochastic Volterra model: state = initial curve + two kernel sums."""

    name: str
    coeffs: CoefficientSet
    K_b: KernelSpec
    K_sigma: KernelSpec
    x0: float = 0.0  # constant initial curve level
    grid: TimeGrid = field(default_factory=lambda: TimeGrid(0.0, 1.0, 256))

    @property
    def H(self) -> float:
        return self.K_sigma.H if self.K_sigma.kind == "power_law" else 0.5

    def x_values(self, grid: TimeGrid) -> np.ndarray:
        return np.full(grid.n + 1, float(self.x0))

    def with_grid(self, grid: TimeGrid) -> "SVEModel":
        return replace(self, grid=grid)

    @property
    def is_additive(self) -> bool:
        return self.coeffs.sigma.is_constant

    @property
    def equal_kernels(self) -> bool:
        return self.K_b == self.K_sigma

    @property
    def is_gaussian(self) -> bool:
        return self.coeffs.b.kind == "zero" and self.is_additive

    def gaussian_variance(self, grid: TimeGrid) -> tuple[float, float]:
        """(continuum, grid-exact) variance of X_T for zero-drift additive models.

        Continuum: int K(T,s)^2 ds; grid: sum over cells of (cell-averaged K)^2 dt,
        which is what the left-point scheme realises exactly.
        """
        if not self.is_gaussian:
            raise ValueError("closed-form variance only for zero-drift additive models")
        s0 = self.coeffs.sigma(0.0)
        k = self.K_sigma
        if k.kind == "power_law":
            cont = (k.c_K * s0) ** 2 * grid.span ** (2 * k.H) / (2 * k.H)
        elif k.kind == "constant":
            cont = (k.level * s0) ** 2 * grid.span
        else:
            cont = 0.0
        lags = lag_cell_averages(k, grid)
        w = lags[grid.n - np.arange(grid.n)]
        disc = float(s0**2 * np.sum(w**2) * grid.dt)
        return float(cont), disc


@dataclass(frozen=True)
class RoughVolModel:
    """Log-price driven by W with a Volterra variance factor driven by
    B = rho_bar * W_perp + rho * W."""

    name: str
    variance_model: SVEModel
    zeta: Coefficient1D
    rho: float

    def __post_init__(self):
        if not -1.0 < self.rho < 1.0:
            raise ValueError(
                f"need |rho| < 1 so the orthogonal loading is invertible, got {self.rho}"
            )

    @property
    def rho_bar(self) -> float:
        return math.sqrt(1.0 - self.rho**2)

    @property
    def grid(self) -> TimeGrid:
        return self.variance_model.grid

    def with_grid(self, grid: TimeGrid) -> "RoughVolModel":
        return replace(self, variance_model=self.variance_model.with_grid(grid))


@dataclass(frozen=True)
class PayoffSpec:
    """Test function of the terminal state (kind="state") or the whole path.

    ``holder_beta`` is the declared Holder exponent of a state payoff (used by
    the order gate of the fractional estimator); it is declared, never
    inferred, and None means "no exponent declared".
    """

    name: str
    kind: str  # "state" | "path"
    fn: callable
    gradient: callable | None = None
    holder_beta: float | None = None

    def __call__(self, x):
        return self.fn(np.asarray(x, dtype=float))

    def grad(self, x):
        if self.gradient is None:
            raise ValueError(f"payoff {self.name!r} has no analytic gradient")
        return self.gradient(np.asarray(x, dtype=float))


# ---------------------------------------------------------------------------
# catalogs


def builtin_models() -> dict[str, dict]:
    """Named model templates with their documented default parameters."""
    return {
        "gaussian": {"H": 0.25, "x0": 0.0, "c_K": 1.0, "sigma0": 1.0},
        "tanh-drift": {"H": 0.25, "x0": 0.0, "b0": 0.5, "sigma0": 1.0, "sigma1": 0.3},
        "additive-ou": {"H": 0.25, "x0": 0.0, "kappa": 0.5, "sigma0": 1.0},
        "rough-vol-1d": {
            "H": 0.1,
            "rho": -0.7,
            "v0": 0.0,
            "zeta0": 0.2,
            "zeta1": 0.1,
            "sigma_v0": 0.5,
            "sigma_v1": 0.2,
        },
    }


def make_model(name: str, grid: TimeGrid | None = None, **overrides):
    """Instantiate a catalog model, optionally overriding its parameters.

    gaussian      b = 0, sigma = sigma0, K_b = K_sigma = power law(H); the
                  kernel-smoothed Brownian curve, every closed form known.
    tanh-drift    b(x) = b0 tanh(x), sigma(x) = sigma0 + sigma1 sin(x), both
                  smooth and bounded with sigma0 > |sigma1| (ellipticity).
    additive-ou   b(x) = -kappa x, sigma = sigma0 constant, K_b = K_sigma.
    rough-vol-1d  log-price/variance pair; zeta(v) = zeta0 + zeta1 tanh(v),
                  variance factor has zero drift and
                  sigma_v(v) = sigma_v0 + sigma_v1 sin(v).
    """
    params = builtin_models().get(name)
    if params is None:
        raise KeyError(f"unknown builtin model {name!r}")
    params = dict(params)
    unknown = set(overrides) - set(params)
    if unknown:
        raise KeyError(f"unknown parameters for {name!r}: {sorted(unknown)}")
    params.update(overrides)
    if grid is None:
        grid = TimeGrid(0.0, 1.0, 256)

    if name == "gaussian":
        k = KernelSpec.power_law(params["H"], c_K=params["c_K"])
        coeffs = CoefficientSet(
            b=Coefficient1D("zero"),
            sigma=Coefficient1D("constant", c0=params["sigma0"]),
        )
        return SVEModel(name, coeffs, k, k, x0=params["x0"], grid=grid)
    if name == "tanh-drift":
        k = KernelSpec.power_law(params["H"])
        coeffs = CoefficientSet(
            b=Coefficient1D("scaled_tanh", c0=params["b0"], c1=1.0),
            sigma=Coefficient1D("sin_affine", c0=params["sigma0"], c1=params["sigma1"]),
        )
        return SVEModel(name, coeffs, k, k, x0=params["x0"], grid=grid)
    if name == "additive-ou":
        k = KernelSpec.power_law(params["H"])
        coeffs = CoefficientSet(
            b=Coefficient1D("linear", c0=0.0, c1=-params["kappa"]),
            sigma=Coefficient1D("constant", c0=params["sigma0"]),
        )
        return SVEModel(name, coeffs, k, k, x0=params["x0"], grid=grid)
    if name == "rough-vol-1d":
        k = KernelSpec.power_law(params["H"])
        coeffs = CoefficientSet(
            b=Coefficient1D("zero"),
            sigma=Coefficient1D(
                "sin_affine", c0=params["sigma_v0"], c1=params["sigma_v1"]
            ),
        )
        vmodel = SVEModel("rough-vol-1d/variance", coeffs, k, k, x0=params["v0"], grid=grid)
        zeta = Coefficient1D("tanh_affine", c0=params["zeta0"], c1=params["zeta1"])
        return RoughVolModel(name, vmodel, zeta, rho=params["rho"])
    raise AssertionError("unreachable")


def builtin_payoffs() -> dict[str, str]:
    return {
        "identity": "phi(y) = y (state, beta = 1, gradient 1)",
        "square": "phi(y) = y^2 (state, smooth, gradient 2y)",
        "call": "phi(y) = max(y - strike, 0) (state, beta = 1)",
        "exp_call": "phi(y) = max(exp(y) - strike, 0) (state)",
        "abs_power": "phi(y) = |y - center|^beta (state, declares its beta)",
        "sin": "phi(y) = sin(y) (state, beta = 1, gradient cos)",
        "constant": "phi = level (state, beta = 1)",
        "path_average": "phi(x) = mean of x over the grid nodes (path)",
    }


def make_payoff(name: str, **params) -> PayoffSpec:
    if name == "identity":
        return PayoffSpec("identity", "state", lambda y: y,
                          gradient=lambda y: np.ones_like(y), holder_beta=1.0)
    if name == "square":
        return PayoffSpec("square", "state", lambda y: y**2,
                          gradient=lambda y: 2.0 * y, holder_beta=None)
    if name == "call":
        kk = float(params.get("strike", 0.0))
        return PayoffSpec("call", "state", lambda y: np.maximum(y - kk, 0.0),
                          holder_beta=1.0)
    if name == "exp_call":
        kk = float(params.get("strike", 1.0))
        return PayoffSpec("exp_call", "state",
                          lambda y: np.maximum(np.exp(y) - kk, 0.0), holder_beta=None)
    if name == "abs_power":
        beta = float(params.get("beta", 0.5))
        c = float(params.get("center", 0.0))
        if not 0.0 < beta <= 1.0:
            raise ValueError("abs_power needs beta in (0, 1]")
        return PayoffSpec("abs_power", "state", lambda y: np.abs(y - c) ** beta,
                          holder_beta=beta)
    if name == "sin":
        return PayoffSpec("sin", "state", np.sin, gradient=np.cos, holder_beta=1.0)
    if name == "constant":
        lvl = float(params.get("level", 1.0))
        return PayoffSpec("constant", "state", lambda y: np.full_like(y, lvl),
                          gradient=lambda y: np.zeros_like(y), holder_beta=1.0)
    if name == "path_average":
        return PayoffSpec(
            "path_average", "path",
            lambda paths: paths.mean(axis=-1),
            gradient=lambda tangent: tangent.mean(axis=-1),
        )
    raise KeyError(f"unknown payoff {name!r}")
