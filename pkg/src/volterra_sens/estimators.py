"""Sensitivity estimators and their independent oracles.

Every weight-based estimator multiplies the payoff by a discrete Ito sum of
the form sum_j <factor_j * hbar*_j, dW_j> built from the same increments that
generated the paths.  Weight cell values always use exact cell averages of
the (possibly singular) preimage and of the power factor, the same product
integration discipline as the kernel scheme.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma

from .directions import DirectionSpec
from .engine import (
    PathBatch,
    TangentBatch,
    restart_terminal_states,
    shifted_curves_at,
    simulate_rough_vol,
    simulate_with_curve_bump,
    _coef_caches,
)
from .fractional import increment_weights, frac_derivative_at_start_representation, MartingaleTrack
from .grids import TimeGrid
from .kernels import lag_cell_averages
from .models import PayoffSpec, RoughVolModel, SVEModel
from .seeds import SeedSpec

__all__ = [
    "Estimate",
    "WeightTrack",
    "bel_weight",
    "estimate_bel",
    "martingale_tracks",
    "estimate_fractional",
    "estimate_fractional_singular",
    "estimate_additive",
    "estimate_second_order",
    "estimate_rough_vol_greek",
    "fd_oracle",
    "chain_rule_oracle",
    "kernel_direction_cells",
]

INNER_CHUNK = 256  # fixed outer-path chunk for nested runs (determinism)


@dataclass
class Estimate:
    """Monte Carlo estimate with its reproducibility record."""

    value: float
    std_error: float
    n_paths: int
    estimator: str
    seed_descriptor: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    wall_ms: float = 0.0

    def to_record(self) -> dict:
        rec = {
            "estimator": self.estimator,
            "value": self.value,
            "std_error": self.std_error,
            "n_paths": self.n_paths,
            "seed": self.seed_descriptor.get("master_seed"),
            "wall_ms": self.wall_ms,
        }
        rec.update({f"param_{k}": v for k, v in sorted(self.params.items())})
        return rec

    def agrees_with(self, other: "Estimate", n_se: float = 3.0) -> bool:
        tol = n_se * math.hypot(self.std_error, other.std_error)
        return abs(self.value - other.value) <= tol


@dataclass
class WeightTrack:
    """Per-path scalar Malliavin-type weights."""

    values: np.ndarray
    tag: str = "weight"

    def diagnostics(self) -> dict:
        v = self.values
        return {
            "weight_mean": float(v.mean()),
            "weight_var": float(v.var(ddof=1)),
            "weight_se": float(v.std(ddof=1) / math.sqrt(len(v))),
        }


def _finish(samples: np.ndarray, tag: str, seed_desc: dict, diagnostics: dict,
            params: dict, t_start: float) -> Estimate:
    n = len(samples)
    return Estimate(
        value=float(samples.mean()),
        std_error=float(samples.std(ddof=1) / math.sqrt(n)),
        n_paths=n,
        estimator=tag,
        seed_descriptor=dict(seed_desc),
        diagnostics=diagnostics,
        params=params,
        wall_ms=1e3 * (time.perf_counter() - t_start),
    )


def _payoff_samples(payoff: PayoffSpec, batch: PathBatch) -> np.ndarray:
    states = batch.X[..., 0] if batch.is_rough_vol else batch.X
    if payoff.kind == "state":
        return payoff(states[:, -1])
    return payoff(states)


# ---------------------------------------------------------------------------
# first-order weights


def bel_weight(batch: PathBatch, model: SVEModel, hstar_cells: np.ndarray,
               power_alpha: float | None = None) -> WeightTrack:
    """pi_p = sum_j xi(t_j, X_j) * hbar*_j * dW_j for one path batch.

    ``hstar_cells`` are exact cell averages of the preimage (already carrying
    the (s-t0)^alpha factor when ``power_alpha`` was applied upstream by the
    direction; the argument only labels the weight).
    """
    xi = model.coeffs.xi(batch.X[:, :-1])
    pi = (xi * batch.dW) @ np.asarray(hstar_cells, dtype=float)
    tag = "bel" if power_alpha is None else f"power[{power_alpha}]"
    return WeightTrack(values=pi, tag=tag)


def estimate_bel(
    batch: PathBatch,
    model: SVEModel,
    payoff: PayoffSpec,
    direction: DirectionSpec,
    control_variate: bool = True,
) -> Estimate:
    """First-order estimate along a square-integrable-preimage direction.

    Samples are phi(X) * pi; with ``control_variate`` the payoff is centred
    at its sample mean and rescaled by P/(P-1), which keeps the estimator
    exactly unbiased because the weight has zero mean.
    """
    t_start = time.perf_counter()
    cells = direction.preimage_cell_averages(batch.grid, model.K_sigma)
    w = bel_weight(batch, model, cells)
    phi = _payoff_samples(payoff, batch)
    P = batch.n_paths
    if control_variate:
        samples = (phi - phi.mean()) * w.values * (P / (P - 1.0))
    else:
        samples = phi * w.values
    diags = w.diagnostics()
    diags["control_variate"] = control_variate
    return _finish(samples, "bel", batch.seed_descriptor, diags,
                   {"direction": direction.kind}, t_start)


# ---------------------------------------------------------------------------
# nested martingale tracks and the fractional estimator


def martingale_tracks(
    batch: PathBatch,
    model: SVEModel,
    payoff: PayoffSpec,
    inner_budget: int,
    seed: SeedSpec,
    outer_chunk: int = INNER_CHUNK,
) -> tuple[np.ndarray, dict]:
    """Nested Monte Carlo estimate of t -> E[phi(X_T) | F_t] per outer path.

    Returns (M, diagnostics) with M of shape (P, n+1):

    * M[:, n] is the payoff on the outer path (exact),
    * M[:, 0] is the pooled outer mean (time-t0 value is deterministic),
    * M[:, k] for 0 < k < n averages ``inner_budget`` fresh restarted paths
      started from the shifted curve of node k.

    Inner streams are keyed by (restart node, outer chunk) with a fixed chunk
    size, independent across restarts and outer paths and independent of the
    outer noise.  Zero-drift constant-sigma models use the exact conditional
    law (the restarted terminal state is Gaussian around the shifted curve's
    endpoint), which costs one draw per replicate instead of one per step.
    """
    if payoff.kind != "state":
        raise ValueError("nested tracks require a state payoff")
    if inner_budget < 2:
        raise ValueError("inner_budget must be at least 2")
    grid = batch.grid
    n, dt = grid.n, grid.dt
    P = batch.n_paths
    M = np.empty((P, n + 1))
    phi_T = payoff(batch.X[:, -1])
    M[:, n] = phi_T
    M[:, 0] = phi_T.mean()
    caches = _coef_caches(model, batch)
    inner_var_sum = 0.0
    inner_var_terms = 0

    gaussian = model.is_gaussian
    ws = lag_cell_averages(model.K_sigma, grid)
    sigma0 = float(model.coeffs.sigma(0.0)) if gaussian else 0.0
    sqdt = math.sqrt(dt)

    for k in range(1, n):
        xt = shifted_curves_at(batch, model, k, caches)
        if gaussian:
            # X_T | F_{t_k} ~ N(xtilde(T), sigma0^2 sum_{l<=n-k} wbar_l^2 dt)
            std_k = sigma0 * math.sqrt(float(np.sum(ws[1 : n - k + 1] ** 2)) * dt)
        for lo in range(0, P, outer_chunk):
            hi = min(lo + outer_chunk, P)
            gen = seed.stream("inner", k, lo // outer_chunk)
            if gaussian:
                z = SeedSpec.normals(gen, (hi - lo, inner_budget))
                term = xt[lo:hi, -1][:, None] + std_k * z
            else:
                z = SeedSpec.normals(gen, (hi - lo, inner_budget, n - k)) * sqdt
                term = restart_terminal_states(xt[lo:hi], z, model, grid)
            vals = payoff(term)
            M[lo:hi, k] = vals.mean(axis=1)
            inner_var_sum += float(vals.var(axis=1, ddof=1).mean()) / inner_budget
            inner_var_terms += 1

    diags = {
        "inner_budget": inner_budget,
        "mean_inner_noise_var": inner_var_sum / max(inner_var_terms, 1),
        "outer_chunk": outer_chunk,
    }
    return M, diags


def _weighted_ito_sum(batch: PathBatch, model: SVEModel, direction: DirectionSpec,
                      alpha: float) -> WeightTrack:
    """pi_alpha: the Ito sum against exact cell averages of (s-t0)^alpha h*(s)."""
    cells = direction.preimage_cell_averages(batch.grid, model.K_sigma, alpha=alpha)
    return bel_weight(batch, model, cells, power_alpha=alpha)


def estimate_fractional(
    batch: PathBatch,
    model: SVEModel,
    payoff: PayoffSpec,
    direction: DirectionSpec,
    alpha: float,
    inner_budget: int = 64,
    seed: SeedSpec | int = 0,
    tracks: np.ndarray | None = None,
    variant: str = "increments",
    inner_noise_threshold: float | None = None,
) -> Estimate:
    """Fractional-derivative estimator for state payoffs.

    Per outer path the sampled quantity is F_p * pi_alpha;p where F_p is the
    weighted increment sum of the nested conditional-expectation track
    (realising the integral of (s-t0)^(-alpha) against dM) and pi_alpha the
    Ito sum of (s-t0)^alpha xi h* against the outer increments.  The
    Gamma(1-alpha) prefactor of the derivative form is absorbed: with
    variant="representation" the track derivative is computed from the
    boundary-plus-integral form and multiplied by Gamma(1-alpha); both
    variants agree to rounding on the same tracks.

    Pass precomputed ``tracks`` (from :func:`martingale_tracks`) to reuse the
    nested runs across several alphas.
    """
    t_start = time.perf_counter()
    if isinstance(seed, int):
        seed = SeedSpec(seed)
    if payoff.kind != "state":
        raise ValueError("fractional estimator requires a state payoff")
    beta = payoff.holder_beta
    if beta is None:
        raise ValueError(f"payoff {payoff.name!r} declares no Holder exponent")
    if not 0.0 < alpha < 0.5 * beta:
        raise ValueError(f"need 0 < alpha < beta/2 = {0.5 * beta}, got {alpha}")
    if not direction.in_h_alpha(alpha, model.K_sigma):
        raise ValueError("direction is not admissible at this alpha")

    diags: dict = {}
    if tracks is None:
        tracks, track_diags = martingale_tracks(batch, model, payoff, inner_budget, seed)
        diags.update(track_diags)
    grid = batch.grid
    if variant == "increments":
        w_inc = increment_weights(grid, alpha)
        F = np.diff(tracks, axis=1) @ w_inc
    elif variant == "representation":
        F = gamma(1.0 - alpha) * np.array([
            frac_derivative_at_start_representation(MartingaleTrack(grid, row), alpha)
            for row in tracks
        ])
    else:
        raise ValueError(f"unknown variant {variant!r}")

    w = _weighted_ito_sum(batch, model, direction, alpha)
    samples = F * w.values
    diags.update(w.diagnostics())
    diags["track_increment_var"] = float(np.diff(tracks, axis=1).var())
    if inner_noise_threshold is not None and "mean_inner_noise_var" in diags:
        outer_scale = max(float(tracks[:, 1:-1].var()), 1e-300)
        ratio = diags["mean_inner_noise_var"] / outer_scale
        diags["inner_noise_ratio"] = ratio
        diags["inner_budget_underflow"] = bool(ratio > inner_noise_threshold)
    return _finish(samples, "fractional", batch.seed_descriptor, diags,
                   {"alpha": alpha, "variant": variant,
                    "direction": direction.kind}, t_start)


def estimate_fractional_singular(
    batch: PathBatch,
    model: SVEModel,
    payoff: PayoffSpec,
    gamma_exp: float,
    alpha: float,
    delta_sequence: tuple[float, ...],
    amplitude: float = 1.0,
    inner_budget: int = 64,
    seed: SeedSpec | int = 0,
    tracks: np.ndarray | None = None,
) -> tuple[Estimate, list[dict]]:
    """Fractional estimate along h(t) = A (t-t0)^(gamma-1/2) plus its
    plateau-truncated approximations h_delta, exhibiting the delta -> 0 limit.

    Returns the estimate for the singular direction and one record per delta
    with the truncated estimate, the gap |est(h_delta) - est(h)|, and the
    deterministic direction-space distance between h_delta and h.
    """
    H = model.K_sigma.H
    if not gamma_exp > 0.5 + H - alpha:
        raise ValueError(
            f"need gamma > 1/2 + H - alpha = {0.5 + H - alpha}, got {gamma_exp}"
        )
    if not alpha > H:
        raise ValueError("truncated plateau directions need alpha > H")
    if isinstance(seed, int):
        seed = SeedSpec(seed)
    if tracks is None:
        tracks, _ = martingale_tracks(batch, model, payoff, inner_budget, seed)
    base = DirectionSpec("power_law", gamma_exp=gamma_exp, amplitude=amplitude)
    est = estimate_fractional(batch, model, payoff, base, alpha,
                              inner_budget, seed, tracks=tracks)
    records = []
    span = batch.grid.span
    for delta in delta_sequence:
        if not 0.0 < delta < span:
            raise ValueError(f"delta {delta} outside (0, span)")
        d_trunc = DirectionSpec("power_law_truncated", gamma_exp=gamma_exp,
                                amplitude=amplitude, delta=delta)
        est_d = estimate_fractional(batch, model, payoff, d_trunc, alpha,
                                    inner_budget, seed, tracks=tracks)
        dist = _direction_gap_norm(gamma_exp, delta, amplitude, alpha, model, batch.grid)
        records.append({
            "delta": delta,
            "estimate": est_d.value,
            "std_error": est_d.std_error,
            "gap": abs(est_d.value - est.value),
            "direction_distance": dist,
        })
    return est, records


def _direction_gap_norm(gamma_exp: float, delta: float, amplitude: float,
                        alpha: float, model: SVEModel, grid: TimeGrid) -> float:
    """Weighted-norm distance between the singular direction and its truncation."""
    from .directions import truncated_power_law_preimage, _power_law_constant

    H = model.K_sigma.H
    k = model.K_sigma
    coef = amplitude * _power_law_constant(gamma_exp, H) / k.c_K
    gl_x, gl_w = np.polynomial.legendre.leggauss(16)
    total = 0.0
    edges = np.concatenate([
        np.geomspace(grid.span * 1e-8, delta, 64),
        np.linspace(delta, grid.span, 129)[1:],
    ])
    for a, b in zip(edges[:-1], edges[1:]):
        u = 0.5 * (a + b) + 0.5 * (b - a) * gl_x
        pure = coef * u ** (gamma_exp - H - 1.0)
        trunc = truncated_power_law_preimage(gamma_exp, delta, k, grid.t0 + u,
                                             grid.t0, amplitude)
        total += 0.5 * (b - a) * float(np.dot(gl_w, u ** (2 * alpha) * (pure - trunc) ** 2))
    return math.sqrt(total)


# ---------------------------------------------------------------------------
# additive-noise estimator


def kernel_direction_cells(model: SVEModel, grid: TimeGrid) -> tuple[np.ndarray, float]:
    """Cell averages and terminal value of the unbounded direction h(t) = K(t, t0)."""
    # cell i sits at distance [i dt, (i+1) dt] from t0, i.e. lag i+1
    cells = lag_cell_averages(model.K_sigma, grid)[1:]
    k = model.K_sigma
    if k.kind == "power_law":
        h_T = k.c_K * grid.span ** (k.H - 0.5)
    elif k.kind == "constant":
        h_T = k.level
    else:
        h_T = 0.0
    return cells, float(h_T)


def estimate_additive(
    batch: PathBatch,
    model: SVEModel,
    payoff: PayoffSpec,
    h_cells: np.ndarray,
    h_T: float,
    u_cells: np.ndarray | None = None,
) -> Estimate:
    """State-payoff estimator for additive noise and equal kernels.

    Builds a_s = u_s / int K(T,r) u_r dr, the running kernel mass
    A(t) = int_t0^t K(t,r) a_r dr, and the weight process

        eta_j = (1/sigma0) [ b'(X_j) (hbar_j - A(t_j) h(T)) + abar_j h(T) ],

    then averages phi(X_T) * sum_j eta_j dW_j.  ``h_cells`` are per-cell
    averages of the direction itself (exact for singular directions such as
    the kernel started at t0); any square-integrable h is admissible.
    """
    t_start = time.perf_counter()
    if not model.is_additive:
        raise ValueError("additive estimator requires constant sigma")
    if not model.equal_kernels:
        raise ValueError("additive estimator requires K_b = K_sigma")
    if payoff.kind != "state":
        raise ValueError("additive estimator requires a state payoff")
    grid = batch.grid
    n, dt = grid.n, grid.dt
    lags = lag_cell_averages(model.K_sigma, grid)
    if u_cells is None:
        u_cells = np.ones(n)
    norm = dt * float(np.dot(lags[n - np.arange(n)], u_cells))
    if abs(norm) < 1e-14:
        raise ValueError("normalisation integral int K(T,r) u_r dr is singular")
    a_cells = np.asarray(u_cells, dtype=float) / norm
    # A at the left nodes t_j, j = 0..n-1 (A(t_0) = 0)
    A_nodes = np.zeros(n)
    for j in range(1, n):
        A_nodes[j] = dt * float(np.dot(lags[j - np.arange(j)], a_cells[:j]))
    sigma0 = float(model.coeffs.sigma(0.0))
    dbdx = model.coeffs.b.deriv(batch.X[:, :-1])
    eta = (dbdx * (np.asarray(h_cells, float)[None, :] - A_nodes[None, :] * h_T)
           + a_cells[None, :] * h_T) / sigma0
    pi = np.einsum("pj,pj->p", eta, batch.dW)
    w = WeightTrack(pi, tag="additive")
    phi = payoff(batch.X[:, -1])
    P = batch.n_paths
    samples = (phi - phi.mean()) * pi * (P / (P - 1.0))
    diags = w.diagnostics()
    return _finish(samples, "additive", batch.seed_descriptor, diags,
                   {"h_T": h_T}, t_start)


# ---------------------------------------------------------------------------
# second order


def estimate_second_order(
    batch: PathBatch,
    model: SVEModel,
    payoff: PayoffSpec,
    direction_g: DirectionSpec,
    direction_h: DirectionSpec,
) -> Estimate:
    """Second derivative along (g, h): phi * (pi_h pi_g - int xi^2 h* g* ds).

    The correction integral shares the simulated states with the two weights;
    per path it is dt * sum_j xi(t_j, X_j)^2 hbar*_j gbar*_j.
    """
    t_start = time.perf_counter()
    grid = batch.grid
    g_cells = direction_g.preimage_cell_averages(grid, model.K_sigma)
    h_cells = direction_h.preimage_cell_averages(grid, model.K_sigma)
    w_g = bel_weight(batch, model, g_cells)
    w_h = bel_weight(batch, model, h_cells)
    xi = model.coeffs.xi(batch.X[:, :-1])
    correction = grid.dt * ((xi**2) @ (h_cells * g_cells))
    phi = _payoff_samples(payoff, batch)
    samples = phi * (w_h.values * w_g.values - correction)
    diags = {
        "weight_mean_g": float(w_g.values.mean()),
        "weight_mean_h": float(w_h.values.mean()),
        "correction_mean": float(correction.mean()),
    }
    return _finish(samples, "second_order", batch.seed_descriptor, diags, {}, t_start)


# ---------------------------------------------------------------------------
# rough volatility


def estimate_rough_vol_greek(
    batch: PathBatch,
    model: RoughVolModel,
    payoff: PayoffSpec,
    direction: DirectionSpec,
    control_variate: bool = True,
) -> Estimate:
    """Sensitivity of E[phi(log-price)] to the variance initial curve.

    The weight integrates only against the orthogonal factor:
    pi = sum_j rho_bar^{-1} xi(t_j, V_j) hbar*_j dW_perp;j.
    """
    t_start = time.perf_counter()
    if not batch.is_rough_vol:
        raise ValueError("needs a rough-volatility batch")
    vmodel = model.variance_model
    cells = direction.preimage_cell_averages(batch.grid, vmodel.K_sigma)
    V = batch.X[:, :-1, 1]
    xi = vmodel.coeffs.xi(V)
    pi = (xi * batch.dW[:, :, 0]) @ cells / model.rho_bar
    w = WeightTrack(pi, tag="rough_vol")
    phi = _payoff_samples(payoff, batch)
    P = batch.n_paths
    if control_variate:
        samples = (phi - phi.mean()) * pi * (P / (P - 1.0))
    else:
        samples = phi * pi
    return _finish(samples, "rough_vol", batch.seed_descriptor, w.diagnostics(),
                   {"rho": model.rho}, t_start)


# ---------------------------------------------------------------------------
# oracles


def fd_oracle(
    model: SVEModel | RoughVolModel,
    payoff: PayoffSpec,
    direction: DirectionSpec,
    epsilon: float,
    grid: TimeGrid,
    n_paths: int,
    seed: SeedSpec | int,
    decouple_seeds: bool = False,
) -> Estimate:
    """Central finite difference of the curve sensitivity under common noise.

    Both ensembles use identical streams, so the per-path difference is the
    low-variance pathwise sample.  ``decouple_seeds=True`` deliberately breaks
    the coupling (the documented anti-pattern) by shifting the master seed of
    the down-bump run.
    """
    t_start = time.perf_counter()
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if isinstance(seed, int):
        seed = SeedSpec(seed)
    rough = isinstance(model, RoughVolModel)
    kernel = model.variance_model.K_sigma if rough else model.K_sigma
    h = direction.h_values(grid, kernel)
    if not np.all(np.isfinite(h)):
        raise ValueError("finite-difference oracle needs a direction finite at all nodes")
    seed_minus = SeedSpec((seed.master_seed + 1) % 2**64) if decouple_seeds else seed
    if rough:
        up = simulate_rough_vol(model, grid, n_paths, seed, curve_bump=epsilon * h)
        dn = simulate_rough_vol(model, grid, n_paths, seed_minus, curve_bump=-epsilon * h)
    else:
        up = simulate_with_curve_bump(model, grid, n_paths, seed, epsilon * h)
        dn = simulate_with_curve_bump(model, grid, n_paths, seed_minus, -epsilon * h)
    samples = (_payoff_samples(payoff, up) - _payoff_samples(payoff, dn)) / (2.0 * epsilon)
    return _finish(samples, "fd", seed.describe("paths"),
                   {"coupled": not decouple_seeds}, {"epsilon": epsilon}, t_start)


def chain_rule_oracle(
    batch: PathBatch,
    tangent: TangentBatch,
    payoff: PayoffSpec,
) -> Estimate:
    """Pathwise derivative: mean of grad-phi applied to the tangent process."""
    t_start = time.perf_counter()
    if payoff.gradient is None:
        raise ValueError(f"payoff {payoff.name!r} has no analytic gradient")
    if payoff.kind == "state":
        samples = payoff.grad(batch.X[:, -1]) * tangent.Y[:, -1]
    else:
        samples = payoff.gradient(tangent.Y)
    return _finish(samples, "chain_rule", batch.seed_descriptor, {}, {}, t_start)
