"""Discrete right-sided fractional operators on grid functions.

The derivative-at-start operations implement two equivalent constructions of
the order-alpha derivative of (M_T - M_.) at t0 for a sampled track M:

* ``frac_derivative_at_start_increments``: the weighted increment sum
  sum_j w_j (M_{j+1} - M_j) with w_j the exact cell average of (s-t0)^(-alpha),
  i.e. the grid realisation of the integral of (s-t0)^(-alpha) against dM;
* ``frac_derivative_at_start_representation``: the boundary-plus-integral
  form ((M_T - M_t0)/(T-t0)^alpha + alpha * int (M_t - M_t0)(t-t0)^(-1-alpha) dt)
  / Gamma(1-alpha), with the integral taken against piecewise-linear M - M_t0.

For a piecewise-linear track both are exact integrals of the same object, so

    increments = Gamma(1-alpha) * representation

holds to rounding; the pair provides a free internal consistency check for
every estimator built on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma

from .grids import GridFunction, TimeGrid

__all__ = [
    "MartingaleTrack",
    "rl_integral_right",
    "rl_derivative_right",
    "frac_derivative_at_start_increments",
    "frac_derivative_at_start_representation",
]


@dataclass
class MartingaleTrack:
    """One realisation of a conditional-expectation track M at the grid nodes.

    ``values[n]`` must equal the payoff evaluated on the generating outer
    path; ``values[0]`` is the time-t0 (unconditional) level.
    """

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[-1] != self.grid.n + 1:
            raise ValueError("track must hold one value per grid node")


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 <= alpha < 0.5:
        raise ValueError(f"order must lie in [0, 1/2), got {alpha}")
    return alpha


def rl_integral_right(f: GridFunction, alpha: float, t_index: int) -> float:
    """(1/Gamma(alpha)) * int_t^T (s-t)^(alpha-1) f(s) ds at the node t = t_j.

    Product quadrature: piecewise-linear f against exact power moments, so
    the singular factor costs no accuracy.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"need alpha in (0,1), got {alpha}")
    grid, vals = f.grid, f.values
    n = grid.n
    if not 0 <= t_index <= n:
        raise ValueError("t_index out of range")
    if t_index == n:
        return 0.0
    t = grid.nodes[t_index]
    u = grid.nodes[t_index:] - t  # 0 = u_0 < u_1 < ... ; f on [t, T]
    fv = vals[t_index:]
    total = 0.0
    for i in range(len(u) - 1):
        ua, ub = u[i], u[i + 1]
        m = (fv[i + 1] - fv[i]) / (ub - ua)
        p1 = (ub**alpha - ua**alpha) / alpha
        p2 = (ub ** (alpha + 1.0) - ua ** (alpha + 1.0)) / (alpha + 1.0)
        total += fv[i] * p1 + m * (p2 - ua * p1)
    return total / gamma(alpha)


def rl_derivative_right(f: GridFunction, alpha: float, t_index: int) -> float:
    """Right derivative of order alpha at the node t = t_j < T.

    Uses the boundary-plus-difference form

        (1/Gamma(1-alpha)) [ f(t) (T-t)^(-alpha)
                             + alpha * int_t^T (f(t)-f(s)) (s-t)^(-1-alpha) ds ]

    with piecewise-linear f and exact power moments; the integrand vanishes
    linearly at s = t, so the -1-alpha power is harmless.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"need alpha in (0,1), got {alpha}")
    grid, vals = f.grid, f.values
    n = grid.n
    if not 0 <= t_index < n:
        raise ValueError("need a node strictly before T")
    t = grid.nodes[t_index]
    u = grid.nodes[t_index:] - t
    g = vals[t_index] - vals[t_index:]  # g(u) = f(t) - f(s), g(0) = 0
    integral = _power_weighted_integral(u, g, -1.0 - alpha)
    boundary = vals[t_index] * u[-1] ** (-alpha)
    return (boundary + alpha * integral) / gamma(1.0 - alpha)


def _power_weighted_integral(u: np.ndarray, g: np.ndarray, power: float) -> float:
    """int g(u) u^power du for piecewise-linear g with g(0) = 0, power > -2."""
    total = 0.0
    for i in range(len(u) - 1):
        ua, ub = u[i], u[i + 1]
        m = (g[i + 1] - g[i]) / (ub - ua)
        e1 = power + 1.0
        if ua == 0.0:
            # g vanishes at 0: contribution m * int u^{power+1} du
            total += m * ub ** (e1 + 1.0) / (e1 + 1.0)
            continue
        p1 = (ub**e1 - ua**e1) / e1 if e1 != 0.0 else math.log(ub / ua)
        p2 = (ub ** (e1 + 1.0) - ua ** (e1 + 1.0)) / (e1 + 1.0)
        total += g[i] * p1 + m * (p2 - ua * p1)
    return total


def frac_derivative_at_start_increments(track: MartingaleTrack, alpha: float) -> float:
    """Weighted increment sum sum_j w_j (M_{j+1} - M_j).

    w_j is the exact cell average of (s-t0)^(-alpha), finite for every cell
    including the first.  Equals Gamma(1-alpha) times the representation
    variant.  alpha = 0 telescopes to M_T - M_t0.
    """
    alpha = _check_alpha(alpha)
    w = increment_weights(track.grid, alpha)
    dm = np.diff(track.values, axis=-1)
    return float(np.dot(dm, w)) if dm.ndim == 1 else dm @ w


def increment_weights(grid: TimeGrid, alpha: float) -> np.ndarray:
    """Exact cell averages of (s-t0)^(-alpha) over the grid cells."""
    alpha = _check_alpha(alpha)
    n, dt = grid.n, grid.dt
    if alpha == 0.0:
        return np.ones(n)
    e = 1.0 - alpha
    v = (dt * np.arange(n + 1)) ** e
    return (v[1:] - v[:-1]) / (e * dt)


def frac_derivative_at_start_representation(track: MartingaleTrack, alpha: float) -> float:
    """Boundary-plus-integral form of the order-alpha derivative at t0."""
    alpha = _check_alpha(alpha)
    grid = track.grid
    m = np.asarray(track.values, dtype=float)
    span = grid.span
    dm0 = m[-1] - m[0]
    if alpha == 0.0:
        return dm0
    u = grid.nodes - grid.t0
    g = m - m[0]  # vanishes (exactly) at t0
    integral = _power_weighted_integral(u, g, -1.0 - alpha)
    return (dm0 * span ** (-alpha) + alpha * integral) / gamma(1.0 - alpha)
