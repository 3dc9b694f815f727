"""Perturbation directions of the initial curve and their kernel preimages.

A direction h is admissible for the weight-based estimators when it can be
written as h(t) = int_t0^t K(t,s) h*(s) ds for a preimage h* that is square
integrable, possibly against the weight (s-t0)^(2*alpha).  Closed-form
preimages are implemented for two families on power-law kernels:

* power_law:  h(t) = A (t-t0)^(gamma-1/2)  =>  h*(s) = A c(gamma,H) (s-t0)^(gamma-H-1)
              with c(gamma,H) = Gamma(gamma+1/2) / (Gamma(gamma-H) Gamma(H+1/2)),
* constant:   h = L  =>  h*(s) = L (s-t0)^(-H-1/2) / (Gamma(H+1/2) Gamma(1/2-H)),

both divided by the kernel scale c_K.  The constants are verified by the
forward-map round-trip test rather than trusted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma, hyp2f1

from .grids import GridFunction, TimeGrid
from .kernels import KernelSpec, lag_cell_averages

__all__ = [
    "DirectionSpec",
    "DirectionAdmissibilityError",
    "preimage",
    "apply_forward",
    "direction_norm",
    "truncated_power_law_preimage",
]


class DirectionAdmissibilityError(ValueError):
    """Direction/space pair violates an admissibility bound."""


def _power_law_constant(gamma_exp: float, H: float) -> float:
    """c(gamma, H) for the power-law preimage; needs gamma > H."""
    if gamma_exp <= H:
        raise DirectionAdmissibilityError(
            f"power-law direction needs gamma > H, got gamma={gamma_exp}, H={H}"
        )
    return gamma(gamma_exp + 0.5) / (gamma(gamma_exp - H) * gamma(H + 0.5))


def _constant_dir_constant(H: float) -> float:
    """1 / (Gamma(H+1/2) Gamma(1/2-H)); requires H < 1/2."""
    if H >= 0.5:
        raise DirectionAdmissibilityError(
            f"constant directions need a singular kernel (H < 1/2), got H={H}"
        )
    return 1.0 / (gamma(H + 0.5) * gamma(0.5 - H))


@dataclass(frozen=True)
class DirectionSpec:
    """Direction of a curve perturbation, stored through its preimage data.

    kind = "power_law":           h(t) = amplitude * (t - t0)^(gamma - 1/2)
    kind = "constant":            h(t) = level
    kind = "power_law_truncated": h(t) = amplitude * (delta v (t - t0))^(gamma - 1/2)
    kind = "preimage_given":      h* supplied directly as a GridFunction

    ``alpha_weight`` is an optional alpha in [0, 1/2) used when reporting the
    weighted norm; it does not affect the direction itself.
    """

    kind: str
    gamma_exp: float = 1.0
    amplitude: float = 1.0
    level: float = 1.0
    delta: float = 0.0
    hstar: GridFunction | None = None
    alpha_weight: float | None = None

    def __post_init__(self):
        if self.kind not in (
            "power_law",
            "constant",
            "power_law_truncated",
            "preimage_given",
        ):
            raise ValueError(f"unknown direction kind {self.kind!r}")
        if self.kind == "preimage_given" and self.hstar is None:
            raise ValueError("preimage_given requires hstar")
        if self.kind == "power_law_truncated" and self.delta <= 0.0:
            raise ValueError("power_law_truncated requires delta > 0")

    # ---- membership ------------------------------------------------------

    def preimage_exponent(self, kernel: KernelSpec) -> float | None:
        """Exponent p with h*(s) ~ (s-t0)^p, for the closed-form families."""
        if self.kind == "power_law":
            return self.gamma_exp - kernel.H - 1.0
        if self.kind == "constant":
            return -kernel.H - 0.5
        return None

    def in_h(self, kernel: KernelSpec) -> bool:
        """Square-integrable preimage (the alpha = 0 space)."""
        return self.in_h_alpha(0.0, kernel)

    def in_h_alpha(self, alpha: float, kernel: KernelSpec) -> bool:
        """Preimage square integrable against (s-t0)^(2 alpha)."""
        if self.kind == "preimage_given":
            return bool(np.all(np.isfinite(self.hstar.finite_values())))
        if kernel.kind != "power_law":
            return False
        if self.kind in ("constant", "power_law_truncated"):
            # both start from a flat plateau, preimage ~ (s-t0)^(-H-1/2)
            return alpha > kernel.H
        if self.gamma_exp <= kernel.H:
            return False
        p = self.preimage_exponent(kernel)
        return 2.0 * alpha + 2.0 * p + 1.0 > 0.0

    # ---- sampled representations ----------------------------------------

    def h_values(self, grid: TimeGrid, kernel: KernelSpec) -> np.ndarray:
        """Direction values h(t_j) at the grid nodes."""
        t = grid.nodes - grid.t0
        if self.kind == "constant":
            return np.full(grid.n + 1, float(self.level))
        if self.kind == "power_law_truncated":
            return self.amplitude * np.maximum(t, self.delta) ** (self.gamma_exp - 0.5)
        if self.kind == "power_law":
            e = self.gamma_exp - 0.5
            with np.errstate(divide="ignore"):
                vals = np.where(t > 0, t, 1.0) ** e
            vals = self.amplitude * np.where(t > 0, vals, 0.0 if e > 0 else np.inf)
            if e == 0.0:
                vals[0] = self.amplitude
            return vals
        return apply_forward(self.hstar, kernel, grid).values

    def preimage_values(self, grid: TimeGrid, kernel: KernelSpec) -> GridFunction:
        return preimage(self, kernel, grid)

    def preimage_cell_averages(
        self, grid: TimeGrid, kernel: KernelSpec, alpha: float = 0.0
    ) -> np.ndarray:
        """Exact cell averages of (s-t0)^alpha * h*(s) over each grid cell.

        alpha = 0 gives the plain cell-averaged preimage used by the
        estimator weights; the closed-form families stay exact even when the
        preimage is singular at t0.
        """
        n, dt = grid.n, grid.dt
        if self.kind == "preimage_given":
            vals = self.hstar.values
            cells = 0.5 * (vals[:-1] + vals[1:])
            bad = ~np.isfinite(cells)
            cells[bad] = vals[1:][bad]  # graded fallback at a singular left node
            if alpha != 0.0:
                v = (dt * np.arange(n + 1)) ** (alpha + 1.0)
                cells = cells * (v[1:] - v[:-1]) / ((alpha + 1.0) * dt)
            return cells
        if self.kind == "power_law_truncated":
            return self._truncated_cell_averages(grid, kernel, alpha)
        coef, p = self._family_coef(kernel)
        q = p + alpha
        if q <= -1.0:
            raise DirectionAdmissibilityError(
                f"(s-t0)^{q} is not integrable over the first cell"
            )
        v = (dt * np.arange(n + 1)) ** (q + 1.0)
        return coef * (v[1:] - v[:-1]) / ((q + 1.0) * dt)

    def h_cell_averages(self, grid: TimeGrid, kernel: KernelSpec) -> np.ndarray:
        """Exact cell averages of the direction h itself (not the preimage).

        Used by weights that integrate h directly, where node values would be
        infinite for singular power directions.
        """
        n, dt = grid.n, grid.dt
        if self.kind == "constant":
            return np.full(n, float(self.level))
        if self.kind == "power_law":
            e = self.gamma_exp + 0.5
            v = (dt * np.arange(n + 1)) ** e
            return self.amplitude * (v[1:] - v[:-1]) / (e * dt)
        if self.kind == "power_law_truncated":
            e = self.gamma_exp + 0.5
            lvl = self.amplitude * self.delta ** (self.gamma_exp - 0.5)
            out = np.empty(n)
            for i in range(n):
                a, b = i * dt, (i + 1) * dt
                if b <= self.delta:
                    out[i] = lvl
                elif a >= self.delta:
                    out[i] = self.amplitude * (b**e - a**e) / (e * dt)
                else:
                    out[i] = (
                        lvl * (self.delta - a)
                        + self.amplitude * (b**e - self.delta**e) / e
                    ) / dt
            return out
        vals = self.h_values(grid, kernel)
        return 0.5 * (vals[:-1] + vals[1:])

    def _truncated_cell_averages(
        self, grid: TimeGrid, kernel: KernelSpec, alpha: float
    ) -> np.ndarray:
        """Cell averages of (s-t0)^alpha * h_delta*(s) for the truncated family.

        Plateau cells use the exact power integral; cells past (or containing)
        t0 + delta use Gauss-Legendre sub-quadrature of the closed form,
        split at the kink.
        """
        H = kernel.H
        n, dt, t0 = grid.n, grid.dt, grid.t0
        delta = self.delta
        base = self.amplitude * _constant_dir_constant(H) / kernel.c_K
        lvl = base * delta ** (self.gamma_exp - 0.5)
        q = alpha - H - 0.5
        if q <= -1.0:
            raise DirectionAdmissibilityError("plateau integral diverges")
        gl_x, gl_w = np.polynomial.legendre.leggauss(8)

        def gl_piece(a: float, b: float) -> float:
            s = t0 + 0.5 * (a + b) + 0.5 * (b - a) * gl_x
            f = truncated_power_law_preimage(
                self.gamma_exp, delta, kernel, s, t0, self.amplitude
            )
            if alpha != 0.0:
                f = f * (s - t0) ** alpha
            return 0.5 * (b - a) * float(np.dot(gl_w, f))

        out = np.empty(n)
        for i in range(n):
            a, b = i * dt, (i + 1) * dt
            if b <= delta:
                out[i] = lvl * (b ** (q + 1.0) - a ** (q + 1.0)) / ((q + 1.0) * dt)
            elif a >= delta:
                out[i] = gl_piece(a, b) / dt
            else:
                plateau = lvl * (delta ** (q + 1.0) - a ** (q + 1.0)) / (q + 1.0)
                out[i] = (plateau + gl_piece(delta, b)) / dt
        return out

    def _family_coef(self, kernel: KernelSpec) -> tuple[float, float]:
        """(coefficient, exponent) with h*(s) = coef * (s-t0)^exponent."""
        if kernel.kind != "power_law":
            raise DirectionAdmissibilityError(
                "closed-form preimages require a power-law kernel"
            )
        if self.kind == "constant":
            return self.level * _constant_dir_constant(kernel.H) / kernel.c_K, -kernel.H - 0.5
        if self.kind == "power_law":
            c = _power_law_constant(self.gamma_exp, kernel.H)
            return self.amplitude * c / kernel.c_K, self.gamma_exp - kernel.H - 1.0
        raise DirectionAdmissibilityError("no closed-form preimage for this kind")


def preimage(direction: DirectionSpec, kernel: KernelSpec, grid: TimeGrid) -> GridFunction:
    """Preimage h* sampled at the grid nodes (identity for preimage_given).

    Values singular at t0 are returned as inf with the node flagged in
    ``singular_mask``; downstream quadrature uses exact cell averages.
    """
    if direction.kind == "preimage_given":
        return direction.hstar
    coef, p = direction._family_coef(kernel)
    t = grid.nodes - grid.t0
    with np.errstate(divide="ignore"):
        vals = coef * np.where(t > 0, t, 1.0) ** p
    mask = np.zeros(grid.n + 1, dtype=bool)
    if p < 0:
        vals[0] = np.inf if coef > 0 else (-np.inf if coef < 0 else 0.0)
        mask[0] = coef != 0.0
    elif p == 0:
        vals[0] = coef
    else:
        vals[0] = 0.0
    return GridFunction(grid, vals, singular_mask=mask)


def apply_forward(
    hstar: GridFunction | np.ndarray,
    kernel: KernelSpec,
    grid: TimeGrid,
    cell_averages: np.ndarray | None = None,
) -> GridFunction:
    """Forward map h(t_j) = int_{t0}^{t_j} K(t_j, s) h*(s) ds.

    Product quadrature: exact cell averages of the kernel times per-cell
    averages of h*.  Pass ``cell_averages`` for exact handling of preimages
    that are singular at t0 (DirectionSpec provides them for the closed-form
    families); otherwise endpoint means are used, grading to the right
    endpoint on a cell whose left value is not finite.
    """
    if cell_averages is None:
        vals = hstar.values if isinstance(hstar, GridFunction) else np.asarray(hstar, float)
        cell_averages = 0.5 * (vals[:-1] + vals[1:])
        bad = ~np.isfinite(cell_averages)
        cell_averages[bad] = vals[1:][bad]
    lags = lag_cell_averages(kernel, grid)
    n, dt = grid.n, grid.dt
    out = np.zeros(n + 1)
    for j in range(1, n + 1):
        out[j] = dt * np.dot(lags[j - np.arange(j)], cell_averages[:j])
    return GridFunction(grid, out)


def direction_norm(
    direction: DirectionSpec,
    alpha: float,
    grid: TimeGrid,
    kernel: KernelSpec,
) -> float:
    """Weighted preimage norm (int (s-t0)^(2 alpha) |h*(s)|^2 ds)^(1/2).

    Exact for the closed-form power families; graded quadrature (exact power
    weights against piecewise-linear |h*|^2) for supplied preimages.  Raises
    DirectionAdmissibilityError when the integral diverges.
    """
    if not 0.0 <= alpha < 0.5:
        raise ValueError(f"need alpha in [0, 1/2), got {alpha}")
    span = grid.span
    if direction.kind == "preimage_given":
        vals = direction.hstar.values
        if not np.all(np.isfinite(vals)):
            raise DirectionAdmissibilityError("supplied preimage has non-finite nodes")
        sq = vals**2
        v = grid.nodes - grid.t0
        total = 0.0
        for i in range(grid.n):
            a, b = v[i], v[i + 1]
            m = (sq[i + 1] - sq[i]) / (b - a)
            # int (A + m(s-a)) s^(2 alpha) ds with exact power moments
            e1 = 2.0 * alpha + 1.0
            p1 = (b**e1 - a**e1) / e1
            p2 = (b ** (e1 + 1.0) - a ** (e1 + 1.0)) / (e1 + 1.0)
            total += sq[i] * p1 + m * (p2 - a * p1)
        return math.sqrt(total)
    if direction.kind == "power_law_truncated":
        H = kernel.H
        if alpha <= H:
            raise DirectionAdmissibilityError(
                f"truncated directions need alpha > H, got alpha={alpha}, H={H}"
            )
        base = direction.amplitude * _constant_dir_constant(H) / kernel.c_K
        lvl = base * direction.delta ** (direction.gamma_exp - 0.5)
        e0 = 2.0 * (alpha - H)
        total = lvl**2 * direction.delta**e0 / e0
        gl_x, gl_w = np.polynomial.legendre.leggauss(16)
        edges = np.linspace(direction.delta, span, 257)
        for a, b in zip(edges[:-1], edges[1:]):
            u = 0.5 * (a + b) + 0.5 * (b - a) * gl_x
            f = truncated_power_law_preimage(
                direction.gamma_exp, direction.delta, kernel, grid.t0 + u, grid.t0,
                direction.amplitude,
            )
            total += 0.5 * (b - a) * float(np.dot(gl_w, u ** (2 * alpha) * f**2))
        return math.sqrt(total)
    coef, p = direction._family_coef(kernel)
    e = 2.0 * alpha + 2.0 * p + 1.0
    if e <= 0.0:
        raise DirectionAdmissibilityError(
            f"weighted norm diverges: exponent {e - 1.0} at t0 "
            f"(direction {direction.kind}, alpha={alpha})"
        )
    return abs(coef) * math.sqrt(span**e / e)


def truncated_power_law_preimage(
    gamma_exp: float,
    delta: float,
    kernel: KernelSpec,
    s: np.ndarray,
    t0: float,
    amplitude: float = 1.0,
) -> np.ndarray:
    """Preimage of the truncated direction h(t) = A * (delta v (t-t0))^(gamma-1/2).

    Closed form, piecewise in s.  On (t0, t0+delta] the direction is constant
    at level A*delta^(gamma-1/2) and the constant-direction preimage applies;
    past the plateau an incomplete-beta tail (via Gauss' hypergeometric)
    carries the power-law part:

        h_delta*(s) * c_K * Gamma(H+1/2) Gamma(1/2-H) / A
            = delta^(gamma-1/2) u^(-H-1/2)
              + (gamma-1/2) u^(gamma-H-1) * B_x(1/2-H, gamma-1/2),   u = s-t0,

    with x = (u-delta)/u and B_x the (unregularised) incomplete beta, which is
    evaluated as (x^a/a) 2F1(a, 1-b; a+1; x).  Verified against apply_forward
    round trips in the test suite.
    """
    H = kernel.H
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    u = np.asarray(s, dtype=float) - t0
    if np.any(u <= 0.0):
        raise ValueError("preimage values requested at or before t0")
    base = amplitude * _constant_dir_constant(H) / kernel.c_K
    out = np.empty_like(u)
    plateau = u <= delta
    out[plateau] = base * delta ** (gamma_exp - 0.5) * u[plateau] ** (-H - 0.5)
    tail = ~plateau
    if np.any(tail):
        ut = u[tail]
        x = (ut - delta) / ut
        a = 0.5 - H
        b = gamma_exp - 0.5
        binc = (x**a / a) * hyp2f1(a, 1.0 - b, a + 1.0, x)
        out[tail] = base * (
            delta ** (gamma_exp - 0.5) * ut ** (-H - 0.5)
            + b * ut ** (gamma_exp - H - 1.0) * binc
        )
    return out
