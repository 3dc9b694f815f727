"""Volterra kernels, cell-averaged quadrature weights, and resolvents.

All built-in kernels vanish for s >= t.  Integrals against the singular
power-law factor are always done with exact per-cell antiderivatives of the
power ("product integration"); uniform-weight rules would lose the
convergence order at the endpoints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gamma

from .grids import TimeGrid
from .special import mittag_leffler

__all__ = [
    "KernelSpec",
    "ResolventSpec",
    "kernel_eval",
    "kernel_cell_average",
    "cell_average_weights",
    "resolvent_eval",
    "resolvent_identity_residual",
]


@dataclass(frozen=True)
class KernelSpec:
    """A two-argument Volterra kernel K(t, s), zero for s >= t.

    kind = "power_law": K(t,s) = c_K * (t-s)^(H-1/2), singular for H < 1/2.
    kind = "constant":  K(t,s) = level for s < t.
    kind = "zero":      K = 0.
    """

    kind: str
    H: float = 0.5
    level: float = 1.0
    c_K: float = 1.0

    def __post_init__(self):
        if self.kind not in ("power_law", "constant", "zero"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "power_law" and not 0.0 < self.H < 1.0:
            raise ValueError(f"power_law needs H in (0,1), got {self.H}")

    @classmethod
    def power_law(cls, H: float, c_K: float = 1.0) -> "KernelSpec":
        return cls(kind="power_law", H=H, c_K=c_K)

    @classmethod
    def constant(cls, level: float) -> "KernelSpec":
        return cls(kind="constant", level=level)

    @classmethod
    def zero(cls) -> "KernelSpec":
        return cls(kind="zero")

    def __call__(self, t, s):
        return kernel_eval(self, t, s)


def kernel_eval(k: KernelSpec, t, s):
    """K(t, s); exactly zero whenever s >= t.  Accepts arrays."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    live = t > s
    if k.kind == "zero":
        out = np.zeros(np.broadcast(t, s).shape)
    elif k.kind == "constant":
        out = np.where(live, k.level, 0.0)
    else:
        diff = np.where(live, t - s, 1.0)
        out = np.where(live, k.c_K * diff ** (k.H - 0.5), 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def kernel_cell_average(k: KernelSpec, t: float, a: float, b: float) -> float:
    """(1/(b-a)) * int_a^b K(t,s) ds in closed form; requires a < b <= t."""
    if not a < b:
        raise ValueError(f"need a < b, got a={a}, b={b}")
    if b > t + 1e-12 * max(1.0, abs(t)):
        raise ValueError(f"cell [{a}, {b}] must not extend past t={t}")
    if k.kind == "zero":
        return 0.0
    if k.kind == "constant":
        return float(k.level)
    p = k.H + 0.5
    return k.c_K * ((t - a) ** p - max(t - b, 0.0) ** p) / (p * (b - a))


def cell_average_weights(k: KernelSpec, grid: TimeGrid) -> np.ndarray:
    """Lower-triangular weight matrix W[j, i] = cell average of K(t_j, .) on cell i.

    Shape (n+1, n); W[j, i] = 0 for i >= j.  Built-in kernels are stationary,
    so the matrix is assembled from a single lag vector.
    """
    n = grid.n
    lags = lag_cell_averages(k, grid)  # lags[l], l = 1..n
    W = np.zeros((n + 1, n))
    for j in range(1, n + 1):
        # lag of cell i seen from t_j is j - i, i = 0..j-1
        W[j, :j] = lags[j - np.arange(j)]
    return W


def lag_cell_averages(k: KernelSpec, grid: TimeGrid) -> np.ndarray:
    """lags[l] = (1/dt) * int over one cell at distance (l-1)dt..l dt of K; lags[0] = 0."""
    n, dt = grid.n, grid.dt
    lags = np.zeros(n + 1)
    if k.kind == "zero":
        return lags
    if k.kind == "constant":
        lags[1:] = k.level
        return lags
    p = k.H + 0.5
    edges = (dt * np.arange(n + 1)) ** p
    lags[1:] = k.c_K * (edges[1:] - edges[:-1]) / (p * dt)
    return lags


@dataclass(frozen=True)
class ResolventSpec:
    """Resolvent R of the squared-and-scaled power-law kernel C * K_H^2.

    R(t,s) = C Gamma(2H) (t-s)^(2H-1) E_{2H,2H}(-C Gamma(2H) (t-s)^(2H)) for
    t > s and 0 otherwise.  This closed form solves the second-kind equation
    R = K - K * R (convolution on (s, t)); see ``resolvent_identity_residual``.
    """

    C: float
    H: float

    def __post_init__(self):
        if self.C < 0.0:
            raise ValueError("C must be >= 0")
        if not 0.0 < self.H < 1.0:
            raise ValueError(f"need H in (0,1), got {self.H}")

    def __call__(self, t, s):
        return resolvent_eval(self, t, s)


def resolvent_eval(r: ResolventSpec, t: float, s: float) -> float:
    """R_{C,H}(t, s); zero for s >= t or C = 0."""
    if s >= t or r.C == 0.0:
        return 0.0
    tau = t - s
    g = gamma(2.0 * r.H)
    return r.C * g * tau ** (2.0 * r.H - 1.0) * mittag_leffler(
        2.0 * r.H, 2.0 * r.H, -r.C * g * tau ** (2.0 * r.H)
    )


def _resolvent_smooth_part(r: ResolventSpec, v: np.ndarray) -> np.ndarray:
    """g(v) = C Gamma(2H) E_{2H,2H}(-C Gamma(2H) v^{2H}), so R(v) = v^{2H-1} g(v)."""
    g2h = gamma(2.0 * r.H)
    out = np.empty_like(v)
    for i, vi in enumerate(v):
        out[i] = r.C * g2h * mittag_leffler(
            2.0 * r.H, 2.0 * r.H, -r.C * g2h * vi ** (2.0 * r.H)
        )
    return out


def resolvent_identity_residual(r: ResolventSpec, grid: TimeGrid) -> float:
    """Grid-scale defect of the defining identity R = K - K * R for K = C K_H^2.

    For every lag tau = l*dt the convolution int_0^tau K(tau-v) R(v) dv is
    computed by substituted-variable product quadrature tied to the grid cells
    (u = v^{2H} near v = 0, w = (tau-v)^{2H} near v = tau), and the defect

        |R(tau) - K(tau) + (K*R)(tau)| / (1 + |R(tau)| + |K(tau)|)

    is maximised over lags.  The normalisation keeps the defect meaningful
    near the diagonal, where K and R themselves diverge like dt^(2H-1);
    it decreases under grid refinement for all H in (0, 1/2].
    """
    if r.C == 0.0:
        return 0.0
    n, dt = grid.n, grid.dt
    H2 = 2.0 * r.H
    g2h = gamma(H2)

    # smooth resolvent factor on the half grid: v_m = m * dt/2, m = 0..2n
    vhalf = 0.5 * dt * np.arange(2 * n + 1)
    gvals = _resolvent_smooth_part(r, vhalf)
    with np.errstate(divide="ignore"):
        rvals = np.where(vhalf > 0, vhalf ** (H2 - 1.0), np.inf) * gvals

    worst = 0.0
    for el in range(1, n + 1):
        tau = el * dt
        m_half = el  # half-grid index of tau/2
        # lower part, v in [0, tau/2]: u = v^{2H},
        # I_low = (C/(2H)) * int (tau - u^{1/2H})^{2H-1} g(u^{1/2H}) du
        idx = list(range(0, 2 * (el // 2) + 1, 2))
        if idx[-1] != m_half:
            idx.append(m_half)
        v_lo = vhalf[idx]
        u_lo = v_lo**H2
        f_lo = (tau - v_lo) ** (H2 - 1.0) * gvals[idx]
        i_low = (r.C / H2) * np.trapezoid(f_lo, u_lo)
        # upper part, v in [tau/2, tau]: w = (tau - v)^{2H},
        # I_up = (C/(2H)) * int R(tau - w^{1/2H}) dw
        idx_up = list(range(2 * el, 2 * -(-el // 2) - 1, -2))
        if idx_up[-1] != m_half:
            idx_up.append(m_half)
        v_up = vhalf[idx_up]  # descending from tau to tau/2
        w_up = (tau - v_up) ** H2
        f_up = rvals[idx_up]  # R at tau - w^{1/2H} = v_up
        i_up = (r.C / H2) * np.trapezoid(f_up, w_up)

        conv = i_low + i_up
        r_tau = rvals[2 * el]
        k_tau = r.C * tau ** (H2 - 1.0)
        defect = abs(r_tau - k_tau + conv) / (1.0 + abs(r_tau) + abs(k_tau))
        worst = max(worst, defect)
    return worst
