"""Monte Carlo path generation for scalar Volterra models.

Left-point Euler scheme with cell-averaged kernel weights: the state at t_j
accumulates sum_{i<j} Kbar(t_j; cell_i) * (coefficient at (t_i, X_i)) against
dt or dW_i.  Cell averaging keeps every weight finite despite the power-law
singularity and makes the terminal-cell kernel mass exact.

The per-path recursion is compiled (numba) for the closed coefficient
catalog; every path touches only its own stream and output row, so results
are bit-identical for any thread count or chunking.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

from .directions import DirectionSpec
from .grids import GridFunction, TimeGrid
from .kernels import lag_cell_averages
from .models import RoughVolModel, SVEModel
from .seeds import SeedSpec

__all__ = [
    "PathBatch",
    "TangentBatch",
    "SimulationError",
    "simulate",
    "simulate_tangent",
    "shifted_curve",
    "shifted_curves_at",
    "simulate_rough_vol",
    "dump_batch",
    "load_batch",
]

PATH_CHUNK = 8192  # fixed internal chunking; independent of thread count


class SimulationError(RuntimeError):
    pass


@dataclass
class PathBatch:
    """Simulated states plus the Brownian increments that generated them.

    For plain SVE models ``X`` has shape (n_paths, n+1) and ``dW`` has shape
    (n_paths, n).  For rough-volatility batches ``X`` is (n_paths, n+1, 2)
    holding (log-price, variance factor) and ``dW`` is (n_paths, n, 2) holding
    (orthogonal increments dW_perp, price increments dW).
    """

    grid: TimeGrid
    X: np.ndarray
    dW: np.ndarray
    model_fingerprint: str = ""
    seed_descriptor: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.X.shape[0]

    @property
    def is_rough_vol(self) -> bool:
        return self.X.ndim == 3


@dataclass
class TangentBatch:
    """Directional derivative paths aligned with a parent PathBatch."""

    grid: TimeGrid
    Y: np.ndarray
    direction: DirectionSpec


# ---------------------------------------------------------------------------
# jitted per-path recursions (closed coefficient catalog)


@njit(cache=True, inline="always")
def _coef(code, c0, c1, c2, x):
    if code == 0:
        return 0.0
    if code == 1:
        return c0
    if code == 2:
        return c0 + c1 * x
    if code == 3:
        return c0 * np.tanh(c1 * x)
    if code == 4:
        return c0 + c1 * np.sin(c2 * x)
    return c0 + c1 * np.tanh(c2 * x)


@njit(cache=True, inline="always")
def _coef_deriv(code, c0, c1, c2, x):
    if code == 0 or code == 1:
        return 0.0
    if code == 2:
        return c1
    if code == 3:
        return c0 * c1 / np.cosh(c1 * x) ** 2
    if code == 4:
        return c1 * c2 * np.cos(c2 * x)
    return c1 * c2 / np.cosh(c2 * x) ** 2


@njit(cache=True, fastmath=True, parallel=True)
def _sim_paths(xcurve, wb, ws, dW, dt, bc_, b0, b1, b2, sc_, s0, s1, s2, X):
    P, n = dW.shape
    for p in prange(P):
        bcoef = np.empty(n)
        scoef = np.empty(n)
        X[p, 0] = xcurve[0]
        x0 = xcurve[0]
        bcoef[0] = _coef(bc_, b0, b1, b2, x0) * dt
        scoef[0] = _coef(sc_, s0, s1, s2, x0) * dW[p, 0]
        for j in range(1, n + 1):
            acc = 0.0
            for i in range(j):
                acc += wb[j - i] * bcoef[i] + ws[j - i] * scoef[i]
            xj = xcurve[j] + acc
            X[p, j] = xj
            if j < n:
                bcoef[j] = _coef(bc_, b0, b1, b2, xj) * dt
                scoef[j] = _coef(sc_, s0, s1, s2, xj) * dW[p, j]


@njit(cache=True, fastmath=True, parallel=True)
def _sim_tangent(hvals, wb, ws, dW, dt, X, bc_, b0, b1, b2, sc_, s0, s1, s2, Y):
    P, n = dW.shape
    for p in prange(P):
        bcoef = np.empty(n)
        scoef = np.empty(n)
        Y[p, 0] = hvals[0]
        y0 = hvals[0]
        x0 = X[p, 0]
        bcoef[0] = _coef_deriv(bc_, b0, b1, b2, x0) * y0 * dt
        scoef[0] = _coef_deriv(sc_, s0, s1, s2, x0) * y0 * dW[p, 0]
        for j in range(1, n + 1):
            acc = 0.0
            for i in range(j):
                acc += wb[j - i] * bcoef[i] + ws[j - i] * scoef[i]
            yj = hvals[j] + acc
            Y[p, j] = yj
            if j < n:
                xj = X[p, j]
                bcoef[j] = _coef_deriv(bc_, b0, b1, b2, xj) * yj * dt
                scoef[j] = _coef_deriv(sc_, s0, s1, s2, xj) * yj * dW[p, j]


@njit(cache=True, fastmath=True, parallel=True)
def _inner_terminal_fused(xt, dWin, w, dt, bc_, b0, b1, b2, sc_, s0, s1, s2, out):
    """Terminal states of restarted paths, K_b = K_sigma (fused coefficients).

    xt: (P, L+1) shifted curves on the remaining nodes; dWin: (P, B, L) fresh
    increments; w: lag weights; out: (P, B) states at T.
    """
    P, B, L = dWin.shape
    for p in prange(P):
        c = np.empty((L, B))
        x = np.empty(B)
        x0 = xt[p, 0]
        bv = _coef(bc_, b0, b1, b2, x0) * dt
        sv = _coef(sc_, s0, s1, s2, x0)
        for r in range(B):
            c[0, r] = bv + sv * dWin[p, r, 0]
        for j in range(1, L + 1):
            xtj = xt[p, j]
            for r in range(B):
                x[r] = xtj
            for i in range(j):
                wv = w[j - i]
                for r in range(B):
                    x[r] += wv * c[i, r]
            if j < L:
                for r in range(B):
                    xv = x[r]
                    c[j, r] = (
                        _coef(bc_, b0, b1, b2, xv) * dt
                        + _coef(sc_, s0, s1, s2, xv) * dWin[p, r, j]
                    )
        for r in range(B):
            out[p, r] = x[r]


@njit(cache=True, fastmath=True, parallel=True)
def _inner_terminal_split(xt, dWin, wb, ws, dt, bc_, b0, b1, b2, sc_, s0, s1, s2, out):
    """As _inner_terminal_fused but with distinct drift/diffusion kernels."""
    P, B, L = dWin.shape
    for p in prange(P):
        cb = np.empty((L, B))
        cs = np.empty((L, B))
        x = np.empty(B)
        x0 = xt[p, 0]
        bv = _coef(bc_, b0, b1, b2, x0) * dt
        sv = _coef(sc_, s0, s1, s2, x0)
        for r in range(B):
            cb[0, r] = bv
            cs[0, r] = sv * dWin[p, r, 0]
        for j in range(1, L + 1):
            xtj = xt[p, j]
            for r in range(B):
                x[r] = xtj
            for i in range(j):
                wbv = wb[j - i]
                wsv = ws[j - i]
                for r in range(B):
                    x[r] += wbv * cb[i, r] + wsv * cs[i, r]
            if j < L:
                for r in range(B):
                    xv = x[r]
                    cb[j, r] = _coef(bc_, b0, b1, b2, xv) * dt
                    cs[j, r] = _coef(sc_, s0, s1, s2, xv) * dWin[p, r, j]
        for r in range(B):
            out[p, r] = x[r]


def _coef_args(model: SVEModel):
    b, s = model.coeffs.b, model.coeffs.sigma
    return (b.code, b.c0, b.c1, b.c2, s.code, s.c0, s.c1, s.c2)


# ---------------------------------------------------------------------------
# public operations


def _draw_increments(grid: TimeGrid, n_paths: int, seed: SeedSpec, purpose: str,
                     columns: int = 1) -> np.ndarray:
    """Per-path streams, inverse-CDF normals scaled to variance dt."""
    n = grid.n
    sqdt = np.sqrt(grid.dt)
    shape = (n, columns) if columns > 1 else (n,)
    out = np.empty((n_paths, n, columns) if columns > 1 else (n_paths, n))
    for p in range(n_paths):
        gen = seed.stream(purpose, p, 0)
        out[p] = SeedSpec.normals(gen, shape)
    out *= sqdt
    return out


def _check_finite(X: np.ndarray, what: str) -> None:
    if np.isfinite(X).all():
        return
    bad = np.argwhere(~np.isfinite(X))
    p, j = int(bad[0, 0]), int(bad[0, 1])
    raise SimulationError(
        f"{what} produced a non-finite state at path {p}, step {j} "
        f"({len(bad)} bad entries in total)"
    )


def simulate(
    model: SVEModel,
    grid: TimeGrid | None = None,
    n_paths: int = 1000,
    seed: SeedSpec | int = 0,
    purpose: str = "paths",
) -> PathBatch:
    """Generate a PathBatch for a scalar SVE model.

    Increments for path p come from stream(purpose, p, 0), so two calls with
    the same seed spec are coupled path by path (common random numbers) even
    across different initial curves or bumped models.
    """
    if grid is None:
        grid = model.grid
    if isinstance(seed, int):
        seed = SeedSpec(seed)
    xcurve = model.x_values(grid)
    wb = lag_cell_averages(model.K_b, grid)
    ws = lag_cell_averages(model.K_sigma, grid)
    dW = _draw_increments(grid, n_paths, seed, purpose)
    X = np.empty((n_paths, grid.n + 1))
    for lo in range(0, n_paths, PATH_CHUNK):
        hi = min(lo + PATH_CHUNK, n_paths)
        _sim_paths(xcurve, wb, ws, dW[lo:hi], grid.dt, *_coef_args(model), X[lo:hi])
    _check_finite(X, f"simulate[{model.name}]")
    return PathBatch(
        grid=grid,
        X=X,
        dW=dW,
        model_fingerprint=repr(model),
        seed_descriptor=seed.describe(purpose),
    )


def simulate_given_increments(
    model: SVEModel, grid: TimeGrid, dW: np.ndarray
) -> np.ndarray:
    """Run the scheme on caller-supplied increments; returns states (P, n+1).

    Used for coupling studies (e.g. strong self-convergence, where the coarse
    grid consumes pairwise-aggregated fine increments).
    """
    dW = np.asarray(dW, dtype=float)
    if dW.shape[1] != grid.n:
        raise ValueError("increments shape does not match the grid")
    xcurve = model.x_values(grid)
    wb = lag_cell_averages(model.K_b, grid)
    ws = lag_cell_averages(model.K_sigma, grid)
    X = np.empty((dW.shape[0], grid.n + 1))
    for lo in range(0, dW.shape[0], PATH_CHUNK):
        hi = min(lo + PATH_CHUNK, dW.shape[0])
        _sim_paths(xcurve, wb, ws, dW[lo:hi], grid.dt, *_coef_args(model), X[lo:hi])
    _check_finite(X, f"simulate_given_increments[{model.name}]")
    return X


def simulate_with_curve_bump(
    model: SVEModel,
    grid: TimeGrid,
    n_paths: int,
    seed: SeedSpec,
    bump: np.ndarray,
    purpose: str = "paths",
) -> PathBatch:
    """Simulate with the initial curve shifted by ``bump`` (same streams)."""
    if isinstance(seed, int):
        seed = SeedSpec(seed)
    xcurve = model.x_values(grid) + np.asarray(bump, dtype=float)
    wb = lag_cell_averages(model.K_b, grid)
    ws = lag_cell_averages(model.K_sigma, grid)
    dW = _draw_increments(grid, n_paths, seed, purpose)
    X = np.empty((n_paths, grid.n + 1))
    for lo in range(0, n_paths, PATH_CHUNK):
        hi = min(lo + PATH_CHUNK, n_paths)
        _sim_paths(xcurve, wb, ws, dW[lo:hi], grid.dt, *_coef_args(model), X[lo:hi])
    _check_finite(X, f"simulate+bump[{model.name}]")
    return PathBatch(grid, X, dW, repr(model), seed.describe(purpose))


def simulate_tangent(
    parent: PathBatch, model: SVEModel, direction: DirectionSpec
) -> TangentBatch:
    """Directional-derivative process along ``direction``, reusing parent noise."""
    grid = parent.grid
    hvals = direction.h_values(grid, model.K_sigma)
    if not np.all(np.isfinite(hvals)):
        raise ValueError("tangent simulation needs a direction finite at every node")
    wb = lag_cell_averages(model.K_b, grid)
    ws = lag_cell_averages(model.K_sigma, grid)
    Y = np.empty_like(parent.X)
    for lo in range(0, parent.n_paths, PATH_CHUNK):
        hi = min(lo + PATH_CHUNK, parent.n_paths)
        _sim_tangent(
            hvals, wb, ws, parent.dW[lo:hi], grid.dt, parent.X[lo:hi],
            *_coef_args(model), Y[lo:hi],
        )
    _check_finite(Y, "simulate_tangent")
    return TangentBatch(grid=grid, Y=Y, direction=direction)


def _coef_caches(model: SVEModel, batch: PathBatch) -> tuple[np.ndarray, np.ndarray]:
    """(b(X_i) dt, sigma(X_i) dW_i) caches over the left nodes, shape (P, n)."""
    Xleft = batch.X[:, :-1]
    bvals = model.coeffs.b(Xleft) * batch.grid.dt
    svals = model.coeffs.sigma(Xleft) * batch.dW
    return bvals, svals


def shifted_curves_at(
    parent: PathBatch, model: SVEModel, k: int,
    caches: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """Restart curves at node k for every path: shape (P, n+1-k).

    Entry [p, j] is the time-t_{k+j} value of the curve that restarts path p
    at t_k: the initial curve plus all kernel mass carried by the history
    before t_k.  k = 0 returns the initial curve itself.
    """
    grid = parent.grid
    n = grid.n
    if not 0 <= k <= n:
        raise ValueError("restart node out of range")
    xc = model.x_values(grid)
    if k == 0:
        return np.tile(xc, (parent.n_paths, 1))
    if caches is None:
        caches = _coef_caches(model, parent)
    bvals, svals = caches
    wb = lag_cell_averages(model.K_b, grid)
    ws = lag_cell_averages(model.K_sigma, grid)
    # weight matrices for target nodes j = k..n against history cells i = 0..k-1
    j_idx = np.arange(k, n + 1)[:, None]
    i_idx = np.arange(k)[None, :]
    WB = wb[j_idx - i_idx]
    WS = ws[j_idx - i_idx]
    out = xc[k:][None, :] + bvals[:, :k] @ WB.T + svals[:, :k] @ WS.T
    return out


def shifted_curve(parent: PathBatch, model: SVEModel, path: int, k: int) -> GridFunction:
    """Restart curve of one path as a GridFunction on the sub-grid [t_k, T].

    Needs k <= n-2 so the sub-grid is a valid TimeGrid; the vectorised
    ``shifted_curves_at`` serves every restart node as a plain array.
    """
    if k > parent.grid.n - 2:
        raise ValueError("restart node too close to T for a sub-grid; use shifted_curves_at")
    vals = shifted_curves_at(parent, model, k)[path]
    sub = TimeGrid(float(parent.grid.nodes[k]), parent.grid.T, parent.grid.n - k)
    return GridFunction(sub, vals)


def restart_terminal_states(
    xtilde: np.ndarray,
    dW_inner: np.ndarray,
    model: SVEModel,
    grid: TimeGrid,
) -> np.ndarray:
    """Terminal states of paths restarted from curves ``xtilde``.

    xtilde: (P, L+1) restart curves on the remaining nodes; dW_inner:
    (P, B, L) increments for B replicates per curve.  Returns (P, B).
    """
    P, B, L = dW_inner.shape
    out = np.empty((P, B))
    wb = lag_cell_averages(model.K_b, grid)
    ws = lag_cell_averages(model.K_sigma, grid)
    if L == 0:
        out[:] = xtilde[:, -1][:, None]
        return out
    if model.equal_kernels:
        _inner_terminal_fused(xtilde, dW_inner, ws, grid.dt, *_coef_args(model), out)
    else:
        _inner_terminal_split(xtilde, dW_inner, wb, ws, grid.dt, *_coef_args(model), out)
    return out


def simulate_rough_vol(
    model: RoughVolModel,
    grid: TimeGrid | None = None,
    n_paths: int = 1000,
    seed: SeedSpec | int = 0,
    purpose: str = "paths",
    curve_bump: np.ndarray | None = None,
) -> PathBatch:
    """Simulate the (log-price, variance factor) pair.

    The factor follows the Euler scheme driven by dB = rho_bar dW_perp +
    rho dW; the log-price accumulates zeta(V) dW - zeta(V)^2 dt / 2.  Both
    increment families are retained: dW[:, :, 0] = dW_perp, dW[:, :, 1] = dW.
    """
    if grid is None:
        grid = model.grid
    if isinstance(seed, int):
        seed = SeedSpec(seed)
    vmodel = model.variance_model
    dWboth = _draw_increments(grid, n_paths, seed, purpose, columns=2)
    dWperp = dWboth[:, :, 0]
    dWpar = dWboth[:, :, 1]
    dB = model.rho_bar * dWperp + model.rho * dWpar

    vcurve = vmodel.x_values(grid)
    if curve_bump is not None:
        vcurve = vcurve + np.asarray(curve_bump, dtype=float)
    wb = lag_cell_averages(vmodel.K_b, grid)
    ws = lag_cell_averages(vmodel.K_sigma, grid)
    V = np.empty((n_paths, grid.n + 1))
    for lo in range(0, n_paths, PATH_CHUNK):
        hi = min(lo + PATH_CHUNK, n_paths)
        _sim_paths(vcurve, wb, ws, dB[lo:hi], grid.dt, *_coef_args(vmodel), V[lo:hi])
    _check_finite(V, "simulate_rough_vol[variance]")

    zeta = model.zeta(V[:, :-1])
    incr = zeta * dWpar - 0.5 * zeta**2 * grid.dt
    X = np.zeros((n_paths, grid.n + 1))
    np.cumsum(incr, axis=1, out=X[:, 1:])
    _check_finite(X, "simulate_rough_vol[log-price]")

    states = np.stack([X, V], axis=-1)
    return PathBatch(
        grid=grid,
        X=states,
        dW=dWboth,
        model_fingerprint=repr(model),
        seed_descriptor=seed.describe(purpose),
    )


# ---------------------------------------------------------------------------
# binary batch dump (little-endian, documented layout)

_MAGIC = b"VSPB"
_VERSION = 1


def dump_batch(batch: PathBatch, fp) -> None:
    """Write a PathBatch.

    Layout (little-endian): magic "VSPB", u32 version, f64 t0, f64 T, u64 n,
    u64 n_paths, u64 state_ndim (2 or 3), u64 trailing state dim, u64 master
    seed, u32 purpose length + purpose bytes (utf-8), u32 fingerprint length
    + fingerprint bytes, then X then dW as row-major f64.
    """
    own = False
    if isinstance(fp, (str, bytes)):
        fp = open(fp, "wb")
        own = True
    try:
        g = batch.grid
        fp.write(_MAGIC)
        fp.write(struct.pack("<I", _VERSION))
        fp.write(struct.pack("<ddQQ", g.t0, g.T, g.n, batch.n_paths))
        trailing = batch.X.shape[2] if batch.X.ndim == 3 else 1
        fp.write(struct.pack("<QQ", batch.X.ndim, trailing))
        fp.write(struct.pack("<Q", int(batch.seed_descriptor.get("master_seed", 0))))
        purpose = str(batch.seed_descriptor.get("purpose", "")).encode()
        fp.write(struct.pack("<I", len(purpose)))
        fp.write(purpose)
        fbytes = batch.model_fingerprint.encode()
        fp.write(struct.pack("<I", len(fbytes)))
        fp.write(fbytes)
        fp.write(np.ascontiguousarray(batch.X, dtype="<f8").tobytes())
        fp.write(np.ascontiguousarray(batch.dW, dtype="<f8").tobytes())
    finally:
        if own:
            fp.close()


def load_batch(fp) -> PathBatch:
    own = False
    if isinstance(fp, (str, bytes)):
        fp = open(fp, "rb")
        own = True
    try:
        if fp.read(4) != _MAGIC:
            raise ValueError("not a PathBatch dump")
        (version,) = struct.unpack("<I", fp.read(4))
        if version != _VERSION:
            raise ValueError(f"unsupported dump version {version}")
        t0, T, n, n_paths = struct.unpack("<ddQQ", fp.read(32))
        ndim, trailing = struct.unpack("<QQ", fp.read(16))
        (master,) = struct.unpack("<Q", fp.read(8))
        (plen,) = struct.unpack("<I", fp.read(4))
        purpose = fp.read(plen).decode()
        (flen,) = struct.unpack("<I", fp.read(4))
        fingerprint = fp.read(flen).decode()
        grid = TimeGrid(t0, T, int(n))
        xshape = (n_paths, n + 1, trailing) if ndim == 3 else (n_paths, n + 1)
        wshape = (n_paths, n, trailing) if ndim == 3 else (n_paths, n)
        X = np.frombuffer(fp.read(8 * int(np.prod(xshape))), dtype="<f8").reshape(xshape).copy()
        dW = np.frombuffer(fp.read(8 * int(np.prod(wshape))), dtype="<f8").reshape(wshape).copy()
        return PathBatch(grid, X, dW, fingerprint, {"master_seed": master, "purpose": purpose})
    finally:
        if own:
            fp.close()

