import io
import math

import numpy as np
import pytest

import volterra_sens.engine as engine
from volterra_sens import (
    Coefficient1D,
    CoefficientSet,
    DirectionSpec,
    KernelSpec,
    SeedSpec,
    SVEModel,
    TimeGrid,
    dump_batch,
    load_batch,
    make_model,
    shifted_curve,
    shifted_curves_at,
    simulate,
    simulate_rough_vol,
    simulate_tangent,
)
from volterra_sens.engine import (
    SimulationError,
    restart_terminal_states,
    simulate_given_increments,
    simulate_with_curve_bump,
)


def test_bit_exact_reproducibility(grid128, seed):
    m = make_model("tanh-drift", grid=grid128)
    a = simulate(m, grid128, 500, seed)
    b = simulate(m, grid128, 500, seed)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.dW, b.dW)


def test_chunking_does_not_change_results(grid64, seed, monkeypatch):
    m = make_model("tanh-drift", grid=grid64)
    ref = simulate(m, grid64, 100, seed)
    monkeypatch.setattr(engine, "PATH_CHUNK", 7)
    chunked = simulate(m, grid64, 100, seed)
    assert np.array_equal(ref.X, chunked.X)


def test_increment_moments(grid128, seed):
    m = make_model("gaussian", grid=grid128)
    b = simulate(m, grid128, 4000, seed)
    dt = grid128.dt
    se_mean = math.sqrt(dt) / math.sqrt(b.dW.size)
    assert abs(b.dW.mean()) < 5 * se_mean
    assert b.dW.var() == pytest.approx(dt, rel=0.05)


def test_zero_drift_zero_noise_returns_curve(grid64, seed):
    m = SVEModel(
        "still",
        CoefficientSet(Coefficient1D("zero"), Coefficient1D("constant", c0=1.0)),
        KernelSpec.zero(),
        KernelSpec.zero(),
        x0=0.7,
        grid=grid64,
    )
    b = simulate(m, grid64, 10, seed)
    assert np.all(b.X == 0.7)


def test_gaussian_moment_sanity(grid128, seed):
    m = make_model("gaussian", grid=grid128, H=0.25, x0=0.3)
    b = simulate(m, grid128, 20000, seed)
    xT = b.X[:, -1]
    cont, disc = m.gaussian_variance(grid128)
    se_var = math.sqrt(2.0 / len(xT)) * disc
    assert abs(xT.var() - disc) < 3 * se_var
    assert abs(xT.var() - cont) < 3 * se_var + abs(cont - disc)
    assert abs(xT.mean() - 0.3) < 5 * xT.std() / math.sqrt(len(xT))
    from scipy.stats import skew

    assert abs(skew(xT)) < 5 * math.sqrt(6.0 / len(xT))


def test_common_random_numbers_coupling(grid64, seed):
    m = make_model("tanh-drift", grid=grid64)
    base = simulate(m, grid64, 50, seed)
    bumped = simulate_with_curve_bump(m, grid64, 50, seed, np.full(65, 0.1))
    assert np.array_equal(base.dW, bumped.dW)
    assert not np.allclose(base.X, bumped.X)


def test_strong_self_convergence(seed):
    for name in ("gaussian", "tanh-drift", "additive-ou"):
        errs = []
        for n in (32, 64, 128):
            fine = TimeGrid(0.0, 1.0, 2 * n)
            coarse = TimeGrid(0.0, 1.0, n)
            m = make_model(name)
            gen = seed.stream("selfconv-" + name, n, 0)
            z = SeedSpec.normals(gen, (400, 2 * n)) * math.sqrt(fine.dt)
            xf = simulate_given_increments(m, fine, z)
            zc = z[:, 0::2] + z[:, 1::2]
            xc = simulate_given_increments(m, coarse, zc)
            err = np.abs(xf[:, ::2] - xc).max(axis=1).mean()
            errs.append(err)
        assert errs[0] > errs[1] > errs[2], (name, errs)


def test_overflow_reported_with_diagnostics(grid64, seed):
    m = SVEModel(
        "explosive",
        CoefficientSet(
            Coefficient1D("linear", c0=0.0, c1=1.0e8),
            Coefficient1D("constant", c0=1.0),
        ),
        KernelSpec.power_law(0.4),
        KernelSpec.power_law(0.4),
        grid=grid64,
    )
    with pytest.raises(SimulationError):
        simulate(m, grid64, 4, seed)


# -- tangent ----------------------------------------------------------------


def test_tangent_additive_equals_direction(grid64, seed):
    m = make_model("gaussian", grid=grid64)
    b = simulate(m, grid64, 20, seed)
    d = DirectionSpec("power_law", gamma_exp=1.0)
    t = simulate_tangent(b, m, d)
    h = d.h_values(grid64, m.K_sigma)
    assert np.allclose(t.Y, h[None, :], atol=1e-14)


def test_tangent_zero_direction(grid64, seed):
    m = make_model("tanh-drift", grid=grid64)
    b = simulate(m, grid64, 20, seed)
    g = TimeGrid(0.0, 1.0, 64)
    from volterra_sens import GridFunction

    d = DirectionSpec("preimage_given", hstar=GridFunction.constant(g, 0.0))
    t = simulate_tangent(b, m, d)
    assert np.all(t.Y == 0.0)


def test_tangent_matches_finite_difference(grid64, seed):
    m = make_model("tanh-drift", grid=grid64)
    b = simulate(m, grid64, 500, seed)
    d = DirectionSpec("power_law", gamma_exp=1.0)
    t = simulate_tangent(b, m, d)
    h = d.h_values(grid64, m.K_sigma)
    errs = {}
    for eps in (1e-2, 1e-3):
        up = simulate_with_curve_bump(m, grid64, 500, seed, eps * h)
        dn = simulate_with_curve_bump(m, grid64, 500, seed, -eps * h)
        fd = (up.X - dn.X) / (2 * eps)
        errs[eps] = np.abs(fd - t.Y).max(axis=1).mean()
    # remainder is second order in the bump, so the error scales like eps
    assert errs[1e-3] < 0.3 * errs[1e-2]


# -- shifted curves ----------------------------------------------------------


def test_shifted_curve_k0_is_initial_curve(grid64, seed):
    m = make_model("tanh-drift", grid=grid64)
    b = simulate(m, grid64, 10, seed)
    xt = shifted_curves_at(b, m, 0)
    assert np.allclose(xt, m.x_values(grid64)[None, :])


def test_shifted_curve_zero_noise_model(grid64, seed):
    m = SVEModel(
        "still",
        CoefficientSet(Coefficient1D("zero"), Coefficient1D("constant", c0=1.0)),
        KernelSpec.zero(),
        KernelSpec.zero(),
        x0=1.3,
        grid=grid64,
    )
    b = simulate(m, grid64, 5, seed)
    assert np.allclose(shifted_curves_at(b, m, 20), 1.3)


def test_flow_property_exact(grid64, seed):
    """Restarting from the shifted curve with the parent's remaining
    increments reproduces the parent path exactly (same weights)."""
    m = make_model("tanh-drift", grid=grid64)
    b = simulate(m, grid64, 40, seed)
    for k in (1, 17, 50):
        xt = shifted_curves_at(b, m, k)
        cont = restart_terminal_states(xt, b.dW[:, k:][:, None, :], m, grid64)
        assert np.allclose(cont[:, 0], b.X[:, -1], atol=1e-10), k


def test_shifted_curve_gridfunction(grid64, seed):
    m = make_model("gaussian", grid=grid64)
    b = simulate(m, grid64, 4, seed)
    gf = shifted_curve(b, m, 2, 10)
    assert gf.grid.t0 == pytest.approx(grid64.nodes[10])
    assert gf.grid.n == 54
    with pytest.raises(ValueError):
        shifted_curve(b, m, 0, 63)


# -- rough volatility ---------------------------------------------------------


def test_rough_vol_constant_zeta_lognormal(grid128, seed):
    m = make_model("rough-vol-1d", grid=grid128, zeta0=0.2, zeta1=0.0)
    b = simulate_rough_vol(m, grid128, 20000, seed)
    xT = b.X[:, -1, 0]
    target = 0.2**2 * grid128.span
    se = math.sqrt(2.0 / len(xT)) * target
    assert abs(xT.var() - target) < 3 * se


def test_rough_vol_rho_zero_makes_B_equal_Wperp(grid64, seed):
    m = make_model("rough-vol-1d", grid=grid64, rho=0.0)
    b = simulate_rough_vol(m, grid64, 200, seed)
    # with rho = 0 and rho_bar = 1 the factor is driven by dW_perp alone;
    # correlation of the driving increments is exactly 1 by construction
    dWperp = b.dW[:, :, 0].ravel()
    dB = (m.rho_bar * b.dW[:, :, 0] + m.rho * b.dW[:, :, 1]).ravel()
    corr = np.corrcoef(dWperp, dB)[0, 1]
    assert corr == pytest.approx(1.0, abs=1e-12)


def test_rough_vol_exponential_martingale(seed):
    g = TimeGrid(0.0, 1.0, 512)
    m = make_model("rough-vol-1d", grid=g)
    b = simulate_rough_vol(m, g, 20000, seed)
    e = np.exp(b.X[:, -1, 0])
    # the discrete scheme's exponential has mean exactly one; only MC noise
    assert abs(e.mean() - 1.0) < 3 * e.std(ddof=1) / math.sqrt(len(e))


def test_rough_vol_reproducible(grid64, seed):
    m = make_model("rough-vol-1d", grid=grid64)
    a = simulate_rough_vol(m, grid64, 100, seed)
    b = simulate_rough_vol(m, grid64, 100, seed)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.dW, b.dW)


# -- binary dump ---------------------------------------------------------------


def test_dump_load_round_trip(grid64, seed):
    m = make_model("tanh-drift", grid=grid64)
    b = simulate(m, grid64, 20, seed)
    buf = io.BytesIO()
    dump_batch(b, buf)
    buf.seek(0)
    again = load_batch(buf)
    assert np.array_equal(again.X, b.X)
    assert np.array_equal(again.dW, b.dW)
    assert again.grid == b.grid
    assert again.seed_descriptor["master_seed"] == seed.master_seed


def test_dump_load_rough(grid64, seed, tmp_path):
    m = make_model("rough-vol-1d", grid=grid64)
    b = simulate_rough_vol(m, grid64, 8, seed)
    path = tmp_path / "batch.bin"
    dump_batch(b, str(path))
    again = load_batch(str(path))
    assert np.array_equal(again.X, b.X) and again.X.shape == (8, 65, 2)


# -- seed spec ----------------------------------------------------------------


def test_streams_differ_across_indices(seed):
    a = SeedSpec.normals(seed.stream("paths", 0, 0), 8)
    b = SeedSpec.normals(seed.stream("paths", 1, 0), 8)
    c = SeedSpec.normals(seed.stream("inner", 0, 0), 8)
    d = SeedSpec.normals(seed.stream("paths", 0, 0), 8)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert np.array_equal(a, d)


def test_uniforms_strictly_inside_unit_interval(seed):
    u = SeedSpec.uniforms(seed.stream("u", 0, 0), 10000)
    assert u.min() > 0.0 and u.max() < 1.0
