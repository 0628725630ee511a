import numpy as np
import pytest

from parlab.calculus import steklov
from parlab.errors import CylinderCrossingError, InvalidExponentLadderError
from parlab.grid import GridFunction, ParabolicCylinder, make_domain, make_grid
from parlab.solver import Nonlinearity, SolveConfig, solve
from parlab.truncation import (
    build_good_set,
    build_initial_boundary_v,
    lambda_from_percentile,
    lipschitz_certify_truncation,
    truncate,
    verify_truncation_bounds,
)


def sweep_instance(cells, p, amp=1.0, newton_tol=1e-11):
    """Sweep geometry: compactly supported bump data on the left part of
    the interval, fine time lattice, so the quiet right region forms a fat
    good set and the covering resolves multi-cell, multi-slice cylinders."""
    from parlab.whitney import _ramp

    dom = make_domain("interval", length=1.0, cells=cells)
    grid = make_grid(dom, t0=0.0, T=0.1, nt=2 * cells + 1)
    x = dom.centers(0)
    init = amp * _ramp(np.abs(x - 0.25) / 0.2)
    nl = Nonlinearity(p=p, dim=1, variant="regularized" if p != 2 else "p_laplace",
                      eps=1e-6 if p != 2 else 0.0)
    w = GridFunction.zeros(grid)
    u = solve(nl, grid, w, init, SolveConfig(newton_tol=newton_tol))
    return dom, grid, nl, u, w


def run_truncation_sweep(percentiles=(10.0, 25.0, 50.0), ps=(1.8, 2.0, 3.0),
                         resolutions=(48, 64, 96), rng=None, certify=True):
    """Worst constant-free ratios over the (percentile, p, resolution) cube;
    shared by the calibration script and the acceptance suite."""
    from parlab.truncation import lipschitz_certify_truncation

    rng = rng or np.random.default_rng(0)
    worst = {}
    lip = 0.0
    identity_exact = True
    for cells in resolutions:
        for p in ps:
            dom, grid, nl, u, w = sweep_instance(cells, p)
            q = min(p - 0.4, 0.5 * (1 + p))
            h0 = np.zeros(grid.shape)
            gs0 = build_good_set(u, w, h0, q=q, lam=np.inf, p=p)
            vh = steklov(u.with_values(u.values - w.values), 2 * grid.dt)
            for pct in percentiles:
                lam = lambda_from_percentile(gs0.g, pct)
                gs = build_good_set(u, w, h0, q=q, lam=lam, p=p, w_field=gs0.w_field)
                tr = truncate(vh, gs, lam, p)
                if tr.identity:
                    continue
                identity_exact &= bool(
                    np.array_equal(tr.v_trunc.values[gs.E], vh.values[gs.E])
                )
                for rep in verify_truncation_bounds(tr):
                    worst[rep.name] = max(worst.get(rep.name, 0.0), rep.ratio)
                if certify:
                    res = lipschitz_certify_truncation(tr, lam, p, rng=rng,
                                                       n_centers=50, n_pairs=1200)
                    lip = max(lip, res["direct_over_lambda"])
    return worst, lip, identity_exact


def solver_instance(cells=48, nt=33, p=2.0, amp=1.0):
    dom = make_domain("interval", length=1.0, cells=cells)
    grid = make_grid(dom, t0=0.0, T=0.1, nt=nt)
    x = dom.centers(0)
    tt = grid.times[:, None]
    w = GridFunction(grid, amp * 0.3 * np.sin(np.pi * x)[None, :] * tt / grid.T)
    nl = Nonlinearity(p=p, dim=1, variant="regularized" if p != 2 else "p_laplace",
                      eps=1e-6 if p != 2 else 0.0)
    init = amp * np.sin(np.pi * x)
    u = solve(nl, grid, w, init, SolveConfig(newton_tol=1e-11))
    return dom, grid, nl, u, w


def test_good_set_zero_data():
    dom = make_domain("interval", cells=32)
    grid = make_grid(dom, T=0.1, nt=9)
    z = GridFunction.zeros(grid)
    gs = build_good_set(z, z, np.zeros(grid.shape), q=1.5, lam=0.5, p=2.0)
    assert np.all(gs.g == 0.0)
    assert gs.E.all()


def test_good_set_threshold_above_range(rng):
    _, grid, nl, u, w = solver_instance()
    h0 = np.zeros(grid.shape)
    gs = build_good_set(u, w, h0, q=1.5, lam=1e9, p=2.0)
    assert gs.E.all()


def test_good_set_monotone_in_lambda(rng):
    _, grid, nl, u, w = solver_instance()
    h0 = np.zeros(grid.shape)
    g1 = build_good_set(u, w, h0, q=1.5, lam=1.0, p=2.0)
    g2 = build_good_set(u, w, h0, q=1.5, lam=2.0, p=2.0)
    assert np.all(g2.E | ~g1.E)  # E_1 subset of E_2


def test_good_set_exponent_ladder_guard():
    dom = make_domain("interval", cells=32)
    grid = make_grid(dom, T=0.1, nt=9)
    z = GridFunction.zeros(grid)
    with pytest.raises(InvalidExponentLadderError):
        build_good_set(z, z, np.zeros(grid.shape), q=2.5, lam=1.0, p=2.0)
    with pytest.raises(InvalidExponentLadderError):
        build_good_set(z, z, np.zeros(grid.shape), q=1.9, lam=1.0, p=2.0, beta=0.1)


def test_truncate_identity_when_all_good():
    _, grid, nl, u, w = solver_instance()
    gs = build_good_set(u, w, np.zeros(grid.shape), q=1.5, lam=1e9, p=2.0)
    vh = steklov(u.with_values(u.values - w.values), 2 * grid.dt)
    tr = truncate(vh, gs, 1e9, 2.0)
    assert tr.identity
    assert np.array_equal(tr.v_trunc.values, vh.values)


def test_truncate_exact_identity_on_good_set():
    _, grid, nl, u, w = solver_instance()
    g90 = None
    gs = build_good_set(u, w, np.zeros(grid.shape), q=1.5,
                        lam=0.0, p=2.0)
    lam = lambda_from_percentile(gs.g, 90.0)
    gs = build_good_set(u, w, np.zeros(grid.shape), q=1.5, lam=lam, p=2.0)
    vh = steklov(u.with_values(u.values - w.values), 2 * grid.dt)
    tr = truncate(vh, gs, lam, 2.0)
    assert not tr.identity
    assert np.array_equal(tr.v_trunc.values[gs.E], vh.values[gs.E])


def test_truncate_constant_plateau():
    # constant v_h on a region whose cylinders stay inside Omega x [0, T]:
    # the weighted averages reproduce the constant
    dom = make_domain("interval", length=1.0, cells=64)
    grid = make_grid(dom, t0=0.0, T=1.0, nt=65)
    c = 1.7
    vh = GridFunction(grid, np.full(grid.shape, c))
    # bad set: a small interior cylinder
    g = np.zeros(grid.shape)
    k0 = 32
    g[k0 - 2 : k0 + 3, 28:37] = 10.0
    from parlab.truncation import GoodSetData

    gs = GoodSetData(g=g, lam=1.0, E=g <= 1.0, variant="apriori", grid=grid,
                     q=1.5, p=2.0, v=vh, rho=0.5)
    tr = truncate(vh, gs, 1.0, 2.0)
    sel = ~tr.zeroed
    assert sel.any()
    assert np.allclose(tr.local_averages[sel], c, rtol=1e-10)
    comp = ~gs.E
    assert np.allclose(tr.v_trunc.values[comp], c, rtol=1e-9)


def test_truncate_zeroing_rule_and_initial_value():
    _, grid, nl, u, w = solver_instance(cells=48, nt=33)
    gs = build_good_set(u, w, np.zeros(grid.shape), q=1.5, lam=0.0, p=2.0)
    lam = lambda_from_percentile(gs.g, 60.0)
    gs = build_good_set(u, w, np.zeros(grid.shape), q=1.5, lam=lam, p=2.0)
    vh = steklov(u.with_values(u.values - w.values), 2 * grid.dt)
    tr = truncate(vh, gs, lam, 2.0)
    cover = tr.cover
    gamma = cover.gamma
    for j in range(cover.size):
        r75 = 0.75 * cover.radii[j]
        crosses_t0 = cover.centers_t[j] - gamma * r75 * r75 < grid.t0 - 1e-12
        if crosses_t0:
            assert tr.zeroed[j] and tr.local_averages[j] == 0.0
    # initial slice of the complement vanishes exactly
    comp0 = ~gs.E[0]
    if comp0.any():
        assert np.all(tr.v_trunc.values[0][comp0] == 0.0)


def test_truncation_bounds_zero_data():
    dom = make_domain("interval", cells=32)
    grid = make_grid(dom, T=0.1, nt=9)
    z = GridFunction.zeros(grid)
    gs = build_good_set(z, z, np.zeros(grid.shape), q=1.5, lam=1.0, p=2.0)
    tr = truncate(z, gs, 1.0, 2.0)
    reports = verify_truncation_bounds(tr)
    assert all(r.lhs == 0.0 for r in reports)


from freeze import cap as _cap

FROZEN_TRUNCATION = {
    name: _cap(name)
    for name in (
        "truncation_sup_value",
        "truncation_sup_gradient",
        "truncation_neighbor_diff",
        "truncation_time_derivative",
        "truncation_product_theta1",
    )
}


def test_truncation_bounds_heat_instance():
    _, grid, nl, u, w = solver_instance()
    gs = build_good_set(u, w, np.zeros(grid.shape), q=1.5, lam=0.0, p=2.0)
    lam = lambda_from_percentile(gs.g, 90.0)
    gs = build_good_set(u, w, np.zeros(grid.shape), q=1.5, lam=lam, p=2.0)
    vh = steklov(u.with_values(u.values - w.values), 2 * grid.dt)
    tr = truncate(vh, gs, lam, 2.0)
    for rep in verify_truncation_bounds(tr):
        cap = FROZEN_TRUNCATION.get(rep.name)
        if cap is not None:
            assert rep.ratio <= cap, (rep.name, rep.ratio)


def test_truncation_lambda_scaling_p2():
    # p = 2: the whole construction is jointly 1-homogeneous in (data, lam)
    ratios = {}
    for amp in (1.0, 2.0):
        _, grid, nl, u, w = solver_instance(amp=amp)
        gs = build_good_set(u, w, np.zeros(grid.shape), q=1.5, lam=0.0, p=2.0)
        lam = lambda_from_percentile(gs.g, 90.0)
        gs = build_good_set(u, w, np.zeros(grid.shape), q=1.5, lam=lam, p=2.0)
        vh = steklov(u.with_values(u.values - w.values), 2 * grid.dt)
        tr = truncate(vh, gs, lam, 2.0)
        ratios[amp] = {r.name: r.ratio for r in verify_truncation_bounds(tr)}
    for name in ratios[1.0]:
        a, b = ratios[1.0][name], ratios[2.0][name]
        assert abs(a - b) <= 1e-10 * max(1.0, abs(a)), (name, a, b)


def test_lipschitz_certify_truncation():
    _, grid, nl, u, w = solver_instance()
    gs = build_good_set(u, w, np.zeros(grid.shape), q=1.5, lam=0.0, p=2.0)
    lam = lambda_from_percentile(gs.g, 90.0)
    gs = build_good_set(u, w, np.zeros(grid.shape), q=1.5, lam=lam, p=2.0)
    vh = steklov(u.with_values(u.values - w.values), 2 * grid.dt)
    tr = truncate(vh, gs, lam, 2.0)
    res = lipschitz_certify_truncation(tr, lam, 2.0)
    assert res["direct_over_lambda"] <= _cap("truncation_lipschitz_over_lambda")


def test_initial_boundary_v_equal_data():
    dom = make_domain("interval", length=1.0, cells=64)
    grid = make_grid(dom, t0=0.0, T=0.1, nt=17)
    u = GridFunction.from_callable(grid, lambda x, t: np.sin(np.pi * x) * (1 + t))
    Q = ParabolicCylinder(((0.5,), 0.0004), 0.03, 1.0)  # straddles t = 0
    v, eta, zeta = build_initial_boundary_v(u, u, Q)
    assert np.all(v.values == 0.0)


def test_initial_boundary_v_plateau_and_gradient_bound():
    dom = make_domain("interval", length=1.0, cells=128)
    grid = make_grid(dom, t0=0.0, T=0.1, nt=33)
    u = GridFunction.from_callable(grid, lambda x, t: x + t)
    w = GridFunction.zeros(grid)
    rho = 0.02
    s_half = rho * rho  # gamma = 1
    Q = ParabolicCylinder(((0.5,), s_half / 2), rho, 1.0)
    v, eta, zeta = build_initial_boundary_v(u, w, Q)
    x = dom.centers(0)
    inner = np.abs(x - 0.5) <= 4 * rho
    assert np.allclose(eta[inner], 1.0)
    k_inner = np.abs(grid.times - Q.t) <= 4 * s_half
    assert np.allclose(zeta[k_inner], 1.0)
    # |grad eta| <= C / rho with the quintic-ramp constant C < 0.5
    deta = np.abs(np.diff(eta)) / dom.cell_size[0]
    assert deta.max() <= 0.5 / rho
    # v = u - w exactly on the plateau
    for k in np.nonzero(k_inner)[0]:
        assert np.allclose(v.values[k][inner], (u.values - w.values)[k][inner])


def test_initial_boundary_requires_crossing():
    dom = make_domain("interval", length=1.0, cells=64)
    grid = make_grid(dom, t0=0.0, T=0.1, nt=17)
    u = GridFunction.zeros(grid)
    Q = ParabolicCylinder(((0.5,), 0.05), 0.01, 1.0)  # interval (0.0499, 0.0501)
    with pytest.raises(CylinderCrossingError):
        build_initial_boundary_v(u, u, Q)
