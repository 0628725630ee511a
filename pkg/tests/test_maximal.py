import numpy as np
import pytest

from parlab.calculus import neg_sobolev_norm, slicewise_representation
from parlab.grid import GridFunction, ParabolicCylinder, cylinder_masks, make_domain, make_grid
from parlab.maximal import (
    CylinderFamily,
    neg_maximal,
    neg_maximal_exact,
    neg_maximal_spacetime,
    spatial_maximal,
    strong_maximal,
    weak_one_one_ratio,
)


def test_constant_maps_to_constant(interval_grid):
    vals = np.full(interval_grid.shape, 3.0)
    mf = strong_maximal(vals, interval_grid)
    assert np.allclose(mf, 3.0, atol=1e-12)


def test_indicator_center_value(interval_grid):
    q = ParabolicCylinder(((0.5,), 0.5), 0.15, 1.0)
    tmask, smask = cylinder_masks(interval_grid, q)
    vals = np.zeros(interval_grid.shape)
    vals[tmask] = smask * 1.0
    mf = strong_maximal(vals, interval_grid)
    k = np.argmin(np.abs(interval_grid.times - 0.5))
    i = np.argmin(np.abs(interval_grid.spatial.centers(0) - 0.5))
    assert mf[k, i] == 1.0


def test_dominates_pointwise(interval_grid, rng):
    vals = rng.standard_normal(interval_grid.shape)
    mf = strong_maximal(vals, interval_grid)
    assert np.all(mf >= np.abs(vals) - 1e-14)


def test_sublinear_homogeneous_monotone(interval_grid, rng):
    f = rng.standard_normal(interval_grid.shape)
    g = rng.standard_normal(interval_grid.shape)
    mf = strong_maximal(f, interval_grid)
    mg = strong_maximal(g, interval_grid)
    msum = strong_maximal(f + g, interval_grid)
    assert np.all(msum <= mf + mg + 1e-12)
    c = -2.5
    assert np.allclose(strong_maximal(c * f, interval_grid), abs(c) * mf, atol=1e-12)
    small = np.abs(f)
    big = np.abs(f) + np.abs(g)
    assert np.all(
        strong_maximal(small, interval_grid) <= strong_maximal(big, interval_grid) + 1e-14
    )


def test_refining_family_increases(interval_grid, rng):
    vals = np.abs(rng.standard_normal(interval_grid.shape))
    fam = CylinderFamily.for_grid(interval_grid)
    m1 = strong_maximal(vals, interval_grid, fam)
    m2 = strong_maximal(vals, interval_grid, fam.refined())
    assert np.all(m2 >= m1 - 1e-14)


@pytest.mark.parametrize("dim", [1, 2])
def test_weak_one_one(dim, rng):
    if dim == 1:
        dom = make_domain("interval", cells=64)
        grid = make_grid(dom, T=1.0, nt=33)
    else:
        dom = make_domain("box", cells=(20, 20))
        grid = make_grid(dom, T=1.0, nt=13)
    bound = 5.0 ** (dim + 2)
    worst = 0.0
    for _ in range(50):
        vals = rng.standard_normal(grid.shape) * dom.mask
        worst = max(worst, weak_one_one_ratio(vals, grid))
    assert worst <= bound


def test_ltheta_bound(interval_grid, rng):
    # frozen constants per theta; never increasing across commits
    from freeze import cap as frozen_cap

    caps = {t: frozen_cap(f"maximal_Ltheta_{t}") for t in (1.5, 2.0, 3.0)}
    vol = interval_grid.spatial.cell_volume * interval_grid.dt
    for theta, cap in caps.items():
        worst = 0.0
        for _ in range(20):
            vals = rng.standard_normal(interval_grid.shape)
            mf = strong_maximal(vals, interval_grid)
            num = (np.abs(mf) ** theta).sum() ** (1 / theta)
            den = (np.abs(vals) ** theta).sum() ** (1 / theta)
            worst = max(worst, num / den)
        assert worst <= cap, f"theta={theta}: {worst}"


def test_neg_maximal_zero():
    dom = make_domain("interval", cells=32)
    psi = np.zeros((1, 32))
    out = neg_maximal(psi, 1.2, dom)
    assert np.all(out == 0.0)


def test_neg_maximal_pointwise_chain(rng):
    # M^{-1,theta} f <= M(|psi|^theta)^(1/theta) pointwise, on every instance
    dom = make_domain("interval", cells=48)
    theta = 1.2
    for _ in range(5):
        f = rng.standard_normal(48)
        _, rep = neg_sobolev_norm(f, 2.0, dom)
        bound = neg_maximal(rep.psi, theta, dom)
        positions = [(i,) for i in range(4, 44, 10)]
        exact = neg_maximal_exact(f, theta, dom, positions)
        for m, pos in enumerate(positions):
            assert exact[m] <= bound[pos] * (1 + 1e-9) + 1e-12


def test_neg_maximal_strong_bound(rng):
    # ||M^{-1,theta} f||_q <= C ||psi||_q for q > theta, C frozen
    from freeze import cap as frozen_cap

    dom = make_domain("interval", cells=64)
    h = dom.cell_volume
    theta = 1.2
    frozen_c = frozen_cap("dual_maximal_Lq")
    for q in (1.5, 2.0, 3.0):
        worst = 0.0
        for _ in range(20):
            f = rng.standard_normal(64)
            _, rep = neg_sobolev_norm(f, 2.0, dom)
            mf = neg_maximal(rep.psi, theta, dom)
            num = ((mf**q).sum() * h) ** (1 / q)
            mag = np.sqrt((rep.psi**2).sum(axis=0))
            den = ((mag**q).sum() * h) ** (1 / q)
            if den > 0:
                worst = max(worst, num / den)
        assert worst <= frozen_c, f"q={q}: {worst}"


def test_neg_spacetime_zero(interval_grid):
    w = np.zeros((interval_grid.nt, 1, 64))
    out = neg_maximal_spacetime(w, 1.5, interval_grid)
    assert np.all(out == 0.0)


def test_neg_spacetime_time_constant_reduces(interval_grid, rng):
    # time-constant field: agrees with the one-slice spatial operator
    psi = rng.standard_normal((1, 64))
    w = np.broadcast_to(psi, (interval_grid.nt, 1, 64)).copy()
    theta = 1.5
    full = neg_maximal_spacetime(w, theta, interval_grid)
    single = spatial_maximal(np.abs(psi[0]) ** theta, interval_grid.spatial) ** (1 / theta)
    assert np.allclose(full[interval_grid.nt // 2], single, atol=1e-12)


def test_neg_spacetime_jensen_chain(interval_grid, rng):
    # time-average of local norms <= M(|w|^s)^{1/s} pointwise for s >= 1
    s = 1.4  # plays q/(p-1)
    for _ in range(20):
        w = rng.standard_normal((interval_grid.nt, 1, 64))
        ours = neg_maximal_spacetime(w, s, interval_grid)
        mag = np.abs(w[:, 0, :])
        other = strong_maximal(mag**s, interval_grid) ** (1.0 / s)
        assert np.all(ours <= other * (1 + 1e-10) + 1e-12)
