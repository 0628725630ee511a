#!/usr/bin/env python3
"""Measure the suite maxima that tests/freeze.py pins.

Run from the repository root:  python3 scripts/calibrate.py
Prints one line per frozen constant; paste reviewed values into
tests/freeze.py.
"""

import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from parlab.calculus import steklov
from parlab.estimates import (
    find_intrinsic_cylinder,
    ladder,
    verify_apriori,
    verify_caccioppoli,
    verify_higher_integrability,
    verify_reverse_holder,
    verify_time_slice_estimate,
)
from parlab.grid import GridFunction, ParabolicCylinder, make_domain, make_grid
from parlab.maximal import strong_maximal
from parlab.solver import Nonlinearity, SolveConfig, solve
from parlab.truncation import (
    build_good_set,
    lambda_from_percentile,
    lipschitz_certify_truncation,
    truncate,
    verify_truncation_bounds,
)
from parlab.whitney import build_cover, check_cover

SEED = 20240817


def whitney_section():
    from test_whitney import random_closed_set, small_grid

    rng = np.random.default_rng(SEED)
    grid = small_grid(cells=24, nt=16)
    w7 = w8 = 0
    w13 = 0.0
    for lam in (0.5, 1.0, 2.0):
        for p in (1.6, 2.0, 3.0):
            for _ in range(12):
                E = random_closed_set(grid, rng, lam, p)
                cover = build_cover(E, grid, lam, p)
                res = check_cover(cover, E, rng=rng, n_partition_samples=60)
                w7 = max(w7, res["W7_max_overlap"])
                w8 = max(w8, res["W8_max_neighbors"])
                w13 = max(w13, res["W13_all_orders"])
    print(f'whitney_W7_overlap_n1: {w7}')
    print(f'whitney_W8_neighbors_n1: {w8}')
    print(f'whitney_W13_n1: {w13:.3f}')


def maximal_section():
    rng = np.random.default_rng(SEED)
    dom = make_domain("interval", cells=64)
    grid = make_grid(dom, T=1.0, nt=33)
    for theta in (1.5, 2.0, 3.0):
        worst = 0.0
        for _ in range(20):
            vals = rng.standard_normal(grid.shape)
            mf = strong_maximal(vals, grid)
            worst = max(worst, (np.abs(mf) ** theta).sum() ** (1 / theta)
                        / (np.abs(vals) ** theta).sum() ** (1 / theta))
        print(f'maximal_Ltheta_{theta}: {worst:.3f}')

    from parlab.calculus import neg_sobolev_norm
    from parlab.maximal import neg_maximal

    worst = 0.0
    h = dom.cell_volume
    for q in (1.5, 2.0, 3.0):
        for _ in range(20):
            f = rng.standard_normal(64)
            _, rep = neg_sobolev_norm(f, 2.0, dom)
            mf = neg_maximal(rep.psi, 1.2, dom)
            mag = np.sqrt((rep.psi**2).sum(axis=0))
            num = ((mf**q).sum() * h) ** (1 / q)
            den = ((mag**q).sum() * h) ** (1 / q)
            worst = max(worst, num / den)
    print(f'dual_maximal_Lq: {worst:.3f}')


def truncation_section():
    from test_truncation import run_truncation_sweep

    rng = np.random.default_rng(SEED)
    worst, lip, identity_exact = run_truncation_sweep(rng=rng)
    for name, val in sorted(worst.items()):
        print(f'{name}: {val:.3f}')
    print(f'truncation_lipschitz_over_lambda: {lip:.3f}')
    print(f'(identity exact on good set: {identity_exact})')


def estimates_section():
    rng = np.random.default_rng(SEED)

    def instance(p, cells=192, nt=65):
        dom = make_domain("interval", length=1.0, cells=cells)
        grid = make_grid(dom, t0=0.0, T=0.1, nt=nt)
        x = dom.centers(0)
        tt = grid.times[:, None]
        w = GridFunction(grid, 0.3 * np.sin(np.pi * x)[None, :] * (0.5 + tt / grid.T))
        nl = Nonlinearity(p=p, dim=1,
                          variant="regularized" if p != 2 else "p_laplace",
                          eps=1e-6 if p != 2 else 0.0)
        u = solve(nl, grid, w, w.values[0].copy(), SolveConfig(newton_tol=1e-11))
        return dom, grid, nl, u, w

    worst_ap = 0.0
    for p in (1.8, 2.0, 3.0):
        dom, grid, nl, u, w = instance(p, cells=48, nt=33)
        for beta in (0.05, 0.1, 0.2):
            lad = ladder(p, 1, beta, 0.5)
            worst_ap = max(worst_ap, verify_apriori(u, w, nl, lad, rng=rng).ratio)
    print(f'apriori_ratio: {worst_ap:.3f}')

    worst_ts = 0.0
    dom, grid, nl, u, w = instance(2.0, cells=48, nt=33)
    from parlab.whitney import _ramp

    for _ in range(20):
        c = rng.uniform(0.3, 0.7)
        r = rng.uniform(0.15, 0.3)
        mesh = dom.center_mesh()
        phi = _ramp(np.sqrt(sum((m - c) ** 2 for m in mesh)) / r)
        k1, k2 = sorted(rng.choice(np.arange(2, grid.nt - 6), size=2, replace=False))
        rep = verify_time_slice_estimate(u, w, nl, phi, np.ones(grid.nt),
                                         grid.times[k1], grid.times[k2], h=3 * grid.dt)
        worst_ts = max(worst_ts, rep.ratio)
    print(f'time_slice_ratio: {worst_ts:.3f}')

    worst_cac = worst_rh = worst_hi = 0.0
    for p in (1.8, 2.0, 3.0):
        dom, grid, nl, u, w = instance(p)
        lad = ladder(p, 1, 0.1, 0.5)
        icd = find_intrinsic_cylinder(u, w, nl, lad, (0.42,), 5.0 / 192)
        if not all(icd.two_sided):
            print(f'  [p={p}: alpha0 two-sided failed, skipped]')
            continue
        worst_cac = max(worst_cac, verify_caccioppoli(u, w, nl, icd, lad).ratio)
        worst_rh = max(worst_rh, verify_reverse_holder(u, w, nl, icd, lad).ratio)
        Q2 = ParabolicCylinder(icd.Q.center, 2 * icd.Q.r, icd.Q.gamma / 2.0)
        worst_hi = max(
            worst_hi, verify_higher_integrability(u, w, nl, icd.Q, Q2, lad).ratio
        )
    print(f'caccioppoli_ratio: {worst_cac:.3f}')
    print(f'reverse_holder_ratio: {worst_rh:.3f}')
    print(f'higher_integrability_ratio: {worst_hi:.3f}')


def calculus_section():
    from scipy import ndimage

    from parlab.calculus import (
        make_poincare_weights,
        verify_gagliardo_nirenberg,
        verify_parabolic_poincare,
    )

    rng = np.random.default_rng(SEED)
    dom = make_domain("interval", cells=64)
    grid = make_grid(dom, T=1.0, nt=33)
    mu, xi = make_poincare_weights(dom, (0.5,), 0.3, grid, (0.2, 0.8))
    worst = 0.0
    for _ in range(100):
        vals = ndimage.gaussian_filter(rng.standard_normal(grid.shape), 2.0)
        f = GridFunction(grid, vals)
        rep = verify_parabolic_poincare(f, (0.5,), 0.3, (0.2, 0.8), (0.0, 1.0),
                                        mu, xi, theta=2.0)
        worst = max(worst, rep.ratio)
    print(f'parabolic_poincare_ratio: {worst:.3f}')

    dom2 = make_domain("box", lengths=(2.0, 2.0), cells=(48, 48))
    xx, yy = dom2.center_mesh()
    worst = 0.0
    for _ in range(20):
        c = rng.standard_normal(6)
        vals = c[0] + c[1] * xx + c[2] * yy + c[3] * xx * yy + c[4] * xx**2 + c[5] * yy**2
        rep = verify_gagliardo_nirenberg(dom2, vals, (1.0, 1.0), 0.9, 2.0, 2.0, 1.0, 0.5)
        worst = max(worst, rep.ratio)
    print(f'gagliardo_nirenberg_ratio: {worst:.3f}')


def capacity_section():
    from parlab.capacity import thickness_check

    dom = make_domain("box", lengths=(1.0, 1.0), cells=(32, 32))
    rep = thickness_check(dom, 2.0, radii_cells=(2, 4, 8), max_points=12)
    print(f'thickness_box_b0: {rep.b0_empirical:.3f}')


if __name__ == "__main__":
    for section in (whitney_section, maximal_section, truncation_section,
                    estimates_section, calculus_section, capacity_section):
        t0 = time.time()
        print(f"--- {section.__name__} ---")
        section()
        print(f"    ({time.time() - t0:.1f}s)")
