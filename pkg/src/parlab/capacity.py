"""Variational p-capacity by constrained convex minimization, uniform
thickness measurement of domain complements, and the capacity-weighted
Sobolev-Poincare check.

The capacity of a condenser (K, B) is computed as the minimum of the
discrete energy sum |grad phi|^p over fields pinned to 1 on K, 0 outside
B, and clamped to [0, 1]; the minimizer runs projected quasi-Newton
descent (L-BFGS-B with box constraints) on the free cells, which is a
convergent first-order scheme for this convex obstacle-type problem.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from parlab.errors import (
    ExponentConstraintError,
    InvalidParamsError,
    NoConvergenceError,
)
from parlab.grid import ball_volume
from parlab.report import EstimateReport


def _energy_and_grad(phi, cell_size, p, eps):
    """Energy sum_i vol * (|grad+ phi|^2 + eps^2)^(p/2) and its gradient,
    forward differences with zero extension beyond the array."""
    dim = phi.ndim
    vol = float(np.prod(cell_size))
    diffs = []
    mag2 = np.zeros_like(phi)
    for d in range(dim):
        h = cell_size[d]
        g = (np.roll(phi, -1, axis=d) - phi) / h
        sl = [slice(None)] * dim
        sl[d] = -1
        g[tuple(sl)] = (0.0 - phi[tuple(sl)]) / h  # zero beyond the edge
        diffs.append(g)
        mag2 += g * g
    w = (mag2 + eps * eps) ** (p / 2.0)
    energy = vol * float(w.sum())
    a = p * (mag2 + eps * eps) ** (p / 2.0 - 1.0)
    grad = np.zeros_like(phi)
    for d in range(dim):
        h = cell_size[d]
        flux = a * diffs[d]
        back = np.roll(flux, 1, axis=d)
        sl = [slice(None)] * dim
        sl[d] = 0
        back[tuple(sl)] = 0.0
        grad += (back - flux) / h
    return energy, vol * grad


def p_capacity(k_mask, b_mask, cell_size, p, tol=1e-9, max_iter=2000, eps=None):
    """Variational p-capacity of the condenser (K, B) on a local lattice.

    k_mask, b_mask: boolean arrays on a common lattice with spacing
    cell_size; K must be contained in B.  Returns the minimal energy.
    """
    k_mask = np.asarray(k_mask, dtype=bool)
    b_mask = np.asarray(b_mask, dtype=bool)
    if p <= 1:
        raise InvalidParamsError("capacity needs p > 1")
    if np.any(k_mask & ~b_mask):
        raise InvalidParamsError("K must be contained in B")
    if not k_mask.any():
        return 0.0
    cell_size = tuple(float(h) for h in np.atleast_1d(cell_size))
    if len(cell_size) == 1:
        cell_size = cell_size * k_mask.ndim

    free = b_mask & ~k_mask
    phi0 = np.where(k_mask, 1.0, 0.0)
    if eps is None:
        eps = 0.0 if p >= 2 else 1e-8 / max(cell_size)

    nfree = int(free.sum())
    if nfree == 0:
        e, _ = _energy_and_grad(phi0, cell_size, p, eps)
        return e

    def fun(x):
        phi = phi0.copy()
        phi[free] = x
        e, g = _energy_and_grad(phi, cell_size, p, eps)
        return e, g[free]

    x0 = np.full(nfree, 0.5)
    res = optimize.minimize(
        fun,
        x0,
        jac=True,
        method="L-BFGS-B",
        bounds=[(0.0, 1.0)] * nfree,
        options={"maxiter": max_iter, "ftol": tol, "gtol": 1e-12},
    )
    if not res.success and res.status != 1:  # status 1: maxiter, still usable
        raise NoConvergenceError(f"capacity minimization failed: {res.message}")
    return float(res.fun)


def _local_window(domain, center_idx, half_cells):
    """Global index slices and local coordinates of a square window around a
    cell (window may extend conceptually beyond the array; cells outside the
    array belong to the complement of the domain)."""
    lo = [c - half_cells for c in center_idx]
    hi = [c + half_cells + 1 for c in center_idx]
    shape = tuple(h - l for l, h in zip(lo, hi))
    inside = np.zeros(shape, dtype=bool)
    src = []
    dst = []
    for d in range(domain.dim):
        g0 = max(lo[d], 0)
        g1 = min(hi[d], domain.counts[d])
        src.append(slice(g0, g1))
        dst.append(slice(g0 - lo[d], g1 - lo[d]))
    if all(s.stop > s.start for s in src):
        inside[tuple(dst)] = domain.mask[tuple(src)]
    return lo, shape, inside


def _window_ball(shape, lo, center_idx, cell_size, radius):
    axes = [
        ((np.arange(shape[d]) + lo[d]) - center_idx[d]) * cell_size[d]
        for d in range(len(shape))
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    d2 = sum(m * m for m in mesh)
    return d2 <= radius * radius * (1 + 1e-12)


@dataclass
class ThicknessReport:
    """Worst-case capacity-density ratio of the domain complement."""

    b0_empirical: float
    r0: float
    samples: list = field(default_factory=list)  # (point, radius, ratio)

    def to_dict(self):
        return {
            "b0_empirical": self.b0_empirical,
            "r0": self.r0,
            "samples": [
                {"point": list(pt), "radius": r, "ratio": ratio}
                for pt, r, ratio in self.samples
            ],
        }


def thickness_check(domain, p, radii_cells=(2, 4, 8, 16), max_points=24, rng=None):
    """Capacity-density ratios of the complement at sampled boundary cells.

    For each boundary cell center y0 and radius r the ratio
    cap_p(closed B_r(y0) ∩ complement, B_2r(y0)) / cap_p(closed B_r(y0), B_2r(y0))
    is computed on a local window; the report records the worst case.
    """
    boundary = sorted(domain.boundary_cells)
    if not boundary:
        raise InvalidParamsError("domain has no boundary cells")
    rng = rng or np.random.default_rng(0)
    if len(boundary) > max_points:
        take = rng.choice(len(boundary), size=max_points, replace=False)
        boundary = [boundary[i] for i in sorted(take)]
    h = domain.cell_size
    samples = []
    for idx in boundary:
        for rc in radii_cells:
            radius = rc * max(h)
            half = 2 * rc + 2
            lo, shape, inside = _local_window(domain, idx, half)
            ball_r = _window_ball(shape, lo, idx, h, radius)
            ball_2r = _window_ball(shape, lo, idx, h, 2 * radius)
            k_full = ball_r
            k_comp = ball_r & ~inside
            denom = p_capacity(k_full, ball_2r, h, p)
            if denom <= 0:
                continue
            numer = p_capacity(k_comp, ball_2r, h, p) if k_comp.any() else 0.0
            ratio = min(numer / denom, 1.0)
            point = tuple((i + 0.5) * hh for i, hh in zip(idx, h))
            samples.append((point, radius, ratio))
    if not samples:
        raise InvalidParamsError("no usable thickness samples")
    ratios = [s[2] for s in samples]
    return ThicknessReport(
        b0_empirical=float(min(ratios)),
        r0=float(max(s[1] for s in samples)),
        samples=samples,
    )


def verify_capacity_sobolev_poincare(domain, values, center, radius, kappa, p, zero_tol=0.0):
    """Ball-mean of |phi|^(kappa p) against the capacity-weighted gradient
    term; the zero set N(phi) supplies the capacity."""
    n = domain.dim
    if p < n:
        kmax = n / (n - p)
    elif p == n:
        kmax = 2.0
    else:
        raise ExponentConstraintError("the capacity form needs p <= n")
    if not 1.0 <= kappa <= kmax + 1e-12:
        raise ExponentConstraintError(f"kappa must lie in [1, {kmax}]")

    from parlab.calculus import spatial_gradient

    smask = domain.ball_mask(center, radius)
    vals = np.asarray(values, dtype=float)
    nmask = smask & (np.abs(vals) <= zero_tol)
    vol = domain.cell_volume
    meas = ball_volume(n, radius)
    lhs = (float((np.abs(vals[smask]) ** (kappa * p)).sum() * vol) / meas) ** (
        1.0 / (kappa * p)
    )
    if not nmask.any():
        return EstimateReport.from_sides(
            "capacity_sobolev_poincare",
            lhs,
            0.0,
            tolerance=np.inf,
            meta={"vacuous": True, "reason": "zero set empty, capacity 0"},
        )

    # capacity of (N, 2B) on a window around the ball
    center_idx = tuple(
        int(np.clip(round(c / hh - 0.5), 0, cnt - 1))
        for c, hh, cnt in zip(center, domain.cell_size, domain.counts)
    )
    rc = int(np.ceil(radius / max(domain.cell_size)))
    lo, shape, _ = _local_window(domain, center_idx, 2 * rc + 2)
    ball_2r = _window_ball(shape, lo, center_idx, domain.cell_size, 2 * radius)
    k_local = np.zeros(shape, dtype=bool)
    rows = np.argwhere(nmask)
    for row in rows:
        local = tuple(int(r) - l for r, l in zip(row, lo))
        if all(0 <= a < s for a, s in zip(local, shape)):
            k_local[local] = True
    cap = p_capacity(k_local, ball_2r, domain.cell_size, p)
    if cap <= 0:
        return EstimateReport.from_sides(
            "capacity_sobolev_poincare",
            lhs,
            0.0,
            tolerance=np.inf,
            meta={"vacuous": True, "reason": "zero capacity"},
        )
    g = spatial_gradient(vals, domain)
    gm = np.sqrt((g * g).sum(axis=0))
    grad_term = float((gm[smask] ** p).sum() * vol)
    rhs = (grad_term / cap) ** (1.0 / p)
    return EstimateReport.from_sides(
        "capacity_sobolev_poincare",
        lhs,
        rhs,
        tolerance=np.inf,
        meta={"kappa": kappa, "p": p, "capacity": cap, "zero_cells": int(nmask.sum())},
    )
