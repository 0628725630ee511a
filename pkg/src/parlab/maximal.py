"""Strong parabolic maximal operator, the dual-Sobolev maximal operator,
and its time-sliced parabolic variant.

The supremum over all parabolic cylinders is realized over a dyadic family
of box windows (all spatial sizes x all time lengths, powers of two down
to one cell).  Every window mean is a genuine cylinder mean of the
zero-extended field, so the discrete operator is dominated by the
continuum one; refining the family only increases it.  Outputs live on
the full lattice (they do not vanish outside the domain mask), hence are
plain arrays rather than GridFunctions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from parlab.errors import InvalidParamsError
from parlab.calculus import neg_sobolev_norm
from parlab.grid import ball_volume


def _dyadic_sizes(n):
    sizes = [1]
    while sizes[-1] < n:
        sizes.append(sizes[-1] * 2)
    return sizes


@dataclass(frozen=True)
class CylinderFamily:
    """Dyadic ladder of window shapes (time length in slices, spatial width
    in cells); the supremum index set of the maximal operators."""

    spatial_sizes: tuple
    time_sizes: tuple

    @staticmethod
    def for_grid(grid):
        return CylinderFamily(
            spatial_sizes=tuple(_dyadic_sizes(max(grid.spatial.counts))),
            time_sizes=tuple(_dyadic_sizes(grid.nt)),
        )

    @staticmethod
    def for_domain(domain):
        return CylinderFamily(
            spatial_sizes=tuple(_dyadic_sizes(max(domain.counts))), time_sizes=(1,)
        )

    def covers(self, grid):
        return self.spatial_sizes[-1] >= max(grid.spatial.counts) and (
            self.time_sizes[-1] >= grid.nt
        )

    def refined(self):
        """Insert intermediate (3 * 2^k) sizes: a strictly larger family."""
        extra_s = sorted(set(self.spatial_sizes) | {3 * s for s in self.spatial_sizes[:-1]})
        extra_t = sorted(set(self.time_sizes) | {3 * s for s in self.time_sizes[:-1]})
        return CylinderFamily(tuple(extra_s), tuple(extra_t))


def _window_max_of_means(field, size):
    """max over box windows of the given shape containing each point of the
    window mean, on the zero-extended field."""
    means = ndimage.uniform_filter(field, size=size, mode="constant", cval=0.0)
    return ndimage.maximum_filter(means, size=size, mode="constant", cval=0.0)


def strong_maximal(values, grid, family=None):
    """M(|f|): pointwise sup of cylinder means of |f| over the family.

    values: (nt, *counts) array (or GridFunction.values).  Returns an array
    of the same shape, >= |values| pointwise (the single-cell window is in
    the family).
    """
    values = np.abs(np.asarray(values, dtype=float))
    if values.shape != grid.shape:
        raise InvalidParamsError("values shape disagrees with the grid")
    family = family or CylinderFamily.for_grid(grid)
    out = np.zeros_like(values)
    ndim_s = grid.spatial.dim
    for bt in family.time_sizes:
        for a in family.spatial_sizes:
            size = (bt,) + (a,) * ndim_s
            np.maximum(out, _window_max_of_means(values, size), out=out)
    return out


def spatial_maximal(field, domain, family=None):
    """Uncentered spatial maximal function over dyadic square windows."""
    field = np.abs(np.asarray(field, dtype=float))
    family = family or CylinderFamily.for_domain(domain)
    out = np.zeros_like(field)
    for a in family.spatial_sizes:
        np.maximum(out, _window_max_of_means(field, a), out=out)
    return out


def neg_maximal(psi_cells, theta, domain, family=None):
    """Dual-norm maximal function via the restriction bound: the local
    W^{-1,theta} norm of f = -div psi on a ball is dominated by the local
    L^theta norm of psi, so the supremum is M(|psi|^theta)^(1/theta).

    psi_cells: (dim, *counts) cell vector field (e.g. from
    NegSobolevRepresentation.psi).  Returns a spatial array.
    """
    mag = np.sqrt(np.sum(np.asarray(psi_cells, dtype=float) ** 2, axis=0))
    return spatial_maximal(mag**theta, domain, family) ** (1.0 / theta)


def neg_maximal_exact(f_slice, theta, domain, positions, sizes=None):
    """Slow path: exact local dual-norm minimization per window.

    For each lattice position (index tuple), runs the constrained
    minimizer on every dyadic window containing it and returns
    sup |B|^(-1/theta) ||f||_{W^{-1,theta}(B)}.  Used to measure the gap
    left by the restriction bound.
    """
    f_slice = np.asarray(f_slice, dtype=float)
    counts = domain.counts
    sizes = sizes or [s for s in _dyadic_sizes(max(counts)) if s >= 4]
    out = np.zeros(len(positions))
    for m, pos in enumerate(positions):
        best = 0.0
        for s in sizes:
            # windows of width s (cells) containing pos: align to corners
            anchors = set()
            for shift in (0, s // 2):
                corner = tuple(
                    min(max(p - s // 2 + shift, 0), max(c - s, 0))
                    for p, c in zip(pos, counts)
                )
                anchors.add(corner)
            for corner in anchors:
                window = np.zeros(counts, dtype=bool)
                sl = tuple(slice(c, min(c + s, n)) for c, n in zip(corner, counts))
                window[sl] = True
                sub = window & domain.mask
                if sub.sum() < 2 or not sub[tuple(pos)]:
                    continue
                try:
                    norm, _ = neg_sobolev_norm(f_slice * window, theta, domain, region=sub)
                except Exception:
                    continue
                vol = (s * domain.cell_size[0]) ** domain.dim
                best = max(best, norm / vol ** (1.0 / theta))
        out[m] = best
    return out


def neg_maximal_spacetime(w_field, theta, grid, chi=None, family=None):
    """Time-sliced dual maximal operator: per point, sup over box cylinders
    B x (a,b) of the time average of |B|^(-1/theta) local-norm bounds.

    w_field: (nt, dim, *counts) slicewise representation of the
    distributional source.  chi: optional boolean (nt, *counts)
    localization multiplying the data first.  Returns (nt, *counts).

    With theta = 1 the inner and outer averages merge and the operator is
    the plain strong maximal function of |w|.
    """
    mag = np.sqrt(np.sum(np.asarray(w_field, dtype=float) ** 2, axis=1))
    if chi is not None:
        mag = mag * chi
    family = family or CylinderFamily.for_grid(grid)
    ndim_s = grid.spatial.dim
    out = np.zeros(grid.shape)
    for a in family.spatial_sizes:
        # local spatial L^theta mean per slice, at window centers
        inner = ndimage.uniform_filter(
            mag**theta, size=(1,) + (a,) * ndim_s, mode="constant", cval=0.0
        ) ** (1.0 / theta)
        for bt in family.time_sizes:
            tmean = ndimage.uniform_filter(
                inner, size=(bt,) + (1,) * ndim_s, mode="constant", cval=0.0
            )
            cand = ndimage.maximum_filter(
                tmean, size=(bt,) + (a,) * ndim_s, mode="constant", cval=0.0
            )
            np.maximum(out, cand, out=out)
    return out


def weak_one_one_ratio(values, grid, mf=None, alphas=None):
    """sup over thresholds of alpha |{M f > alpha}| / ||f||_1."""
    if mf is None:
        mf = strong_maximal(values, grid)
    vol = grid.spatial.cell_volume * grid.dt
    l1 = float(np.abs(values).sum()) * vol
    if l1 == 0:
        return 0.0
    if alphas is None:
        top = mf.max()
        alphas = top * np.logspace(-3, -0.05, 25)
    worst = 0.0
    for a in alphas:
        meas = float((mf > a).sum()) * vol
        worst = max(worst, a * meas / l1)
    return worst
