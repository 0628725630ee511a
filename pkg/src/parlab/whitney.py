"""Intrinsic parabolic metric, Whitney-type coverings of the complement of
a closed lattice set, subordinate partitions of unity, and a Campanato-type
Lipschitz certifier.

The covering uses the scaling gamma = lambda^(2-p): cylinders
Q_j = B(x_j, r_j) x (t_j - gamma r_j^2, t_j + gamma r_j^2) are exactly the
balls of the metric  d(z1, z2) = max(|x1-x2|, sqrt(lambda^(p-2) |t1-t2|)).

Construction: every lattice point z outside E gets the radius
r(z) = d(z, E)/16; points are then visited by descending radius and
selected whenever they are not yet covered by a previously selected half
cylinder.  Visiting order makes the quarter cylinders of the selected
family automatically pairwise disjoint, and the half cylinders cover the
complement, which is the usual Vitali argument run in reverse.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from parlab.errors import EmptyComplementError, InvalidParamsError

# quintic ramp: 1 on [0, 1/2], 0 on [3/4, inf), C^2 monotone in between


def _ramp(u):
    s = np.clip((np.asarray(u, dtype=float) - 0.5) * 4.0, 0.0, 1.0)
    return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s * s)


def _ramp_prime(u):
    u = np.asarray(u, dtype=float)
    s = np.clip((u - 0.5) * 4.0, 0.0, 1.0)
    inside = (u > 0.5) & (u < 0.75)
    return np.where(inside, -4.0 * 30.0 * s * s * (1.0 - s) ** 2, 0.0)


@dataclass(frozen=True)
class ParabolicMetric:
    """d((x1,t1),(x2,t2)) = max(|x2-x1|, sqrt(lambda^(p-2) |t2-t1|))."""

    lam: float
    p: float

    def __post_init__(self):
        if self.lam <= 0:
            raise InvalidParamsError("lambda must be positive")

    @property
    def gamma(self):
        return self.lam ** (2.0 - self.p)

    def distance(self, z1, z2):
        (x1, t1), (x2, t2) = z1, z2
        dx = np.sqrt(sum((a - b) ** 2 for a, b in zip(np.atleast_1d(x1), np.atleast_1d(x2))))
        dt = np.sqrt(self.lam ** (self.p - 2.0) * abs(t2 - t1))
        return max(float(dx), float(dt))


def metric_distance(z1, z2, metric):
    return metric.distance(z1, z2)


@dataclass
class WhitneyCover:
    """Selected cylinders, their neighbor sets, and the partition data."""

    grid: object  # SpaceTimeGrid
    lam: float
    p: float
    centers_x: np.ndarray  # (K, dim)
    centers_t: np.ndarray  # (K,)
    radii: np.ndarray  # (K,)
    neighbor_sets: list = field(default_factory=list)  # A_k as index arrays
    has_partition: bool = False

    @property
    def gamma(self):
        return self.lam ** (2.0 - self.p)

    @property
    def size(self):
        return len(self.radii)

    def cylinder_lattice_mask(self, j, alpha=1.0):
        """Boolean (nt, counts) mask of lattice points in alpha * Q_j."""
        r = alpha * self.radii[j]
        return _raster(self.grid, self.centers_x[j], self.centers_t[j], r, self.gamma)

    # ----- partition of unity -------------------------------------------

    def raw_bump(self, j, xs, ts):
        """Unnormalized bump psi_j at points (xs (m, dim), ts (m,)): product
        of ramps in the spatial and scaled-time metric components."""
        dx = np.sqrt(((xs - self.centers_x[j]) ** 2).sum(axis=1))
        dtm = np.sqrt(self.lam ** (self.p - 2.0) * np.abs(ts - self.centers_t[j]))
        r = self.radii[j]
        return _ramp(dx / r) * _ramp(dtm / r)

    def raw_bump_grad(self, j, xs, ts):
        """(psi, d_x psi (m, dim), d_t psi) of the unnormalized bump."""
        diff = xs - self.centers_x[j]
        dx = np.sqrt((diff**2).sum(axis=1))
        lamp = self.lam ** (self.p - 2.0)
        dtm = np.sqrt(lamp * np.abs(ts - self.centers_t[j]))
        r = self.radii[j]
        bx = _ramp(dx / r)
        bt = _ramp(dtm / r)
        bxp = _ramp_prime(dx / r) / r
        btp = _ramp_prime(dtm / r) / r
        psi = bx * bt
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(dx[:, None] > 0, diff / np.maximum(dx, 1e-300)[:, None], 0.0)
        gx = (bxp * bt)[:, None] * unit
        # d/dt sqrt(lam^(p-2)|dt|) = lam^(p-2) sign(dt) / (2 dtm); ramp' = 0 near 0
        dts = ts - self.centers_t[j]
        with np.errstate(invalid="ignore", divide="ignore"):
            ddt = np.where(dtm > 0, lamp * np.sign(dts) / (2.0 * np.maximum(dtm, 1e-300)), 0.0)
        gt = bx * btp * ddt
        return psi, gx, gt

    def stats(self):
        """Cover statistics for reports: count, radius histogram, overlap."""
        hist, edges = np.histogram(self.radii, bins=10)
        overlap = _overlap_count(self, 4.0)
        return {
            "count": int(self.size),
            "radius_min": float(self.radii.min()) if self.size else 0.0,
            "radius_max": float(self.radii.max()) if self.size else 0.0,
            "radius_hist": hist.tolist(),
            "radius_edges": edges.tolist(),
            "max_overlap_4Q": int(overlap.max()) if self.size else 0,
            "max_neighbors": max((len(a) for a in self.neighbor_sets), default=0),
        }


def _window(grid, cx, ct, r, gamma, closed):
    """(time index array, spatial slices, local ball mask) of the cylinder,
    touching only the lattice window around it."""
    dom = grid.spatial
    s = gamma * r * r
    pad = 1e-12 * max(s, 1e-300)
    if closed:
        kidx = np.nonzero(np.abs(grid.times - ct) <= s + pad)[0]
    else:
        kidx = np.nonzero(np.abs(grid.times - ct) < s)[0]
    slices = []
    axes = []
    for d in range(dom.dim):
        c = dom.centers(d)
        i0 = int(np.searchsorted(c, cx[d] - r - dom.cell_size[d]))
        i1 = int(np.searchsorted(c, cx[d] + r + dom.cell_size[d]))
        i0 = max(i0 - 1, 0)
        i1 = min(i1 + 1, dom.counts[d])
        slices.append(slice(i0, i1))
        axes.append(c[i0:i1])
    mesh = np.meshgrid(*axes, indexing="ij")
    d2 = sum((m - c) ** 2 for m, c in zip(mesh, cx))
    ball = d2 <= r * r * (1 + 1e-12)
    return kidx, tuple(slices), ball


def _raster(grid, cx, ct, r, gamma):
    kidx, slices, ball = _window(grid, cx, ct, r, gamma, closed=False)
    out = np.zeros(grid.shape, dtype=bool)
    for k in kidx:
        out[(k,) + slices] |= ball
    return out


def _overlap_count(cover, alpha):
    grid = cover.grid
    acc = np.zeros(grid.shape, dtype=np.int32)
    for j in range(cover.size):
        kidx, slices, ball = _window(
            grid, cover.centers_x[j], cover.centers_t[j],
            alpha * cover.radii[j], cover.gamma, closed=False,
        )
        for k in kidx:
            acc[(k,) + slices] += ball
    return acc


def metric_distance_field(grid, E, lam, p):
    """d_lambda(z, E) for every lattice point.

    Per-slice Euclidean distance transforms D_j are combined across time
    offsets m through min_m max(min_{|j-k|<=m} D_j, tau_m) with
    tau_m = sqrt(lam^(p-2) m dt).  The inner window minimum is answered by
    a sparse table, and since it is nonincreasing in m while tau_m grows,
    the optimal offset is found by binary search: O(cells nt log nt).
    """
    E = np.asarray(E, dtype=bool)
    nt = grid.nt
    ncells = int(np.prod(grid.spatial.counts))
    sampling = grid.spatial.cell_size
    D = np.full((nt, ncells), np.inf)
    for k in range(nt):
        if E[k].any():
            if E[k].all():
                D[k] = 0.0
            else:
                D[k] = ndimage.distance_transform_edt(
                    ~E[k], sampling=sampling
                ).ravel()
    tau = np.sqrt(lam ** (p - 2.0) * grid.dt * np.arange(nt, dtype=float))

    # sparse table of window minima over time, per spatial position
    levels = max(1, int(np.floor(np.log2(nt))) + 1)
    table = [D]
    for lvl in range(1, levels):
        half = 1 << (lvl - 1)
        prev = table[-1]
        cur = prev.copy()
        if nt - half > 0:
            cur[: nt - half] = np.minimum(prev[: nt - half], prev[half:])
        table.append(cur)

    def window_min(k, m):
        """min of D over slices [max(0, k-m), min(nt-1, k+m)], vectorized
        over space for a vector of per-position m values."""
        a = np.maximum(k - m, 0)
        b = np.minimum(k + m, nt - 1)
        length = b - a + 1
        lvl = np.clip(np.floor(np.log2(length)).astype(int), 0, levels - 1)
        left = np.empty(ncells)
        right = np.empty(ncells)
        for l in np.unique(lvl):
            sel = lvl == l
            width = 1 << int(l)
            left[sel] = table[int(l)][a[sel], sel.nonzero()[0]]
            right[sel] = table[int(l)][b[sel] - width + 1, sel.nonzero()[0]]
        return np.minimum(left, right)

    out = np.empty((nt, ncells))
    m_idx = np.arange(ncells)
    for k in range(nt):
        # smallest m with tau_m >= window-min (the crossing of a growing and
        # a nonincreasing sequence); evaluate both neighbors of the crossing
        lo = np.zeros(ncells, dtype=int)
        hi = np.full(ncells, nt - 1, dtype=int)
        # invariant target: first m where tau_m >= window_min(k, m)
        cross_hi = window_min(k, hi)
        no_cross = tau[nt - 1] < cross_hi  # never crosses: answer at m = nt-1
        for _ in range(levels + 1):
            mid = (lo + hi) // 2
            wm = window_min(k, mid)
            crossed = tau[mid] >= wm
            hi = np.where(crossed, mid, hi)
            lo = np.where(crossed, lo, np.minimum(mid + 1, nt - 1))
            if np.all(lo >= hi):
                break
        m_star = hi
        cand = np.maximum(tau[m_star], window_min(k, m_star))
        prev = np.maximum(m_star - 1, 0)
        cand_prev = np.maximum(tau[prev], window_min(k, prev))
        res = np.minimum(cand, cand_prev)
        res = np.where(no_cross, np.maximum(window_min(k, hi * 0 + nt - 1), tau[0]),
                       res)
        out[k] = res
    return out.reshape(grid.shape)


def build_cover(E, grid, lam, p):
    """Whitney covering of the complement of the closed lattice set E.

    E is a boolean (nt, *counts) array; its complement within the lattice
    extent gets covered by half cylinders of selected points.
    """
    E = np.asarray(E, dtype=bool)
    if E.shape != grid.shape:
        raise InvalidParamsError("E shape disagrees with the grid")
    comp = ~E
    if not comp.any():
        raise EmptyComplementError("E covers the whole lattice; nothing to cover")
    if not E.any():
        raise InvalidParamsError("E is empty; Whitney radii would be infinite")

    gamma = lam ** (2.0 - p)
    dist = metric_distance_field(grid, E, lam, p)
    radii_field = dist / 16.0

    cand_idx = np.argwhere(comp)
    cand_r = radii_field[comp]
    order = np.argsort(-cand_r, kind="stable")
    cand_idx = cand_idx[order]
    cand_r = cand_r[order]

    covered = E.copy()
    centers_x = []
    centers_t = []
    radii = []
    mesh = grid.spatial.center_mesh()
    times = grid.times
    remaining = int(comp.sum())
    for idx, r in zip(cand_idx, cand_r):
        key = tuple(idx)
        if covered[key]:
            continue
        k = idx[0]
        spatial_idx = tuple(idx[1:])
        cx = np.array([m[spatial_idx] for m in mesh])
        ct = times[k]
        centers_x.append(cx)
        centers_t.append(ct)
        radii.append(r)
        # mark the closed half cylinder as covered (window raster)
        kidx, slices, ball = _window(grid, cx, ct, r / 2.0, gamma, closed=True)
        for kk in kidx:
            view = covered[(kk,) + slices]
            newly = ball & ~view
            remaining -= int(newly.sum())
            view |= ball
        if remaining <= 0:
            break

    cover = WhitneyCover(
        grid=grid,
        lam=lam,
        p=p,
        centers_x=np.asarray(centers_x),
        centers_t=np.asarray(centers_t),
        radii=np.asarray(radii),
    )
    cover.neighbor_sets = _neighbor_sets(cover)
    return cover


def _neighbor_sets(cover, alpha=0.75):
    """A_k = {j : alpha Q_k ∩ alpha Q_j nonempty}, via a time-sorted sweep
    so only temporally plausible pairs are tested."""
    K = cover.size
    if K == 0:
        return []
    cx = cover.centers_x
    ct = cover.centers_t
    r = cover.radii
    gamma = cover.gamma
    a2 = alpha * alpha
    order = np.argsort(ct, kind="stable")
    ct_s = ct[order]
    r2max = float((r**2).max())
    sets = [[i] for i in range(K)]
    for pos, i in enumerate(order):
        # furthest time center that could still overlap i
        bound = gamma * a2 * (r[i] ** 2 + r2max) * (1 + 1e-12)
        hi = int(np.searchsorted(ct_s, ct[i] + bound, side="right"))
        cand = order[pos + 1 : hi]
        if len(cand) == 0:
            continue
        dt = ct[cand] - ct[i]
        temporal = dt < gamma * a2 * (r[i] ** 2 + r[cand] ** 2) * (1 + 1e-12)
        cand = cand[temporal]
        if len(cand) == 0:
            continue
        dx2 = ((cx[cand] - cx[i]) ** 2).sum(axis=1)
        spatial = dx2 <= (alpha * (r[i] + r[cand])) ** 2 * (1 + 1e-12)
        for j in cand[spatial]:
            sets[i].append(int(j))
            sets[int(j)].append(int(i))
    return [np.array(sorted(set(s)), dtype=int) for s in sets]


# ---------------------------------------------------------------------------
# partition of unity


class PartitionIndex:
    """Per-slice buckets of cylinders whose 3/4 support can reach the slice."""

    def __init__(self, cover, pad_slices=1):
        self.cover = cover
        grid = cover.grid
        gamma = cover.gamma
        buckets = [[] for _ in range(grid.nt)]
        for j in range(cover.size):
            half = gamma * (0.75 * cover.radii[j]) ** 2
            lo = cover.centers_t[j] - half
            hi = cover.centers_t[j] + half
            k0 = max(0, int(np.floor((lo - grid.t0) / grid.dt)) - pad_slices)
            k1 = min(grid.nt - 1, int(np.ceil((hi - grid.t0) / grid.dt)) + pad_slices)
            for k in range(k0, k1 + 1):
                buckets[k].append(j)
        self.buckets = [np.asarray(b, dtype=int) for b in buckets]

    def candidates(self, t):
        grid = self.cover.grid
        k = int(round((t - grid.t0) / grid.dt))
        k = min(max(k, 0), grid.nt - 1)
        return self.buckets[k]


def build_partition(cover):
    """Attach the partition of unity; raw bumps satisfy the support and
    plateau sandwich, the normalized family sums to one on the complement."""
    cover.has_partition = True
    cover.partition_index = PartitionIndex(cover)
    return cover


def _bumps_at_point(cover, js, x, t, want_derivatives=False):
    """Vectorized raw bumps (and derivatives) of cylinders js at one point."""
    cx = cover.centers_x[js]
    ct = cover.centers_t[js]
    r = cover.radii[js]
    diff = x[None, :] - cx
    dx = np.sqrt((diff**2).sum(axis=1))
    lamp = cover.lam ** (cover.p - 2.0)
    dts = t - ct
    dtm = np.sqrt(lamp * np.abs(dts))
    bx = _ramp(dx / r)
    bt = _ramp(dtm / r)
    psi = bx * bt
    if not want_derivatives:
        return psi, None, None
    bxp = _ramp_prime(dx / r) / r
    btp = _ramp_prime(dtm / r) / r
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(dx[:, None] > 0, diff / np.maximum(dx, 1e-300)[:, None], 0.0)
        ddt = np.where(dtm > 0, lamp * np.sign(dts) / (2.0 * np.maximum(dtm, 1e-300)), 0.0)
    gx = (bxp * bt)[:, None] * unit
    gt = bx * btp * ddt
    return psi, gx, gt


def partition_values(cover, xs, ts, want_derivatives=False):
    """Normalized partition functions at query points.

    Returns a list of (values, gradients) pairs, one per point; values maps
    cylinder index -> Psi_j(z), gradients maps it to (d_x Psi, d_t Psi).
    For lattice-wide evaluation use `truncation`, which accumulates fields.
    """
    if not cover.has_partition:
        build_partition(cover)
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    out = []
    for m in range(len(ts)):
        js = cover.partition_index.candidates(ts[m])
        if len(js) == 0:
            out.append(({}, {}))
            continue
        psi, gx, gt = _bumps_at_point(cover, js, xs[m], ts[m], want_derivatives)
        live = psi > 0
        total = float(psi.sum())
        if total <= 0:
            out.append(({}, {}))
            continue
        vals = {int(j): float(psi[i] / total) for i, j in enumerate(js) if live[i]}
        grads = {}
        if want_derivatives:
            s_gx = gx.sum(axis=0)
            s_gt = float(gt.sum())
            for i, j in enumerate(js):
                if live[i]:
                    grads[int(j)] = (
                        (gx[i] * total - psi[i] * s_gx) / total**2,
                        (gt[i] * total - psi[i] * s_gt) / total**2,
                    )
        out.append((vals, grads))
    return out


# ---------------------------------------------------------------------------
# invariant checking


def check_cover(cover, E, rng=None, n_partition_samples=400):
    """Measure all covering invariants; returns a dict of worst cases.

    W2 is exact by construction up to the lattice snap; W4's outer contact
    is checked with closed membership (the witness realizing the distance
    may sit on the open time edge).
    """
    grid = cover.grid
    E = np.asarray(E, dtype=bool)
    gamma = cover.gamma
    K = cover.size
    rng = rng or np.random.default_rng(0)
    res = {}

    # W2 against an independent brute-force distance oracle
    e_rows = np.argwhere(E)
    mesh = grid.spatial.center_mesh()
    e_x = np.stack([np.array([m[tuple(row[1:])] for m in mesh]) for row in e_rows])
    e_t = grid.times[e_rows[:, 0]]
    lamp = cover.lam ** (cover.p - 2.0)
    cell = max(
        max(grid.spatial.cell_size),
        np.sqrt(lamp * grid.dt),
    )
    idx = rng.choice(K, size=min(K, 100), replace=False)
    w2_err = 0.0
    for j in idx:
        dx = np.sqrt(((e_x - cover.centers_x[j]) ** 2).sum(axis=1))
        dtm = np.sqrt(lamp * np.abs(e_t - cover.centers_t[j]))
        d = float(np.maximum(dx, dtm).min())
        w2_err = max(w2_err, abs(d - 16.0 * cover.radii[j]))
    res["W2_max_abs_error"] = float(w2_err)
    res["W2_cell"] = float(cell)
    res["W2_ok"] = bool(w2_err <= cell + 1e-12)

    # W3: half cylinders cover the complement (lattice points)
    covered = np.zeros(grid.shape, dtype=bool)
    for j in range(K):
        covered |= _raster_closed(grid, cover.centers_x[j], cover.centers_t[j],
                                  cover.radii[j] / 2.0, gamma)
    res["W3_ok"] = bool(np.all(covered[~E]))

    # W4: 8Q inside complement, 16Q touches E (closed membership)
    w4_inner = True
    w4_outer = True
    for j in range(K):
        m8 = _raster_closed(grid, cover.centers_x[j], cover.centers_t[j],
                            8.0 * cover.radii[j] * (1 - 1e-12), gamma)
        if np.any(m8 & E):
            w4_inner = False
        m16 = _raster_closed(grid, cover.centers_x[j], cover.centers_t[j],
                             16.0 * cover.radii[j] * (1 + 1e-12), gamma)
        if not np.any(m16 & E):
            w4_outer = False
    res["W4_inner_ok"] = bool(w4_inner)
    res["W4_outer_ok"] = bool(w4_outer)

    # W5 on intersecting pairs, W6 quarter disjointness
    cx, ct, r = cover.centers_x, cover.centers_t, cover.radii
    dx2 = ((cx[:, None, :] - cx[None, :, :]) ** 2).sum(axis=2)
    dt = np.abs(ct[:, None] - ct[None, :])
    inter = (dx2 <= (r[:, None] + r[None, :]) ** 2) & (
        dt < gamma * (r[:, None] ** 2 + r[None, :] ** 2)
    )
    np.fill_diagonal(inter, False)
    ratio = r[:, None] / np.maximum(r[None, :], 1e-300)
    res["W5_ok"] = bool(np.all(ratio[inter] <= 2.0 + 1e-9) and np.all(ratio[inter] >= 0.5 - 1e-9))
    q = r / 4.0
    overlap_q = (dx2 <= (q[:, None] + q[None, :]) ** 2 * (1 - 1e-12)) & (
        dt < gamma * (q[:, None] ** 2 + q[None, :] ** 2) * (1 - 1e-12)
    )
    np.fill_diagonal(overlap_q, False)
    res["W6_ok"] = not bool(overlap_q.any())

    # W7 / W8
    overlap = _overlap_count(cover, 4.0)
    res["W7_max_overlap"] = int(overlap[~E].max()) if (~E).any() else 0
    res["W8_max_neighbors"] = max((len(a) for a in cover.neighbor_sets), default=0)

    # W11: for j in A_i, 3/4 Q_j inside 4 Q_i (lattice inclusion)
    w11 = True
    for i in rng.choice(K, size=min(K, 20), replace=False):
        for j in cover.neighbor_sets[i]:
            mj = _raster_closed(grid, cx[j], ct[j], 0.75 * r[j], gamma)
            mi = _raster_closed(grid, cx[i], ct[i], 4.0 * r[i], gamma)
            if np.any(mj & ~mi):
                w11 = False
    res["W11_ok"] = bool(w11)

    # W12-W14 against the partition
    if not cover.has_partition:
        build_partition(cover)
    comp_idx = np.argwhere(~E)
    take = rng.choice(len(comp_idx), size=min(len(comp_idx), n_partition_samples), replace=False)
    mesh = grid.spatial.center_mesh()
    w14_err = 0.0
    for row in comp_idx[take]:
        k = row[0]
        sp = tuple(row[1:])
        x = np.array([[m[sp] for m in mesh]])
        t = np.array([grid.times[k]])
        vals, _ = partition_values(cover, x, t)[0]
        w14_err = max(w14_err, abs(sum(vals.values()) - 1.0))
    res["W14_max_error"] = float(w14_err)
    res["W14_ok"] = bool(w14_err <= 1e-10)

    # W12 raw sandwich on sampled continuum points of the cylinders
    w12_ok = True
    for j in rng.choice(K, size=min(K, 12), replace=False):
        rj = r[j]
        pts_x, pts_t = _sample_cylinder_points(cover, j, rng, 30)
        psi = cover.raw_bump(j, pts_x, pts_t)
        dxm = np.sqrt(((pts_x - cx[j]) ** 2).sum(axis=1))
        dtmm = np.sqrt(cover.lam ** (cover.p - 2.0) * np.abs(pts_t - ct[j]))
        dmet = np.maximum(dxm, dtmm)
        inside_half = dmet <= rj / 2.0
        outside_three_q = dmet >= 0.75 * rj
        if np.any(psi[inside_half] < 1.0 - 1e-12) or np.any(psi[outside_three_q] > 1e-12):
            w12_ok = False
    res["W12_ok"] = bool(w12_ok)

    # W13 derivative bounds at lattice points of the complement, where the
    # partition is actually evaluated (the half cylinders cover them, so
    # the normalizer is >= 1 there); the second derivative uses central
    # differences guarded to stay inside the well-covered zone
    lamp = cover.lam ** (2.0 - cover.p)
    w13 = 0.0
    comp_rows = comp_idx[rng.choice(len(comp_idx), size=min(len(comp_idx), 60),
                                    replace=False)]
    for row in comp_rows:
        k = row[0]
        sp = tuple(row[1:])
        x = np.array([m[sp] for m in mesh])
        t = grid.times[k]
        vals, grads = partition_values(cover, x, [t], want_derivatives=True)[0]
        for j, val in vals.items():
            rj = r[j]
            gx, gt = grads[j]
            hess = 0.0
            delta = rj / 64.0
            for d in range(len(x)):
                shift = np.zeros(len(x))
                shift[d] = delta
                vp, gp = partition_values(cover, x + shift, [t],
                                          want_derivatives=True)[0]
                vm, gm = partition_values(cover, x - shift, [t],
                                          want_derivatives=True)[0]
                if j in gp and j in gm:
                    second = (gp[j][0][d] - gm[j][0][d]) / (2 * delta)
                    hess = max(hess, abs(second))
            w13 = max(
                w13,
                val + rj * float(np.sqrt((gx**2).sum()))
                + rj**2 * hess + lamp * rj**2 * abs(gt),
            )
    res["W13_all_orders"] = float(w13)
    return res


def _raster_closed(grid, cx, ct, r, gamma):
    kidx, slices, ball = _window(grid, cx, ct, r, gamma, closed=True)
    out = np.zeros(grid.shape, dtype=bool)
    for k in kidx:
        out[(k,) + slices] |= ball
    return out


def _sample_cylinder_points(cover, j, rng, count):
    r = cover.radii[j]
    gamma = cover.gamma
    dim = cover.centers_x.shape[1]
    xs = cover.centers_x[j] + rng.uniform(-0.8 * r, 0.8 * r, size=(count, dim))
    ts = cover.centers_t[j] + rng.uniform(-0.8, 0.8, size=count) * gamma * r * r
    return xs, ts


# ---------------------------------------------------------------------------
# Lipschitz certification


@dataclass
class LipschitzCertificate:
    campanato: float
    direct: float
    witness: tuple  # ((x1,t1),(x2,t2)) achieving the direct sup
    samples: int


def lipschitz_certify(f, region, gamma, rng=None, n_centers=200, n_pairs=4000, radii=None):
    """Measure (a) the Campanato quantity sup (1/r) mean |f - avg| over
    sampled cylinders and (b) the direct metric difference quotient over
    sampled pairs inside the region mask."""
    grid = f.grid
    region = np.asarray(region, dtype=bool)
    pts = np.argwhere(region)
    if len(pts) == 0:
        raise InvalidParamsError("region is empty")
    rng = rng or np.random.default_rng(0)
    mesh = grid.spatial.center_mesh()
    times = grid.times
    vals = f.values

    lengths = grid.spatial.lengths
    rmax = max(max(lengths), np.sqrt((grid.T - grid.t0) / gamma))
    if radii is None:
        radii = rmax * 0.5 ** np.arange(0, 6)

    campanato = 0.0
    take = pts[rng.choice(len(pts), size=min(len(pts), n_centers), replace=False)]
    for row in take:
        k = row[0]
        sp = tuple(row[1:])
        cx = np.array([m[sp] for m in mesh])
        ct = times[k]
        for r in radii:
            tmask = np.abs(times - ct) < gamma * r * r
            d2 = sum((m - c) ** 2 for m, c in zip(mesh, cx))
            smask = d2 <= r * r
            box = np.zeros(grid.shape, dtype=bool)
            box[tmask] = smask
            box &= region
            m = box.sum()
            if m < 2:
                continue
            sel = vals[box]
            campanato = max(campanato, float(np.abs(sel - sel.mean()).mean() / r))

    i = rng.integers(0, len(pts), size=n_pairs)
    j = rng.integers(0, len(pts), size=n_pairs)
    keep = i != j
    i, j = i[keep], j[keep]
    pi, pj = pts[i], pts[j]
    xi = np.stack([np.array([m[tuple(row[1:])] for m in mesh]) for row in pi])
    xj = np.stack([np.array([m[tuple(row[1:])] for m in mesh]) for row in pj])
    ti = times[pi[:, 0]]
    tj = times[pj[:, 0]]
    dx = np.sqrt(((xi - xj) ** 2).sum(axis=1))
    dmet = np.maximum(dx, np.sqrt(np.abs(ti - tj) / gamma))
    fi = vals[tuple(pi.T)]
    fj = vals[tuple(pj.T)]
    with np.errstate(divide="ignore", invalid="ignore"):
        quot = np.where(dmet > 0, np.abs(fi - fj) / dmet, 0.0)
    best = int(np.argmax(quot))
    witness = (
        (tuple(xi[best]), float(ti[best])),
        (tuple(xj[best]), float(tj[best])),
    )
    return LipschitzCertificate(
        campanato=float(campanato),
        direct=float(quot[best]),
        witness=witness,
        samples=len(quot),
    )
