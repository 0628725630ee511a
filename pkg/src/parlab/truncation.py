"""The Lipschitz truncation operator: good sets from composite maximal
functions, weighted Whitney averages with the boundary zeroing rule, the
truncated extension, and measurements of its bounds.

Two good-set recipes are provided.  The "apriori" variant composes the
strong maximal function of gradient powers with the time-sliced dual
maximal function of the boundary datum's time derivative.  The
"initial_boundary" variant localizes everything to a cylinder straddling
the initial time and adds the scaled zeroth-order term; its zeroing rule
uses the ball 8B around the cylinder instead of the whole domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from parlab.calculus import gradient_magnitude, slicewise_representation
from parlab.errors import (
    CylinderCrossingError,
    InvalidExponentLadderError,
    InvalidParamsError,
)
from parlab.grid import GridFunction, ball_volume, cylinder_masks
from parlab.maximal import neg_maximal_spacetime, strong_maximal
from parlab.report import EstimateReport
from parlab.whitney import (
    _ramp,
    _ramp_prime,
    build_cover,
    build_partition,
    lipschitz_certify,
)


def _smooth_plateau(d, inner, outer):
    """1 for d <= inner, 0 for d >= outer, C^2 quintic ramp in between."""
    s = np.clip((np.asarray(d, dtype=float) - inner) / (outer - inner), 0.0, 1.0)
    return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s * s)


def build_initial_boundary_v(u, w, Q):
    """v = (u - w) eta(x) zeta(t) with plateau cutoffs: eta is 1 on B_{4rho}
    and supported in B_{8rho}, zeta is 1 on I_{4s} and supported in I_{8s}."""
    grid = u.grid
    dom = grid.spatial
    rho = Q.r
    s = Q.time_half_length
    t_lo, t_hi = Q.time_interval
    if not (t_lo <= grid.t0 < t_hi):
        raise CylinderCrossingError(
            f"cylinder time interval ({t_lo:.3g}, {t_hi:.3g}) does not straddle t = {grid.t0}"
        )
    # 16Q inside Omega x R
    ball16 = dom.ball_mask(Q.x, 16 * rho)
    if np.any(ball16 & ~dom.mask):
        raise InvalidParamsError("16Q must be spatially contained in the domain")
    mesh = dom.center_mesh()
    d = np.sqrt(sum((m - c) ** 2 for m, c in zip(mesh, Q.x)))
    eta = _smooth_plateau(d, 4 * rho, 8 * rho)
    zeta = _smooth_plateau(np.abs(grid.times - Q.t), 4 * s, 8 * s)
    vals = (u.values - w.values) * eta
    vals = vals * (zeta[:, None] if dom.dim == 1 else zeta[:, None, None])
    return GridFunction(grid, vals), eta, zeta


@dataclass
class GoodSetData:
    """Composite maximal function g, its threshold lambda and sublevel set."""

    g: np.ndarray
    lam: float
    E: np.ndarray
    variant: str
    grid: object
    q: float
    p: float
    v: GridFunction = None  # the function the truncation acts on (pre-Steklov)
    w_field: np.ndarray = None  # slicewise representation of dw/dt
    Q: object = None
    rho: float = None
    meta: dict = field(default_factory=dict)


def validate_exponent_ladder(q, p, beta=None, eps0=None):
    if not 1.0 < q < p:
        raise InvalidExponentLadderError(f"need 1 < q < p, got q={q}, p={p}")
    if beta is not None and q > p - 2 * beta + 1e-12:
        raise InvalidExponentLadderError(f"q={q} exceeds p - 2 beta = {p - 2 * beta}")
    if eps0 is not None and q <= p - eps0:
        raise InvalidExponentLadderError(f"q={q} is not above p - eps0 = {p - eps0}")


def build_good_set(
    u,
    w,
    h0_values,
    q,
    lam,
    p,
    variant="apriori",
    Q=None,
    beta=None,
    eps0=None,
    w_field=None,
    rep_theta=2.0,
):
    """Assemble the composite maximal function and threshold it at lambda.

    h0_values: array (nt, ...) of the structure perturbation h0 (zeros for
    a clean nonlinearity).  w_field overrides the slicewise representation
    of dw/dt (otherwise computed here at exponent rep_theta).
    """
    validate_exponent_ladder(q, p, beta, eps0)
    grid = u.grid
    dom = grid.spatial
    chi_omega = np.broadcast_to(dom.mask, grid.shape)
    gm_u = gradient_magnitude(u)
    gm_w = gradient_magnitude(w)
    if w_field is None:
        w_field = slicewise_representation(w, theta_prime=rep_theta)

    if variant == "apriori":
        v = u.with_values(u.values - w.values)
        gm_v = gradient_magnitude(v)
        core = (gm_v**q + (gm_u + h0_values) ** q + gm_w**q) * chi_omega
        g1 = strong_maximal(core, grid) ** (1.0 / q)
        theta = q / (p - 1.0)
        g2 = neg_maximal_spacetime(w_field, theta, grid, chi=chi_omega) ** (
            1.0 / (p - 1.0)
        )
        g = np.maximum(g1, g2)
        rho = 0.5 * float(np.sqrt(sum(L**2 for L in dom.lengths)))  # diam/2
        gs_extra = {}
    elif variant == "initial_boundary":
        if Q is None:
            raise InvalidParamsError("initial_boundary variant needs the cylinder Q")
        v, eta, zeta = build_initial_boundary_v(u, w, Q)
        rho = Q.r
        t16, s16 = cylinder_masks(grid, Q.scaled(16.0))
        chi = np.zeros(grid.shape, dtype=bool)
        chi[t16] = s16
        chi &= chi_omega
        gm_v = gradient_magnitude(v)
        G1 = strong_maximal(((gm_u + h0_values) ** q) * chi, grid) ** (1.0 / q)
        G2 = strong_maximal((gm_v**q) * chi, grid) ** (1.0 / q)
        G3 = strong_maximal(
            ((np.abs(u.values - w.values) / rho) ** q) * chi, grid
        ) ** (1.0 / q)
        G4 = strong_maximal((gm_w**q) * chi, grid) ** (1.0 / q)
        G5 = neg_maximal_spacetime(w_field, 1.0, grid, chi=chi)
        g = np.maximum.reduce([G1, G2, G3, G4, G5])
        gs_extra = {"eta": eta, "zeta": zeta, "chi": chi}
    else:
        raise InvalidParamsError(f"unknown variant {variant!r}")

    E = g <= lam
    return GoodSetData(
        g=g, lam=float(lam), E=E, variant=variant, grid=grid, q=q, p=p,
        v=v, w_field=w_field, Q=Q, rho=rho, meta=gs_extra,
    )


def lambda_from_percentile(g, pct):
    return float(np.quantile(g, pct / 100.0))


@dataclass
class TruncationResult:
    v_trunc: GridFunction
    cover: object
    local_averages: np.ndarray  # v_h^i per cylinder
    zeroed: np.ndarray  # True where the zeroing rule fired
    good_set: GoodSetData
    v_h: GridFunction = None  # the function that was truncated
    identity: bool = False  # complement empty, truncation is the identity
    # accumulated partition fields on the lattice (complement support):
    psi_sum: np.ndarray = None
    num_sum: np.ndarray = None
    grad_num: np.ndarray = None
    grad_den: np.ndarray = None
    dt_num: np.ndarray = None
    dt_den: np.ndarray = None
    time_bound: np.ndarray = None  # max_i min(r_i, rho)/(gamma r_i^2) over covering i

    def derivative_fields(self):
        """(grad v_trunc (dim, nt, ...), d_t v_trunc) on the complement,
        from the analytic derivatives of the normalized partition."""
        A0 = self.psi_sum
        live = A0 > 0
        safe = np.where(live, A0, 1.0)
        grads = (self.grad_num * safe - self.num_sum * self.grad_den) / safe**2
        dts = (self.dt_num * safe - self.num_sum * self.dt_den) / safe**2
        grads = np.where(live, grads, 0.0)
        dts = np.where(live, dts, 0.0)
        return grads, dts


def _cylinder_time_samples(grid, ct, half):
    """Lattice-aligned time samples covering (ct - half, ct + half), allowed
    to run beyond [t0, T] (indices outside [0, nt) are virtual)."""
    k_lo = int(np.ceil((ct - half - grid.t0) / grid.dt - 1e-12))
    k_hi = int(np.floor((ct + half - grid.t0) / grid.dt + 1e-12))
    ks = np.arange(k_lo, k_hi + 1)
    keep = np.abs(grid.t0 + ks * grid.dt - ct) < half
    return ks[keep]


def truncate(v_h, gs, lam, p, reference_region=None):
    """Whitney-average truncation of v_h above the good set.

    reference_region: spatial boolean mask for the zeroing rule (defaults
    to the domain mask for the apriori variant, the ball 8B for the
    initial-boundary variant).  Cylinders whose 3/4 support leaves
    reference_region x [0, inf) get their average pinned to zero.
    """
    grid = v_h.grid
    dom = grid.spatial
    comp = ~gs.E
    if not comp.any():
        return TruncationResult(
            v_trunc=v_h, cover=None,
            local_averages=np.zeros(0), zeroed=np.zeros(0, dtype=bool),
            good_set=gs, v_h=v_h, identity=True,
        )

    if reference_region is None:
        if gs.variant == "initial_boundary":
            reference_region = dom.ball_mask(gs.Q.x, 8.0 * gs.Q.r)
        else:
            reference_region = dom.mask

    cover = build_cover(gs.E, grid, lam, p)
    build_partition(cover)
    gamma = cover.gamma
    K = cover.size

    # distance of each cell center to the complement of the reference region
    if reference_region.all():
        ref_dist = np.full(dom.counts, np.inf)
    else:
        ref_dist = ndimage.distance_transform_edt(
            reference_region, sampling=dom.cell_size
        )

    mesh = dom.center_mesh()
    vol = dom.cell_volume

    # zeroing rule and raw weighted averages
    averages = np.zeros(K)
    zeroed = np.zeros(K, dtype=bool)
    # partition normalizer on the lattice (and virtual slices per cylinder)
    psi_sum = np.zeros(grid.shape)
    windows = []
    for j in range(K):
        r75 = 0.75 * cover.radii[j]
        ks = _cylinder_time_samples(grid, cover.centers_t[j], gamma * r75 * r75)
        sl, ball = _spatial_window(dom, cover.centers_x[j], r75)
        windows.append((ks, sl, ball))
        dxm = np.sqrt(
            sum((m[sl] - c) ** 2 for m, c in zip(mesh, cover.centers_x[j]))
        )
        bx = _ramp(dxm / cover.radii[j])
        for k in ks:
            if 0 <= k < grid.nt:
                t = grid.times[k]
                dtm = np.sqrt(
                    cover.lam ** (cover.p - 2.0) * abs(t - cover.centers_t[j])
                )
                bt = _ramp(np.array([dtm / cover.radii[j]]))[0]
                psi_sum[(k,) + sl][ball] += (bx * bt)[ball]

    # virtual-time normalizers cannot be stored on the lattice; handle the
    # averages with per-cylinder sums instead
    num_sum = np.zeros(grid.shape)
    grad_num = np.zeros((dom.dim,) + grid.shape)
    grad_den = np.zeros((dom.dim,) + grid.shape)
    dt_num = np.zeros(grid.shape)
    dt_den = np.zeros(grid.shape)
    time_bound = np.zeros(grid.shape)

    rho = gs.rho if gs.rho is not None else max(dom.lengths) / 2
    for j in range(K):
        ks, sl, ball = windows[j]
        r = cover.radii[j]
        r75 = 0.75 * r
        # zeroing rule: 3/4 Q_j inside reference_region x [0, inf)?
        t_lo = cover.centers_t[j] - gamma * r75 * r75
        ci = tuple(
            int(np.clip(round(c / h - 0.5), 0, n - 1))
            for c, h, n in zip(cover.centers_x[j], dom.cell_size, dom.counts)
        )
        inside_space = ref_dist[ci] > r75
        inside_time = t_lo >= grid.t0 - 1e-12
        if not (inside_space and inside_time):
            zeroed[j] = True
            averages[j] = 0.0
            continue
        num = 0.0
        den = 0.0
        dxm = np.sqrt(sum((m[sl] - c) ** 2 for m, c in zip(mesh, cover.centers_x[j])))
        bx = _ramp(dxm / r)
        for k in ks:
            t = grid.t0 + k * grid.dt
            dtm = np.sqrt(cover.lam ** (cover.p - 2.0) * abs(t - cover.centers_t[j]))
            bt = float(_ramp(np.array([dtm / r]))[0])
            if bt == 0.0:
                continue
            if 0 <= k < grid.nt:
                a0 = psi_sum[(k,) + sl]
                psi_local = np.where(a0 > 0, (bx * bt) / np.where(a0 > 0, a0, 1.0), 0.0)
                num += float((psi_local[ball] * v_h.values[(k,) + sl][ball]).sum()) * vol
                den += float(psi_local[ball].sum()) * vol
            else:
                # virtual slice: chi_[0,T] kills the numerator; the bump is
                # alone there in the normalized sense only if no sibling
                # reaches it -- approximate the normalizer by the raw bump
                # sum of the neighbor set at that virtual time
                den += _virtual_psi_mass(cover, j, t, sl, ball, mesh, bx, bt) * vol
        averages[j] = num / den if den > 0 else 0.0

    # second pass: accumulate the numerator fields for the extension and its
    # derivatives on the lattice
    lamp = cover.lam ** (cover.p - 2.0)
    for j in range(K):
        ks, sl, ball = windows[j]
        r = cover.radii[j]
        diff = [m[sl] - c for m, c in zip(mesh, cover.centers_x[j])]
        dxm = np.sqrt(sum(dd**2 for dd in diff))
        bx = _ramp(dxm / r)
        bxp = _ramp_prime(dxm / r) / r
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = [np.where(dxm > 0, dd / np.maximum(dxm, 1e-300), 0.0) for dd in diff]
        tb = min(r, rho) / (lamp * r * r)
        for k in ks:
            if not 0 <= k < grid.nt:
                continue
            t = grid.times[k]
            dts = t - cover.centers_t[j]
            dtm = np.sqrt(lamp * abs(dts))
            bt = float(_ramp(np.array([dtm / r]))[0])
            btp = float(_ramp_prime(np.array([dtm / r]))[0]) / r
            psi = bx * bt
            num_sum[(k,) + sl][ball] += (psi * averages[j])[ball]
            for d in range(dom.dim):
                gpsi_d = bxp * bt * unit[d]
                grad_den[(d, k) + sl][ball] += gpsi_d[ball]
                grad_num[(d, k) + sl][ball] += (gpsi_d * averages[j])[ball]
            if dtm > 0:
                ddt = lamp * np.sign(dts) / (2.0 * dtm)
                tpsi = bx * btp * ddt
            else:
                tpsi = np.zeros_like(bx)
            dt_den[(k,) + sl][ball] += tpsi[ball]
            dt_num[(k,) + sl][ball] += (tpsi * averages[j])[ball]
            upd = time_bound[(k,) + sl]
            upd[ball & (psi > 0)] = np.maximum(upd[ball & (psi > 0)], tb)

    live = psi_sum > 0
    out = v_h.values.copy()
    out[live] = (num_sum[live] / psi_sum[live])
    result = TruncationResult(
        v_trunc=v_h.with_values(out),
        cover=cover,
        local_averages=averages,
        zeroed=zeroed,
        good_set=gs,
        v_h=v_h,
        psi_sum=psi_sum,
        num_sum=num_sum,
        grad_num=grad_num,
        grad_den=grad_den,
        dt_num=dt_num,
        dt_den=dt_den,
        time_bound=time_bound,
    )
    return result


def _spatial_window(dom, cx, r):
    slices = []
    axes = []
    for d in range(dom.dim):
        c = dom.centers(d)
        i0 = max(int(np.searchsorted(c, cx[d] - r)) - 1, 0)
        i1 = min(int(np.searchsorted(c, cx[d] + r)) + 1, dom.counts[d])
        slices.append(slice(i0, i1))
        axes.append(c[i0:i1])
    mesh = np.meshgrid(*axes, indexing="ij")
    d2 = sum((m - c) ** 2 for m, c in zip(mesh, cx))
    ball = d2 <= r * r * (1 + 1e-12)
    return tuple(slices), ball


def _virtual_psi_mass(cover, j, t, sl, ball, mesh, bx, bt):
    """Normalized mass of Psi_j on a virtual (off-lattice) time slice,
    normalizing by the raw bump sum of the neighbors reaching that time."""
    js = cover.neighbor_sets[j]
    total = np.zeros_like(bx)
    lamp = cover.lam ** (cover.p - 2.0)
    for i in js:
        dtm_i = np.sqrt(lamp * abs(t - cover.centers_t[i]))
        bt_i = float(_ramp(np.array([dtm_i / cover.radii[i]]))[0])
        if bt_i == 0.0:
            continue
        dx_i = np.sqrt(
            sum((m[sl] - c) ** 2 for m, c in zip(mesh, cover.centers_x[i]))
        )
        total += _ramp(dx_i / cover.radii[i]) * bt_i
    psi_j = bx * bt
    local = np.where(total > 0, psi_j / np.where(total > 0, total, 1.0), 0.0)
    return float(local[ball].sum())


def verify_truncation_bounds(tr, rho=None, lam=None, thetas=(1.0,)):
    """Measure the constant-free ratios of the truncation bounds:
    sup |v|/(rho lam), sup |grad v|/lam, neighbor-average differences,
    the per-point time-derivative bound, and the product integral."""
    gs = tr.good_set
    lam = gs.lam if lam is None else lam
    rho = gs.rho if rho is None else rho
    grid = gs.grid
    comp = ~gs.E
    reports = []
    if tr.identity or not comp.any():
        for name in ("sup_value", "sup_gradient", "neighbor_diff", "time_derivative"):
            reports.append(
                EstimateReport.from_sides(f"truncation_{name}", 0.0, 1.0, np.inf,
                                          meta={"vacuous": True})
            )
        return reports

    vt = tr.v_trunc.values
    sup_v = float(np.abs(vt[comp]).max())
    reports.append(
        EstimateReport.from_sides("truncation_sup_value", sup_v, rho * lam, np.inf)
    )

    grads, dts = tr.derivative_fields()
    gmag = np.sqrt((grads**2).sum(axis=0))
    reports.append(
        EstimateReport.from_sides(
            "truncation_sup_gradient", float(gmag[comp].max()), lam, np.inf
        )
    )

    cover = tr.cover
    worst = 0.0
    for i in range(cover.size):
        for j in cover.neighbor_sets[i]:
            if j == i:
                continue
            denom = min(rho, cover.radii[i]) * lam
            worst = max(worst, abs(tr.local_averages[i] - tr.local_averages[j]) / denom)
    reports.append(
        EstimateReport.from_sides("truncation_neighbor_diff", worst, 1.0, np.inf)
    )

    tb = tr.time_bound
    live = comp & (tb > 0)
    ratio_t = float((np.abs(dts)[live] / (tb[live] * lam)).max()) if live.any() else 0.0
    reports.append(
        EstimateReport.from_sides("truncation_time_derivative", ratio_t, 1.0, np.inf)
    )

    # product bound: integral over Omega_T \ E of |d_t v (v - v_h)|^theta
    dom = grid.spatial
    vol = dom.cell_volume
    wts = grid.time_weights()
    chi = comp & np.broadcast_to(dom.mask, grid.shape)
    meas_comp = float(comp.sum()) * vol * grid.dt
    diff = np.abs(dts * (vt - tr.v_h.values))
    for theta in thetas:
        integ = float(
            sum(
                wts[k] * (diff[k][chi[k]] ** theta).sum()
                for k in range(grid.nt)
            )
            * vol
        )
        rhs = lam ** (theta * gs.p) * meas_comp
        reports.append(
            EstimateReport.from_sides(
                f"truncation_product_theta{theta:g}", integ, rhs, np.inf,
                meta={"theta": theta},
            )
        )
    return reports


def lipschitz_certify_truncation(tr, lam, p, rng=None, **kwargs):
    """Metric Lipschitz constant of the truncation over R^n x [0, T],
    divided by lambda."""
    gamma = lam ** (2.0 - p)
    region = np.ones(tr.good_set.grid.shape, dtype=bool)
    cert = lipschitz_certify(tr.v_trunc, region, gamma, rng=rng, **kwargs)
    return {
        "direct_over_lambda": cert.direct / lam,
        "campanato_over_lambda": cert.campanato / lam,
        "certificate": cert,
    }
