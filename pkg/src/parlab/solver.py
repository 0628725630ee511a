"""Implicit solver for u_t - div A(x,t,grad u) = 0 with Dirichlet lateral
data and an initial condition, residual checkers for both weak-form
definitions, and the mollification/compactness diagnostics loop.

Discretization: finite volumes on the mask cells.  Face fluxes use the
two-point normal difference plus the average of the adjacent cells'
central transverse differences, so the flux law is the isotropic
regularized p-Laplacian.  Dirichlet data acts through wall faces with the
half-cell difference 2(u - w)/h, which keeps the wall in its exact
location and makes the p = 2 system an M-matrix (hence a discrete maximum
principle that holds to linear-solver roundoff).

Each implicit Euler step runs damped Newton with epsilon continuation:
the regularization is halved, warm-starting each stage, until it falls
under a small quantile of the face gradient magnitudes (or the configured
floor).  The Jacobian is exact in the normal direction; the transverse
coupling is refreshed each iteration but not linearized (a standard
modified Newton; in one space dimension the Jacobian is exact).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import splu

from parlab.calculus import gradient_magnitude, spatial_gradient, steklov_time_derivative
from parlab.errors import InvalidParamsError, NewtonDivergenceError
from parlab.grid import GridFunction

# ---------------------------------------------------------------------------
# nonlinearity contract


@dataclass
class Nonlinearity:
    """Flux map A(x,t,zeta) with growth exponent p and structure constants.

    Variants: "p_laplace" (|z|^(p-2) z), "regularized"
    ((eps^2+|z|^2)^((p-2)/2) z), or "user" with an explicit eval_fn(z) or
    eval_fn(x, t, z).  h1, h2 are the coercivity/growth perturbation
    fields (GridFunctions or None).
    """

    p: float
    dim: int
    lambda0: float = 1.0
    lambda1: float = 1.0
    variant: str = "p_laplace"
    eps: float = 0.0
    h1: object = None
    h2: object = None
    eval_fn: object = None

    def __post_init__(self):
        if self.p <= 2 * self.dim / (self.dim + 2):
            raise InvalidParamsError(
                f"p = {self.p} violates p > 2n/(n+2) = {2 * self.dim / (self.dim + 2)}"
            )
        if self.variant not in ("p_laplace", "regularized", "user"):
            raise InvalidParamsError(f"unknown variant {self.variant!r}")
        if self.variant == "user" and self.eval_fn is None:
            raise InvalidParamsError("user variant needs eval_fn")

    def eval(self, zeta):
        """A(zeta) for an array of vectors, shape (..., dim) -> (..., dim)."""
        zeta = np.asarray(zeta, dtype=float)
        if self.variant == "user":
            return np.asarray(self.eval_fn(zeta), dtype=float)
        mag2 = (zeta**2).sum(axis=-1, keepdims=True)
        if self.variant == "regularized":
            coef = (self.eps**2 + mag2) ** ((self.p - 2.0) / 2.0)
        else:
            with np.errstate(divide="ignore"):
                coef = np.where(mag2 > 0, mag2 ** ((self.p - 2.0) / 2.0), 0.0)
        return coef * zeta

    def h0_values(self, grid):
        """h0 with h0^p = |h1| + |h2|^(p/(p-1)), as an array on the grid."""
        h1 = self.h1.values if self.h1 is not None else 0.0
        h2 = self.h2.values if self.h2 is not None else 0.0
        base = np.abs(h1) + np.abs(h2) ** (self.p / (self.p - 1.0))
        out = np.zeros(grid.shape) + base
        return out ** (1.0 / self.p)

    def monotonicity_constant(self):
        """Largest constant (up to the extremal configurations of the pure
        power flux) for which the quadratic-mean monotonicity bound holds:
        lambda0 * min(1, p-1) / 2^(|p-2|/2)."""
        return self.lambda0 * min(1.0, self.p - 1.0) / 2.0 ** (abs(self.p - 2.0) / 2.0)


def check_structure(nl, rng, n_samples=10**4, zeta_scale=3.0):
    """Sample the coercivity, growth, and monotonicity conditions; returns
    the worst margins (nonnegative means the condition held)."""
    z = rng.standard_normal((n_samples, nl.dim)) * zeta_scale
    w = rng.standard_normal((n_samples, nl.dim)) * zeta_scale
    az = nl.eval(z)
    aw = nl.eval(w)
    magz = np.sqrt((z**2).sum(axis=1))
    h1 = float(np.abs(nl.h1.values).max()) if nl.h1 is not None else 0.0
    h2 = float(np.abs(nl.h2.values).max()) if nl.h2 is not None else 0.0
    if nl.variant == "regularized":
        # the smoothing behaves like an implicit perturbation pair
        h1 += nl.eps**nl.p
        h2 += 2.0 * nl.eps ** (nl.p - 1.0)
    coer = (az * z).sum(axis=1) - (nl.lambda0 * magz**nl.p - h1)
    grow = (nl.lambda1 * magz ** (nl.p - 1.0) + h2) - np.sqrt((az**2).sum(axis=1))
    mono = ((az - aw) * (z - w)).sum(axis=1) - nl.monotonicity_constant() * (
        (z**2).sum(axis=1) + (w**2).sum(axis=1)
    ) ** ((nl.p - 2.0) / 2.0) * ((z - w) ** 2).sum(axis=1)
    return {
        "coercivity_margin": float(coer.min()),
        "growth_margin": float(grow.min()),
        "monotonicity_margin": float(mono.min()),
    }


@dataclass
class SolveConfig:
    newton_tol: float = 1e-10
    max_newton: int = 60
    regularization_eps: float = 1e-9
    theta_scheme: str = "implicit_euler"
    compat_tol: float = np.inf
    quantile_factor: float = 1e-3
    max_continuation: int = 30

    def __post_init__(self):
        if self.newton_tol <= 0 or self.regularization_eps < 0:
            raise InvalidParamsError("newton_tol > 0 and regularization_eps >= 0 required")
        if self.theta_scheme != "implicit_euler":
            raise InvalidParamsError("only implicit_euler is provided")


# ---------------------------------------------------------------------------
# face bookkeeping


class _FaceScheme:
    """Precomputed face lists and transverse stencils for one domain."""

    def __init__(self, domain):
        self.domain = domain
        counts = domain.counts
        dim = domain.dim
        mask = domain.mask
        n = int(np.prod(counts))
        flat = np.arange(n).reshape(counts)
        self.n = n
        self.flat_mask = mask.ravel(order="C")
        self.interior = []  # per d: (cellA, cellB) flat indices
        self.wall = []  # per d: (cell, sign) sign=+1 wall on +d side
        for d in range(dim):
            m_lo = mask.take(range(0, counts[d] - 1), axis=d)
            m_hi = mask.take(range(1, counts[d]), axis=d)
            a = flat.take(range(0, counts[d] - 1), axis=d)
            b = flat.take(range(1, counts[d]), axis=d)
            both = (m_lo & m_hi).ravel()
            self.interior.append((a.ravel()[both], b.ravel()[both]))
            walls_cell = []
            walls_sign = []
            only_lo = (m_lo & ~m_hi).ravel()
            walls_cell.append(a.ravel()[only_lo])
            walls_sign.append(np.ones(only_lo.sum()))
            only_hi = (~m_lo & m_hi).ravel()
            walls_cell.append(b.ravel()[only_hi])
            walls_sign.append(-np.ones(only_hi.sum()))
            # array-edge walls
            lo_edge = flat.take([0], axis=d).ravel()
            lo_in = self.flat_mask[lo_edge]
            walls_cell.append(lo_edge[lo_in])
            walls_sign.append(-np.ones(lo_in.sum()))
            hi_edge = flat.take([counts[d] - 1], axis=d).ravel()
            hi_in = self.flat_mask[hi_edge]
            walls_cell.append(hi_edge[hi_in])
            walls_sign.append(np.ones(hi_in.sum()))
            self.wall.append(
                (np.concatenate(walls_cell).astype(int), np.concatenate(walls_sign))
            )

    def transverse_at_faces(self, grads, d):
        """Average of the adjacent cells' central differences in the
        directions other than d, per interior face of direction d."""
        a, b = self.interior[d]
        dim = self.domain.dim
        if dim == 1:
            return None
        others = [dd for dd in range(dim) if dd != d]
        out = np.empty((len(a), len(others)))
        for m, dd in enumerate(others):
            g = grads[dd].ravel(order="C")
            out[:, m] = 0.5 * (g[a] + g[b])
        return out


def _phi(p, eps, q):
    return (eps * eps + q) ** ((p - 2.0) / 2.0)


def _dflux_dgn(p, eps, q, gn, phi):
    """d(phi(|g|^2) g_n)/d g_n = phi (1 + (p-2) g_n^2 / (eps^2 + |g|^2)),
    continued by phi at the degenerate origin."""
    denom = eps * eps + q
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(denom > 0, gn * gn / np.maximum(denom, 1e-300), 0.0)
    return phi * (1.0 + (p - 2.0) * ratio)


def solve(nl, grid, lateral_data, initial_data, cfg=None, diagnostics=None):
    """March u_t = div A(grad u) with implicit Euler; returns a GridFunction.

    lateral_data supplies the Dirichlet wall values (read at the boundary
    cells of the mask, per time slice); initial_data the t = t0 slice.
    When ``diagnostics`` is a dict it receives the energy trace, Newton
    iteration counts and the final regularization levels.
    """
    cfg = cfg or SolveConfig()
    dom = grid.spatial
    mask = dom.mask
    scheme = _FaceScheme(dom)
    init = initial_data.values[0] if isinstance(initial_data, GridFunction) else initial_data
    init = np.asarray(init, dtype=float) * mask
    w_vals = lateral_data.values if isinstance(lateral_data, GridFunction) else lateral_data

    if np.isfinite(cfg.compat_tol):
        bvals = np.array([init[idx] - w_vals[0][idx] for idx in dom.boundary_cells])
        if bvals.size and np.abs(bvals).max() > cfg.compat_tol:
            raise InvalidParamsError(
                f"initial/lateral data mismatch {np.abs(bvals).max():.3g} at the corner"
            )

    out = np.zeros(grid.shape)
    out[0] = init
    prev = init.copy()
    energy = [float((prev**2).sum() * dom.cell_volume)]
    newton_counts = []
    eps_final = []
    for k in range(1, grid.nt):
        wk = w_vals[k] * mask
        u, iters, eps_used = _implicit_step(nl, grid, scheme, prev, wk, cfg)
        out[k] = u
        prev = u
        energy.append(float((u**2).sum() * dom.cell_volume))
        newton_counts.append(iters)
        eps_final.append(eps_used)
    if diagnostics is not None:
        gm = gradient_magnitude(GridFunction(grid, out))
        diagnostics.update(
            {
                "l2_energy": energy,
                "newton_iterations": newton_counts,
                "regularization_eps": eps_final,
                "gradient_p_integral": float(
                    (gm**nl.p).sum() * dom.cell_volume * grid.dt
                ),
            }
        )
    return GridFunction(grid, out)


def _residual_and_jacobian(nl, scheme, dom, u_flat, w_flat, prev_flat, dt, eps, build_jac):
    """dt-scaled residual R = u - prev - dt div A and its (modified) Jacobian
    restricted to mask cells."""
    counts = dom.counts
    dim = dom.dim
    u = u_flat.reshape(counts)
    grads = spatial_gradient(u, dom) if dim > 1 else None
    R = (u_flat - prev_flat).copy()
    rows, cols, vals = [], [], []
    sel = scheme.flat_mask
    if build_jac:
        rows.append(np.nonzero(sel)[0])
        cols.append(np.nonzero(sel)[0])
        vals.append(np.ones(sel.sum()))
    for d in range(dim):
        h = dom.cell_size[d]
        a, b = scheme.interior[d]
        gn = (u_flat[b] - u_flat[a]) / h
        q = gn * gn
        gt = scheme.transverse_at_faces(grads, d) if dim > 1 else None
        if gt is not None:
            q = q + (gt**2).sum(axis=1)
        phi = _phi(nl.p, eps, q)
        flux = phi * gn
        # R_i -= dt * divA_i ; divA_a += flux/h, divA_b -= flux/h
        np.subtract.at(R, a, dt * flux / h)
        np.add.at(R, b, dt * flux / h)
        if build_jac:
            dflux = _dflux_dgn(nl.p, eps, q, gn, phi)
            c = dt * dflux / (h * h)
            rows.extend([a, a, b, b])
            cols.extend([a, b, a, b])
            vals.extend([c, -c, -c, c])
        # wall faces: g_n = sign * 2 (w - u)/h, outward flux on the sign side
        cells, signs = scheme.wall[d]
        if len(cells):
            gnw = 2.0 * (w_flat[cells] - u_flat[cells]) / h * signs
            qw = gnw * gnw
            phiw = _phi(nl.p, eps, qw)
            fluxw = phiw * gnw
            # divA_cell += sign * fluxw / h
            np.subtract.at(R, cells, dt * signs * fluxw / h)
            if build_jac:
                dfluxw = _dflux_dgn(nl.p, eps, qw, gnw, phiw)
                cw = dt * 2.0 * dfluxw / (h * h)  # d g_n/d u = -2 sign / h
                rows.append(cells)
                cols.append(cells)
                vals.append(cw)
    R = R * sel
    if not build_jac:
        return R, None
    J = csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(scheme.n, scheme.n),
    )
    return R, J


def _implicit_step(nl, grid, scheme, prev, wk, cfg):
    dom = grid.spatial
    dt = grid.dt
    sel = scheme.flat_mask
    u_flat = prev.ravel(order="C").copy()
    w_flat = wk.ravel(order="C")
    prev_flat = prev.ravel(order="C")
    scale = 1.0 + float(np.abs(prev_flat).max())

    # epsilon continuation ladder
    if abs(nl.p - 2.0) < 1e-14:
        eps_ladder = [0.0]
    else:
        g0 = spatial_gradient(prev, dom)
        gmag = np.sqrt((g0**2).sum(axis=0))[dom.mask]
        gscale = float(np.quantile(gmag, 0.9)) if gmag.size else 1.0
        eps = max(gscale, 1.0)
        floor = max(
            cfg.regularization_eps,
            cfg.quantile_factor * (float(np.quantile(gmag, 0.25)) if gmag.size else 0.0),
        )
        eps_ladder = []
        for _ in range(cfg.max_continuation):
            eps_ladder.append(eps)
            if eps <= floor:
                break
            eps = max(eps / 2.0, floor)
        if eps_ladder[-1] > floor:
            eps_ladder.append(floor)

    total_iters = 0
    for eps in eps_ladder:
        history = []
        for _ in range(cfg.max_newton):
            R, J = _residual_and_jacobian(
                nl, scheme, dom, u_flat, w_flat, prev_flat, dt, eps, build_jac=True
            )
            rnorm = float(np.abs(R).max())
            history.append(rnorm)
            if rnorm <= cfg.newton_tol * scale:
                break
            Jm = J[sel][:, sel].tocsc()
            try:
                delta = splu(Jm).solve(-R[sel])
            except RuntimeError as exc:
                raise NewtonDivergenceError(
                    f"linear solve failed: {exc}",
                    last_iterate=u_flat.reshape(dom.counts),
                    residual_history=history,
                ) from exc
            step = 1.0
            improved = False
            for _ in range(30):
                cand = u_flat.copy()
                cand[sel] += step * delta
                Rc, _ = _residual_and_jacobian(
                    nl, scheme, dom, cand, w_flat, prev_flat, dt, eps, build_jac=False
                )
                if float(np.abs(Rc).max()) < rnorm:
                    u_flat = cand
                    improved = True
                    break
                step *= 0.5
            total_iters += 1
            if not improved:
                # stagnation at this continuation stage: move to the next
                break
    R, _ = _residual_and_jacobian(
        nl, scheme, dom, u_flat, w_flat, prev_flat, dt, eps_ladder[-1], build_jac=False
    )
    final = float(np.abs(R).max())
    if final > 100.0 * cfg.newton_tol * scale:
        raise NewtonDivergenceError(
            f"Newton stalled at residual {final:.3e}",
            last_iterate=u_flat.reshape(dom.counts),
            residual_history=[final],
        )
    return u_flat.reshape(dom.counts) * dom.mask, total_iters, eps_ladder[-1]


# ---------------------------------------------------------------------------
# residual checkers


def build_test_bank(domain, rng=None, scales=(0.3, 0.18, 0.1), per_scale=4):
    """Compactly supported C^2 spatial bumps at several scales, supports
    strictly inside the mask (centers keep a 3/4-radius margin from the
    complement, so no bump is clipped by the wall)."""
    from scipy import ndimage

    from parlab.whitney import _ramp

    rng = rng or np.random.default_rng(0)
    mesh = domain.center_mesh()
    if domain.mask.all():
        dist = np.full(domain.counts, np.inf)
        for d in range(domain.dim):
            c = mesh[d]
            dist = np.minimum(dist, np.minimum(c, domain.lengths[d] - c))
    else:
        dist = ndimage.distance_transform_edt(domain.mask, sampling=domain.cell_size)
    bank = []
    diam = max(domain.lengths)
    margin = max(domain.cell_size)
    for s in scales:
        radius = s * diam
        while radius > 4 * margin:
            eligible = np.argwhere(dist > 0.75 * radius + margin)
            if len(eligible):
                break
            radius *= 0.5
        eligible = np.argwhere(dist > 0.75 * radius + margin)
        if not len(eligible):
            continue
        for _ in range(per_scale):
            row = eligible[rng.integers(0, len(eligible))]
            c = np.array([m[tuple(row)] for m in mesh])
            d = np.sqrt(sum((m - cc) ** 2 for m, cc in zip(mesh, c)))
            bump = _ramp(d / radius) * domain.mask
            if bump.sum() > 0:
                bank.append(bump)
    return bank


def _a_field(u, nl):
    """A(grad u) per slice from the measurement gradient, (nt, dim, ...)."""
    grid = u.grid
    out = np.zeros((grid.nt, grid.spatial.dim) + grid.spatial.counts)
    for k in range(grid.nt):
        g = spatial_gradient(u.values[k], grid.spatial)
        zeta = np.moveaxis(g, 0, -1)
        out[k] = np.moveaxis(nl.eval(zeta), -1, 0)
    return out


def _steklov_array(values, grid, h):
    from parlab.calculus import _pl_time_integral

    times = grid.times
    out = np.zeros(values.shape)
    span = grid.T - grid.t0
    for k, t in enumerate(times):
        if t >= grid.T - h - 1e-14 * span:
            break
        out[k] = _pl_time_integral(values, times, t, t + h) / h
    return out


def residual_steklov(u, w, nl, h, test_bank, n_times=12):
    """Worst normalized weak-form defect of the Steklov formulation over the
    test bank and sampled times."""
    grid = u.grid
    dom = grid.spatial
    if not grid.dt < h < (grid.T - grid.t0) / 2:
        raise InvalidParamsError("h must lie in (dt, T/2)")
    dudt = steklov_time_derivative(u, h)
    a_field = _a_field(u, nl)
    a_h = np.stack(
        [_steklov_array(a_field[:, d], grid, h) for d in range(dom.dim)], axis=1
    )
    vol = dom.cell_volume
    t_hi = grid.T - h
    ks = [k for k in range(grid.nt) if grid.times[k] < t_hi]
    ks = ks[:: max(1, len(ks) // n_times)]
    worst = 0.0
    for phi in test_bank:
        gphi = spatial_gradient(phi, dom)
        for k in ks:
            term1 = float((dudt[k] * phi).sum() * vol)
            term2 = float(sum((a_h[k, d] * gphi[d]).sum() for d in range(dom.dim)) * vol)
            # defect relative to the absolute mass moved by either term
            mass1 = float(np.abs(dudt[k] * phi).sum() * vol)
            mass2 = float(
                sum(np.abs(a_h[k, d] * gphi[d]).sum() for d in range(dom.dim)) * vol
            )
            worst = max(worst, abs(term1 + term2) / (mass1 + mass2 + 1e-300))
    return worst


def build_spacetime_bank(grid, rng=None, scales=(0.3, 0.18), per_scale=4):
    """Space-time bumps vanishing near t0, T and outside the mask interior."""
    from parlab.whitney import _ramp

    rng = rng or np.random.default_rng(1)
    spatial = build_test_bank(grid.spatial, rng, scales=scales, per_scale=per_scale)
    bank = []
    t0, T = grid.t0, grid.T
    for m, phi in enumerate(spatial):
        tc = rng.uniform(t0 + 0.3 * (T - t0), t0 + 0.7 * (T - t0))
        tr = rng.uniform(0.15, 0.3) * (T - t0)
        win = _ramp(np.abs(grid.times - tc) / tr)
        bank.append(win[:, None] * phi[None] if grid.spatial.dim == 1
                    else win[:, None, None] * phi[None])
    return bank


def residual_distributional(u, nl, test_bank):
    """Worst normalized defect of the distributional form over space-time
    bumps phi: integral of -u phi_t + <A(grad u), grad phi>."""
    grid = u.grid
    dom = grid.spatial
    a_field = _a_field(u, nl)
    vol = dom.cell_volume
    wts = grid.time_weights()
    worst = 0.0
    for phi in test_bank:
        gf = GridFunction(grid, phi)
        from parlab.calculus import partial_t

        phit = partial_t(gf)
        t1 = -(u.values * phit)
        t2 = np.zeros(grid.shape)
        for k in range(grid.nt):
            gphi = spatial_gradient(phi[k], dom)
            t2[k] = sum(a_field[k, d] * gphi[d] for d in range(dom.dim))
        red = tuple(range(1, t1.ndim))
        term1 = float(((t1.sum(axis=red)) * wts).sum() * vol)
        term2 = float(((t2.sum(axis=red)) * wts).sum() * vol)
        # defect relative to absolute mass, comparable with residual_steklov
        mass = float(((np.abs(t1) + np.abs(t2)).sum(axis=red) * wts).sum() * vol)
        worst = max(worst, abs(term1 + term2) / (mass + 1e-300))
    return worst


def check_initial_condition(u, u1, h_ladder):
    """L^2 defect of the Steklov trace at t = t0 against u1, per h."""
    grid = u.grid
    dom = grid.spatial
    inner = dom.interior_mask()
    vol = dom.cell_volume
    from parlab.calculus import steklov

    table = []
    for h in sorted(h_ladder, reverse=True):
        uh0 = steklov(u, h).values[0]
        defect = float(((uh0 - u1) ** 2)[inner].sum() * vol)
        table.append((float(h), defect))
    defects = [d for _, d in table]
    monotone = all(defects[i + 1] <= defects[i] * 1.05 + 1e-14 for i in range(len(defects) - 1))
    return {"table": table, "monotone": monotone}


# ---------------------------------------------------------------------------
# approximation / compactness loop


@dataclass
class ApproximationRun:
    scales: list
    solutions: list
    pairwise_energy: np.ndarray
    cauchy_trend: float
    c_app_gradient: float
    c_app_time: float
    meta: dict = field(default_factory=dict)


def mollify(f, sigma_cells):
    """Space-time mollification with a truncated Gaussian kernel; the time
    axis extends by its edge value, space by zero."""
    from scipy import ndimage

    grid = f.grid
    vals = f.values
    sig = (sigma_cells,) + (sigma_cells,) * grid.spatial.dim
    sm = ndimage.gaussian_filter(vals, sigma=sig, mode="nearest")
    return GridFunction(grid, sm)


def approximation_loop(nl, u0, scales, cfg=None, beta=0.1, rng=None, ball_frac=0.5):
    """Mollify the rough lateral data at each scale, solve, and fill the
    pairwise sup-in-time local L^2 energies plus the mollifier bounds."""
    grid = u0.grid
    dom = grid.spatial
    cfg = cfg or SolveConfig()
    smoothed = []
    for k in scales:
        sk = mollify(u0, sigma_cells=2.0 ** (-k) * max(dom.counts) / 8.0)
        smoothed.append(sk)

    p = nl.p
    vol = dom.cell_volume
    wts = grid.time_weights()

    def grad_norm(f):
        gm = gradient_magnitude(f)
        return float(((gm ** (p - beta)).sum(axis=tuple(range(1, gm.ndim))) * wts).sum() * vol)

    def time_norm(f):
        from parlab.calculus import slicewise_representation, cell_field_norm

        tp = (p - beta) / (p - 1.0)
        w_field = slicewise_representation(f, theta_prime=tp)
        per = np.array(
            [cell_field_norm(w_field[k], tp, vol) ** tp for k in range(grid.nt)]
        )
        return float((per * wts).sum())

    base_grad = grad_norm(u0)
    base_time = time_norm(u0)
    c_grad = max(grad_norm(s) / max(base_grad, 1e-300) for s in smoothed)
    c_time = max(time_norm(s) / max(base_time, 1e-300) for s in smoothed)

    zero_init = np.zeros(dom.counts)
    sols = []
    for sk in smoothed:
        sols.append(solve(nl, grid, sk, zero_init, cfg))

    # central ball for the local energies
    mesh = dom.center_mesh()
    center = [0.5 * L for L in dom.lengths]
    d2 = sum((m - c) ** 2 for m, c in zip(mesh, center))
    radius = ball_frac * 0.5 * min(dom.lengths)
    ball = (d2 <= radius * radius) & dom.mask

    K = len(scales)
    pe = np.zeros((K, K))
    for i in range(K):
        for j in range(i + 1, K):
            diff = (sols[i].values - sols[j].values) ** 2
            per_slice = diff[:, ball].sum(axis=1) * vol
            pe[i, j] = pe[j, i] = float(per_slice.max())

    offdiag = [pe[k, k + 1] for k in range(K - 1)]
    if len(offdiag) >= 2 and min(offdiag) > 0:
        trend = float(np.polyfit(range(len(offdiag)), np.log(offdiag), 1)[0])
    else:
        trend = -np.inf
    return ApproximationRun(
        scales=list(scales),
        solutions=sols,
        pairwise_energy=pe,
        cauchy_trend=trend,
        c_app_gradient=float(c_grad),
        c_app_time=float(c_time),
        meta={"ball_radius": radius, "beta": beta},
    )
