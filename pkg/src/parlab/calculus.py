"""Discrete calculus: gradients, norms, Steklov averages, dual-norm
representations, and the interpolation-inequality checkers.

Two gradient discretizations coexist on purpose.  Measurements (norms,
inequality verifications) use the cell-centered *central* difference with
one-sided closure at the mask boundary, which is second-order accurate.
Variational solves (dual-norm representations, Poisson problems) use the
*forward* difference operator G together with div := -G^T, an exact
adjoint pair, so the constrained minimizations below are well-posed and
the lattice divergence theorem holds to rounding error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix, vstack
from scipy.sparse.linalg import factorized

from parlab.errors import (
    ExponentConstraintError,
    HOutOfRangeError,
    InvalidParamsError,
    NoConvergenceError,
    WeightPreconditionError,
)
from parlab.grid import GridFunction, ball_volume
from parlab.report import EstimateReport

# ---------------------------------------------------------------------------
# pointwise gradients (measurement stencil)


def spatial_gradient(values, domain):
    """Per-cell gradient of one time slice: central differences in the
    interior, one-sided where a neighbor leaves the mask, zero outside."""
    mask = domain.mask
    out = np.zeros((domain.dim,) + domain.counts)
    for d in range(domain.dim):
        h = domain.cell_size[d]
        fwd_ok = np.zeros_like(mask)
        bwd_ok = np.zeros_like(mask)
        fwd_val = np.zeros_like(values)
        bwd_val = np.zeros_like(values)
        src = [slice(None)] * domain.dim
        dst = [slice(None)] * domain.dim
        src[d] = slice(1, None)
        dst[d] = slice(0, -1)
        fwd_ok[tuple(dst)] = mask[tuple(src)]
        fwd_val[tuple(dst)] = values[tuple(src)]
        src[d] = slice(0, -1)
        dst[d] = slice(1, None)
        bwd_ok[tuple(dst)] = mask[tuple(src)]
        bwd_val[tuple(dst)] = values[tuple(src)]

        g = np.zeros_like(values)
        both = fwd_ok & bwd_ok & mask
        g[both] = (fwd_val[both] - bwd_val[both]) / (2 * h)
        fonly = fwd_ok & ~bwd_ok & mask
        g[fonly] = (fwd_val[fonly] - values[fonly]) / h
        bonly = ~fwd_ok & bwd_ok & mask
        g[bonly] = (values[bonly] - bwd_val[bonly]) / h
        out[d] = g
    return out


def gradient(f, k):
    """Spatial gradient of GridFunction f at time slice k, shape (dim, ...)."""
    if not 0 <= k < f.grid.nt:
        raise InvalidParamsError(f"slice {k} out of range")
    return spatial_gradient(f.values[k], f.grid.spatial)


def gradient_magnitude(f):
    """|grad f| on every slice, shape (nt, ...)."""
    out = np.empty(f.grid.shape)
    for k in range(f.grid.nt):
        g = gradient(f, k)
        out[k] = np.sqrt(np.sum(g * g, axis=0))
    return out


def partial_t(f):
    """Discrete time derivative: central in the interior, one-sided at the
    ends, shape (nt, ...)."""
    v = f.values
    dt = f.grid.dt
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (2 * dt)
    out[0] = (v[1] - v[0]) / dt
    out[-1] = (v[-1] - v[-2]) / dt
    return out


# ---------------------------------------------------------------------------
# integral norms


def _region_weights(grid, region):
    """(time weights, spatial mask) for a region: None = all of Omega_T,
    a ParabolicCylinder, or an explicit boolean space-time mask."""
    if region is None:
        return grid.time_weights(), grid.spatial.mask, None
    if hasattr(region, "time_interval"):  # ParabolicCylinder
        a, b = region.time_interval
        smask = grid.spatial.ball_mask(region.x, region.r) & grid.spatial.mask
        return grid.time_weights(a, b), smask, None
    region = np.asarray(region, dtype=bool)
    return grid.time_weights(), None, region


def spacetime_integral(f, integrand, region=None):
    """Integral of a (nt, ...) field over the region, trapezoid in time."""
    grid = f.grid if isinstance(f, GridFunction) else f
    w, smask, st_mask = _region_weights(grid, region)
    vol = grid.spatial.cell_volume
    if st_mask is not None:
        per_slice = (integrand * st_mask).sum(axis=tuple(range(1, integrand.ndim)))
    elif smask is not None:
        per_slice = integrand[:, smask].sum(axis=1)
    else:
        per_slice = integrand.sum(axis=tuple(range(1, integrand.ndim)))
    return float((per_slice * w).sum() * vol)


def lp_norm(f, theta, region=None):
    """L^theta norm over Omega_T (or a sub-region)."""
    if theta < 1:
        raise InvalidParamsError("theta must be >= 1")
    val = spacetime_integral(f.grid, np.abs(f.values) ** theta, region)
    return val ** (1.0 / theta)


def sobolev_norm(f, theta, region=None):
    """(integral of |f|^theta + |grad f|^theta)^(1/theta)."""
    if theta < 1:
        raise InvalidParamsError("theta must be >= 1")
    gm = gradient_magnitude(f)
    val = spacetime_integral(f.grid, np.abs(f.values) ** theta + gm ** theta, region)
    return val ** (1.0 / theta)


# ---------------------------------------------------------------------------
# Steklov averages


def _pl_time_integral(values, times, a, b):
    """Exact integral over (a, b) of the piecewise-linear-in-time interpolant."""
    # values: (nt, ...); returns array of spatial shape
    nt = len(times)
    dt = times[1] - times[0]
    a = max(a, times[0])
    b = min(b, times[-1])
    if b <= a:
        return np.zeros(values.shape[1:])
    out = np.zeros(values.shape[1:])
    k0 = int(np.floor((a - times[0]) / dt))
    k1 = int(np.ceil((b - times[0]) / dt))
    k1 = min(k1, nt - 1)
    for k in range(k0, k1):
        lo = max(a, times[k])
        hi = min(b, times[k + 1])
        if hi <= lo:
            continue
        # linear on [t_k, t_k+1]: v(t) = v_k + (t - t_k)/dt * (v_{k+1} - v_k)
        s_lo = (lo - times[k]) / dt
        s_hi = (hi - times[k]) / dt
        # integral of v over [lo, hi]
        out = out + dt * (
            values[k] * (s_hi - s_lo)
            + (values[k + 1] - values[k]) * 0.5 * (s_hi ** 2 - s_lo ** 2)
        )
    return out


def steklov(f, h):
    """Forward Steklov average: mean of f over (t, t+h) for t < T-h, zero
    for t >= T-h.  Exact on the piecewise-linear interpolant in time."""
    grid = f.grid
    span = grid.T - grid.t0
    if not 0 < h < span:
        raise HOutOfRangeError(f"h={h} outside (0, {span})")
    times = grid.times
    out = np.zeros(grid.shape)
    for k, t in enumerate(times):
        if t >= grid.T - h - 1e-14 * span:
            break
        out[k] = _pl_time_integral(f.values, times, t, t + h) / h
    return f.with_values(out)


def steklov_symmetric(f, h, lam=1.0):
    """Two-sided average over (t - lam h^2, t + lam h^2), clipped to the
    lattice extent; companion of the enlarged-cylinder averaging property."""
    grid = f.grid
    times = grid.times
    out = np.zeros(grid.shape)
    half = lam * h * h
    for k, t in enumerate(times):
        a = max(t - half, grid.t0)
        b = min(t + half, grid.T)
        if b > a:
            out[k] = _pl_time_integral(f.values, times, a, b) / (b - a)
    return f.with_values(out)


def steklov_time_derivative(f, h):
    """d/dt [f]_h(t) = (f(t+h) - f(t))/h, the exact derivative of the
    forward average; zero where the average itself is cut off."""
    grid = f.grid
    span = grid.T - grid.t0
    if not 0 < h < span:
        raise HOutOfRangeError(f"h={h} outside (0, {span})")
    times = grid.times
    out = np.zeros(grid.shape)
    for k, t in enumerate(times):
        if t >= grid.T - h - 1e-14 * span:
            break
        # piecewise-linear point evaluation at t + h
        s = (t + h - grid.t0) / grid.dt
        k2 = min(int(np.floor(s)), grid.nt - 2)
        frac = s - k2
        f_th = f.values[k2] * (1 - frac) + f.values[k2 + 1] * frac
        out[k] = (f_th - f.values[k]) / h
    return out


# ---------------------------------------------------------------------------
# forward-difference adjoint pair and dual-norm representations


def face_gradient_matrices(domain, submask=None):
    """Per-direction sparse difference operators on cell faces.

    Direction d has ``counts`` with axis d enlarged by one: face j along a
    line carries ``(u[j] - u[j-1]) / h`` with the field extended by zero
    outside the (sub)mask, so every wall face of the mask is present.
    Stacking the directions gives G; div := -G^T is its exact adjoint.
    """
    mask = domain.mask if submask is None else (domain.mask & submask)
    n = int(np.prod(domain.counts))
    sel = mask.ravel(order="C")
    cell_idx = np.arange(n).reshape(domain.counts)
    mats = []
    face_shapes = []
    for d in range(domain.dim):
        h = domain.cell_size[d]
        fshape = list(domain.counts)
        fshape[d] += 1
        fshape = tuple(fshape)
        nfaces = int(np.prod(fshape))
        face_idx = np.arange(nfaces).reshape(fshape)
        lo = [slice(None)] * domain.dim
        hi = [slice(None)] * domain.dim
        lo[d] = slice(0, domain.counts[d])  # face j pairs with cell j (+)
        hi[d] = slice(1, domain.counts[d] + 1)  # face j pairs with cell j-1 (-)
        rows_plus = face_idx[tuple(lo)].ravel()
        rows_minus = face_idx[tuple(hi)].ravel()
        cols = cell_idx.ravel()
        keep = sel
        data = np.concatenate(
            [np.full(keep.sum(), 1.0 / h), np.full(keep.sum(), -1.0 / h)]
        )
        rows = np.concatenate([rows_plus[keep], rows_minus[keep]])
        ccols = np.concatenate([cols[keep], cols[keep]])
        mats.append(csr_matrix((data, (rows, ccols)), shape=(nfaces, n)))
        face_shapes.append(fshape)
    return mats, face_shapes, mask


class PoissonSolver:
    """Factorized -div grad = G^T G with zero boundary values on a mask."""

    def __init__(self, domain, submask=None):
        self.domain = domain
        mats, face_shapes, mask = face_gradient_matrices(domain, submask)
        self.G = vstack(mats).tocsr()
        self.face_shapes = face_shapes
        self.face_sizes = [int(np.prod(s)) for s in face_shapes]
        self.mask = mask
        self.flat_mask = mask.ravel(order="C")
        A = (self.G.T @ self.G).tocsc()[self.flat_mask][:, self.flat_mask]
        self._solve = factorized(A)

    def solve(self, rhs):
        """u with G^T G u = rhs on the mask, u = 0 outside; rhs full-shape."""
        b = rhs.ravel(order="C")[self.flat_mask]
        u = np.zeros(int(np.prod(self.domain.counts)))
        u[self.flat_mask] = self._solve(b)
        return u.reshape(self.domain.counts)

    def gradient_faces(self, u):
        """Flat stacked face field G u."""
        return self.G @ u.ravel(order="C")

    def divergence(self, psi_flat):
        """-G^T psi, the exact adjoint divergence of a flat face field."""
        return (-(self.G.T @ psi_flat)).reshape(self.domain.counts)

    def split_faces(self, psi_flat):
        out = []
        off = 0
        for shape, size in zip(self.face_shapes, self.face_sizes):
            out.append(psi_flat[off : off + size].reshape(shape))
            off += size
        return out

    def cell_view(self, psi_flat):
        """Average the two faces of each cell per direction: (dim, counts)."""
        comps = self.split_faces(psi_flat)
        out = np.zeros((self.domain.dim,) + self.domain.counts)
        for d, comp in enumerate(comps):
            lo = [slice(None)] * self.domain.dim
            hi = [slice(None)] * self.domain.dim
            lo[d] = slice(0, self.domain.counts[d])
            hi[d] = slice(1, self.domain.counts[d] + 1)
            out[d] = 0.5 * (comp[tuple(lo)] + comp[tuple(hi)])
        return out


@dataclass
class NegSobolevRepresentation:
    """psi with f = -div psi discretely, phi_0 taken as zero.

    ``psi`` is the per-cell vector view (faces averaged to centers); the
    divergence constraint itself is enforced on the underlying face field,
    carried along in ``psi_faces``.
    """

    psi: np.ndarray  # (dim, ...) cell field
    residual: float
    norm: float
    theta_prime: float
    iterations: int = 0
    psi_faces: np.ndarray = None  # flat stacked face field


def _face_norm_pow(psi_flat, theta_prime, vol, eps=0.0):
    mag2 = psi_flat * psi_flat + eps * eps
    return float(np.sum(mag2 ** (theta_prime / 2.0)) * vol)


def cell_field_norm(psi_cells, theta_prime, vol):
    mag = np.sqrt(np.sum(psi_cells * psi_cells, axis=0))
    return float(np.sum(mag**theta_prime) * vol) ** (1.0 / theta_prime)


def neg_sobolev_norm(
    f_slice,
    theta_prime,
    domain,
    region=None,
    method="auto",
    tol=1e-9,
    max_iter=2000,
    rng=None,
):
    """Minimal L^theta' norm of psi subject to f = -div psi on the region.

    theta'=2 is solved exactly through the Poisson problem (psi = grad u,
    -div grad u = f, zero boundary values); other exponents run a projected
    descent on the affine constraint set, every projection being one
    prefactorized Poisson solve.  Returns (norm, representation).
    """
    if theta_prime <= 1:
        raise InvalidParamsError("theta_prime must be > 1")
    solver = PoissonSolver(domain, region)
    if not solver.mask.any():
        raise InvalidParamsError("region has empty interior")
    f_slice = np.asarray(f_slice, dtype=float) * solver.mask
    vol = domain.cell_volume
    u = solver.solve(f_slice)
    psi0 = solver.gradient_faces(u)

    fscale = float(np.abs(f_slice).max())
    if fscale == 0.0:
        rep = NegSobolevRepresentation(
            solver.cell_view(np.zeros_like(psi0)), 0.0, 0.0, theta_prime,
            psi_faces=np.zeros_like(psi0),
        )
        return 0.0, rep

    direct = method == "direct" or (method == "auto" and abs(theta_prime - 2.0) < 1e-14)
    if direct:
        psi = psi0
        iters = 0
    else:
        psi = psi0
        if rng is not None:
            # start from a perturbed feasible point so the descent is exercised
            noise = rng.standard_normal(psi0.shape) * float(np.abs(psi0).max())
            psi = _project_affine(solver, psi0 + noise, f_slice)
        scale = float(np.abs(psi).max()) or 1.0
        eps = 1e-10 * scale
        obj = _face_norm_pow(psi, theta_prime, vol, eps)
        step = 0.5 * scale ** (2.0 - theta_prime)
        iters = 0
        rel_drop = np.inf
        for iters in range(1, max_iter + 1):
            mag2 = psi * psi + eps * eps
            grad = theta_prime * (mag2 ** (theta_prime / 2.0 - 1.0)) * psi * vol
            # project the step back onto the constraint set
            trial_step = step
            improved = False
            for _ in range(40):
                cand = _project_affine(solver, psi - trial_step * grad, f_slice)
                cand_obj = _face_norm_pow(cand, theta_prime, vol, eps)
                if cand_obj <= obj:
                    improved = True
                    break
                trial_step *= 0.5
            if not improved:
                break
            rel_drop = (obj - cand_obj) / max(obj, 1e-300)
            psi, obj = cand, cand_obj
            step = trial_step * 1.8
            if rel_drop < tol:
                break
        else:
            raise NoConvergenceError(
                "dual-norm minimization did not converge", residual=rel_drop, iterations=iters
            )

    # divergence() is -G^T; the constraint is G^T psi = f, i.e. f = -div psi,
    # tested on the mask (the representation acts against fields supported there)
    defect = (-solver.divergence(psi) - f_slice)[solver.mask]
    residual = float(np.abs(defect).max()) / fscale
    cells = solver.cell_view(psi)
    norm = cell_field_norm(cells, theta_prime, vol)
    rep = NegSobolevRepresentation(cells, residual, norm, theta_prime, iters, psi_faces=psi)
    return norm, rep


def _project_affine(solver, psi_flat, f_slice):
    """Orthogonal projection onto {psi : G^T psi = f} (one Poisson solve)."""
    defect = -solver.divergence(psi_flat) - f_slice  # G^T psi - f
    defect = defect * solver.mask
    corr = solver.solve(defect)
    return psi_flat - solver.gradient_faces(corr)


def slicewise_representation(f, theta_prime=2.0, source=None, method="direct"):
    """Per-cell vector field w(x, t) with source = -div w on every slice.

    ``source`` defaults to the discrete time derivative of f.  Used to
    realize distributional time derivatives of boundary data as fields.
    Returns an array of shape (nt, dim, *counts).
    """
    grid = f.grid
    src = partial_t(f) if source is None else source
    psi = np.zeros((grid.nt, grid.spatial.dim) + grid.spatial.counts)
    solver = PoissonSolver(grid.spatial)
    for k in range(grid.nt):
        sk = src[k] * solver.mask
        if method == "direct" or abs(theta_prime - 2.0) < 1e-14:
            u = solver.solve(sk)
            psi[k] = solver.cell_view(solver.gradient_faces(u))
        else:
            _, rep = neg_sobolev_norm(sk, theta_prime, grid.spatial, method="iterative")
            psi[k] = rep.psi
    return psi


# ---------------------------------------------------------------------------
# inequality checkers


def make_poincare_weights(domain, center, radius, grid=None, interval=None):
    """A compliant pair (mu, xi): mu a normalized C^2 spatial bump supported
    in the ball, xi the indicator of B x I (space-time, when grid given)."""
    mesh = domain.center_mesh()
    d2 = sum((m - c) ** 2 for m, c in zip(mesh, center))
    s = np.sqrt(d2) / radius
    mu = np.zeros(domain.counts)
    inside = s < 1.0
    mu[inside] = (1.0 - s[inside] ** 2) ** 3
    total = mu.sum() * domain.cell_volume
    if total <= 0:
        raise InvalidParamsError("ball too small to carry a bump weight")
    mu = mu / total
    if grid is None:
        return mu, None
    a, b = interval
    xi = np.zeros(grid.shape)
    smask = domain.ball_mask(center, radius)
    for k in np.nonzero((grid.times > a) & (grid.times < b))[0]:
        xi[k][smask] = 1.0
    return mu, xi


def _check_poincare_weights(domain, center, radius, interval, grid, mu, xi, max_const):
    smask = domain.ball_mask(center, radius)
    if np.any((np.abs(mu) > 1e-14) & ~smask):
        raise WeightPreconditionError("mu is not supported in the ball")
    total = mu.sum() * domain.cell_volume
    if abs(total - 1.0) > 1e-6:
        raise WeightPreconditionError(f"mu integrates to {total}, expected 1")
    n = domain.dim
    mu_const = float(np.abs(mu).max() * radius ** n)
    gmu = spatial_gradient(mu, domain)
    gmu_const = float(np.sqrt((gmu * gmu).sum(axis=0)).max() * radius ** (n + 1))
    if mu_const > max_const or gmu_const > max_const:
        raise WeightPreconditionError(
            f"mu bounds {mu_const:.3g}/{gmu_const:.3g} exceed the declared {max_const}"
        )
    if xi is not None:
        if np.any(xi < 0):
            raise WeightPreconditionError("xi must be nonnegative")
        a, b = interval
        w = grid.time_weights(a, b)
        l1 = float(((xi[:, smask]).sum(axis=1) * w).sum() * domain.cell_volume)
        linf = float(xi[:, smask].max()) if smask.any() else 0.0
        vol_bi = ball_volume(n, radius) * (min(b, grid.T) - max(a, grid.t0))
        if l1 <= 0:
            raise WeightPreconditionError("xi vanishes on B x I")
        xi_const = linf * vol_bi / l1
        if xi_const > max_const:
            raise WeightPreconditionError(f"xi flatness {xi_const:.3g} exceeds {max_const}")
        return mu_const, gmu_const, xi_const, l1
    return mu_const, gmu_const, None, None


def verify_parabolic_poincare(
    f, center, radius, interval, window, mu, xi, theta=2.0, max_weight_const=100.0
):
    """Two-sided evaluation of the time-localized parabolic Poincare
    inequality on B x I with the time window chi_J.

    Returns an EstimateReport whose ratio compares the mean oscillation of
    f chi_J against the gradient term plus the worst weighted-mean drift in
    time.  The constant is empirical; callers freeze it per suite.
    """
    grid = f.grid
    dom = grid.spatial
    mu_c, gmu_c, xi_c, xi_l1 = _check_poincare_weights(
        dom, center, radius, interval, grid, mu, xi, max_weight_const
    )
    a, b = interval
    j_lo, j_hi = window
    w = grid.time_weights(a, b)
    smask = dom.ball_mask(center, radius)
    chi_j = ((grid.times >= j_lo) & (grid.times <= j_hi)).astype(float)
    vol = dom.cell_volume

    fx = f.values * chi_j[:, None] if dom.dim == 1 else f.values * chi_j[:, None, None]

    # weighted space-time mean <f chi_J>_xi, normalized by ||xi||_L1(BxI)
    num = float(((fx * xi)[:, smask].sum(axis=1) * w).sum() * vol)
    mean_xi = num / xi_l1

    meas_bi = ball_volume(dom.dim, radius) * float(w.sum())
    lhs_int = float(
        ((np.abs(fx - mean_xi) ** theta)[:, smask].sum(axis=1) * w).sum() * vol
    )
    lhs = lhs_int / meas_bi / radius ** theta

    gm = gradient_magnitude(f)
    gm = gm * chi_j[:, None] if dom.dim == 1 else gm * chi_j[:, None, None]
    rhs_grad = float(((gm ** theta)[:, smask].sum(axis=1) * w).sum() * vol) / meas_bi

    ks = np.nonzero(w > 0)[0]
    mu_means = np.array([float((fx[k] * mu).sum() * vol) for k in ks])
    drift = float(mu_means.max() - mu_means.min()) if len(mu_means) else 0.0
    rhs_time = (drift / radius) ** theta

    rhs = rhs_grad + rhs_time
    # raster sensitivity of the ball average, reported separately
    smask2 = dom.ball_mask(center, radius + max(dom.cell_size))
    meas2 = ball_volume(dom.dim, radius + max(dom.cell_size)) * float(w.sum())
    lhs2 = float(
        ((np.abs(fx - mean_xi) ** theta)[:, smask2].sum(axis=1) * w).sum() * vol
    ) / meas2 / radius**theta
    defect = abs(lhs2 - lhs) / (abs(lhs) + 1e-300)
    return EstimateReport.from_sides(
        "parabolic_poincare",
        lhs,
        rhs,
        tolerance=np.inf,
        meta={
            "theta": theta,
            "radius": radius,
            "mu_const": mu_c,
            "grad_mu_const": gmu_c,
            "xi_const": xi_c,
            "rhs_gradient_term": rhs_grad,
            "rhs_time_term": rhs_time,
            "quadrature_defect": defect,
        },
    )


def verify_gagliardo_nirenberg(domain, values, center, rho, sigma, theta, r, delta):
    """Multiplicative interpolation inequality on a ball of radius rho <= 1;
    both sides evaluated, constant-free ratio returned."""
    if not 0 < delta < 1:
        raise ExponentConstraintError("delta must lie in (0,1)")
    if rho > 1.0:
        raise ExponentConstraintError("rho must be <= 1")
    n = domain.dim
    if -n / sigma > delta * (1 - n / theta) - (1 - delta) * n / r + 1e-12:
        raise ExponentConstraintError("exponents violate the admissibility constraint")
    smask = domain.ball_mask(center, rho)
    vol = domain.cell_volume
    meas = ball_volume(n, rho)
    fv = np.abs(values[smask] / rho)
    lhs = float((fv ** sigma).sum() * vol) / meas
    g = spatial_gradient(values, domain)
    gm = np.sqrt((g * g).sum(axis=0))[smask]
    t1 = float(((fv ** theta) + gm ** theta).sum() * vol) / meas
    t2 = float((fv ** r).sum() * vol) / meas
    rhs = (t1 ** (delta * sigma / theta)) * (t2 ** ((1 - delta) * sigma / r))
    smask2 = domain.ball_mask(center, rho + max(domain.cell_size))
    fv2 = np.abs(values[smask2] / rho)
    lhs2 = float((fv2**sigma).sum() * vol) / ball_volume(n, rho + max(domain.cell_size))
    defect = abs(lhs2 - lhs) / (abs(lhs) + 1e-300)
    return EstimateReport.from_sides(
        "gagliardo_nirenberg",
        lhs,
        rhs,
        tolerance=np.inf,
        meta={"sigma": sigma, "theta": theta, "r": r, "delta": delta, "rho": rho,
              "quadrature_defect": defect},
    )
