"""Space-time lattice data model, domain masks, and bit-exact file I/O.

Conventions used throughout the package:

* Spatial samples live at cell centers ``x_i = (i + 1/2) * cell_size`` of a
  uniform Cartesian lattice over the bounding box of the domain; the mask
  selects the cells inside Omega.  Everything outside the mask carries the
  value 0 exactly (extension by zero).
* Time samples live at nodes ``t_k = t0 + k * dt``; integrals in time give
  slice k the weight ``|[t_k - dt/2, t_k + dt/2] ∩ (a,b) ∩ [t0, T]|`` which
  reduces to the trapezoid rule on the full range and to proportional
  partial weights on cylinder slabs.
* Parabolic cylinders are closed in space and open in time; their time
  extent is exactly ``(t - gamma r^2, t + gamma r^2)``.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from parlab.errors import (
    BadMagicError,
    DimsMismatchError,
    EmptyIntersectionError,
    InvalidParamsError,
    VersionMismatchError,
)

_MAGIC = b"PGRD"
_VERSION = 1


def ball_volume(dim, r):
    """Lebesgue measure of a Euclidean ball of radius r in dimension 1 or 2."""
    if dim == 1:
        return 2.0 * r
    return np.pi * r * r


@dataclass(frozen=True)
class SpatialDomain:
    """Uniform lattice over the bounding box of Omega with an inside mask."""

    dim: int
    cell_size: tuple
    mask: np.ndarray
    boundary_cells: frozenset = field(default=None)

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "cell_size", tuple(float(h) for h in self.cell_size))
        if self.dim not in (1, 2):
            raise InvalidParamsError(f"dim must be 1 or 2, got {self.dim}")
        if mask.ndim != self.dim:
            raise InvalidParamsError("mask rank disagrees with dim")
        if any(h <= 0 for h in self.cell_size):
            raise InvalidParamsError("cell_size entries must be positive")
        _validate_mask(mask)
        if self.boundary_cells is None:
            object.__setattr__(
                self, "boundary_cells", frozenset(map(tuple, np.argwhere(_boundary(mask))))
            )

    @property
    def counts(self):
        return self.mask.shape

    @property
    def cell_volume(self):
        return float(np.prod(self.cell_size))

    @property
    def lengths(self):
        return tuple(n * h for n, h in zip(self.counts, self.cell_size))

    def centers(self, axis):
        n = self.counts[axis]
        h = self.cell_size[axis]
        return (np.arange(n) + 0.5) * h

    def center_mesh(self):
        """Coordinate arrays of shape ``counts``, one per axis (cached)."""
        cached = getattr(self, "_mesh", None)
        if cached is None:
            axes = [self.centers(d) for d in range(self.dim)]
            cached = np.meshgrid(*axes, indexing="ij")
            for arr in cached:
                arr.setflags(write=False)
            object.__setattr__(self, "_mesh", cached)
        return cached

    def ball_mask(self, center, radius):
        """Boolean array of cells whose center lies in the closed ball."""
        mesh = self.center_mesh()
        d2 = sum((m - c) ** 2 for m, c in zip(mesh, center))
        return d2 <= radius * radius + 1e-15 * radius * radius

    def interior_mask(self):
        """Mask cells that are not boundary cells."""
        out = self.mask.copy()
        for idx in self.boundary_cells:
            out[idx] = False
        return out


def _boundary(mask):
    """Mask cells with at least one face neighbor outside (array edge counts)."""
    inside_neighbors = np.ones_like(mask, dtype=bool)
    for d in range(mask.ndim):
        for shift in (1, -1):
            rolled = np.full_like(mask, False)
            src = [slice(None)] * mask.ndim
            dst = [slice(None)] * mask.ndim
            if shift == 1:
                src[d] = slice(1, None)
                dst[d] = slice(0, -1)
            else:
                src[d] = slice(0, -1)
                dst[d] = slice(1, None)
            rolled[tuple(dst)] = mask[tuple(src)]
            inside_neighbors &= rolled
    return mask & ~inside_neighbors


def _validate_mask(mask):
    if not mask.any():
        raise InvalidParamsError("mask is empty")
    structure = ndimage.generate_binary_structure(mask.ndim, 1)
    _, ncomp = ndimage.label(mask, structure=structure)
    if ncomp != 1:
        raise InvalidParamsError(f"mask region is not connected ({ncomp} components)")
    bbox = ndimage.find_objects(mask.astype(np.int8))[0]
    for sl in bbox:
        if sl.stop - sl.start < 3:
            raise InvalidParamsError("mask interior must be at least 3 cells wide per axis")


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Product of a SpatialDomain with a uniform time lattice t0..T."""

    spatial: SpatialDomain
    t0: float
    dt: float
    nt: int

    def __post_init__(self):
        if self.dt <= 0:
            raise InvalidParamsError("dt must be positive")
        if self.nt < 2:
            raise InvalidParamsError("nt must be at least 2")

    @property
    def T(self):
        return self.t0 + self.dt * (self.nt - 1)

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.nt)

    @property
    def shape(self):
        return (self.nt,) + self.spatial.counts

    def time_weights(self, a=None, b=None):
        """Quadrature weight per slice for integration over (a, b) ∩ [t0, T].

        Slice k owns the interval [t_k - dt/2, t_k + dt/2]; the weight is the
        overlap length.  With (a, b) covering everything this is the trapezoid
        rule, so constants integrate to exactly T - t0.
        """
        lo = self.t0 if a is None else max(a, self.t0)
        hi = self.T if b is None else min(b, self.T)
        t = self.times
        left = np.maximum(t - 0.5 * self.dt, lo)
        right = np.minimum(t + 0.5 * self.dt, hi)
        return np.maximum(right - left, 0.0)

    def time_slice_range(self, a, b):
        """Index range [k0, k1) of slices with t_k strictly inside (a, b)."""
        t = self.times
        k0 = int(np.searchsorted(t, a, side="right"))
        k1 = int(np.searchsorted(t, b, side="left"))
        return k0, k1


@dataclass(frozen=True)
class ParabolicCylinder:
    """Q_{r, gamma r^2}(center): spatial ball x time interval (t ± gamma r^2)."""

    center: tuple  # ((x1, ..), t)
    r: float
    gamma: float

    def __post_init__(self):
        x, t = self.center
        object.__setattr__(self, "center", (tuple(float(c) for c in np.atleast_1d(x)), float(t)))
        if self.r <= 0 or self.gamma <= 0:
            raise InvalidParamsError("cylinder needs r > 0 and gamma > 0")

    @property
    def x(self):
        return self.center[0]

    @property
    def t(self):
        return self.center[1]

    @property
    def time_half_length(self):
        return self.gamma * self.r * self.r

    @property
    def time_interval(self):
        s = self.time_half_length
        return (self.t - s, self.t + s)

    def scaled(self, alpha):
        """alpha * Q: radius alpha*r, time half-length alpha^2 * gamma r^2."""
        return ParabolicCylinder(self.center, alpha * self.r, self.gamma)

    def measure(self, dim):
        return ball_volume(dim, self.r) * 2.0 * self.time_half_length

    def contains(self, x, t):
        """Membership: closed in space, open in time."""
        dx2 = sum((xi - ci) ** 2 for xi, ci in zip(np.atleast_1d(x), self.x))
        a, b = self.time_interval
        return (dx2 <= self.r * self.r + 1e-15 * self.r * self.r) and (a < t < b)


class GridFunction:
    """Scalar field on a SpaceTimeGrid; zero outside the mask by construction."""

    __slots__ = ("grid", "_values")

    def __init__(self, grid, values):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise InvalidParamsError(
                f"values shape {values.shape} disagrees with grid shape {grid.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidParamsError("values must be finite")
        values = values * grid.spatial.mask  # extension by zero
        values.setflags(write=False)
        self.grid = grid
        self._values = values

    @property
    def values(self):
        return self._values

    def with_values(self, values):
        return GridFunction(self.grid, values)

    @staticmethod
    def zeros(grid):
        return GridFunction(grid, np.zeros(grid.shape))

    @staticmethod
    def from_callable(grid, fn):
        """Sample fn(*coords, t) at cell centers and slice times."""
        mesh = grid.spatial.center_mesh()
        out = np.empty(grid.shape)
        for k, t in enumerate(grid.times):
            out[k] = fn(*mesh, t)
        return GridFunction(grid, out)

    def slice(self, k):
        return self._values[k]


# ---------------------------------------------------------------------------
# domain construction


def make_domain(kind, **params):
    """Build one of the stock domains: interval, box, l_shape, annulus.

    All of them have uniformly fat complements (flat walls or corkscrew-type
    corners), so the capacity density condition holds by construction.
    """
    if kind == "interval":
        length = float(params.get("length", 1.0))
        cells = int(params.get("cells", 64))
        if length <= 0 or cells < 3:
            raise InvalidParamsError("interval needs length > 0 and cells >= 3")
        mask = np.ones(cells, dtype=bool)
        return SpatialDomain(1, (length / cells,), mask)

    if kind == "box":
        lengths = params.get("lengths", (1.0, 1.0))
        cells = params.get("cells", (32, 32))
        lengths = tuple(float(v) for v in np.atleast_1d(lengths))
        cells = tuple(int(v) for v in np.atleast_1d(cells))
        if len(lengths) == 1:
            lengths = lengths * 2
        if len(cells) == 1:
            cells = cells * 2
        if any(v <= 0 for v in lengths) or any(c < 3 for c in cells):
            raise InvalidParamsError("box needs positive lengths and cells >= 3")
        mask = np.ones(cells, dtype=bool)
        return SpatialDomain(2, tuple(l / c for l, c in zip(lengths, cells)), mask)

    if kind == "l_shape":
        lengths = params.get("lengths", (1.0, 1.0))
        cells = params.get("cells", (32, 32))
        lengths = tuple(float(v) for v in np.atleast_1d(lengths))
        cells = tuple(int(v) for v in np.atleast_1d(cells))
        if len(lengths) == 1:
            lengths = lengths * 2
        if len(cells) == 1:
            cells = cells * 2
        if any(v <= 0 for v in lengths) or any(c < 6 for c in cells):
            raise InvalidParamsError("l_shape needs positive lengths and cells >= 6")
        h = tuple(l / c for l, c in zip(lengths, cells))
        dom = SpatialDomain(2, h, np.ones(cells, dtype=bool))
        xx, yy = dom.center_mesh()
        mask = ~((xx > lengths[0] / 2) & (yy > lengths[1] / 2))
        return SpatialDomain(2, h, mask)

    if kind == "annulus":
        r_in = float(params.get("r_in", 0.25))
        r_out = float(params.get("r_out", 0.5))
        cells = params.get("cells", (64, 64))
        cells = tuple(int(v) for v in np.atleast_1d(cells))
        if len(cells) == 1:
            cells = cells * 2
        if not (0 < r_in < r_out):
            raise InvalidParamsError("annulus needs 0 < r_in < r_out")
        side = 2.0 * r_out
        h = (side / cells[0], side / cells[1])
        dom = SpatialDomain(2, h, np.ones(cells, dtype=bool))
        xx, yy = dom.center_mesh()
        d = np.sqrt((xx - r_out) ** 2 + (yy - r_out) ** 2)
        mask = (d > r_in) & (d < r_out)
        return SpatialDomain(2, h, mask)

    raise InvalidParamsError(f"unknown domain kind {kind!r}")


def make_grid(domain, t0=0.0, T=1.0, nt=None, dt=None):
    """Convenience constructor enforcing T - t0 = dt * (nt - 1)."""
    if nt is None and dt is None:
        nt = 33
    if dt is None:
        dt = (T - t0) / (nt - 1)
    elif nt is None:
        nt = int(round((T - t0) / dt)) + 1
    grid = SpaceTimeGrid(domain, float(t0), float(dt), int(nt))
    if abs(grid.T - T) > 1e-12 * max(1.0, abs(T)):
        raise InvalidParamsError("T - t0 must equal dt * (nt - 1)")
    return grid


# ---------------------------------------------------------------------------
# cylinder rasterization and averages


def cylinder_masks(grid, cyl):
    """(time boolean (nt,), spatial boolean counts) arrays for Q membership."""
    a, b = cyl.time_interval
    t = grid.times
    tmask = (t > a) & (t < b)
    smask = grid.spatial.ball_mask(cyl.x, cyl.r)
    return tmask, smask


def cylinder_integral(grid, values, cyl, chi="time"):
    """Integral of values over Q ∩ (clamp region) by midpoint-in-space,
    proportional-overlap-in-time quadrature.

    chi: "time" clamps to [t0, T] only (the χ_{[0,T]} of the estimates);
    "omega_t" additionally zeroes outside the mask; None behaves as "time"
    (the lattice holds no data beyond [t0, T] anyway).
    """
    a, b = cyl.time_interval
    w = grid.time_weights(a, b)
    if not np.any(w > 0):
        return 0.0
    smask = grid.spatial.ball_mask(cyl.x, cyl.r)
    if chi == "omega_t":
        smask = smask & grid.spatial.mask
    if not smask.any():
        return 0.0
    ks = np.nonzero(w > 0)[0]
    vol = grid.spatial.cell_volume
    total = 0.0
    for k in ks:
        total += w[k] * float(values[k][smask].sum())
    return total * vol


def cylinder_average(grid, values, cyl, chi="time", normalize="full"):
    """Mean over the cylinder; "full" divides by the continuum |Q| so that
    clamped regions count as zeros, "clipped" divides by the quadrature
    measure of Q ∩ grid."""
    integral = cylinder_integral(grid, values, cyl, chi=chi)
    if normalize == "full":
        meas = cyl.measure(grid.spatial.dim)
    else:
        a, b = cyl.time_interval
        w = grid.time_weights(a, b)
        smask = grid.spatial.ball_mask(cyl.x, cyl.r)
        meas = float(w.sum()) * smask.sum() * grid.spatial.cell_volume
    if meas <= 0:
        return 0.0
    return integral / meas


def ball_average(domain, field_slice, center, radius, chi_mask=None, normalize="full"):
    """Spatial mean over a ball; continuum normalization by default."""
    smask = domain.ball_mask(center, radius)
    if chi_mask is not None:
        smask = smask & chi_mask
    total = float(field_slice[smask].sum()) * domain.cell_volume
    if normalize == "full":
        meas = ball_volume(domain.dim, radius)
    else:
        meas = smask.sum() * domain.cell_volume
    return total / meas if meas > 0 else 0.0


# ---------------------------------------------------------------------------
# operations


def restrict(f, cyl):
    """f * chi_{Q ∩ Omega_T}: zero outside the cylinder, unchanged inside."""
    grid = f.grid
    tmask, smask = cylinder_masks(grid, cyl)
    smask = smask & grid.spatial.mask
    if not (tmask.any() and smask.any()):
        raise EmptyIntersectionError("cylinder does not intersect the grid")
    out = np.zeros(grid.shape)
    out[tmask] = f.values[tmask] * smask
    return f.with_values(out)


# ---------------------------------------------------------------------------
# binary I/O


def write_grid(f, path):
    """Serialize a GridFunction in the fixed little-endian binary layout."""
    grid = f.grid
    dom = grid.spatial
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<B", dom.dim))
        for n in dom.counts:
            fh.write(struct.pack("<I", n))
        for h in dom.cell_size:
            fh.write(struct.pack("<d", h))
        fh.write(struct.pack("<I", grid.nt))
        fh.write(struct.pack("<d", grid.dt))
        fh.write(np.packbits(dom.mask.ravel(order="C")).tobytes())
        fh.write(f.values.astype("<f8").tobytes(order="C"))


def read_grid(path):
    """Inverse of write_grid; the time origin is not stored and reads as 0."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _MAGIC:
        raise BadMagicError(f"expected {_MAGIC!r} header, got {raw[:4]!r}")
    off = 4
    (version,) = struct.unpack_from("<I", raw, off)
    off += 4
    if version != _VERSION:
        raise VersionMismatchError(f"unsupported version {version}")
    (dim,) = struct.unpack_from("<B", raw, off)
    off += 1
    if dim not in (1, 2):
        raise DimsMismatchError(f"dim must be 1 or 2, got {dim}")
    counts = []
    for _ in range(dim):
        (n,) = struct.unpack_from("<I", raw, off)
        off += 4
        counts.append(n)
    spacing = []
    for _ in range(dim):
        (h,) = struct.unpack_from("<d", raw, off)
        off += 8
        spacing.append(h)
    (nt,) = struct.unpack_from("<I", raw, off)
    off += 4
    (dt,) = struct.unpack_from("<d", raw, off)
    off += 8
    ncells = int(np.prod(counts))
    nbytes_mask = (ncells + 7) // 8
    nbytes_values = nt * ncells * 8
    if len(raw) - off != nbytes_mask + nbytes_values:
        raise DimsMismatchError(
            f"payload holds {len(raw) - off} bytes, header implies {nbytes_mask + nbytes_values}"
        )
    mask_bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8, count=nbytes_mask, offset=off))
    mask = mask_bits[:ncells].astype(bool).reshape(counts)
    off += nbytes_mask
    values = np.frombuffer(raw, dtype="<f8", count=nt * ncells, offset=off)
    values = values.reshape((nt,) + tuple(counts)).astype(float)
    domain = SpatialDomain(dim, tuple(spacing), mask)
    grid = SpaceTimeGrid(domain, 0.0, dt, nt)
    return GridFunction(grid, values)


def export_csv(f, path):
    """One row per (t, x..., value), all lattice cells."""
    grid = f.grid
    dom = grid.spatial
    mesh = dom.center_mesh()
    coords = [m.ravel(order="C") for m in mesh]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"x{d + 1}" for d in range(dom.dim)] + ["value"])
        for k, t in enumerate(grid.times):
            vals = f.values[k].ravel(order="C")
            for i in range(vals.size):
                writer.writerow([repr(float(t))] + [repr(float(c[i])) for c in coords]
                                + [repr(float(vals[i]))])
