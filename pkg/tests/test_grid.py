import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parlab.errors import (
    BadMagicError,
    DimsMismatchError,
    EmptyIntersectionError,
    InvalidParamsError,
    VersionMismatchError,
)
from parlab.grid import (
    GridFunction,
    ParabolicCylinder,
    cylinder_average,
    export_csv,
    make_domain,
    make_grid,
    read_grid,
    restrict,
    write_grid,
)
from parlab.whitney import ParabolicMetric


def test_interval_counts():
    dom = make_domain("interval", length=1.0, cells=64)
    assert dom.dim == 1
    assert dom.mask.sum() == 64
    assert dom.cell_size == (1.0 / 64,)


def test_box_counts():
    dom = make_domain("box", lengths=(1.0, 1.0), cells=(32, 32))
    assert dom.mask.sum() == 1024


def test_l_shape_removes_quadrant():
    dom = make_domain("l_shape", lengths=(1.0, 1.0), cells=(16, 16))
    assert dom.mask.sum() == 256 - 64


def test_annulus_area_matches_quadrature_oracle():
    r_in, r_out = 0.25, 0.5
    dom = make_domain("annulus", r_in=r_in, r_out=r_out, cells=(64, 64))
    exact_cells = np.pi * (r_out**2 - r_in**2) / dom.cell_volume
    # oracle: cells partially covered by either circle, found by 4x subsampling
    sub = make_domain("annulus", r_in=r_in, r_out=r_out, cells=(256, 256))
    coarse_of_fine = sub.mask.reshape(64, 4, 64, 4).sum(axis=(1, 3))
    straddling = int(((coarse_of_fine > 0) & (coarse_of_fine < 16)).sum())
    assert abs(dom.mask.sum() - exact_cells) <= straddling
    # refinement shrinks the relative gap
    gap64 = abs(dom.mask.sum() * dom.cell_volume - np.pi * (r_out**2 - r_in**2))
    gap256 = abs(sub.mask.sum() * sub.cell_volume - np.pi * (r_out**2 - r_in**2))
    assert gap256 < gap64


def test_invalid_params_rejected():
    with pytest.raises(InvalidParamsError):
        make_domain("interval", length=-1.0, cells=64)
    with pytest.raises(InvalidParamsError):
        make_domain("annulus", r_in=0.5, r_out=0.25)
    with pytest.raises(InvalidParamsError):
        make_domain("interval", length=1.0, cells=2)  # degenerate mask


def test_boundary_cells_have_inside_and_outside_neighbor():
    dom = make_domain("l_shape", cells=(16, 16))
    for idx in dom.boundary_cells:
        assert dom.mask[idx]
        i, j = idx
        neighbors = [(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)]
        outside = inside = False
        for a, b in neighbors:
            if 0 <= a < 16 and 0 <= b < 16:
                if dom.mask[a, b]:
                    inside = True
                else:
                    outside = True
            else:
                outside = True
        assert inside and outside


def test_grid_time_invariant():
    dom = make_domain("interval", cells=8)
    g = make_grid(dom, t0=0.0, T=2.0, nt=21)
    assert abs(g.T - 2.0) < 1e-12
    assert abs((g.T - g.t0) - g.dt * (g.nt - 1)) < 1e-12


def test_gridfunction_zero_outside_mask(rng):
    dom = make_domain("annulus", cells=(32, 32))
    g = make_grid(dom, nt=5)
    f = GridFunction(g, rng.standard_normal(g.shape))
    assert np.all(f.values[:, ~dom.mask] == 0.0)


def test_cylinder_membership_matches_metric():
    lam, p = 1.7, 2.6
    metric = ParabolicMetric(lam, p)
    gamma = lam ** (2.0 - p)
    rng = np.random.default_rng(7)
    for _ in range(200):
        center = ((rng.uniform(0, 1), rng.uniform(0, 1)), rng.uniform(0, 1))
        r = rng.uniform(0.05, 0.4) * (1 + 1e-7)  # generic radius, off-lattice
        cyl = ParabolicCylinder(center, r, gamma)
        x = (rng.uniform(-0.2, 1.2), rng.uniform(-0.2, 1.2))
        t = rng.uniform(-0.2, 1.2)
        d = metric.distance((x, t), center)
        assert cyl.contains(x, t) == (d < r)


def test_cylinder_time_extent_exact():
    cyl = ParabolicCylinder(((0.5,), 0.3), 0.25, 2.0)
    a, b = cyl.time_interval
    assert abs(a - (0.3 - 2.0 * 0.25**2)) < 1e-15
    assert abs(b - (0.3 + 2.0 * 0.25**2)) < 1e-15


def test_restrict_full_cover_identity(interval_grid, rng):
    f = GridFunction(interval_grid, rng.standard_normal(interval_grid.shape))
    big = ParabolicCylinder(((0.5,), 0.5), 10.0, 1.0)
    g = restrict(f, big)
    assert np.array_equal(g.values, f.values)


def test_restrict_idempotent(interval_grid, rng):
    f = GridFunction(interval_grid, rng.standard_normal(interval_grid.shape))
    q = ParabolicCylinder(((0.4,), 0.5), 0.2, 1.0)
    once = restrict(f, q)
    twice = restrict(once, q)
    assert np.array_equal(once.values, twice.values)


def test_restrict_preserves_cylinder_mean(interval_grid, rng):
    f = GridFunction(interval_grid, rng.standard_normal(interval_grid.shape))
    q = ParabolicCylinder(((0.4,), 0.5), 0.2, 1.0)
    m1 = cylinder_average(interval_grid, restrict(f, q).values, q, chi="omega_t")
    m2 = cylinder_average(interval_grid, f.values, q, chi="omega_t")
    assert abs(m1 - m2) < 1e-13


def test_restrict_empty_intersection(interval_grid):
    f = GridFunction.zeros(interval_grid)
    q = ParabolicCylinder(((0.5,), 99.0), 0.1, 1.0)
    with pytest.raises(EmptyIntersectionError):
        restrict(f, q)


def test_roundtrip_identity(tmp_path, interval_grid, rng):
    f = GridFunction(interval_grid, rng.standard_normal(interval_grid.shape))
    p1 = tmp_path / "a.pgrd"
    p2 = tmp_path / "b.pgrd"
    write_grid(f, p1)
    g = read_grid(p1)
    write_grid(g, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert np.array_equal(f.values, g.values)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), nt=st.integers(2, 6), cells=st.integers(3, 17))
def test_roundtrip_identity_property(tmp_path_factory, seed, nt, cells):
    rng = np.random.default_rng(seed)
    dom = make_domain("interval", length=1.0, cells=cells)
    grid = make_grid(dom, t0=0.0, T=1.0, nt=nt)
    f = GridFunction(grid, rng.standard_normal(grid.shape))
    path = tmp_path_factory.mktemp("pg") / "f.pgrd"
    write_grid(f, path)
    g = read_grid(path)
    assert np.array_equal(f.values, g.values)
    assert g.grid.spatial.counts == (cells,)


def test_bad_magic(tmp_path):
    p = tmp_path / "bad.pgrd"
    p.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(BadMagicError):
        read_grid(p)


def test_version_mismatch(tmp_path, interval_grid):
    f = GridFunction.zeros(interval_grid)
    p = tmp_path / "v.pgrd"
    write_grid(f, p)
    raw = bytearray(p.read_bytes())
    raw[4] = 99
    p.write_bytes(bytes(raw))
    with pytest.raises(VersionMismatchError):
        read_grid(p)


def test_dims_mismatch(tmp_path, interval_grid):
    f = GridFunction.zeros(interval_grid)
    p = tmp_path / "d.pgrd"
    write_grid(f, p)
    raw = p.read_bytes()
    p.write_bytes(raw[:-16])  # truncate payload
    with pytest.raises(DimsMismatchError):
        read_grid(p)


def test_csv_export(tmp_path, interval_grid):
    f = GridFunction.from_callable(interval_grid, lambda x, t: x + t)
    p = tmp_path / "f.csv"
    export_csv(f, p)
    lines = p.read_text().strip().splitlines()
    assert lines[0] == "t,x1,value"
    assert len(lines) == 1 + interval_grid.nt * 64
