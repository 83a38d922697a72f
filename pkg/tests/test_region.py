import numpy as np
import pytest
from hypothesis import given, strategies as st

from fdsynth.errors import InvalidSector, NotConverged, OutOfBounds
from fdsynth.region import (DiskRegion, GridMaskRegion, HalfPlaneRegion, RegionSpec,
                            disk_from_sector, disk_potential, eval_region, grid_potential,
                            halfplane_potential, laplace_residual, read_mask_file,
                            solve_laplace, write_mask_file)

coord = st.floats(-3, 3)


def concentric_mask(n=21, radius=8, bounds=None):
    yy, xx = np.mgrid[0:n, 0:n] - n // 2
    codes = np.where(np.maximum(abs(xx), abs(yy)) <= radius, 1, 0)
    codes[n // 2, n // 2] = 2
    return GridMaskRegion.from_codes(bounds or (0, n, 0, n), codes)


def dense_oracle(mask):
    """Direct sparse-free solve of the same 5-point system."""
    ny, nx = mask.forbidden.shape
    dx, dy = mask.spacing
    ax, ay = 1 / dx**2, 1 / dy**2
    unknown = mask.forbidden & ~mask.sources
    idx = -np.ones((ny, nx), dtype=int)
    cells = np.argwhere(unknown)
    idx[unknown] = np.arange(len(cells))
    A = np.zeros((len(cells), len(cells)))
    b = np.zeros(len(cells))
    for k, (i, j) in enumerate(cells):
        A[k, k] = -2 * (ax + ay)
        for di, dj, a in ((0, 1, ax), (0, -1, ax), (1, 0, ay), (-1, 0, ay)):
            ii, jj = i + di, j + dj
            if not (0 <= ii < ny and 0 <= jj < nx):
                continue
            if mask.sources[ii, jj]:
                b[k] -= a
            elif unknown[ii, jj]:
                A[k, idx[ii, jj]] = a
    V = np.zeros((ny, nx))
    V[mask.sources] = 1.0
    V[unknown] = np.linalg.solve(A, b)
    return V


@pytest.fixture(scope="module")
def concentric():
    m = concentric_mask()
    return m, solve_laplace(m)


# -- disk ---------------------------------------------------------------------------

def test_disk_examples():
    disk = DiskRegion(-1, 0.75)
    s = disk_potential(disk, -1 + 0.75)
    assert s.value == 0 and np.all(s.force == 0)
    s = disk_potential(disk, -1)
    assert s.value == 1
    np.testing.assert_allclose(s.force, [2 / 0.75, 0])
    s = disk_potential(disk, -1 + 0.375j)
    assert s.value == pytest.approx(0.25)
    assert np.linalg.norm(s.force) == pytest.approx(1 / 0.75)
    assert s.force[1] > 0


def test_disk_invariants():
    with pytest.raises(ValueError):
        DiskRegion(0, 0)
    with pytest.raises(ValueError):
        DiskRegion(0, 1, margin=-0.1)


def test_margin_inflates_radius():
    a = disk_potential(DiskRegion(0, 1.0, margin=0.5), 1.2)
    b = disk_potential(DiskRegion(0, 1.5), 1.2)
    assert a.value == b.value and np.array_equal(a.force, b.force)


def test_disk_continuity_at_boundary():
    r = 0.75
    s = disk_potential(DiskRegion(0, r), r * (1 - 1e-6))
    assert s.value < 1e-11
    assert np.linalg.norm(s.force) < 1e-5


@given(st.floats(0, 2), st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi))
def test_disk_rotational_symmetry(d, a1, a2):
    disk = DiskRegion(0.3 - 1j, 1.0)
    s1 = disk_potential(disk, disk.center + d * np.exp(1j * a1))
    s2 = disk_potential(disk, disk.center + d * np.exp(1j * a2))
    assert s1.value == pytest.approx(s2.value, abs=1e-12)


# -- half-plane ------------------------------------------------------------------------

def test_halfplane_examples():
    hp = HalfPlaneRegion(0, (1, 0), depth_scale=2.0)
    s = halfplane_potential(hp, -1 + 5j)
    assert s.value == 0 and np.all(s.force == 0)
    s = halfplane_potential(hp, 3j)
    assert s.value == 0 and np.all(s.force == 0)
    s = halfplane_potential(hp, 1.0)
    assert s.value == pytest.approx(0.25)
    np.testing.assert_allclose(s.force, [-0.5, 0])


def test_halfplane_requires_unit_normal():
    with pytest.raises(ValueError):
        HalfPlaneRegion(0, 2 + 0j)


# -- forces vs finite differences ------------------------------------------------------

def _fd_force(shape, p, h=1e-5):
    v = lambda z: shape.field(np.array([z]))[0][0]
    return -complex((v(p + h) - v(p - h)) / (2 * h), (v(p + 1j * h) - v(p - 1j * h)) / (2 * h))


@given(coord, coord)
def test_disk_force_is_gradient(x, y):
    disk = DiskRegion(-1 + 0.5j, 1.5, margin=0.2)
    p = complex(x, y)
    if abs(p - disk.center) < 1e-3:
        return
    f = disk.field(np.array([p]))[1][0]
    assert abs(f - _fd_force(disk, p)) < 1e-3


@given(coord, coord, st.floats(0, 2 * np.pi))
def test_halfplane_force_is_gradient(x, y, angle):
    hp = HalfPlaneRegion(0.5 - 0.2j, np.exp(1j * angle), 0.7)
    p = complex(x, y)
    f = hp.field(np.array([p]))[1][0]
    assert abs(f - _fd_force(hp, p)) < 1e-3


@given(st.floats(0.5, 20.5), st.floats(0.5, 20.5))
def test_grid_force_is_gradient(concentric, x, y):
    _, lf = concentric
    # stay off the lines joining nodes, where the interpolant has kinks
    if min(abs(x - 0.5 - round(x - 0.5)), abs(y - 0.5 - round(y - 0.5))) < 1e-3:
        return
    p = complex(x, y)
    v, f = lf.field(np.array([p]))
    if v[0] == 0:
        assert f[0] == 0
        return
    assert abs(f[0] - _fd_force(lf, p)) < 1e-3


def test_region_spec_force_is_gradient_of_sum():
    spec = RegionSpec([DiskRegion(-1, 0.75), DiskRegion(-0.6, 0.5),
                       HalfPlaneRegion(0, -1 + 0j, 1.0)])
    rng = np.random.default_rng(0)
    for p in rng.uniform(-2, 1, 40) + 1j * rng.uniform(-1, 1, 40):
        if min(abs(p + 1), abs(p + 0.6)) < 1e-3:
            continue
        assert abs(spec.field(np.array([p]))[1][0] - _fd_force(spec, p)) < 1e-3


# -- union ---------------------------------------------------------------------------

def test_union_examples():
    a, b = DiskRegion(-1, 0.75), DiskRegion(-0.6, 0.5)
    spec = RegionSpec([a, b])
    s = eval_region(spec, 5 + 5j)
    assert s.value == 0 and np.all(s.force == 0)
    p = -0.8 + 0.1j
    s = eval_region(spec, p)
    assert s.value == pytest.approx(disk_potential(a, p).value + disk_potential(b, p).value)
    single = eval_region(RegionSpec([a]), p)
    assert single.value == disk_potential(a, p).value
    np.testing.assert_array_equal(single.force, disk_potential(a, p).force)


def test_region_spec_validation(concentric):
    with pytest.raises(ValueError):
        RegionSpec([])
    mask, lf = concentric
    with pytest.raises(TypeError):
        RegionSpec([mask])
    RegionSpec([lf])


@given(coord, coord)
def test_potential_nonnegative_and_zero_outside(x, y):
    spec = RegionSpec([DiskRegion(-1, 0.75), HalfPlaneRegion(1j, 1j, 1.0)])
    p = complex(x, y)
    s = eval_region(spec, p)
    assert s.value >= 0
    outside = abs(p + 1) >= 0.75 and y <= 1
    if outside:
        assert s.value == 0 and np.all(s.force == 0)
    if s.value == 0:
        assert np.all(s.force == 0)


# -- sector disk ---------------------------------------------------------------------

def test_disk_from_sector():
    d = disk_from_sector(0.5, 1.0)
    assert d.center == -1.5 and d.radius == 0.5
    d = disk_from_sector(1.0, 1e6)
    assert d.center.real == pytest.approx(-0.5, abs=1e-5)
    assert d.radius == pytest.approx(0.5, abs=1e-5)
    assert disk_from_sector(0.5, 1.0, margin=0.1).effective_radius == pytest.approx(0.6)
    for k1, k2 in ((1, 1), (2, 1), (0, 1), (-1, 1)):
        with pytest.raises(InvalidSector):
            disk_from_sector(k1, k2)


# -- grid masks -------------------------------------------------------------------------

def test_mask_invariants():
    with pytest.raises(ValueError):
        GridMaskRegion.from_codes((0, 1, 0, 1), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        GridMaskRegion((0, 1, 0, 1), np.ones((3, 3), bool), np.zeros((3, 3), bool))
    with pytest.raises(ValueError):
        src = np.zeros((3, 3), bool)
        src[0, 0] = True
        fb = np.zeros((3, 3), bool)
        fb[1, 1] = True
        GridMaskRegion((0, 1, 0, 1), fb, src)
    with pytest.raises(ValueError):
        GridMaskRegion.from_codes((1, 0, 0, 1), [[2]])


def test_laplace_matches_dense_oracle(concentric):
    mask, lf = concentric
    assert lf.residual <= 1e-8
    assert np.max(np.abs(lf.values - dense_oracle(mask))) <= 1e-6


def test_laplace_oracle_rectangular_cells():
    n = 21
    mask = concentric_mask(n, 7, bounds=(-2, 0, -0.5, 0.5))
    lf = solve_laplace(mask)
    assert np.max(np.abs(lf.values - dense_oracle(mask))) <= 1e-6
    assert laplace_residual(mask, lf.values) <= 1e-8


def test_laplace_pins_and_maximum_principle(concentric):
    mask, lf = concentric
    V = lf.values
    assert np.all(V[mask.sources] == 1.0)
    assert np.all(V[~mask.forbidden] == 0.0)
    assert V.min() >= 0 and V.max() <= 1


def test_concentric_field_radially_monotone(concentric):
    _, lf = concentric
    V = lf.values
    c = 10
    for ray in (V[c, c:], V[c, c::-1], V[c:, c], V[c::-1, c]):
        assert np.all(np.diff(ray) <= 1e-12)


def test_grid_potential_examples(concentric):
    mask, lf = concentric
    assert grid_potential(lf, 0.6 + 0.6j).value == 0
    assert np.all(grid_potential(lf, 0.6 + 0.6j).force == 0)
    assert grid_potential(lf, 10.5 + 10.5j).value == pytest.approx(1.0)
    xs, ys = mask.node_coords()
    for i, j in ((3, 4), (9, 12), (15, 6)):
        assert grid_potential(lf, complex(xs[j], ys[i])).value == pytest.approx(lf.values[i, j])
    with pytest.raises(OutOfBounds):
        grid_potential(lf, 25 + 1j)
    with pytest.raises(TypeError):
        mask.field(np.array([1 + 1j]))


def test_not_converged():
    with pytest.raises(NotConverged) as exc:
        solve_laplace(concentric_mask(), max_sweeps=3)
    assert exc.value.max_sweeps == 3


def test_mask_file_roundtrip(tmp_path):
    mask = concentric_mask(9, 3)
    path = tmp_path / "m.txt"
    write_mask_file(path, mask)
    back = read_mask_file(path, mask.bounds)
    np.testing.assert_array_equal(back.forbidden, mask.forbidden)
    np.testing.assert_array_equal(back.sources, mask.sources)


def test_mask_file_orientation_and_comments(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("# top row first\n3 2\n2 1 0\n0 0 0  # bottom\n")
    mask = read_mask_file(path, (0, 3, 0, 2))
    assert mask.sources[1, 0] and mask.forbidden[1, 1] and not mask.forbidden[0].any()


def test_mask_file_errors(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("3 3\n0 1\n")
    with pytest.raises(ValueError):
        read_mask_file(path, (0, 1, 0, 1))
    path.write_text("2 1\n0 0\n")
    with pytest.raises(ValueError):
        read_mask_file(path, (0, 1, 0, 1))
