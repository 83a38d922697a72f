"""Forbidden regions of the complex plane and their repelling potentials.

Each shape exposes ``field(points) -> (V, F)`` where ``V`` is the scalar
potential (positive inside the forbidden set, zero outside) and ``F`` is the
force ``-grad V`` packed as a complex number ``F_r + 1j*F_i``.  Packing the
force as complex keeps the frequency-grid code vectorized; the public
single-point functions unpack it into a 2-vector.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidSector, NotConverged, OutOfBounds


@dataclass(frozen=True)
class PotentialSample:
    value: float
    force: np.ndarray

    @property
    def force_complex(self):
        return complex(self.force[0], self.force[1])


def _sample(v, f):
    f = complex(f)
    return PotentialSample(float(v), np.array([f.real, f.imag]))


@dataclass(frozen=True)
class DiskRegion:
    center: complex
    radius: float
    margin: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", complex(self.center))
        if not self.radius > 0:
            raise ValueError(f"disk radius must be > 0, got {self.radius}")
        if not self.margin >= 0:
            raise ValueError(f"disk margin must be >= 0, got {self.margin}")

    @property
    def effective_radius(self):
        return self.radius + self.margin

    def field(self, points):
        p = np.asarray(points, dtype=complex)
        r = self.effective_radius
        rel = p - self.center
        d = np.abs(rel)
        inside = d < r
        depth = np.where(inside, (r - d) / r, 0.0)
        v = depth * depth
        # unit outward direction; fixed fallback (1, 0) at the center
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.where(d > 0, rel / d, 1.0 + 0j)
        f = np.where(inside, (2.0 * (r - d) / (r * r)) * u, 0j)
        return v, f


@dataclass(frozen=True)
class HalfPlaneRegion:
    """Forbidden half-plane on the side ``outward_normal`` points to."""

    anchor: complex
    outward_normal: complex
    depth_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "anchor", complex(self.anchor))
        n = self.outward_normal
        if not isinstance(n, (complex, float, int)):
            n = complex(n[0], n[1])
        n = complex(n)
        if not math.isclose(abs(n), 1.0, rel_tol=0, abs_tol=1e-9):
            raise ValueError(f"outward_normal must be a unit vector, |n|={abs(n)}")
        object.__setattr__(self, "outward_normal", n)
        if not self.depth_scale > 0:
            raise ValueError("depth_scale must be > 0")

    def field(self, points):
        p = np.asarray(points, dtype=complex)
        n = self.outward_normal
        sigma = self.depth_scale
        s = ((p - self.anchor) * n.conjugate()).real
        pos = np.maximum(s, 0.0)
        v = (pos / sigma) ** 2
        f = -(2.0 * pos / sigma**2) * n
        return v, f + 0j


@dataclass(frozen=True)
class GridMaskRegion:
    """Rasterized forbidden set on a rectangle of the complex plane.

    ``forbidden`` and ``sources`` are boolean arrays of shape ``(ny, nx)``.
    Row 0 is the *bottom* row (smallest imaginary part), column 0 the left
    column; cell centers are the nodes of the potential field.
    """

    bounds: tuple
    forbidden: np.ndarray = field(repr=False)
    sources: np.ndarray = field(repr=False)

    def __post_init__(self):
        re_min, re_max, im_min, im_max = (float(b) for b in self.bounds)
        if not (re_max > re_min and im_max > im_min):
            raise ValueError(f"degenerate bounds {self.bounds}")
        object.__setattr__(self, "bounds", (re_min, re_max, im_min, im_max))
        fb = np.array(self.forbidden, dtype=bool)
        src = np.array(self.sources, dtype=bool)
        if fb.ndim != 2 or fb.shape != src.shape:
            raise ValueError("forbidden and sources must be 2-D arrays of equal shape")
        if not fb.any():
            raise ValueError("mask has no forbidden cells")
        if not src.any():
            raise ValueError("mask has no source cells")
        if np.any(src & ~fb):
            raise ValueError("every source cell must be forbidden")
        fb.setflags(write=False)
        src.setflags(write=False)
        object.__setattr__(self, "forbidden", fb)
        object.__setattr__(self, "sources", src)

    @classmethod
    def from_codes(cls, bounds, codes):
        """Build from an integer array of 0 (admissible), 1 (forbidden), 2 (source)."""
        codes = np.asarray(codes)
        if not np.isin(codes, (0, 1, 2)).all():
            raise ValueError("mask codes must be 0, 1 or 2")
        return cls(bounds, codes >= 1, codes == 2)

    @property
    def resolution(self):
        ny, nx = self.forbidden.shape
        return nx, ny

    @property
    def spacing(self):
        re_min, re_max, im_min, im_max = self.bounds
        nx, ny = self.resolution
        return (re_max - re_min) / nx, (im_max - im_min) / ny

    def node_coords(self):
        re_min, _, im_min, _ = self.bounds
        dx, dy = self.spacing
        nx, ny = self.resolution
        return re_min + (np.arange(nx) + 0.5) * dx, im_min + (np.arange(ny) + 0.5) * dy

    def solve(self, tolerance=1e-8, max_sweeps=50_000, relaxation=1.8):
        return solve_laplace(self, tolerance, max_sweeps, relaxation)

    def field(self, points):
        raise TypeError("GridMaskRegion must be solved first; use solve_laplace()")


def read_mask_file(path, bounds):
    """Parse a text mask: ``width height`` then ``height`` rows of 0/1/2.

    Rows are listed top (largest imaginary part) first, the way images are
    written; ``#`` starts a comment.
    """
    text = Path(path).read_text(encoding="utf-8")
    tokens = []
    for line in text.splitlines():
        tokens.extend(line.split("#", 1)[0].split())
    if len(tokens) < 2:
        raise ValueError(f"{path}: missing 'width height' header")
    try:
        nums = [int(t) for t in tokens]
    except ValueError as exc:
        raise ValueError(f"{path}: non-integer token ({exc})") from None
    width, height = nums[:2]
    cells = nums[2:]
    if width <= 0 or height <= 0 or len(cells) != width * height:
        raise ValueError(f"{path}: expected {width}x{height} cells, found {len(cells)}")
    codes = np.array(cells).reshape(height, width)[::-1]
    return GridMaskRegion.from_codes(bounds, codes)


def write_mask_file(path, mask):
    ny, nx = mask.forbidden.shape
    codes = mask.forbidden.astype(int) + mask.sources.astype(int)
    lines = [f"{nx} {ny}"] + [" ".join(str(c) for c in row) for row in codes[::-1]]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class LaplaceField:
    """A solved grid potential; usable directly as a region shape."""

    mask: GridMaskRegion
    values: np.ndarray = field(repr=False)
    residual: float = 0.0
    sweeps: int = 0

    def __post_init__(self):
        padded = np.pad(np.asarray(self.values, dtype=float), 1)
        padded.setflags(write=False)
        object.__setattr__(self, "_padded", padded)

    def field(self, points):
        p = np.asarray(points, dtype=complex)
        re_min, re_max, im_min, im_max = self.mask.bounds
        x_re, x_im = p.real, p.imag
        outside = (x_re < re_min) | (x_re > re_max) | (x_im < im_min) | (x_im > im_max)
        if np.any(outside):
            bad = np.atleast_1d(p)[np.atleast_1d(outside)][0]
            raise OutOfBounds(f"point {complex(bad)} outside mask bounds {self.mask.bounds}")
        dx, dy = self.mask.spacing
        nx, ny = self.mask.resolution
        # node index space of the zero-padded array: node k sits at index k+1
        gx = (x_re - re_min) / dx - 0.5 + 1.0
        gy = (x_im - im_min) / dy - 0.5 + 1.0
        ix = np.clip(np.floor(gx).astype(int), 0, nx)
        iy = np.clip(np.floor(gy).astype(int), 0, ny)
        fx = gx - ix
        fy = gy - iy
        V = self._padded
        v00 = V[iy, ix]
        v10 = V[iy, ix + 1]
        v01 = V[iy + 1, ix]
        v11 = V[iy + 1, ix + 1]
        v = ((1 - fx) * (1 - fy) * v00 + fx * (1 - fy) * v10
             + (1 - fx) * fy * v01 + fx * fy * v11)
        dvdx = ((1 - fy) * (v10 - v00) + fy * (v11 - v01)) / dx
        dvdy = ((1 - fx) * (v01 - v00) + fx * (v11 - v10)) / dy
        f = np.where(v > 0, -(dvdx + 1j * dvdy), 0j)
        return v, f


def _laplace_weights(mask):
    dx, dy = mask.spacing
    ax, ay = 1.0 / dx**2, 1.0 / dy**2
    return 2.0 * ax / (ax + ay), 2.0 * ay / (ax + ay)


def laplace_residual(mask, values):
    """Max |5-point Laplacian| over forbidden non-source cells.

    The stencil is normalized so that on square cells it reads
    ``V_E + V_W + V_N + V_S - 4 V``.
    """
    wx, wy = _laplace_weights(mask)
    P = np.pad(values, 1)
    lap = (wx * (P[1:-1, 2:] + P[1:-1, :-2]) + wy * (P[2:, 1:-1] + P[:-2, 1:-1])
           - 4.0 * P[1:-1, 1:-1])
    unknown = mask.forbidden & ~mask.sources
    return float(np.max(np.abs(lap[unknown]))) if unknown.any() else 0.0


def solve_laplace(mask, tolerance=1e-8, max_sweeps=50_000, relaxation=1.8):
    """Red-black SOR for the discrete Laplace problem on the forbidden cells.

    Sources are pinned at +1, admissible cells (and everything beyond the
    array edge) at 0.
    """
    if not tolerance > 0:
        raise ValueError("tolerance must be > 0")
    if not 1.0 < relaxation < 2.0:
        raise ValueError("relaxation factor must lie in (1, 2)")
    ny, nx = mask.forbidden.shape
    wx, wy = _laplace_weights(mask)
    unknown = mask.forbidden & ~mask.sources
    ii, jj = np.indices((ny, nx))
    colors = [unknown & ((ii + jj) % 2 == c) for c in (0, 1)]

    P = np.zeros((ny + 2, nx + 2))
    C = P[1:-1, 1:-1]  # view into the interior
    C[mask.sources] = 1.0

    residual = laplace_residual(mask, C)
    sweeps = 0
    while residual > tolerance:
        if sweeps >= max_sweeps:
            raise NotConverged(max_sweeps, residual)
        for sel in colors:
            gs = (wx * (P[1:-1, 2:] + P[1:-1, :-2]) + wy * (P[2:, 1:-1] + P[:-2, 1:-1])) / 4.0
            C[sel] += relaxation * (gs[sel] - C[sel])
        sweeps += 1
        residual = laplace_residual(mask, C)
    return LaplaceField(mask, C.copy(), residual, sweeps)


def grid_potential(field_, point):
    v, f = field_.field(np.array([point]))
    return _sample(v[0], f[0])


def disk_potential(disk, point):
    v, f = disk.field(np.array([point]))
    return _sample(v[0], f[0])


def halfplane_potential(hp, point):
    v, f = hp.field(np.array([point]))
    return _sample(v[0], f[0])


@dataclass(frozen=True)
class RegionSpec:
    """Union of forbidden shapes; potentials and forces add."""

    shapes: tuple

    def __post_init__(self):
        shapes = tuple(self.shapes)
        if not shapes:
            raise ValueError("RegionSpec needs at least one shape")
        for s in shapes:
            if isinstance(s, GridMaskRegion):
                raise TypeError("GridMaskRegion must be solved first; pass its LaplaceField")
            if not hasattr(s, "field"):
                raise TypeError(f"unsupported region shape {type(s).__name__}")
        object.__setattr__(self, "shapes", shapes)

    def field(self, points):
        p = np.asarray(points, dtype=complex)
        v = np.zeros(p.shape)
        f = np.zeros(p.shape, dtype=complex)
        for shape in self.shapes:
            sv, sf = shape.field(p)
            v = v + sv
            f = f + sf
        return v, f

    def disks(self):
        return [s for s in self.shapes if isinstance(s, DiskRegion)]


def eval_region(spec, point):
    v, f = spec.field(np.array([point]))
    return _sample(v[0], f[0])


def disk_from_sector(k1, k2, margin=0.0):
    """Circle-criterion disk for a nonlinearity in the sector [k1, k2].

    The disk crosses the real axis at -1/k1 and -1/k2.
    """
    if not (k1 > 0 and k2 > k1):
        raise InvalidSector(f"need 0 < k1 < k2, got k1={k1}, k2={k2}")
    a, b = -1.0 / k1, -1.0 / k2
    return DiskRegion(complex((a + b) / 2, 0.0), (b - a) / 2, margin)
