"""Planar geometry kernels: occupancy rasterization, IoU and convex hulls."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DegenerateHull, InvalidArgument

log = logging.getLogger(__name__)

DEFAULT_CELL = 0.01
WORKSPACE_HALF_EXTENT = 0.5
HULL_TOL = 1e-9
COLLINEAR_SIN = 1e-12  # turns flatter than this count as straight


@dataclass(frozen=True)
class Bounds:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    @classmethod
    def around(cls, center, half_extent=WORKSPACE_HALF_EXTENT):
        cx, cy = float(center[0]), float(center[1])
        return cls(cx - half_extent, cy - half_extent, cx + half_extent, cy + half_extent)


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    origin: tuple
    cell: float
    bits: np.ndarray  # (rows along y, cols along x)
    n_clamped: int = 0

    @property
    def shape(self):
        return self.bits.shape

    @property
    def count(self):
        return int(np.count_nonzero(self.bits))

    @property
    def area(self):
        return self.count * self.cell * self.cell

    def compatible(self, other):
        return (self.origin == other.origin and self.cell == other.cell
                and self.bits.shape == other.bits.shape)


def grid_shape(bounds, cell):
    nx = int(np.ceil((bounds.xmax - bounds.xmin) / cell - 1e-9))
    ny = int(np.ceil((bounds.ymax - bounds.ymin) / cell - 1e-9))
    return max(ny, 1), max(nx, 1)


def project_rasterize(points, cell, bounds):
    """Drop z and mark the cell containing each point's xy.

    Points outside ``bounds`` land in the nearest boundary cell; how many were
    clamped is recorded on the grid and logged.
    """
    if not cell > 0.0:
        raise InvalidArgument(f"cell must be > 0, got {cell}")
    pts = np.asarray(points, dtype=float)
    ny, nx = grid_shape(bounds, cell)
    bits = np.zeros((ny, nx), dtype=bool)
    if pts.size == 0:
        return OccupancyGrid((bounds.xmin, bounds.ymin), cell, bits)
    ix = np.floor((pts[:, 0] - bounds.xmin) / cell).astype(np.int64)
    iy = np.floor((pts[:, 1] - bounds.ymin) / cell).astype(np.int64)
    outside = (ix < 0) | (ix >= nx) | (iy < 0) | (iy >= ny)
    n_out = int(np.count_nonzero(outside))
    if n_out:
        log.debug("clamped %d points outside the workspace bounds", n_out)
        np.clip(ix, 0, nx - 1, out=ix)
        np.clip(iy, 0, ny - 1, out=iy)
    bits[iy, ix] = True
    return OccupancyGrid((bounds.xmin, bounds.ymin), cell, bits, n_out)


def iou(a, b):
    """Intersection over union of two comparable grids; 0 when both are empty."""
    if not a.compatible(b):
        raise InvalidArgument("occupancy grids differ in origin, cell or shape")
    union = np.count_nonzero(a.bits | b.bits)
    if union == 0:
        log.debug("iou of two empty grids defined as 0")
        return 0.0
    return np.count_nonzero(a.bits & b.bits) / union


@dataclass(frozen=True, eq=False)
class ConvexHull2D:
    vertices: np.ndarray  # (k, 2), counter-clockwise

    def __len__(self):
        return len(self.vertices)

    @property
    def area(self):
        return polygon_area(self.vertices)


def _cross(o, a, b):
    """Exact orientation of o -> a -> b (floats converted to fractions)."""
    o, a, b = ([Fraction(c) for c in p] for p in (o, a, b))
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _nearly_straight(o, a, b):
    """``a`` lies between ``o`` and ``b`` up to a relative collinearity tolerance."""
    u, w = np.subtract(a, o), np.subtract(b, o)
    cross = u[0] * w[1] - u[1] * w[0]
    if abs(cross) > COLLINEAR_SIN * np.linalg.norm(u) * np.linalg.norm(w):
        return False
    return u @ w >= 0.0 and np.subtract(a, b) @ np.subtract(o, b) >= 0.0


def convex_hull_2d(points):
    """Andrew's monotone chain; collinear boundary points are dropped.

    Orientation tests are exact.  Afterwards, vertices that are collinear with
    their neighbours up to a relative tolerance are dropped as well, so lattice
    points on a rotated edge, which rounding leaves a hair off the line, do not
    become vertices.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] < 2:
        raise InvalidArgument("expected an (n, 2) array of points")
    uniq = sorted(set(map(tuple, pts[:, :2].tolist())))
    if len(uniq) < 3:
        raise DegenerateHull("need at least 3 distinct points")

    def chain(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and _cross(out[-2], out[-1], p) <= 0:
                out.pop()
            out.append(p)
        return out[:-1]

    hull = chain(uniq) + chain(reversed(uniq))
    k = 0
    while len(hull) >= 3 and k < len(hull):
        if _nearly_straight(hull[k - 1], hull[k], hull[(k + 1) % len(hull)]):
            del hull[k]
            k = 0
        else:
            k += 1
    if len(hull) < 3:
        raise DegenerateHull("points are collinear")
    v = np.array(hull)
    extent = np.ptp(v, axis=0)
    if polygon_area(v) <= COLLINEAR_SIN * float(extent @ extent):
        raise DegenerateHull("points are nearly collinear")
    return ConvexHull2D(v)


def polygon_area(vertices):
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def point_in_hull(hull, p, tol=HULL_TOL):
    """True when ``p`` is inside the hull or within ``tol`` meters of its boundary."""
    v = hull.vertices
    edges = np.roll(v, -1, axis=0) - v
    rel = np.asarray(p, dtype=float)[:2] - v
    cross = edges[:, 0] * rel[:, 1] - edges[:, 1] * rel[:, 0]
    # signed distance to each edge line, positive on the inner (left) side
    dist = cross / np.hypot(edges[:, 0], edges[:, 1])
    return bool(np.all(dist >= -tol))
