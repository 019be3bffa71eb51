"""Simulator-side perception: labeled point clouds and the frozen bottom reference.

The observation pipeline is ``extract_point_cloud`` -> ``voxel_downsample``.
With ``subdivisions > 1`` the cloud is sampled across the mesh surface by
bilinear interpolation inside each quad, which gives a cloud dense enough for
1 cm occupancy cells to form contiguous areas.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .cloth_sim import BOTTOM, UPPER
from .errors import InvalidArgument, InvalidState
from .geometry import DEFAULT_CELL, Bounds, iou, project_rasterize

DEFAULT_VOXEL = 0.008
DEFAULT_SUBDIVISIONS = 3


@dataclass(frozen=True, eq=False)
class LabeledPointCloud:
    points: np.ndarray  # (n, 3)
    labels: np.ndarray  # (n,) uint8

    def __post_init__(self):
        if len(self.points) != len(self.labels):
            raise InvalidArgument("points and labels differ in length")

    def __len__(self):
        return len(self.points)

    @property
    def upper(self):
        return self.points[self.labels == UPPER]

    @property
    def bottom(self):
        return self.points[self.labels == BOTTOM]


@lru_cache(maxsize=16)
def _surface_weights(n, subdivisions):
    """Bilinear weights (m, n*n) and labels of the surface samples.

    Samples sit on a regular parametric lattice with ``subdivisions`` intervals
    per mesh edge, so particle positions are reproduced exactly at lattice
    nodes.  A sample is Upper when its parametric row lies on or above the
    midline, matching the particle labels.
    """
    m = subdivisions * (n - 1) + 1
    s = np.arange(m) / subdivisions  # parametric coordinate in particle units
    lo = np.minimum(np.floor(s).astype(int), n - 2)
    frac = s - lo
    weights = np.zeros((m, m, n, n))
    for a in range(m):
        for b in range(m):
            r, c, u, w = lo[a], lo[b], frac[a], frac[b]
            weights[a, b, r, c] += (1 - u) * (1 - w)
            weights[a, b, r + 1, c] += u * (1 - w)
            weights[a, b, r, c + 1] += (1 - u) * w
            weights[a, b, r + 1, c + 1] += u * w
    weights = weights.reshape(m * m, n * n)
    rows = np.repeat(s, m)
    labels = np.where(2 * rows >= n - 1, UPPER, BOTTOM).astype(np.uint8)
    weights.flags.writeable = False
    labels.flags.writeable = False
    return weights, labels


def extract_point_cloud(state, subdivisions=1):
    """One labeled point per particle, or a denser surface sampling."""
    if subdivisions < 1:
        raise InvalidArgument("subdivisions must be >= 1")
    if subdivisions == 1:
        return LabeledPointCloud(state.positions.copy(), state.half_label.copy())
    weights, labels = _surface_weights(state.resolution, subdivisions)
    return LabeledPointCloud(weights @ state.positions, labels.copy())


def voxel_downsample(pc, voxel):
    """Replace the points of each (voxel cell, label) group by their centroid.

    Output is ordered by label, then by cell index, so it is deterministic.
    """
    if not voxel > 0.0:
        raise InvalidArgument(f"voxel must be > 0, got {voxel}")
    if len(pc) == 0:
        return LabeledPointCloud(pc.points.copy(), pc.labels.copy())
    cells = np.floor(pc.points / voxel).astype(np.int64)
    cells -= cells.min(axis=0)
    span = cells.max(axis=0) + 1
    # label is the most significant digit, so ordering is (label, ix, iy, iz)
    keys = ((pc.labels.astype(np.int64) * span[0] + cells[:, 0]) * span[1]
            + cells[:, 1]) * span[2] + cells[:, 2]
    uniq, inverse = np.unique(keys, return_inverse=True)
    counts = np.bincount(inverse, minlength=len(uniq)).astype(float)
    centroids = np.empty((len(uniq), 3))
    for d in range(3):
        centroids[:, d] = np.bincount(inverse, weights=pc.points[:, d], minlength=len(uniq)) / counts
    labels = (uniq // (span[0] * span[1] * span[2])).astype(np.uint8)
    return LabeledPointCloud(centroids, labels)


@dataclass(frozen=True, eq=False)
class BottomReference:
    """Bottom half observed at t=0; read-only for the rest of the episode."""

    points: np.ndarray
    bounds: Bounds
    cell: float
    grid: object

    def __len__(self):
        return len(self.points)


def freeze_bottom_reference(pc, bounds, cell=DEFAULT_CELL):
    bottom = pc.bottom.copy()
    if len(bottom) == 0:
        raise InvalidState("bottom half of the reference cloud is empty")
    bottom.flags.writeable = False
    return BottomReference(bottom, bounds, cell, project_rasterize(bottom, cell, bounds))


@dataclass
class Perception:
    """Per-episode observation pipeline.

    Holds the episode's bottom reference, which may be frozen exactly once.
    """

    subdivisions: int = DEFAULT_SUBDIVISIONS
    voxel: float = DEFAULT_VOXEL
    cell: float = DEFAULT_CELL
    bounds: Bounds = None
    reference: BottomReference = None

    def observe(self, state):
        pc = extract_point_cloud(state, self.subdivisions)
        return voxel_downsample(pc, self.voxel) if self.voxel else pc

    def freeze_bottom_reference(self, pc):
        if self.reference is not None:
            raise InvalidState("bottom reference already frozen for this episode")
        if self.bounds is None:
            center = pc.points[:, :2].mean(axis=0)
            self.bounds = Bounds.around(center)
        self.reference = freeze_bottom_reference(pc, self.bounds, self.cell)
        return self.reference

    def upper_grid(self, pc):
        return project_rasterize(pc.upper, self.cell, self.bounds)


def alignment_iou(pc, reference):
    """IoU between the projected Upper half of ``pc`` and the bottom reference."""
    return iou(project_rasterize(pc.upper, reference.cell, reference.bounds), reference.grid)
