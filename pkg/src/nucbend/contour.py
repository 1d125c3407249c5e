"""Outer-boundary tracing of label-map instances.

Each 8-connected component of an instance is traced with Moore-neighbour
tracing, counter-clockwise as the image is displayed (y down), starting
from its topmost-then-leftmost pixel.  One-pixel-wide spurs are walked out
and back, so the same coordinate can occupy several sequence slots.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import kernels
from .imgcore import LabelMap, Point, instances_of

EIGHT = np.ones((3, 3), dtype=bool)

# Offsets searched for extra contour neighbours, (dy, dx).
_OFFSETS = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)]


class DiagnosticWarning(UserWarning):
    """Recoverable oddity in the input data."""


@dataclass(frozen=True, eq=False)
class Contour:
    """Closed contour of one connected component of an instance.

    ``points`` is an (m, 2) int array of (x, y) rows.  The neighbours of
    point i are ``neighbors[neighbor_ptr[i]:neighbor_ptr[i + 1]]``, also
    (x, y) rows: cyclic predecessor, cyclic successor, then every other
    contour coordinate in the 8-neighbourhood.
    """

    instance_id: int
    points: np.ndarray
    neighbor_ptr: np.ndarray = field(repr=False)
    neighbors: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.points.shape[0]

    def point(self, index: int) -> Point:
        x, y = self.points[index]
        return Point(int(x), int(y))

    def neighbor_set(self, index: int) -> list[Point]:
        lo, hi = self.neighbor_ptr[index], self.neighbor_ptr[index + 1]
        return [Point(int(x), int(y)) for x, y in self.neighbors[lo:hi]]

    @property
    def neighbor_sets(self) -> list[list[Point]]:
        return [self.neighbor_set(i) for i in range(len(self))]


@dataclass(frozen=True)
class ContourSet:
    contours: tuple[Contour, ...]

    @property
    def total_points(self) -> int:
        return sum(len(c) for c in self.contours)

    def __iter__(self):
        return iter(self.contours)

    def __len__(self) -> int:
        return len(self.contours)


def _neighbor_structure(points_xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    m = points_xy.shape[0]
    if m == 1:
        return np.zeros(2, dtype=np.int64), np.zeros((0, 2), dtype=np.int64)
    pred = np.roll(points_xy, 1, axis=0)
    succ = np.roll(points_xy, -1, axis=0)

    origin = points_xy.min(axis=0) - 1
    local = points_xy - origin
    grid = np.zeros(local.max(axis=0)[::-1] + 2, dtype=bool)
    grid[local[:, 1], local[:, 0]] = True

    extra_cols = []
    for dy, dx in _OFFSETS:
        q = points_xy + (dx, dy)
        hit = grid[local[:, 1] + dy, local[:, 0] + dx]
        hit &= ~np.all(q == pred, axis=1) & ~np.all(q == succ, axis=1)
        extra_cols.append(hit)
    extra = np.stack(extra_cols, axis=1)  # (m, 8)

    counts = 2 + extra.sum(axis=1)
    ptr = np.zeros(m + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    nbrs = np.empty((ptr[-1], 2), dtype=np.int64)
    nbrs[ptr[:-1]] = pred
    nbrs[ptr[:-1] + 1] = succ
    offs = np.array([(dx, dy) for dy, dx in _OFFSETS], dtype=np.int64)
    rows, cols = np.nonzero(extra)
    # np.nonzero walks row-major, so extras keep the fixed offset order
    slot = ptr[rows] + 2 + (np.cumsum(extra, axis=1)[rows, cols] - 1)
    nbrs[slot] = points_xy[rows] + offs[cols]
    return ptr, nbrs


def _make_contour(instance_id: int, points_xy: np.ndarray) -> Contour:
    ptr, nbrs = _neighbor_structure(points_xy)
    for arr in (points_xy, ptr, nbrs):
        arr.setflags(write=False)
    return Contour(instance_id, points_xy, ptr, nbrs)


def trace_component(mask: np.ndarray) -> np.ndarray:
    """Trace the single 8-connected component in ``mask``; (m, 2) (x, y)."""
    padded = np.pad(mask.astype(np.uint8), 1)
    flat = np.flatnonzero(padded)
    sy, sx = divmod(int(flat[0]), padded.shape[1])
    yx = kernels.trace_boundary(padded, sy, sx) - 1
    return np.ascontiguousarray(yx[:, ::-1])


def instance_bboxes(label_map: LabelMap):
    w = label_map.width
    for inst_id, idx in instances_of(label_map).items():
        ys, xs = np.divmod(idx, w)
        yield inst_id, (slice(ys.min(), ys.max() + 1), slice(xs.min(), xs.max() + 1))


def trace_contours(label_map: LabelMap) -> ContourSet:
    """Trace every connected component of every instance.

    Output order is ascending instance id, then component discovery order
    (raster order of each component's first pixel).
    """
    contours = []
    labels = label_map.labels
    for inst_id, (sl_y, sl_x) in instance_bboxes(label_map):
        sub = labels[sl_y, sl_x] == inst_id
        comp, n = ndimage.label(sub, structure=EIGHT)
        if n > 1:
            warnings.warn(
                f"instance {inst_id} has {n} connected components; tracing each",
                DiagnosticWarning,
                stacklevel=2,
            )
        offset = np.array([sl_x.start, sl_y.start], dtype=np.int64)
        for k in range(1, n + 1):
            pts = trace_component(comp == k) + offset
            contours.append(_make_contour(inst_id, pts))
    return ContourSet(tuple(contours))


def extended_neighbors(contour: Contour, index: int, k: int) -> tuple[Point, Point]:
    """Points ``k`` steps before and after ``index`` along the contour."""
    m = len(contour)
    if k < 1 or k >= m:
        raise ValueError(f"arc distance k={k} must satisfy 1 <= k < {m}")
    return contour.point((index - k) % m), contour.point((index + k) % m)
