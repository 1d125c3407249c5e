"""Discrete curvature and bending energy of instance contours.

The bending energy at a contour point c with neighbours a and b is::

    BE = kappa**2 * w / (|c - a| + |b - c|)
    kappa = 2 |v1 x v2| / (|v1| |v2| + v1 . v2),   v1 = c - a, v2 = b - c

with ``w = mu`` for concave points and ``w = 1`` otherwise.  The bending
loss of a label map is the mean BE over all contour points.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import kernels
from ._pykernels import inside_closed, point_energy
from .contour import (
    Contour,
    DiagnosticWarning,
    extended_neighbors,
    instance_bboxes,
    trace_contours,
)
from .imgcore import BinaryMask, LabelMap, Point

# curvature of the sharpest 8-neighbourhood turn, 2 tan(67.5 deg)
KAPPA_CAP = 2.0 * (math.sqrt(2.0) + 1.0)


@dataclass(frozen=True)
class BendingParams:
    mu: float = 20.0
    alpha: float = 1.0
    concavity_extent: int = 1
    kappa_cap: float = KAPPA_CAP

    def __post_init__(self):
        if not self.mu >= 1:
            raise ValueError(f"mu must be >= 1, got {self.mu}")
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if int(self.concavity_extent) != self.concavity_extent or self.concavity_extent < 1:
            raise ValueError(f"concavity_extent must be an integer >= 1, got {self.concavity_extent}")
        if not self.kappa_cap > 0:
            raise ValueError(f"kappa_cap must be > 0, got {self.kappa_cap}")


@dataclass(frozen=True)
class PointBending:
    point: Point
    kappa: float
    concave: int
    energy: float
    chosen_neighbors: tuple[Point, Point] | None


@dataclass(frozen=True, eq=False)
class BendingReport:
    """Per-point bending quantities for every contour, in contour order.

    Arrays are aligned: ``points`` (m, 2) (x, y), ``kappa``, ``concave``,
    ``energy`` of length m, ``chosen`` (m, 2, 2) neighbour coordinates
    (-1 where a contour is too short to bend), and ``contour_index``
    mapping each point to its contour.
    """

    points: np.ndarray
    kappa: np.ndarray
    concave: np.ndarray
    energy: np.ndarray
    chosen: np.ndarray
    contour_index: np.ndarray
    instance_ids: np.ndarray
    loss: float

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @property
    def per_point(self) -> list[PointBending]:
        out = []
        for i in range(self.m):
            ch = self.chosen[i]
            pair = None
            if ch[0, 0] >= 0:
                pair = (Point(*map(int, ch[0])), Point(*map(int, ch[1])))
            out.append(
                PointBending(
                    Point(*map(int, self.points[i])),
                    float(self.kappa[i]),
                    int(self.concave[i]),
                    float(self.energy[i]),
                    pair,
                )
            )
        return out

    @property
    def max_energy(self) -> float:
        return float(self.energy.max()) if self.m else 0.0


def curvature(v_prev, v_next, cap: float = KAPPA_CAP) -> float:
    """Discrete curvature between consecutive edge vectors.

    Exact reversals (``v_next == -v_prev``) return ``cap``.
    """
    ax, ay = float(v_prev[0]), float(v_prev[1])
    bx, by = float(v_next[0]), float(v_next[1])
    l1 = math.hypot(ax, ay)
    l2 = math.hypot(bx, by)
    if l1 == 0.0 or l2 == 0.0:
        raise ValueError("curvature needs non-zero edge vectors")
    cross = ax * by - ay * bx
    dot = ax * bx + ay * by
    if cross == 0.0:
        return 0.0 if dot > 0 else cap
    den = l1 * l2 + dot
    if den <= 0.0:
        return cap
    return 2.0 * abs(cross) / den


def _mask_array(mask) -> np.ndarray:
    if isinstance(mask, BinaryMask):
        return mask.values
    return np.asarray(mask, dtype=bool)


def is_concave(contour: Contour, index: int, k: int, mask) -> int:
    """1 if the midpoint of the k-extended neighbours lies outside ``mask``.

    Pixels count as closed unit squares: a midpoint on the edge or corner
    shared by several pixels is inside if any of them is in the mask.
    Contours of length <= 2k are treated as convex.
    """
    if len(contour) <= 2 * k:
        warnings.warn(
            f"contour of length {len(contour)} too short for concavity extent {k}",
            DiagnosticWarning,
            stacklevel=2,
        )
        return 0
    a, b = extended_neighbors(contour, index, k)
    arr = np.asarray(_mask_array(mask), dtype=np.uint8)
    return 0 if inside_closed(arr, a.y + b.y, a.x + b.x) else 1


def _ext_pairs(points_xy: np.ndarray, k: int) -> np.ndarray:
    """(m, 4) rows of (y, x) extended predecessor then successor."""
    prev = np.roll(points_xy, k, axis=0)
    nxt = np.roll(points_xy, -k, axis=0)
    return np.ascontiguousarray(
        np.concatenate([prev[:, ::-1], nxt[:, ::-1]], axis=1), dtype=np.int64
    )


def point_bending(contour: Contour, index: int, params: BendingParams, mask) -> PointBending:
    """Bending energy at one point, minimised over its neighbour pairs."""
    m = len(contour)
    c = contour.point(index)
    if m <= 2:
        return PointBending(c, 0.0, 0, 0.0, None)
    k = params.concavity_extent
    test = m > 2 * k
    if not test:
        warnings.warn(
            f"contour of length {m} too short for concavity extent {k}",
            DiagnosticWarning,
            stacklevel=2,
        )
    nbrs = [(p.y, p.x) for p in contour.neighbor_set(index)]
    a, b = (extended_neighbors(contour, index, k) if test else (c, c))
    arr = np.asarray(_mask_array(mask), dtype=np.uint8)
    kappa, concave, energy, ia, ib = point_energy(
        c.y, c.x, nbrs, (a.y, a.x, b.y, b.x), arr, float(params.mu), float(params.kappa_cap), test
    )
    chosen = (Point(nbrs[ia][1], nbrs[ia][0]), Point(nbrs[ib][1], nbrs[ib][0]))
    return PointBending(c, kappa, concave, energy, chosen)


def _empty_report() -> BendingReport:
    return BendingReport(
        points=np.zeros((0, 2), dtype=np.int64),
        kappa=np.zeros(0),
        concave=np.zeros(0, dtype=np.uint8),
        energy=np.zeros(0),
        chosen=np.zeros((0, 2, 2), dtype=np.int64),
        contour_index=np.zeros(0, dtype=np.int64),
        instance_ids=np.zeros(0, dtype=np.int64),
        loss=0.0,
    )


def contour_bending(contour: Contour, params: BendingParams, mask: np.ndarray, origin=(0, 0)):
    """Arrays (kappa, concave, energy, chosen_xy) for one contour.

    ``mask`` is the instance mask, possibly cropped; ``origin`` is the
    (x, y) of its top-left pixel in contour coordinates.
    """
    m = len(contour)
    k = params.concavity_extent
    test = m > 2 * k
    if m > 2 and not test:
        warnings.warn(
            f"contour of length {m} too short for concavity extent {k}",
            DiagnosticWarning,
            stacklevel=2,
        )
    ox, oy = origin
    shift = np.array([ox, oy], dtype=np.int64)
    pts_local = contour.points - shift
    nbr_local = contour.neighbors - shift
    pts_yx = np.ascontiguousarray(pts_local[:, ::-1], dtype=np.int64)
    nbr_yx = np.ascontiguousarray(nbr_local[:, ::-1], dtype=np.int64).reshape(-1, 2)
    ext = _ext_pairs(pts_local, k) if test else np.zeros((m, 4), dtype=np.int64)
    kappa, concave, energy, chosen = kernels.contour_energies(
        pts_yx,
        np.ascontiguousarray(contour.neighbor_ptr, dtype=np.int64),
        nbr_yx,
        ext,
        np.ascontiguousarray(mask, dtype=np.uint8),
        float(params.mu),
        float(params.kappa_cap),
        bool(test),
    )
    chosen_xy = np.full((m, 2, 2), -1, dtype=np.int64)
    ok = chosen[:, 0] >= 0
    base = contour.neighbor_ptr[:-1][ok]
    chosen_xy[ok, 0] = contour.neighbors[base + chosen[ok, 0]]
    chosen_xy[ok, 1] = contour.neighbors[base + chosen[ok, 1]]
    return kappa, concave, energy, chosen_xy


def bending_loss(label_map: LabelMap, params: BendingParams | None = None) -> BendingReport:
    """Trace all instance contours and evaluate the mean bending energy."""
    params = params or BendingParams()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DiagnosticWarning)
        contours = trace_contours(label_map)
    if len(contours) == 0:
        return _empty_report()

    labels = label_map.labels
    bboxes = dict(instance_bboxes(label_map))
    parts = []
    for ci, contour in enumerate(contours):
        sl_y, sl_x = bboxes[contour.instance_id]
        mask = labels[sl_y, sl_x] == contour.instance_id
        kappa, concave, energy, chosen = contour_bending(
            contour, params, mask, origin=(sl_x.start, sl_y.start)
        )
        parts.append((contour.points, kappa, concave, energy, chosen, ci, contour.instance_id))

    energy = np.concatenate([p[3] for p in parts])
    return BendingReport(
        points=np.concatenate([p[0] for p in parts]),
        kappa=np.concatenate([p[1] for p in parts]),
        concave=np.concatenate([p[2] for p in parts]),
        energy=energy,
        chosen=np.concatenate([p[4] for p in parts]),
        contour_index=np.concatenate([np.full(len(p[0]), p[5], dtype=np.int64) for p in parts]),
        instance_ids=np.concatenate([np.full(len(p[0]), p[6], dtype=np.int64) for p in parts]),
        loss=math.fsum(energy.tolist()) / energy.size,
    )


@dataclass(frozen=True)
class Pattern:
    """One of the 28 neighbour-pair configurations around a pixel.

    ``neighbor_a`` and ``neighbor_b`` are (dx, dy) offsets from the centre;
    ``angle`` is the angle between them in degrees.
    """

    neighbor_a: tuple[int, int]
    neighbor_b: tuple[int, int]
    angle: float
    group: int
    convex: float
    concave: float


_RING_XY = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)]


def pattern_table(params: BendingParams | None = None) -> list[Pattern]:
    """Convex/concave BE of every unordered neighbour pair, grouped.

    Groups are numbered 1..5 by increasing convex energy: straight lines,
    135 degree turns, diagonal right angles, axis right angles, and the
    sharpest 45 degree turns.
    """
    params = params or BendingParams()
    rows = []
    for a, b in combinations(_RING_XY, 2):
        v1 = (-a[0], -a[1])
        kappa = curvature(v1, b, params.kappa_cap)
        base = kappa * kappa / (math.hypot(*a) + math.hypot(*b))
        dot = a[0] * b[0] + a[1] * b[1]
        cross = a[0] * b[1] - a[1] * b[0]
        angle = math.degrees(math.atan2(abs(cross), dot))
        rows.append((a, b, angle, base, base * params.mu))
    levels = sorted({round(r[3], 9) for r in rows})
    group_of = {v: i + 1 for i, v in enumerate(levels)}
    table = [Pattern(a, b, ang, group_of[round(cv, 9)], cv, cc) for a, b, ang, cv, cc in rows]
    table.sort(key=lambda p: (p.group, _RING_XY.index(p.neighbor_a), _RING_XY.index(p.neighbor_b)))
    return table


def polygon_bending_gradient(vertices, concavity, params: BendingParams | None = None):
    """Mean bending energy of a closed polygon and its gradient.

    ``vertices`` is (n, 2) real coordinates; ``concavity`` holds fixed 0/1
    flags per vertex, treated as constants.  Returns ``(loss, grad)`` with
    ``grad`` of shape (n, 2).
    """
    params = params or BendingParams()
    x = np.asarray(vertices, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != 2 or x.shape[0] < 3:
        raise ValueError("need an (n, 2) array with n >= 3")
    flags = np.asarray(concavity).astype(bool)
    if flags.shape != (x.shape[0],):
        raise ValueError("one concavity flag per vertex required")
    n = x.shape[0]
    w = np.where(flags, float(params.mu), 1.0)

    v1 = x - np.roll(x, 1, axis=0)  # c - a
    v2 = np.roll(x, -1, axis=0) - x  # b - c
    l1 = np.hypot(v1[:, 0], v1[:, 1])
    l2 = np.hypot(v2[:, 0], v2[:, 1])
    if np.any(l1 == 0.0):
        raise ValueError("consecutive vertices coincide")
    cr = v1[:, 0] * v2[:, 1] - v1[:, 1] * v2[:, 0]
    dt = np.einsum("ij,ij->i", v1, v2)
    den = l1 * l2 + dt
    if np.any(den <= 0.0):
        raise ValueError("polygon has an exact edge reversal")
    s = l1 + l2
    energy = 4.0 * w * cr**2 / (den**2 * s)
    loss = math.fsum(energy.tolist()) / n

    # dE/dv = 4w [2 cr dcr / (D^2 S) - 2 cr^2 dD / (D^3 S) - cr^2 dS / (D^2 S^2)]
    u1 = v1 / l1[:, None]
    u2 = v2 / l2[:, None]
    dcr_dv1 = np.stack([v2[:, 1], -v2[:, 0]], axis=1)
    dcr_dv2 = np.stack([-v1[:, 1], v1[:, 0]], axis=1)
    dD_dv1 = l2[:, None] * u1 + v2
    dD_dv2 = l1[:, None] * u2 + v1
    c_cr = (8.0 * w * cr / (den**2 * s))[:, None]
    c_D = (-8.0 * w * cr**2 / (den**3 * s))[:, None]
    c_S = (-4.0 * w * cr**2 / (den**2 * s**2))[:, None]
    g1 = c_cr * dcr_dv1 + c_D * dD_dv1 + c_S * u1
    g2 = c_cr * dcr_dv2 + c_D * dD_dv2 + c_S * u2

    # v1_i = x_i - x_{i-1}, v2_i = x_{i+1} - x_i
    grad = (g1 - g2) - np.roll(g1, -1, axis=0) + np.roll(g2, 1, axis=0)
    return loss, grad / n
