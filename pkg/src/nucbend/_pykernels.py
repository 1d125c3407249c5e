"""Pure-Python implementations of the hot kernels.

These are the fallback used when the compiled ``_ckernels`` extension is
unavailable.  Both backends must return bit-identical results, so the
floating-point expressions here are written in the same order as in
``_ckernels.pyx``.
"""

from __future__ import annotations

import heapq
import math

import numpy as np

# Moore ring, counter-clockwise as displayed (y down), starting west.
RING_DY = (0, 1, 1, 1, 0, -1, -1, -1)
RING_DX = (-1, -1, 0, 1, 1, 1, 0, -1)
_RING_INDEX = {(dy, dx): i for i, (dy, dx) in enumerate(zip(RING_DY, RING_DX))}


def trace_boundary(mask: np.ndarray, start_y: int, start_x: int) -> np.ndarray:
    """Moore-neighbour trace of the component containing the start pixel.

    ``mask`` must carry a one-pixel zero border and the start must be the
    topmost-then-leftmost pixel of the component.  Returns (m, 2) int64
    rows of (y, x).  Tracing stops when the start pixel is about to be
    left towards the second contour pixel again.
    """
    cy, cx = int(start_y), int(start_x)
    points = [(cy, cx)]
    back = 0  # west of the start is background by construction
    second = None
    while True:
        found = -1
        for j in range(1, 9):
            d = (back + j) & 7
            if mask[cy + RING_DY[d], cx + RING_DX[d]]:
                found = d
                break
        if found < 0:
            break  # isolated pixel
        prev = (found + 7) & 7
        ny, nx = cy + RING_DY[found], cx + RING_DX[found]
        by, bx = cy + RING_DY[prev], cx + RING_DX[prev]
        if second is None:
            second = (ny, nx)
        elif cy == start_y and cx == start_x and (ny, nx) == second:
            points.pop()
            break
        points.append((ny, nx))
        back = _RING_INDEX[(by - ny, bx - nx)]
        cy, cx = ny, nx
    return np.array(points, dtype=np.int64).reshape(-1, 2)


def curvature_int(v1y: int, v1x: int, v2y: int, v2x: int, cap: float) -> float:
    cross = v1x * v2y - v1y * v2x
    dot = v1x * v2x + v1y * v2y
    if cross == 0:
        return 0.0 if dot > 0 else cap
    l1 = math.sqrt(v1x * v1x + v1y * v1y)
    l2 = math.sqrt(v2x * v2x + v2y * v2y)
    den = l1 * l2 + dot
    if den <= 0.0:
        return cap
    return 2.0 * abs(cross) / den


def inside_closed(mask: np.ndarray, y2: int, x2: int) -> bool:
    """Whether the point (y2/2, x2/2) touches a mask pixel.

    Pixels are closed unit squares centred on integer coordinates, so a
    half-integer coordinate lies on the shared edge of two pixels and
    touches both.
    """
    h, w = mask.shape
    ys = (y2 >> 1,) if y2 % 2 == 0 else ((y2 - 1) >> 1, (y2 + 1) >> 1)
    xs = (x2 >> 1,) if x2 % 2 == 0 else ((x2 - 1) >> 1, (x2 + 1) >> 1)
    for y in ys:
        if 0 <= y < h:
            for x in xs:
                if 0 <= x < w and mask[y, x]:
                    return True
    return False


def point_energy(cy, cx, nbr, ext, mask, mu, cap, test_concavity):
    """Minimum-energy neighbour pair for one contour point.

    ``nbr`` is a sequence of (y, x) neighbours, predecessor and successor
    first.  ``ext`` holds the (y, x) pair used for the concavity test of
    the predecessor/successor pair.  Returns (kappa, concave, energy, a, b)
    with a < b indices into ``nbr``.
    """
    best = (0.0, 0, math.inf, -1, -1)
    n = len(nbr)
    for a in range(n):
        ay, ax = nbr[a]
        for b in range(a + 1, n):
            by, bx = nbr[b]
            v1y, v1x = cy - ay, cx - ax
            v2y, v2x = by - cy, bx - cx
            kappa = curvature_int(v1y, v1x, v2y, v2x, cap)
            l1 = math.sqrt(v1x * v1x + v1y * v1y)
            l2 = math.sqrt(v2x * v2x + v2y * v2y)
            base = kappa * kappa / (l1 + l2)
            concave = 0
            if test_concavity:
                if a == 0 and b == 1:
                    my, mx = ext[0] + ext[2], ext[1] + ext[3]
                else:
                    my, mx = ay + by, ax + bx
                concave = 0 if inside_closed(mask, my, mx) else 1
            energy = base * mu if concave else base
            if energy < best[2]:
                best = (kappa, concave, energy, a, b)
    if best[3] < 0:
        return (0.0, 0, 0.0, -1, -1)
    return best


def contour_energies(points, nbr_ptr, nbr, ext, mask, mu, cap, test_concavity):
    """Per-point bending energies of one contour.

    ``points`` (m, 2) and ``nbr`` (K, 2) hold (y, x) rows; the neighbours of
    point i are ``nbr[nbr_ptr[i]:nbr_ptr[i + 1]]``.  ``ext`` is (m, 4) with
    the extended predecessor and successor of every point.
    """
    m = points.shape[0]
    kappa = np.zeros(m, dtype=np.float64)
    concave = np.zeros(m, dtype=np.uint8)
    energy = np.zeros(m, dtype=np.float64)
    chosen = np.full((m, 2), -1, dtype=np.int64)
    if m <= 2:
        return kappa, concave, energy, chosen
    pts = points.tolist()
    nb = nbr.tolist()
    ex = ext.tolist()
    ptr = nbr_ptr.tolist()
    for i in range(m):
        cy, cx = pts[i]
        k, c, e, a, b = point_energy(
            cy, cx, nb[ptr[i] : ptr[i + 1]], ex[i], mask, mu, cap, test_concavity
        )
        kappa[i] = k
        concave[i] = c
        energy[i] = e
        chosen[i, 0] = a
        chosen[i, 1] = b
    return kappa, concave, energy, chosen


def flood(energy: np.ndarray, markers: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Marker-controlled priority flood over 8-connected pixels.

    Pixels are labelled when first reached from a popped pixel, and the
    frontier is popped in (energy, raveled index) order.  Pixels outside
    ``mask`` are never labelled; pixels with no path to a marker stay 0.
    """
    h, w = energy.shape
    out = markers.astype(np.int64).ravel().copy()
    en = energy.astype(np.float64).ravel().tolist()
    ok = mask.astype(bool).ravel().tolist()
    heap = [(en[i], i) for i in np.flatnonzero(out).tolist()]
    heapq.heapify(heap)
    lab = out.tolist()
    while heap:
        _, i = heapq.heappop(heap)
        y, x = divmod(i, w)
        li = lab[i]
        for d in range(8):
            ny, nx = y + RING_DY[d], x + RING_DX[d]
            if 0 <= ny < h and 0 <= nx < w:
                j = ny * w + nx
                if ok[j] and lab[j] == 0:
                    lab[j] = li
                    heapq.heappush(heap, (en[j], j))
    return np.array(lab, dtype=np.int64).reshape(h, w)
