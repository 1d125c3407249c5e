"""Distance-map ground truth, watershed postprocessing and patch tiling."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import kernels
from .contour import EIGHT, DiagnosticWarning
from .imgcore import FloatMap, FloatMapPair, LabelMap, instances_of


def _as_label_map(x) -> LabelMap:
    return x if isinstance(x, LabelMap) else LabelMap(x)


def identify_overlapped(gt) -> set[int]:
    """Ids of nuclei with a pixel 8-adjacent to a different nucleus."""
    lab = _as_label_map(gt).labels
    h, w = lab.shape
    padded = np.pad(lab, 1)
    hit = np.zeros(lab.shape, dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            nb = padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
            hit |= (nb != 0) & (nb != lab)
    hit &= lab != 0
    return set(np.unique(lab[hit]).tolist())


@dataclass(frozen=True)
class HvGroundTruth:
    all_nuclei: FloatMapPair
    overlapped_only: FloatMapPair


def _hv_maps(lab: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h, w = lab.shape
    hmap = np.zeros(lab.shape, dtype=np.float64)
    vmap = np.zeros(lab.shape, dtype=np.float64)
    for _, idx in instances_of(LabelMap(lab)).items():
        ys, xs = np.divmod(idx, w)
        for coords, out in ((xs, hmap), (ys, vmap)):
            off = coords - coords.mean()
            neg = off < 0
            pos = off > 0
            if neg.any():
                off[neg] /= -off[neg].min()
            if pos.any():
                off[pos] /= off[pos].max()
            out.flat[idx] = off
    return hmap, vmap


def hv_ground_truth(gt, overlapped_ids=None) -> HvGroundTruth:
    """Horizontal/vertical centroid-offset maps normalised to [-1, 1].

    Offsets left of (above) the centroid are divided by the largest such
    offset, and likewise on the right (below), so each nucleus spanning
    two or more columns reaches both -1 and +1.
    """
    lm = _as_label_map(gt)
    if overlapped_ids is None:
        overlapped_ids = identify_overlapped(lm)
    hmap, vmap = _hv_maps(lm.labels)
    keep = np.isin(lm.labels, sorted(overlapped_ids)) if overlapped_ids else np.zeros(lm.shape, bool)
    return HvGroundTruth(
        FloatMapPair(FloatMap(hmap), FloatMap(vmap)),
        FloatMapPair(FloatMap(np.where(keep, hmap, 0.0)), FloatMap(np.where(keep, vmap, 0.0))),
    )


def _minmax(a: np.ndarray) -> np.ndarray:
    lo, hi = a.min(), a.max()
    if hi == lo:
        return np.zeros_like(a)
    return (a - lo) / (hi - lo)


def sobel_energy(hv) -> FloatMap:
    """Boundary energy from the HV maps.

    The x-Sobel response of the horizontal map and the y-Sobel response of
    the vertical map are min-max normalised and inverted, so the strong
    negative steps between nuclei (and at nucleus edges) map to 1; the
    pixelwise maximum of the two is returned.  Constant maps give 0.
    """
    h = hv.horizontal.values.astype(np.float64)
    v = hv.vertical.values.astype(np.float64)
    gx = ndimage.sobel(h, axis=1, mode="nearest")
    gy = ndimage.sobel(v, axis=0, mode="nearest")
    ex = 1.0 - _minmax(gx) if np.ptp(gx) else np.zeros_like(gx)
    ey = 1.0 - _minmax(gy) if np.ptp(gy) else np.zeros_like(gy)
    return FloatMap(np.maximum(ex, ey))


@dataclass(frozen=True)
class PostprocessParams:
    prob_threshold: float = 0.5
    contour_threshold: float = 0.4
    min_marker_area: int = 10

    def __post_init__(self):
        for name in ("prob_threshold", "contour_threshold"):
            value = getattr(self, name)
            if not 0 < value < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {value}")
        if int(self.min_marker_area) != self.min_marker_area or self.min_marker_area < 1:
            raise ValueError(f"min_marker_area must be an integer >= 1, got {self.min_marker_area}")


def markers_from(q: np.ndarray, energy: np.ndarray, params: PostprocessParams) -> np.ndarray:
    """Label 8-connected seeds of foreground minus contour, numbered 1..K."""
    seeds = q & ~(energy > params.contour_threshold)
    comp, n = ndimage.label(seeds, structure=EIGHT)
    if n == 0:
        return comp
    areas = np.bincount(comp.ravel(), minlength=n + 1)
    keep = areas >= params.min_marker_area
    keep[0] = False
    relabel = np.zeros(n + 1, dtype=np.int64)
    relabel[keep] = np.arange(1, int(keep.sum()) + 1)
    return relabel[comp]


def watershed_postprocess(prob, hv, params: PostprocessParams | None = None) -> LabelMap:
    """Recover instances by flooding the boundary energy from seed markers.

    Foreground pixels the flood cannot reach take the label of the
    nearest labelled pixel (Euclidean distance).
    """
    params = params or PostprocessParams()
    p = prob.values if isinstance(prob, FloatMap) else np.asarray(prob, dtype=np.float32)
    if p.shape != hv.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {hv.shape}")
    q = p >= params.prob_threshold
    if not q.any():
        return LabelMap(np.zeros(p.shape, dtype=np.int64))
    energy = sobel_energy(hv).values  # float32, as stored
    markers = markers_from(q, energy, params)
    if markers.max() == 0:
        warnings.warn("no watershed markers found; returning the foreground as one instance",
                      DiagnosticWarning, stacklevel=2)
        return LabelMap(q.astype(np.int64))
    out = kernels.flood(
        np.ascontiguousarray(energy), np.ascontiguousarray(markers), np.ascontiguousarray(q, dtype=np.uint8)
    )
    orphans = q & (out == 0)
    if orphans.any():
        _, (iy, ix) = ndimage.distance_transform_edt(out == 0, return_indices=True)
        out[orphans] = out[iy[orphans], ix[orphans]]
    return LabelMap(out)


# --- tiling ----------------------------------------------------------------

PATCH = 270
WINDOW = 80


@dataclass(frozen=True)
class PatchIndex:
    """Where each output window goes: ``origins`` are (y, x) window corners."""

    height: int
    width: int
    patch: int
    window: int
    origins: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.origins)


def extract_patches(grid, patch: int = PATCH, window: int = WINDOW):
    """Cut mirror-padded ``patch`` x ``patch`` tiles centred on a window grid.

    The central ``window`` x ``window`` squares of the tiles cover the
    input without overlap, starting at the top-left corner.  Extra leading
    dimensions beyond the first two (e.g. channels) are carried along.
    """
    arr = np.asarray(grid)
    if arr.ndim < 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("grid must be at least 1x1")
    if (patch - window) % 2:
        raise ValueError("patch and window sizes must differ by an even amount")
    h, w = arr.shape[:2]
    margin = (patch - window) // 2
    ny, nx = -(-h // window), -(-w // window)
    pad = [(margin, margin + ny * window - h), (margin, margin + nx * window - w)]
    pad += [(0, 0)] * (arr.ndim - 2)
    canvas = np.pad(arr, pad, mode="reflect")
    origins = tuple((iy * window, ix * window) for iy in range(ny) for ix in range(nx))
    patches = [canvas[oy : oy + patch, ox : ox + patch] for oy, ox in origins]
    return patches, PatchIndex(h, w, patch, window, origins)


def merge_patches(outputs, index: PatchIndex, target: tuple[int, int] | None = None):
    """Paste ``window``-sized outputs at their origins and crop to the input size.

    Full ``patch``-sized tiles are accepted too; their centre is used.
    """
    outputs = list(outputs)
    if len(outputs) != len(index):
        raise ValueError(f"expected {len(index)} windows, got {len(outputs)}")
    h, w = target if target is not None else (index.height, index.width)
    if (h, w) != (index.height, index.width):
        raise ValueError(f"target {(h, w)} does not match index {(index.height, index.width)}")
    win, margin = index.window, (index.patch - index.window) // 2
    first = np.asarray(outputs[0])
    ny, nx = -(-h // win), -(-w // win)
    canvas = np.zeros((ny * win, nx * win) + first.shape[2:], dtype=first.dtype)
    for (oy, ox), out in zip(index.origins, outputs):
        out = np.asarray(out)
        if out.shape[:2] == (index.patch, index.patch):
            out = out[margin : margin + win, margin : margin + win]
        if out.shape[:2] != (win, win):
            raise ValueError(f"window at {(oy, ox)} has shape {out.shape[:2]}")
        canvas[oy : oy + win, ox : ox + win] = out
    return canvas[:h, :w]
