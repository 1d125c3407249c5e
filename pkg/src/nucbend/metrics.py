"""Instance-segmentation metrics: AJI, Dice, RQ/SQ/PQ, AJIO and ACCO.

Best-match selection (AJI, AJIO) picks, for every ground-truth nucleus,
the prediction with the largest Jaccard index; equal indices go to the
smaller prediction id.  A nucleus that overlaps no prediction therefore
pairs with the smallest prediction id at Jaccard 0.  Jaccard values are
compared exactly as integer ratios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .imgcore import LabelMap


def _labels(x) -> np.ndarray:
    if isinstance(x, LabelMap):
        return x.labels
    return np.asarray(x)


class Overlap:
    """Areas and pairwise intersections of two label maps."""

    def __init__(self, gt, pred):
        g = _labels(gt)
        p = _labels(pred)
        if g.shape != p.shape:
            raise ValueError(f"dimension mismatch: {g.shape} vs {p.shape}")
        g = g.ravel()
        p = p.ravel()
        gi, ga = np.unique(g[g > 0], return_counts=True)
        pi, pa = np.unique(p[p > 0], return_counts=True)
        self.gt_area = dict(zip(gi.tolist(), ga.tolist()))
        self.pred_area = dict(zip(pi.tolist(), pa.tolist()))
        self.gt_ids = gi.tolist()
        self.pred_ids = pi.tolist()

        both = (g > 0) & (p > 0)
        self.fg_inter = int(both.sum())
        self.fg_gt = int(ga.sum())
        self.fg_pred = int(pa.sum())
        pairs, counts = np.unique(
            np.stack([g[both], p[both]], axis=1), axis=0, return_counts=True
        )
        # gt id -> list of (pred id, intersection), ascending pred id
        self.by_gt: dict[int, list[tuple[int, int]]] = {}
        for (a, b), c in zip(pairs.tolist(), counts.tolist()):
            self.by_gt.setdefault(a, []).append((b, c))

    @property
    def n_gt(self) -> int:
        return len(self.gt_ids)

    @property
    def n_pred(self) -> int:
        return len(self.pred_ids)

    def union(self, g: int, p: int, inter: int) -> int:
        return self.gt_area[g] + self.pred_area[p] - inter

    def best_match(self, g: int) -> tuple[int | None, int, int]:
        """(pred id, intersection, union) maximising Jaccard with ``g``."""
        if not self.pred_ids:
            return None, 0, self.gt_area[g]
        best = None
        for p, inter in self.by_gt.get(g, ()):
            union = self.union(g, p, inter)
            # inter/union > best_inter/best_union, as integers
            if best is None or inter * best[2] > best[1] * union:
                best = (p, inter, union)
        if best is None:
            p = self.pred_ids[0]
            best = (p, 0, self.gt_area[g] + self.pred_area[p])
        return best


@dataclass(frozen=True)
class MatchResult:
    pairs: tuple[tuple[int, int, float], ...]
    unmatched_gt: frozenset
    unmatched_pred: frozenset
    # (intersection, union) per pair, for exact averaging
    areas: tuple[tuple[int, int], ...] = field(default=(), repr=False)

    @property
    def tp(self) -> int:
        return len(self.pairs)

    @property
    def fp(self) -> int:
        return len(self.unmatched_pred)

    @property
    def fn(self) -> int:
        return len(self.unmatched_gt)


@dataclass(frozen=True)
class MetricsReport:
    aji: float
    dice: float
    rq: float
    sq: float
    pq: float
    ajio: float | None
    acco: float | None
    tau: float
    n_gt: int
    n_pred: int
    n_overlapped: int
    n_overlapped_matched: int
    match: MatchResult = field(repr=False)
    # raw sums, for pooled aggregation over a dataset
    aji_inter: int = field(default=0, repr=False)
    aji_union: int = field(default=0, repr=False)
    dice_inter: int = field(default=0, repr=False)
    dice_total: int = field(default=0, repr=False)
    iou_sum: Fraction = field(default=Fraction(0), repr=False)
    ajio_inter: int = field(default=0, repr=False)
    ajio_union: int = field(default=0, repr=False)

    def values(self) -> dict[str, float | None]:
        """The seven metrics in table order."""
        return {
            "aji": self.aji,
            "dice": self.dice,
            "rq": self.rq,
            "sq": self.sq,
            "pq": self.pq,
            "ajio": self.ajio,
            "acco": self.acco,
        }


def _aji_sums(ov: Overlap) -> tuple[int, int]:
    inter_sum = union_sum = 0
    used = set()
    for g in ov.gt_ids:
        p, inter, union = ov.best_match(g)
        inter_sum += inter
        union_sum += union
        if p is not None:
            used.add(p)
    union_sum += sum(a for p, a in ov.pred_area.items() if p not in used)
    return inter_sum, union_sum


def aji(gt, pred) -> float:
    """Aggregated Jaccard index; unused predictions add to the denominator."""
    ov = gt if isinstance(gt, Overlap) else Overlap(gt, pred)
    if ov.n_gt == 0:
        return 1.0 if ov.n_pred == 0 else 0.0
    inter, union = _aji_sums(ov)
    return inter / union


def dice_global(gt, pred) -> float:
    """Instance-blind foreground Dice; 1 when both maps are empty."""
    ov = gt if isinstance(gt, Overlap) else Overlap(gt, pred)
    total = ov.fg_gt + ov.fg_pred
    if total == 0:
        return 1.0
    return 2 * ov.fg_inter / total


def match_instances(ov: Overlap) -> MatchResult:
    """Pairs with IoU > 0.5, which are necessarily one-to-one."""
    pairs = []
    areas = []
    for g in ov.gt_ids:
        for p, inter in ov.by_gt.get(g, ()):
            union = ov.union(g, p, inter)
            if 2 * inter > union:
                pairs.append((g, p, inter / union))
                areas.append((inter, union))
    mg = {g for g, _, _ in pairs}
    mp = {p for _, p, _ in pairs}
    return MatchResult(
        tuple(pairs),
        frozenset(set(ov.gt_ids) - mg),
        frozenset(set(ov.pred_ids) - mp),
        tuple(areas),
    )


def _iou_sum(match: MatchResult) -> Fraction:
    return sum((Fraction(i, u) for i, u in match.areas), Fraction(0))


def _panoptic_from(match: MatchResult, n_gt: int, n_pred: int):
    if n_gt == 0 and n_pred == 0:
        return 1.0, 1.0, 1.0
    tp, fp, fn = match.tp, match.fp, match.fn
    rq = 2 * tp / (2 * tp + fp + fn)
    sq = float(_iou_sum(match) / tp) if tp else 0.0
    return rq, sq, rq * sq


def panoptic(gt, pred):
    """(MatchResult, rq, sq, pq); an empty pair of maps scores 1."""
    ov = gt if isinstance(gt, Overlap) else Overlap(gt, pred)
    match = match_instances(ov)
    rq, sq, pq = _panoptic_from(match, ov.n_gt, ov.n_pred)
    return match, rq, sq, pq


def _check_overlapped(ov: Overlap, overlapped_ids) -> list[int]:
    ids = sorted(int(i) for i in overlapped_ids)
    unknown = [i for i in ids if i not in ov.gt_area]
    if unknown:
        raise ValueError(f"overlapped ids not present in ground truth: {unknown}")
    return ids


def _ajio_sums(ov: Overlap, ids) -> tuple[int, int]:
    inter_sum = union_sum = 0
    for g in ids:
        _, inter, union = ov.best_match(g)
        inter_sum += inter
        union_sum += union
    return inter_sum, union_sum


def ajio(gt, pred, overlapped_ids) -> float | None:
    """AJI over overlapped nuclei only, without the unused-prediction term.

    A prediction may be the best match of several nuclei.  Returns None
    when there are no overlapped nuclei.
    """
    ov = gt if isinstance(gt, Overlap) else Overlap(gt, pred)
    ids = _check_overlapped(ov, overlapped_ids)
    if not ids:
        return None
    inter, union = _ajio_sums(ov, ids)
    return inter / union


def _acco_count(ov: Overlap, ids, tau: float) -> int:
    tau = Fraction(tau)
    count = 0
    for g in ids:
        if any(inter > tau * ov.union(g, p, inter) for p, inter in ov.by_gt.get(g, ())):
            count += 1
    return count


def acco(gt, pred, overlapped_ids, tau: float = 0.5) -> float | None:
    """Fraction of overlapped nuclei with some prediction at Jaccard > tau."""
    ov = gt if isinstance(gt, Overlap) else Overlap(gt, pred)
    ids = _check_overlapped(ov, overlapped_ids)
    if not ids:
        return None
    return _acco_count(ov, ids, tau) / len(ids)


def evaluate(gt, pred, overlapped_ids=None, tau: float = 0.5) -> MetricsReport:
    """All seven metrics for one image.

    ``overlapped_ids`` defaults to the ground-truth nuclei touching another
    nucleus (see :func:`nucbend.pipeline.identify_overlapped`).
    """
    if not 0 < tau < 1:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    if overlapped_ids is None:
        from .pipeline import identify_overlapped

        overlapped_ids = identify_overlapped(gt if isinstance(gt, LabelMap) else LabelMap(gt))
    ov = Overlap(gt, pred)
    ids = _check_overlapped(ov, overlapped_ids)

    if ov.n_gt == 0:
        aji_i, aji_u = 0, ov.fg_pred
        aji_v = 1.0 if ov.n_pred == 0 else 0.0
    else:
        aji_i, aji_u = _aji_sums(ov)
        aji_v = aji_i / aji_u
    match = match_instances(ov)
    rq, sq, pq = _panoptic_from(match, ov.n_gt, ov.n_pred)

    ajio_v = acco_v = None
    ajio_i = ajio_u = matched = 0
    if ids:
        ajio_i, ajio_u = _ajio_sums(ov, ids)
        ajio_v = ajio_i / ajio_u
        matched = _acco_count(ov, ids, tau)
        acco_v = matched / len(ids)

    return MetricsReport(
        aji=aji_v,
        dice=dice_global(ov, None),
        rq=rq,
        sq=sq,
        pq=pq,
        ajio=ajio_v,
        acco=acco_v,
        tau=tau,
        n_gt=ov.n_gt,
        n_pred=ov.n_pred,
        n_overlapped=len(ids),
        n_overlapped_matched=matched,
        match=match,
        aji_inter=aji_i,
        aji_union=aji_u,
        dice_inter=ov.fg_inter,
        dice_total=ov.fg_gt + ov.fg_pred,
        iou_sum=_iou_sum(match),
        ajio_inter=ajio_i,
        ajio_union=ajio_u,
    )


METRIC_NAMES = ("aji", "dice", "rq", "sq", "pq", "ajio", "acco")


def aggregate(reports, mode: str = "mean") -> dict[str, float | None]:
    """Dataset-level metrics.

    ``mode="mean"`` averages per-image values, skipping absent AJIO/ACCO;
    ``mode="pooled"`` sums the underlying counts over all images first.
    """
    reports = list(reports)
    if mode == "mean":
        out = {}
        for name in METRIC_NAMES:
            vals = [getattr(r, name) for r in reports if getattr(r, name) is not None]
            out[name] = math.fsum(vals) / len(vals) if vals else None
        return out
    if mode != "pooled":
        raise ValueError(f"unknown aggregation mode {mode!r}")

    def ratio(num, den, empty):
        return num / den if den else empty

    tp = sum(r.match.tp for r in reports)
    fp = sum(r.match.fp for r in reports)
    fn = sum(r.match.fn for r in reports)
    n_inst = sum(r.n_gt + r.n_pred for r in reports)
    if n_inst == 0:
        rq = sq = 1.0
    else:
        rq = 2 * tp / (2 * tp + fp + fn)
        sq = float(sum(r.iou_sum for r in reports) / tp) if tp else 0.0
    n_o = sum(r.n_overlapped for r in reports)
    return {
        "aji": ratio(sum(r.aji_inter for r in reports), sum(r.aji_union for r in reports), 1.0),
        "dice": ratio(2 * sum(r.dice_inter for r in reports), sum(r.dice_total for r in reports), 1.0),
        "rq": rq,
        "sq": sq,
        "pq": rq * sq,
        "ajio": ratio(sum(r.ajio_inter for r in reports), sum(r.ajio_union for r in reports), None)
        if n_o
        else None,
        "acco": sum(r.n_overlapped_matched for r in reports) / n_o if n_o else None,
    }
