import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nucbend.imgcore import LabelMap
from nucbend.metrics import (
    METRIC_NAMES,
    acco,
    aggregate,
    aji,
    ajio,
    dice_global,
    evaluate,
    panoptic,
)

from fixtures import dihedral, merged_pair, random_label_map, random_pairs, perturbed
from metric_oracle import matching_is_unique, mismatches, oracle


def blank(h=6, w=8):
    return np.zeros((h, w), dtype=np.int64)


def test_identity_scores_one():
    gt, _ = merged_pair()
    rep = evaluate(gt, gt)
    assert all(v == 1.0 for v in rep.values().values())
    assert rep.n_overlapped == 2


def test_merged_pair():
    gt, pred = merged_pair()
    rep = evaluate(gt, pred)
    assert (rep.aji, rep.dice, rep.pq, rep.ajio, rep.acco) == (0.5, 1.0, 0.0, 0.5, 0.0)
    assert (rep.match.tp, rep.match.fp, rep.match.fn) == (0, 1, 2)


def test_aji_examples():
    gt = blank()
    gt[0:2, 0:2] = 1
    gt[3:5, 3:5] = 2
    merged = (gt > 0).astype(np.int64)
    assert aji(gt, merged) == 0.5
    one = blank()
    one[0:2, 0:2] = 1
    spurious = one.copy()
    spurious[3:5, 3:5] = 2
    assert aji(one, spurious) == 0.5
    assert aji(blank(), blank()) == 1.0
    assert aji(blank(), one) == 0.0


def test_dice_examples():
    gt, pred = merged_pair()
    assert dice_global(gt, pred) == 1.0
    other = blank()
    other[5, 0] = 1
    assert dice_global(gt, other) == 0.0
    assert dice_global(blank(), blank()) == 1.0


def test_panoptic_single_pair():
    gt = blank(1, 10)
    gt[0, 0:6] = 1
    pred = blank(1, 10)
    pred[0, 0:10] = 1  # IoU 6/10
    match, rq, sq, pq = panoptic(gt, pred)
    assert (rq, sq, pq) == (1.0, 0.6, 0.6)
    assert match.pairs == ((1, 1, 0.6),)


def test_panoptic_empty_convention():
    _, rq, sq, pq = panoptic(blank(), blank())
    assert (rq, sq, pq) == (1.0, 1.0, 1.0)


def test_ajio_acco_examples():
    gt, pred = merged_pair()
    assert ajio(gt, pred, {1, 2}) == 0.5
    assert acco(gt, pred, {1, 2}) == 0.0
    assert ajio(gt, pred, set()) is None
    assert acco(gt, pred, set()) is None
    with pytest.raises(ValueError):
        ajio(gt, pred, {9})


def test_acco_partial_recovery():
    gt = blank(4, 12)
    gt[0:4, 0:5] = 1
    gt[0:4, 5:10] = 2
    pred = blank(4, 12)
    pred[0:4, 0:4] = 7  # Jaccard 16/20 with nucleus 1
    assert acco(gt, pred, {1, 2}) == 0.5


def test_empty_prediction():
    gt, _ = merged_pair()
    rep = evaluate(gt, blank())
    assert (rep.aji, rep.dice, rep.pq, rep.acco) == (0.0, 0.0, 0.0, 0.0)


def test_absent_overlap_metrics():
    gt = blank()
    gt[0:2, 0:2] = 1
    rep = evaluate(gt, gt)
    assert rep.ajio is None and rep.acco is None
    assert rep.n_overlapped == 0


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        evaluate(blank(4, 4), blank(4, 5))


def test_tau_validation():
    gt, pred = merged_pair()
    with pytest.raises(ValueError):
        evaluate(gt, pred, tau=1.0)


def test_oracle_random_pairs():
    for gt, pred in random_pairs(150, seed=99):
        want = oracle(gt, pred)
        rep = evaluate(LabelMap(gt), LabelMap(pred))
        assert mismatches(rep, want) == []
        assert matching_is_unique([(g, p) for g, p, _ in rep.match.pairs])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_invariants(seed):
    rng = np.random.default_rng(seed)
    gt = random_label_map(rng, 20, 20, n_blobs=5).labels
    pred = perturbed(rng, gt)
    rep = evaluate(gt, pred)
    for name, v in rep.values().items():
        assert v is None or 0.0 <= v <= 1.0, name
    assert rep.pq == rep.rq * rep.sq
    assert rep.match.tp + rep.match.fn == rep.n_gt
    assert rep.match.tp + rep.match.fp == rep.n_pred
    # simultaneous dihedral transforms leave every metric unchanged
    for g, p in zip(dihedral(gt), dihedral(pred)):
        assert evaluate(np.ascontiguousarray(g), np.ascontiguousarray(p)).values() == rep.values()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_relabeling_invariance(seed):
    rng = np.random.default_rng(seed)
    gt = random_label_map(rng, 20, 20, n_blobs=5).labels
    pred = perturbed(rng, gt)
    base = evaluate(gt, pred).values()
    # any relabeling of gt
    perm = np.concatenate([[0], rng.permutation(np.arange(1, gt.max() + 1)) + 5])
    assert evaluate(perm[gt], pred).values() == base
    # order-preserving relabeling of pred (ties go to the smaller id)
    ids = np.unique(pred[pred > 0])
    new = np.cumsum(rng.integers(1, 4, len(ids)))
    lut = np.zeros(pred.max() + 1, dtype=np.int64)
    lut[ids] = new
    assert evaluate(gt, lut[pred]).values() == base


def test_aggregate_modes():
    gt, pred = merged_pair()
    reps = [evaluate(gt, pred), evaluate(gt, gt)]
    mean = aggregate(reps)
    assert list(mean) == list(METRIC_NAMES)
    assert mean["aji"] == 0.75
    assert mean["acco"] == 0.5
    pooled = aggregate(reps, mode="pooled")
    assert pooled["aji"] == (12 + 12) / (24 + 12)
    assert pooled["dice"] == 1.0
    single = blank()
    single[0, 0] = 1
    skipped = aggregate([evaluate(single, single), evaluate(gt, pred)])
    assert skipped["acco"] == 0.0
    with pytest.raises(ValueError):
        aggregate(reps, mode="median")
