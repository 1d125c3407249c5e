"""Synthetic label maps shared by the test modules."""

import numpy as np

from nucbend.imgcore import LabelMap


def square(n=4, pad=2):
    lab = np.zeros((n + 2 * pad, n + 2 * pad), dtype=np.int64)
    lab[pad : pad + n, pad : pad + n] = 1
    return LabelMap(lab)


def disc_pair(radius=10, distance=14, margin=4):
    """Two overlapping discs, as one instance and as a Voronoi split."""
    h = 2 * radius + 2 * margin
    w = 2 * radius + distance + 2 * margin
    yy, xx = np.mgrid[:h, :w]
    cy, c1 = h // 2, margin + radius
    c2 = c1 + distance
    d1 = (yy - cy) ** 2 + (xx - c1) ** 2
    d2 = (yy - cy) ** 2 + (xx - c2) ** 2
    in1, in2 = d1 <= radius**2, d2 <= radius**2
    merged = (in1 | in2).astype(np.int64)
    separated = np.zeros((h, w), dtype=np.int64)
    separated[in2] = 2
    separated[in1 & (~in2 | (d1 <= d2))] = 1
    return LabelMap(merged), LabelMap(separated)


def disc(radius=10, margin=6):
    n = 2 * radius + 2 * margin + 1
    yy, xx = np.mgrid[:n, :n]
    c = n // 2
    return LabelMap((((yy - c) ** 2 + (xx - c) ** 2) <= radius**2).astype(np.int64))


def merged_pair():
    """Two touching 2x3 rectangles and a prediction merging them."""
    gt = np.zeros((6, 8), dtype=np.int64)
    gt[2:4, 1:4] = 1
    gt[2:4, 4:7] = 2
    pred = (gt > 0).astype(np.int64)
    return LabelMap(gt), LabelMap(pred)


def random_label_map(rng, h, w, n_blobs=4, max_id=None):
    """Union of random rectangles and discs with random ids."""
    lab = np.zeros((h, w), dtype=np.int64)
    yy, xx = np.mgrid[:h, :w]
    ids = rng.permutation(np.arange(1, (max_id or n_blobs * 3) + 1))[:n_blobs]
    for i in ids:
        if rng.random() < 0.5:
            y0, x0 = rng.integers(0, h), rng.integers(0, w)
            lab[y0 : y0 + rng.integers(1, max(2, h // 2)), x0 : x0 + rng.integers(1, max(2, w // 2))] = i
        else:
            cy, cx = rng.integers(0, h), rng.integers(0, w)
            r = rng.uniform(1, max(1.5, min(h, w) / 4))
            lab[(yy - cy) ** 2 + (xx - cx) ** 2 <= r * r] = i
    return LabelMap(lab)


def random_noise_map(rng, h, w, n_ids=3, density=0.5):
    lab = rng.integers(1, n_ids + 1, size=(h, w)) * (rng.random((h, w)) < density)
    return LabelMap(lab.astype(np.int64))


def dihedral(a):
    """All 8 rotations/reflections of a 2-D array."""
    out = []
    for t in (a, a.T):
        for k in range(4):
            out.append(np.rot90(t, k))
    return out


def tiny_family():
    """4x4 maps with at most 2 instances: 2x2-block and column-strip labelings."""
    from itertools import product

    maps = {}
    for blocks in product(range(3), repeat=4):
        lab = np.kron(np.array(blocks).reshape(2, 2), np.ones((2, 2), dtype=np.int64))
        maps[lab.tobytes()] = lab
    for cols in product(range(3), repeat=4):
        lab = np.tile(np.array(cols, dtype=np.int64), (4, 1))
        maps[lab.tobytes()] = lab
    return list(maps.values())


def perturbed(rng, lab):
    """A plausible prediction for ``lab``: shifted, relabelled, merged, noisy."""
    pred = np.roll(lab, (rng.integers(-2, 3), rng.integers(-2, 3)), axis=(0, 1))
    ids = np.unique(pred[pred > 0])
    if len(ids) >= 2 and rng.random() < 0.4:
        a, b = rng.choice(ids, 2, replace=False)
        pred = np.where(pred == b, a, pred)
    perm = np.concatenate([[0], rng.permutation(np.arange(1, pred.max() + 1)) + 1])
    pred = perm[pred]
    if rng.random() < 0.5:
        y, x = rng.integers(0, pred.shape[0] - 4), rng.integers(0, pred.shape[1] - 4)
        pred[y : y + rng.integers(1, 5), x : x + rng.integers(1, 5)] = pred.max() + 1
    return pred


def random_pairs(n, size=32, seed=1234):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        gt = random_label_map(rng, size, size, n_blobs=int(rng.integers(0, 8))).labels
        out.append((gt, perturbed(rng, gt)))
    return out
