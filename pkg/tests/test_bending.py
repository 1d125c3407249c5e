import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nucbend.bending import (
    KAPPA_CAP,
    BendingParams,
    bending_loss,
    curvature,
    is_concave,
    pattern_table,
    point_bending,
    polygon_bending_gradient,
)
from nucbend.contour import trace_contours
from nucbend.imgcore import LabelMap, Point

from fixtures import dihedral, disc_pair, random_label_map, random_noise_map, square

quiet = pytest.mark.filterwarnings("ignore::nucbend.contour.DiagnosticWarning")

RING = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)]


def turning_energy(a, b, weight=1.0):
    """Oracle via the turning angle: kappa = 2 tan(phi / 2)."""
    v1 = (-a[0], -a[1])
    phi = math.atan2(v1[0] * b[1] - v1[1] * b[0], v1[0] * b[0] + v1[1] * b[1])
    kappa = 2 * math.tan(abs(phi) / 2)
    return weight * kappa**2 / (math.hypot(*a) + math.hypot(*b))


# frozen from turning_energy at mu=20
CONVEX_LEVELS = [0.0, 0.2843, 1.4142, 2.0, 9.6569]
CONCAVE_LEVELS = [0.0, 5.6854, 28.2843, 40.0, 193.1371]


def test_curvature_examples():
    assert curvature((1, 0), (1, 0)) == 0.0
    assert curvature((1, 0), (0, 1)) == 2.0
    assert curvature((1, 0), (-1, 1)) == pytest.approx(2 * (math.sqrt(2) + 1), abs=1e-12)
    assert curvature((1, 0), (-1, 0)) == KAPPA_CAP
    assert curvature((1, 1), (-1, -1)) == KAPPA_CAP
    with pytest.raises(ValueError):
        curvature((0, 0), (1, 0))


@given(st.floats(-np.pi, np.pi), st.floats(0.1, 10), st.floats(0.1, 10))
def test_curvature_matches_half_angle_tangent(phi, l1, l2):
    v1 = (l1, 0.0)
    v2 = (l2 * math.cos(phi), l2 * math.sin(phi))
    expected = 2 * math.tan(abs(phi) / 2)
    if math.cos(phi) < -0.99:
        return  # near reversal, tangent blows up
    assert curvature(v1, v2) == pytest.approx(expected, rel=1e-9, abs=1e-12)


def test_pattern_table_against_oracle():
    table = pattern_table(BendingParams(mu=20))
    assert len(table) == 28
    assert sorted({p.group for p in table}) == [1, 2, 3, 4, 5]
    for p in table:
        assert p.convex == pytest.approx(turning_energy(p.neighbor_a, p.neighbor_b), abs=1e-12)
        assert p.concave == pytest.approx(turning_energy(p.neighbor_a, p.neighbor_b, 20.0), abs=1e-10)
    assert sorted({round(p.convex, 4) for p in table}) == CONVEX_LEVELS
    assert sorted({round(p.concave, 4) for p in table}) == CONCAVE_LEVELS
    sizes = [sum(p.group == g for p in table) for g in range(1, 6)]
    assert sizes == [4, 8, 4, 4, 8]


def test_pattern_table_mu_one_collapses():
    assert all(p.convex == p.concave for p in pattern_table(BendingParams(mu=1)))


def test_params_validation():
    for kw in ({"mu": 0.5}, {"alpha": -1}, {"concavity_extent": 0}, {"kappa_cap": 0}):
        with pytest.raises(ValueError):
            BendingParams(**kw)


def test_square_loss():
    rep = bending_loss(square(4))
    assert rep.m == 12
    assert rep.loss == pytest.approx(8 / 12, abs=1e-15)
    assert sorted(rep.energy.tolist()) == [0.0] * 8 + [2.0] * 4
    assert not rep.concave.any()


def test_empty_map_loss():
    rep = bending_loss(LabelMap(np.zeros((4, 4), dtype=np.int64)))
    assert rep.loss == 0.0
    assert rep.m == 0


def test_tiny_contours_have_zero_energy():
    lab = np.zeros((5, 5), dtype=np.int64)
    lab[1, 1] = 1
    lab[3, 2:4] = 2
    rep = bending_loss(LabelMap(lab))
    assert rep.m == 3
    assert rep.loss == 0.0


def test_square_corner_is_convex():
    sq = square(4, pad=1)
    (c,) = trace_contours(sq).contours
    mask = sq.labels == 1
    assert is_concave(c, 0, 1, mask) == 0
    pb = point_bending(c, 0, BendingParams(), mask)
    assert pb.energy == 2.0
    assert pb.kappa == 2.0
    assert set(pb.chosen_neighbors) == {Point(2, 1), Point(1, 2)}
    # straight edge point
    assert point_bending(c, 1, BendingParams(), mask).energy == 0.0


def test_merged_disc_neck_is_concave():
    merged, separated = disc_pair(10, 14)
    rep = bending_loss(merged)
    neck = np.flatnonzero(rep.concave)
    assert len(neck) >= 2
    assert np.allclose(rep.energy[neck], 20 * 4 / (2 * math.sqrt(2)))
    assert rep.loss > bending_loss(separated).loss
    assert bending_loss(separated).max_energy <= 9.66


def test_spur_reversal_energy():
    lab = np.zeros((3, 5), dtype=np.int64)
    lab[1, 1:4] = 1
    rep = bending_loss(LabelMap(lab))
    # bar ends reverse direction: capped curvature over two unit edges
    ends = rep.energy[[0, 2]]
    assert np.allclose(ends, KAPPA_CAP**2 / 2)


@quiet
@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_points_reproduce_pattern_values(seed):
    rng = np.random.default_rng(seed)
    lm = random_noise_map(rng, 12, 12, n_ids=2, density=0.7)
    params = BendingParams()
    table = {}
    for p in pattern_table(params):
        table[(p.neighbor_a, p.neighbor_b)] = table[(p.neighbor_b, p.neighbor_a)] = p
    rep = bending_loss(lm, params)
    for i in range(rep.m):
        if rep.chosen[i, 0, 0] < 0:
            assert rep.energy[i] == 0.0
            continue
        c = rep.points[i]
        a = tuple((rep.chosen[i, 0] - c).tolist())
        b = tuple((rep.chosen[i, 1] - c).tolist())
        if a == b:
            # spur tip: capped curvature over the out-and-back edge pair
            expected = KAPPA_CAP**2 / (2 * math.hypot(*a)) * (20.0 if rep.concave[i] else 1.0)
        else:
            p = table[(a, b)]
            expected = p.concave if rep.concave[i] else p.convex
        assert rep.energy[i] == pytest.approx(expected, rel=1e-12, abs=1e-12)
        assert rep.energy[i] >= 0.0


@quiet
@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_dihedral_invariance(seed):
    lm = random_label_map(np.random.default_rng(seed), 24, 20)
    losses = {bending_loss(LabelMap(np.ascontiguousarray(t))).loss for t in dihedral(lm.labels)}
    assert len(losses) == 1


@quiet
@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_concave_is_mu_times_convex(seed):
    lm = random_label_map(np.random.default_rng(seed), 20, 20)
    a = bending_loss(lm, BendingParams(mu=1.0))
    b = bending_loss(lm, BendingParams(mu=20.0))
    # at mu=1 concavity does not change the energy, so pair choices match
    flagged = b.concave.astype(bool)
    same_pair = (a.chosen == b.chosen).all(axis=(1, 2))
    sel = flagged & same_pair
    assert np.allclose(b.energy[sel], 20.0 * a.energy[sel], rtol=1e-12, atol=0)


@quiet
@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1, 50), st.floats(1, 50))
def test_monotone_in_mu(seed, mu1, mu2):
    lm = random_label_map(np.random.default_rng(seed), 20, 20)
    lo, hi = sorted((mu1, mu2))
    assert bending_loss(lm, BendingParams(mu=lo)).loss <= bending_loss(lm, BendingParams(mu=hi)).loss


def test_short_contour_concavity_warns():
    lab = np.zeros((5, 5), dtype=np.int64)
    lab[1:3, 1:3] = 1
    (c,) = trace_contours(LabelMap(lab)).contours
    with pytest.warns(UserWarning):
        pb = point_bending(c, 0, BendingParams(concavity_extent=2), lab == 1)
    assert pb.concave == 0


# --- polygon gradient -------------------------------------------------------


def loop_energy(x, flags, mu):
    """Plain-loop oracle for the polygon mean energy."""
    n = len(x)
    total = 0.0
    for i in range(n):
        a, c, b = x[i - 1], x[i], x[(i + 1) % n]
        v1 = (c[0] - a[0], c[1] - a[1])
        v2 = (b[0] - c[0], b[1] - c[1])
        kappa = curvature(v1, v2)
        total += kappa**2 * (mu if flags[i] else 1.0) / (math.hypot(*v1) + math.hypot(*v2))
    return total / n


def random_polygon(rng, n):
    angles = np.sort(rng.uniform(0, 2 * np.pi, n))
    radii = rng.uniform(0.5, 1.5, n)
    return np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1) * 10


def fd_gradient(x, flags, mu, h=1e-5):
    g = np.zeros_like(x)
    for i in range(x.shape[0]):
        for j in range(2):
            xp, xm = x.copy(), x.copy()
            xp[i, j] += h
            xm[i, j] -= h
            g[i, j] = (loop_energy(xp, flags, mu) - loop_energy(xm, flags, mu)) / (2 * h)
    return g


@pytest.mark.parametrize("seed", range(8))
def test_polygon_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    x = random_polygon(rng, int(rng.integers(6, 20)))
    flags = rng.integers(0, 2, len(x))
    loss, grad = polygon_bending_gradient(x, flags, BendingParams(mu=20))
    assert loss == pytest.approx(loop_energy(x, flags, 20.0), rel=1e-12)
    fd = fd_gradient(x, flags, 20.0)
    assert np.linalg.norm(grad - fd) / np.linalg.norm(fd) < 1e-4


def test_polygon_unit_square():
    sq = [(0, 0), (0, 1), (1, 1), (1, 0)]
    loss, grad = polygon_bending_gradient(sq, [0, 0, 0, 0])
    assert loss == 2.0
    mags = np.hypot(grad[:, 0], grad[:, 1])
    assert np.allclose(mags, mags[0])


def test_polygon_regular_symmetry():
    t = np.linspace(0, 2 * np.pi, 9)[:-1]
    x = np.stack([np.cos(t), np.sin(t)], axis=1)
    _, grad = polygon_bending_gradient(x, np.zeros(8))
    mags = np.hypot(grad[:, 0], grad[:, 1])
    assert np.allclose(mags, mags[0], rtol=1e-12)


def test_polygon_errors():
    with pytest.raises(ValueError):
        polygon_bending_gradient([(0, 0), (1, 0)], [0, 0])
    with pytest.raises(ValueError):
        polygon_bending_gradient([(0, 0), (0, 0), (1, 1)], [0, 0, 0])
    with pytest.raises(ValueError):
        polygon_bending_gradient([(0, 0), (1, 0), (2, 0), (1, 0)], [0, 0, 0, 0])
