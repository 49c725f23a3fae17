import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from synthbound.core import Dataset, InvalidInputError
from synthbound.partition import assign, assign_many, build, occupied, radii


def _dataset(points, labels=None):
    points = np.asarray(points, dtype=float)
    if labels is None:
        labels = np.zeros(len(points))
    return Dataset(points, labels)


def brute_force_two_means(points):
    """Exhaustive 2-means: best centroid pair over all 2-partitions."""
    best, best_sse = None, np.inf
    n = len(points)
    for mask_bits in range(1, 2 ** n - 1):
        mask = np.array([(mask_bits >> i) & 1 for i in range(n)], dtype=bool)
        c0 = points[mask].mean(axis=0)
        c1 = points[~mask].mean(axis=0)
        sse = ((points[mask] - c0) ** 2).sum() + ((points[~mask] - c1) ** 2).sum()
        if sse < best_sse:
            best_sse, best = sse, (c0, c1)
    return best


def test_build_full_k_keeps_test_points_in_order():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(20, 3))
    part = build(_dataset(pts), 20, seed=1)
    np.testing.assert_array_equal(part.centers, pts)


def test_build_degenerate_single_cluster():
    part = build(_dataset([[2.0, 3.0], [2.0, 3.0]]), 1, seed=5)
    np.testing.assert_allclose(part.centers, [[2.0, 3.0]])


def test_build_two_means_matches_brute_force():
    pts = np.array([[0.0, 0.0], [0.0, 2.0], [10.0, 0.0], [10.0, 2.0]])
    expected = brute_force_two_means(pts)
    part = build(_dataset(pts), 2, seed=3)
    got = sorted(map(tuple, part.centers))
    want = sorted(map(tuple, expected))
    np.testing.assert_allclose(got, want)


def test_build_rejects_bad_k():
    data = _dataset([[0.0], [1.0]])
    with pytest.raises(InvalidInputError):
        build(data, 0, seed=0)
    with pytest.raises(InvalidInputError):
        build(data, 3, seed=0)


def test_assign_zero_distance_is_own_region():
    part = build(_dataset(np.arange(8).reshape(4, 2)), 4, seed=0)
    assert assign(part, part.centers[3]) == 3


def test_assign_hand_distances():
    # distances sqrt(17) vs sqrt(37)
    part = build(_dataset([[0.0, 0.0], [10.0, 0.0]]), 2, seed=0)
    assert assign(part, [4.0, 1.0]) == 0


def test_assign_exact_tie_takes_lowest_index():
    part = build(_dataset([[0.0, 0.0], [2.0, 0.0]]), 2, seed=0)
    assert assign(part, [1.0, 0.0]) == 0


def test_assign_dimension_mismatch():
    part = build(_dataset([[0.0, 0.0]]), 1, seed=0)
    with pytest.raises(InvalidInputError):
        assign(part, [1.0])


def test_occupied_full_partition_covers_everything():
    rng = np.random.default_rng(2)
    data = _dataset(rng.normal(size=(15, 2)))
    part = build(data, 15, seed=0)
    assert occupied(part, data) == set(range(15))


def test_occupied_empty_set():
    part = build(_dataset([[0.0], [5.0]]), 2, seed=0)
    assert occupied(part, Dataset.empty(1)) == set()


def test_occupied_single_cell():
    part = build(_dataset([[0.0], [10.0], [20.0]]), 3, seed=0)
    close = _dataset([[0.1], [-0.2], [0.3]])
    assert occupied(part, close) == {0}


def test_radii_max_over_k_nearest():
    data = _dataset([[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]])
    part = build(data, 3, seed=0)
    r = radii(part, data, 2)
    assert r[0] == pytest.approx(3.0)


def test_radii_two_point_symmetry():
    data = _dataset([[0.0], [7.0]])
    part = build(data, 2, seed=0)
    np.testing.assert_allclose(radii(part, data, 1), [7.0, 7.0])


def test_radii_excludes_identical_points():
    # duplicated anchor: brute-force over pairwise distances says the nearest
    # distinct point defines the radius
    data = _dataset([[0.0, 0.0], [0.0, 0.0], [5.0, 0.0]])
    part = build(data, 3, seed=0)
    r = radii(part, data, 1)
    assert r[0] == pytest.approx(5.0)
    assert r[1] == pytest.approx(5.0)


def test_radii_rejects_large_k():
    data = _dataset([[0.0], [1.0]])
    part = build(data, 2, seed=0)
    with pytest.raises(InvalidInputError):
        radii(part, data, 2)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(st.floats(-50, 50), min_size=2, max_size=2),
                min_size=3, max_size=12),
       st.lists(st.floats(-50, 50), min_size=2, max_size=2))
def test_assign_minimizes_distance(points, query):
    pts = np.asarray(points)
    part = build(_dataset(pts), len(pts), seed=0)
    region = assign(part, query)
    dists = np.linalg.norm(pts - np.asarray(query), axis=1)
    assert dists[region] <= dists.min() + 1e-9


@settings(max_examples=30, deadline=None)
@given(st.lists(st.lists(st.floats(-20, 20), min_size=2, max_size=2),
                min_size=3, max_size=10),
       st.lists(st.floats(-100, 100), min_size=2, max_size=2))
def test_radii_translation_invariant(points, offset):
    pts = np.round(np.asarray(points), 3)  # keep separations representable
    if len(np.unique(pts, axis=0)) < 2:
        return
    data = _dataset(pts)
    part = build(data, len(pts), seed=0)
    shifted = _dataset(pts + np.asarray(offset))
    part_shifted = build(shifted, len(pts), seed=0)
    np.testing.assert_allclose(radii(part, data, 1),
                               radii(part_shifted, shifted, 1),
                               rtol=1e-6, atol=1e-9)


def test_assign_many_matches_scalar_assign():
    rng = np.random.default_rng(3)
    data = _dataset(rng.normal(size=(9, 2)))
    part = build(data, 9, seed=0)
    queries = rng.normal(size=(40, 2))
    bulk = assign_many(part, queries)
    assert [assign(part, q) for q in queries] == list(bulk)
