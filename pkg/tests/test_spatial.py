import numpy as np
import pytest
from hypothesis import given

from aclspc.spatial import brute_force_nearest, brute_force_query, build_index, query_nearest

from oracles import nn_loop
from strategies import clouds, lattice_clouds


def test_single_point_index():
    idx = build_index([[1.0, 2.0, 3.0]])
    for q in np.random.default_rng(0).normal(size=(10, 3)):
        i, d = query_nearest(idx, q)
        assert i == 0
        assert d == pytest.approx(np.linalg.norm(q - [1, 2, 3]), abs=1e-15)


def test_two_point_examples():
    idx = build_index([[0, 0, 0], [1, 0, 0]])
    assert query_nearest(idx, [0.4, 0, 0]) == (0, pytest.approx(0.4, abs=1e-15))
    assert query_nearest(idx, [0.5, 0, 0])[0] == 0  # tie goes to the lower index


def test_query_on_stored_point_is_zero():
    pts = np.random.default_rng(1).uniform(size=(100, 3))
    idx = build_index(pts)
    i, d = idx.query(pts)
    assert np.array_equal(i, np.arange(100))
    assert np.all(d == 0.0)


def test_duplicates_resolve_to_lowest_index():
    pts = np.array([[1, 1, 1], [0, 0, 0], [1, 1, 1], [0, 0, 0]], dtype=float)
    i, _ = build_index(pts).query([[0.9, 0.9, 0.9], [0.1, 0, 0]])
    assert list(i) == [0, 1]


def test_512_random_points_match_brute_force():
    g = np.random.default_rng(2)
    pts = g.uniform(-1, 1, size=(512, 3))
    q = g.uniform(-1.5, 1.5, size=(300, 3))
    i, d = build_index(pts).query(q)
    ri, rd = nn_loop(q, pts)
    assert np.array_equal(i, ri)
    assert np.array_equal(d, rd)


@given(clouds(max_size=200), clouds(max_size=50))
def test_tree_equals_brute_force(target, queries):
    i, d = build_index(target).query(queries)
    bi, bd = brute_force_query(target, queries)
    assert np.array_equal(i, bi)
    assert np.array_equal(d, bd)


@given(lattice_clouds, lattice_clouds)
def test_tree_equals_brute_force_with_ties(target, queries):
    i, d = build_index(target).query(queries)
    bi, bd = nn_loop(queries, target)
    assert np.array_equal(i, bi)
    assert np.array_equal(d, bd)


def test_brute_force_nearest_single_query():
    assert brute_force_nearest([[0, 0, 0], [1, 0, 0]], [0.5, 0, 0]) == (0, 0.5)


def test_index_does_not_alias_input():
    pts = np.zeros((4, 3))
    idx = build_index(pts)
    pts[0] = 10.0
    assert idx.points[0, 0] == 0.0
