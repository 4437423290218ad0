import numpy as np
import pytest
from hypothesis import given, strategies as st

from aclspc.core import CloudError, SeededRng, as_cloud, center_and_scale, resample

from strategies import clouds


def test_as_cloud_rejects_bad_input():
    with pytest.raises(CloudError, match="empty"):
        as_cloud(np.zeros((0, 3)))
    with pytest.raises(CloudError):
        as_cloud(np.zeros((4, 2)))
    with pytest.raises(CloudError, match="non-finite"):
        as_cloud([[0.0, np.nan, 1.0]])
    assert as_cloud([1, 2, 3]).shape == (1, 3)


def test_resample_single_point_repeats_it():
    a = np.array([[0.25, -1.0, 3.0]])
    out = resample(a, 3, SeededRng(7))
    assert np.array_equal(out, np.repeat(a, 3, axis=0))


@pytest.mark.parametrize("seed", range(5))
def test_resample_members_of_three(seed):
    pts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=float)
    out = resample(pts, 3, SeededRng(seed))
    assert out.shape == (3, 3)
    assert all(any(np.array_equal(o, p) for p in pts) for o in out)


def test_resample_sphere_points_stay_on_sphere():
    g = np.random.default_rng(0).standard_normal((1000, 3))
    sphere = g / np.linalg.norm(g, axis=1, keepdims=True)
    out = resample(sphere, 3096, SeededRng(1))
    assert out.shape == (3096, 3)
    assert np.abs(np.linalg.norm(out, axis=1) - 1).max() < 1e-9


def test_resample_rejects_nonpositive_n():
    with pytest.raises(ValueError):
        resample([[0, 0, 0]], 0, SeededRng(0))


def test_center_and_scale_hand_example():
    out = center_and_scale([[1, 1, 1], [3, 1, 1]])
    assert np.array_equal(out, [[-0.5, 0, 0], [0.5, 0, 0]])


def test_center_and_scale_idempotent_on_normalized_cloud():
    pts = np.array([[-0.5, 0.25, 0.0], [0.5, -0.25, 0.0]])
    assert np.array_equal(center_and_scale(pts), pts)


def test_center_and_scale_degenerate_cloud_goes_to_origin():
    assert np.array_equal(center_and_scale([[5, 5, 5]] * 4), np.zeros((4, 3)))


@given(clouds(min_size=2))
def test_center_and_scale_properties(pts):
    out = center_and_scale(pts)
    assert np.abs(out.mean(axis=0)).max() < 1e-9
    extent = np.abs(out).max()
    assert extent == 0.0 or extent == 0.5


def test_rng_determinism_and_forks():
    a, b = SeededRng(3), SeededRng(3)
    assert np.array_equal(a.uniform(size=5), b.uniform(size=5))
    # forking neither depends on nor advances the parent's position
    c = SeededRng(3)
    f1 = c.fork(1, 2).uniform(size=4)
    c.uniform(size=10)
    assert np.array_equal(f1, c.fork(1, 2).uniform(size=4))
    assert not np.array_equal(f1, c.fork(1, 3).uniform(size=4))
    assert not np.array_equal(f1, SeededRng(4).fork(1, 2).uniform(size=4))


@given(st.integers(0, 2**63 - 1))
def test_rng_seed_roundtrip(seed):
    assert SeededRng(seed).seed == seed
