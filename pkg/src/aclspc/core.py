"""Point-cloud value handling, seeded randomness and normalization helpers.

Point clouds are plain ``(N, 3)`` float64 numpy arrays. Functions here
validate their inputs with :func:`as_cloud` and never modify them in place.
"""
from __future__ import annotations

import numpy as np


class CloudError(ValueError):
    """Raised for empty, malformed or non-finite point clouds."""


def as_cloud(points, *, copy: bool = False) -> np.ndarray:
    """Validate ``points`` and return them as a C-contiguous ``(N, 3)`` float64 array."""
    arr = np.array(points, dtype=np.float64, copy=copy or None, order="C")
    if arr.ndim == 1 and arr.size == 3:
        arr = arr.reshape(1, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise CloudError(f"expected an (N, 3) array, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise CloudError("empty cloud")
    if not np.isfinite(arr).all():
        raise CloudError("cloud contains non-finite coordinates")
    return arr


class SeededRng:
    """Single-owner random stream. Children are derived by reseeding, never shared.

    Wraps :class:`numpy.random.Generator` (PCG64) so that the same seed always
    yields the same sequence of draws.
    """

    def __init__(self, seed: int | np.random.SeedSequence = 0):
        if isinstance(seed, np.random.SeedSequence):
            self._seq = seed
        else:
            self._seq = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF)
        self.gen = np.random.Generator(np.random.PCG64(self._seq))

    @property
    def seed(self) -> int:
        return int(self._seq.entropy)

    def fork(self, *key: int) -> "SeededRng":
        """Independent child stream keyed by ``key``; does not advance this stream."""
        seq = np.random.SeedSequence(self._seq.entropy,
                                     spawn_key=tuple(self._seq.spawn_key) + tuple(int(k) for k in key))
        return SeededRng(seq)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n)

    def normal(self, size=None):
        return self.gen.standard_normal(size)


def resample(cloud, n: int, rng: SeededRng) -> np.ndarray:
    """Draw ``n`` points uniformly with replacement from ``cloud``."""
    pts = as_cloud(cloud)
    if n < 1:
        raise ValueError("n must be >= 1")
    idx = rng.integers(0, pts.shape[0], size=n)
    return pts[idx]


def center_and_scale(cloud) -> np.ndarray:
    """Move the centroid to the origin and scale so the largest |coordinate| is 0.5.

    A cloud with zero extent is only centered.
    """
    pts = as_cloud(cloud)
    if not np.ptp(pts, axis=0).any():
        # the rounded mean of identical values can miss them by an ulp
        return np.zeros_like(pts)
    centered = pts - pts.mean(axis=0)
    extent = np.abs(centered).max()
    # divide first so the extreme coordinate maps to exactly +-0.5
    return (centered / extent) * 0.5
