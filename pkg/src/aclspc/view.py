"""Synthetic partial views: orthographic z-buffer projection and back-projection.

The camera sits on the unit direction

    d(az, el) = (cos(el) sin(az), sin(el), cos(el) cos(az))

with ``y`` as the up axis, and looks back at the origin. In camera space the
view axis is ``-z``; depth is ``-z_cam`` so smaller depth is closer.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SeededRng, as_cloud, resample

AZIMUTH_RANGE = (0.0, 360.0)
ELEVATION_RANGE = (-20.0, 40.0)
DEFAULT_GRID = 64
GRID_MARGIN = 0.01


@dataclass(frozen=True)
class ViewParams:
    azimuth_deg: float
    elevation_deg: float
    grid_resolution: int = DEFAULT_GRID

    def __post_init__(self):
        if not (AZIMUTH_RANGE[0] <= self.azimuth_deg < AZIMUTH_RANGE[1]):
            raise ValueError(f"azimuth {self.azimuth_deg} outside [0, 360)")
        if not (ELEVATION_RANGE[0] <= self.elevation_deg <= ELEVATION_RANGE[1]):
            raise ValueError(f"elevation {self.elevation_deg} outside [-20, 40]")
        if self.grid_resolution < 2:
            raise ValueError("grid_resolution must be >= 2")

    def rotation(self) -> np.ndarray:
        """World-to-camera rotation; its last row is :meth:`camera_direction`."""
        az = np.deg2rad(self.azimuth_deg)
        el = np.deg2rad(self.elevation_deg)
        ca, sa = np.cos(az), np.sin(az)
        ce, se = np.cos(el), np.sin(el)
        rot_up = np.array([[ca, 0.0, -sa], [0.0, 1.0, 0.0], [sa, 0.0, ca]])
        rot_lat = np.array([[1.0, 0.0, 0.0], [0.0, ce, -se], [0.0, se, ce]])
        return rot_lat @ rot_up

    def camera_direction(self) -> np.ndarray:
        az = np.deg2rad(self.azimuth_deg)
        el = np.deg2rad(self.elevation_deg)
        return np.array([np.cos(el) * np.sin(az), np.sin(el), np.cos(el) * np.cos(az)])

    def to_dict(self) -> dict:
        return {"azimuth_deg": self.azimuth_deg, "elevation_deg": self.elevation_deg,
                "grid_resolution": self.grid_resolution}


@dataclass(frozen=True)
class DepthGrid:
    """Per-cell winner of the z-buffer. ``index`` is -1 and ``depth`` inf for empty cells."""
    index: np.ndarray
    depth: np.ndarray
    origin: tuple[float, float]
    cell_size: float

    @property
    def resolution(self) -> int:
        return self.index.shape[0]

    @property
    def cell_diagonal(self) -> float:
        return float(np.sqrt(2.0) * self.cell_size)

    def visible_indices(self) -> np.ndarray:
        """Indices of stored points, in row-major cell order."""
        flat = self.index.ravel()
        return flat[flat >= 0]


def sample_view(rng: SeededRng, grid_resolution: int = DEFAULT_GRID) -> ViewParams:
    az = rng.uniform(*AZIMUTH_RANGE)
    el = rng.uniform(*ELEVATION_RANGE)
    # uniform() is half-open; guard against rounding onto 360
    if az >= AZIMUTH_RANGE[1]:
        az = 0.0
    return ViewParams(float(az), float(el), grid_resolution)


def project_to_depth_grid(cloud, view: ViewParams) -> DepthGrid:
    pts = as_cloud(cloud)
    res = view.grid_resolution
    cam = pts @ view.rotation().T
    depth = -cam[:, 2]

    lo = cam[:, :2].min(axis=0)
    hi = cam[:, :2].max(axis=0)
    side = float((hi - lo).max()) * (1.0 + GRID_MARGIN)
    if side == 0.0:
        side = 1.0
    center = (lo + hi) / 2.0
    origin = center - side / 2.0

    u = (cam[:, :2] - origin) / side
    ij = np.clip(np.floor(u * res).astype(np.int64), 0, res - 1)
    cell = ij[:, 1] * res + ij[:, 0]

    order = np.lexsort((np.arange(len(pts)), depth, cell))
    sorted_cells = cell[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = sorted_cells[1:] != sorted_cells[:-1]
    winners = order[first]

    index = np.full(res * res, -1, dtype=np.int64)
    zbuf = np.full(res * res, np.inf)
    index[cell[winners]] = winners
    zbuf[cell[winners]] = depth[winners]
    return DepthGrid(index.reshape(res, res), zbuf.reshape(res, res),
                     (float(origin[0]), float(origin[1])), side / res)


def visible_points(cloud, view: ViewParams) -> np.ndarray:
    """Original (world-frame) points that win a z-buffer cell."""
    pts = as_cloud(cloud)
    return pts[project_to_depth_grid(pts, view).visible_indices()]


def synthesize_partial(cloud, view: ViewParams, n_out: int, rng: SeededRng) -> np.ndarray:
    """Partial observation of ``cloud`` from ``view``, resampled to ``n_out`` points."""
    return resample(visible_points(cloud, view), n_out, rng)
