"""Incremental TSDF map and free-space intrusion labelling of dynamic returns."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .sim import SensorFrame, StaticMap


class BoundsError(ValueError):
    """A pose or point lies outside the grid it is applied to."""


def truncate_sdf(sdf: float, tau: float) -> float:
    if not tau > 0:
        raise ValueError("tau must be > 0")
    if abs(sdf) <= tau:
        return sdf
    return math.copysign(tau, sdf)


def fuse_cell(tsdf_t: float, weight_t: float, tsdf_new: float, w_new: float) -> tuple[float, float]:
    """Weighted running average of one cell; returns (tsdf, weight)."""
    if weight_t < 0:
        raise ValueError("weight must be >= 0")
    if not w_new > 0:
        raise ValueError("w_new must be > 0")
    w = weight_t + w_new
    return (tsdf_t * weight_t + tsdf_new * w_new) / w, w


@dataclass
class DynamicPointSet:
    timestamp: float
    points: np.ndarray
    mask: np.ndarray  # per-point flags over the source frame


class TsdfGrid:
    """Fixed-resolution TSDF with per-cell weight, free streak and free label.

    ``tau`` defaults to three cells. Weights saturate at ``w_max`` so that old
    surfaces stay revisable.
    """

    def __init__(self, shape, resolution: float, origin=(0.0, 0.0), tau: float | None = None,
                 n_free: int = 5, w_new: float = 1.0, w_max: float = 100.0):
        if not resolution > 0:
            raise ValueError("resolution must be > 0")
        tau = 3.0 * resolution if tau is None else float(tau)
        if not tau > resolution:
            raise ValueError("tau must exceed one cell")
        self.resolution = float(resolution)
        self.origin = (float(origin[0]), float(origin[1]))
        self.tau = tau
        self.n_free = int(n_free)
        self.w_new = float(w_new)
        self.w_max = float(w_max)
        h, w = shape
        self.tsdf = np.zeros((h, w))
        self.weight = np.zeros((h, w))
        self.free_streak = np.zeros((h, w), dtype=np.int64)
        self.high_conf_free = np.zeros((h, w), dtype=bool)
        self.observed_occupied = np.zeros((h, w), dtype=bool)

    @classmethod
    def for_map(cls, static_map: StaticMap, **kw) -> TsdfGrid:
        return cls(static_map.shape, static_map.resolution, static_map.origin, **kw)

    @property
    def shape(self):
        return self.tsdf.shape

    def copy(self) -> TsdfGrid:
        g = object.__new__(TsdfGrid)
        g.__dict__.update({k: (v.copy() if isinstance(v, np.ndarray) else v)
                           for k, v in self.__dict__.items()})
        return g

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return (math.floor((y - self.origin[1]) / self.resolution),
                math.floor((x - self.origin[0]) / self.resolution))

    def in_bounds(self, x: float, y: float) -> bool:
        i, j = self.cell_of(x, y)
        return 0 <= i < self.shape[0] and 0 <= j < self.shape[1]

    def cells_of(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Row/col indices of ``points`` and a mask of those inside the grid."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        j = np.floor((pts[:, 0] - self.origin[0]) / self.resolution).astype(np.int64)
        i = np.floor((pts[:, 1] - self.origin[1]) / self.resolution).astype(np.int64)
        ok = (i >= 0) & (i < self.shape[0]) & (j >= 0) & (j < self.shape[1])
        return i, j, ok


def integrate_frame(grid: TsdfGrid, frame: SensorFrame, dynamic: np.ndarray | None = None) -> TsdfGrid:
    """Fuse a frame into ``grid`` in place and return it.

    Points flagged in ``dynamic`` contribute only the free space in front of them;
    every other point is a static surface observation.
    """
    sx, sy, _ = frame.sensor_pose
    if not grid.in_bounds(sx, sy):
        raise BoundsError(f"sensor pose ({sx:.3f}, {sy:.3f}) outside TSDF grid")
    pts = np.ascontiguousarray(frame.points, dtype=float).reshape(-1, 2)
    if dynamic is None:
        dyn = np.zeros(len(pts), dtype=np.uint8)
    else:
        dyn = np.ascontiguousarray(dynamic, dtype=np.uint8)
    free_mark = np.zeros(grid.shape, dtype=np.uint8)
    occ_mark = np.zeros(grid.shape, dtype=np.uint8)
    kernels.integrate_rays(
        grid.tsdf, grid.weight, free_mark, occ_mark,
        grid.origin[0], grid.origin[1], grid.resolution, sx, sy,
        pts, dyn, grid.tau, grid.w_new, grid.w_max,
    )
    occ = occ_mark.astype(bool)
    free = free_mark.astype(bool) & ~occ
    grid.free_streak[free] += 1
    grid.free_streak[occ] = 0
    grid.observed_occupied = occ
    return grid


def refresh_free_space(grid: TsdfGrid) -> TsdfGrid:
    """Promote long-free cells to high-confidence free; demote cells seen occupied.

    A cell is promoted once its streak reaches ``n_free`` and its 3x3 block holds no
    surface cell (tsdf < 0) and no unobserved cell.
    """
    h, w = grid.shape
    bad = (grid.tsdf < 0.0) | (grid.weight <= 0.0)
    padded = np.pad(bad, 1, constant_values=True)
    near_bad = np.zeros((h, w), dtype=bool)
    for di in range(3):
        for dj in range(3):
            near_bad |= padded[di:di + h, dj:dj + w]
    promote = (grid.free_streak >= grid.n_free) & ~near_bad
    grid.high_conf_free |= promote
    grid.high_conf_free &= ~grid.observed_occupied
    return grid


def label_dynamic(grid: TsdfGrid, frame: SensorFrame) -> DynamicPointSet:
    """Returns falling in high-confidence free cells, tested before the frame is fused."""
    pts = np.asarray(frame.points, dtype=float).reshape(-1, 2)
    i, j, ok = grid.cells_of(pts)
    mask = np.zeros(len(pts), dtype=bool)
    mask[ok] = grid.high_conf_free[i[ok], j[ok]]
    return DynamicPointSet(frame.timestamp, pts[mask], mask)


def process_frame(grid: TsdfGrid, frame: SensorFrame) -> DynamicPointSet:
    """Label, then fuse with the dynamic returns held out, then refresh labels."""
    dyn = label_dynamic(grid, frame)
    integrate_frame(grid, frame, dyn.mask)
    refresh_free_space(grid)
    return dyn


def to_pgm(values: np.ndarray, lo: float, hi: float) -> bytes:
    """Binary PGM, first image row = top of the map."""
    v = np.clip((np.asarray(values, dtype=float) - lo) / (hi - lo), 0.0, 1.0)
    img = np.round(v * 255).astype(np.uint8)[::-1]
    h, w = img.shape
    return b"P5\n%d %d\n255\n" % (w, h) + img.tobytes()


def grid_image(grid: TsdfGrid) -> bytes:
    """TSDF as a grayscale image; unobserved cells black."""
    v = np.where(grid.weight > 0, grid.tsdf, -grid.tau)
    return to_pgm(v, -grid.tau, grid.tau)
