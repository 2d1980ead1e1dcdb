"""Fused potential map over static and motion-swept dynamic obstacles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.ndimage import distance_transform_edt
from scipy.spatial import cKDTree

from .sim import StaticMap
from .track import Track, predict_path
from .tsdf import BoundsError


@dataclass(frozen=True)
class Window:
    """Axis-aligned cell window; same cell convention as ``StaticMap``."""

    origin: tuple[float, float]
    shape: tuple[int, int]
    resolution: float

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return (math.floor((y - self.origin[1]) / self.resolution),
                math.floor((x - self.origin[0]) / self.resolution))

    def cell_center(self, i: int, j: int) -> tuple[float, float]:
        return (self.origin[0] + (j + 0.5) * self.resolution,
                self.origin[1] + (i + 0.5) * self.resolution)

    def in_bounds(self, x: float, y: float) -> bool:
        i, j = self.cell_of(x, y)
        return 0 <= i < self.shape[0] and 0 <= j < self.shape[1]

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """1D arrays of column x-centers and row y-centers."""
        h, w = self.shape
        xs = self.origin[0] + (np.arange(w) + 0.5) * self.resolution
        ys = self.origin[1] + (np.arange(h) + 0.5) * self.resolution
        return xs, ys

    def clamp(self, x: float, y: float) -> tuple[float, float]:
        """Nearest cell center inside the window."""
        i, j = self.cell_of(x, y)
        i = min(max(i, 0), self.shape[0] - 1)
        j = min(max(j, 0), self.shape[1] - 1)
        if self.cell_of(x, y) == (i, j):
            return x, y
        return self.cell_center(i, j)

    def box_mask(self, x0: float, y0: float, x1: float, y1: float) -> np.ndarray:
        """Cells whose centers lie in the closed box."""
        xs, ys = self.centers()
        cols = (xs >= x0) & (xs <= x1)
        rows = (ys >= y0) & (ys <= y1)
        return rows[:, None] & cols[None, :]

    @classmethod
    def of_map(cls, m: StaticMap) -> Window:
        return cls(m.origin, m.shape, m.resolution)

    @classmethod
    def around(cls, m: StaticMap, center: tuple[float, float], size: float) -> Window:
        """Square window of side ``size`` centered near ``center``, aligned to the map grid."""
        n = max(1, int(round(size / m.resolution)))
        ci, cj = m.cell_of(*center)
        i0 = ci - n // 2
        j0 = cj - n // 2
        origin = (m.origin[0] + j0 * m.resolution, m.origin[1] + i0 * m.resolution)
        return cls(origin, (n, n), m.resolution)


def static_mask(m: StaticMap, win: Window) -> np.ndarray:
    """Static occupancy resampled onto ``win``; cells off the map count as occupied."""
    h, w = win.shape
    j0 = int(round((win.origin[0] - m.origin[0]) / m.resolution))
    i0 = int(round((win.origin[1] - m.origin[1]) / m.resolution))
    out = np.ones((h, w), dtype=bool)
    H, W = m.shape
    si0, si1 = max(i0, 0), min(i0 + h, H)
    sj0, sj1 = max(j0, 0), min(j0 + w, W)
    if si0 < si1 and sj0 < sj1:
        out[si0 - i0:si1 - i0, sj0 - j0:sj1 - j0] = m.cells[si0:si1, sj0:sj1]
    return out


@dataclass(frozen=True)
class InflatedObstacle:
    source: object  # "static" or a track id
    cells: np.ndarray  # bool mask over the window
    kind: str  # "static" | "dynamic-swept"
    core: np.ndarray | None = None  # current (uninflated) footprint, dynamic only

    def cell_set(self) -> set[tuple[int, int]]:
        return {(int(i), int(j)) for i, j in zip(*np.nonzero(self.cells))}


def static_obstacle(m: StaticMap, win: Window) -> InflatedObstacle:
    return InflatedObstacle("static", static_mask(m, win), "static")


def sweep_dilate(track: Track, horizon: float, margin: float, footprint_radius: float,
                 win: Window, step: float = 0.1) -> InflatedObstacle:
    """Union of the track's bbox carried along its predicted path, inflated by
    ``margin + footprint_radius``."""
    if not horizon > 0:
        raise ValueError("horizon must be > 0")
    if margin < 0:
        raise ValueError("margin must be >= 0")
    pad = margin + footprint_radius
    x, y = track.position
    ox0, oy0, ox1, oy1 = track.bbox_offsets
    samples = [(x, y)] + predict_path(track, horizon, step)
    mask = np.zeros(win.shape, dtype=bool)
    for px, py in samples:
        mask |= win.box_mask(px + ox0 - pad, py + oy0 - pad, px + ox1 + pad, py + oy1 + pad)
    core = win.box_mask(x + ox0, y + oy0, x + ox1, y + oy1)
    return InflatedObstacle(track.id, mask, "dynamic-swept", core)


def approach_direction(robot_xy, track: Track) -> tuple[float, float]:
    """Unit vector pointing toward where the track is coming from."""
    vx, vy = track.velocity
    s = math.hypot(vx, vy)
    if s > 1e-6:
        return -vx / s, -vy / s
    dx = track.position[0] - robot_xy[0]
    dy = track.position[1] - robot_xy[1]
    d = math.hypot(dx, dy)
    if d == 0:
        return 1.0, 0.0
    return dx / d, dy / d


def clearance(m: StaticMap, x: float, y: float) -> float:
    """Distance from the cell holding (x, y) to the nearest occupied cell center."""
    dist = _static_edt(m)
    i, j = m.cell_of(x, y)
    if not (0 <= i < m.shape[0] and 0 <= j < m.shape[1]):
        return 0.0
    return float(dist[i, j])


_EDT_CACHE: dict[int, tuple[StaticMap, np.ndarray]] = {}


def _static_edt(m: StaticMap) -> np.ndarray:
    hit = _EDT_CACHE.get(id(m))
    if hit is not None and hit[0] is m:
        return hit[1]
    if m.cells.any():
        dist = distance_transform_edt(~m.cells, sampling=m.resolution)
    else:
        dist = np.full(m.shape, np.inf)
    _EDT_CACHE.clear()
    _EDT_CACHE[id(m)] = (m, dist)
    return dist


def choose_local_goal(robot_xy, offending: list[Track], r_goal: float = 1.5,
                      static_map: StaticMap | None = None,
                      saved_goal: tuple[float, float] | None = None) -> tuple[float, float]:
    """Attractive goal for the potential map.

    A saved navigation goal wins outright. Otherwise the goal sits ``r_goal`` from the
    robot, opposite the 1/distance-weighted mean approach direction; when that mean
    cancels out, the perpendicular side with more static clearance is used.
    """
    if saved_goal is not None:
        return float(saved_goal[0]), float(saved_goal[1])
    if not offending:
        raise ValueError("at least one offending track required")
    rx, ry = robot_xy
    mx = my = wsum = 0.0
    for t in offending:
        d = math.hypot(t.position[0] - rx, t.position[1] - ry)
        wgt = 1.0 / max(d, 1e-6)
        ax, ay = approach_direction(robot_xy, t)
        mx += wgt * ax
        my += wgt * ay
        wsum += wgt
    norm = math.hypot(mx, my)
    if norm > 1e-9 * wsum:
        return rx - r_goal * mx / norm, ry - r_goal * my / norm
    ax, ay = approach_direction(robot_xy, offending[0])
    px, py = -ay, ax
    left = (rx + r_goal * px, ry + r_goal * py)
    right = (rx - r_goal * px, ry - r_goal * py)
    if static_map is None:
        return left
    return left if clearance(static_map, *left) >= clearance(static_map, *right) else right


@dataclass(frozen=True)
class FieldParams:
    alpha: float = 1.0
    beta: float = 25.0
    d0: float = 1.0
    threshold: float = 90.0
    u_cap: float = 1000.0


def repulsive(d, beta: float, d0: float, u_cap: float):
    """Repulsive potential of a clearance ``d`` (array or scalar), capped at ``u_cap``."""
    d = np.asarray(d, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = 0.5 * beta * (1.0 / d - 1.0 / d0) ** 2
    u = np.where(d <= d0, np.minimum(raw, u_cap), 0.0)
    return np.where(d == 0.0, u_cap, u)


@dataclass(frozen=True, eq=False)
class PotentialMap:
    resolution: float
    origin: tuple[float, float]
    U: np.ndarray
    feasible: np.ndarray
    goal: tuple[float, float]
    params: FieldParams
    claimed: np.ndarray
    hard: np.ndarray  # static cells and current dynamic footprints
    distance: np.ndarray  # clearance of every cell center
    obstacles: tuple[InflatedObstacle, ...] = field(default=(), repr=False)

    @property
    def window(self) -> Window:
        return Window(self.origin, self.U.shape, self.resolution)

    @property
    def shape(self) -> tuple[int, int]:
        return self.U.shape

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return self.window.cell_of(x, y)

    def cell_center(self, i: int, j: int) -> tuple[float, float]:
        return self.window.cell_center(i, j)

    def in_bounds(self, x: float, y: float) -> bool:
        return self.window.in_bounds(x, y)

    def value_at(self, x: float, y: float) -> float:
        i, j = self._checked_cell(x, y)
        return float(self.U[i, j])

    def is_feasible(self, x: float, y: float) -> bool:
        if not self.in_bounds(x, y):
            return False
        i, j = self.cell_of(x, y)
        return bool(self.feasible[i, j])

    def _checked_cell(self, x: float, y: float) -> tuple[int, int]:
        if not self.in_bounds(x, y):
            raise BoundsError(f"({x:.3f}, {y:.3f}) outside potential map")
        return self.cell_of(x, y)

    @cached_property
    def _claimed_tree(self):
        idx = np.argwhere(self.claimed)
        if len(idx) == 0:
            return None
        pts = np.column_stack((self.origin[0] + (idx[:, 1] + 0.5) * self.resolution,
                               self.origin[1] + (idx[:, 0] + 0.5) * self.resolution))
        return cKDTree(pts)


def distance_to_obstacles(pmap: PotentialMap, x) -> float:
    """Euclidean distance from ``x`` to the nearest claimed cell center; 0 inside one."""
    i, j = pmap._checked_cell(float(x[0]), float(x[1]))
    if pmap.claimed[i, j]:
        return 0.0
    tree = pmap._claimed_tree
    if tree is None:
        return math.inf
    d, _ = tree.query((float(x[0]), float(x[1])))
    return float(d)


def build_potential(static_map: StaticMap | None, obstacles: list[InflatedObstacle], x_g,
                    params: FieldParams = FieldParams(), window: Window | None = None) -> PotentialMap:
    """Attractive + repulsive potential on every cell center, and its feasible mask.

    ``static_map`` (when given) contributes its occupied cells inside ``window``; the
    window defaults to the whole map.
    """
    p = params
    if p.alpha < 0 or p.beta < 0:
        raise ValueError("alpha and beta must be >= 0")
    if not p.d0 > 0:
        raise ValueError("d0 must be > 0")
    if window is None:
        if static_map is None:
            raise ValueError("window required without a static map")
        window = Window.of_map(static_map)
    gx, gy = float(x_g[0]), float(x_g[1])
    if not window.in_bounds(gx, gy):
        raise BoundsError(f"goal ({gx:.3f}, {gy:.3f}) outside potential map")
    obs = list(obstacles)
    if static_map is not None:
        obs.insert(0, static_obstacle(static_map, window))
    claimed = np.zeros(window.shape, dtype=bool)
    hard = np.zeros(window.shape, dtype=bool)
    for o in obs:
        claimed |= o.cells
        if o.kind == "static":
            hard |= o.cells
        elif o.core is not None:
            hard |= o.core
    if claimed.any():
        dist = distance_transform_edt(~claimed, sampling=window.resolution)
    else:
        dist = np.full(window.shape, np.inf)
    xs, ys = window.centers()
    u_att = 0.5 * p.alpha * ((xs[None, :] - gx) ** 2 + (ys[:, None] - gy) ** 2)
    U = u_att + repulsive(dist, p.beta, p.d0, p.u_cap)
    feasible = U <= p.threshold
    for a in (U, feasible, claimed, hard, dist):
        a.setflags(write=False)
    return PotentialMap(window.resolution, window.origin, U, feasible, (gx, gy), p,
                        claimed, hard, dist, tuple(obs))


def map_image(pmap: PotentialMap) -> bytes:
    """Potential as grayscale (white = threshold or above)."""
    from .tsdf import to_pgm
    return to_pgm(pmap.U, 0.0, pmap.params.threshold)


def feasible_image(pmap: PotentialMap) -> bytes:
    from .tsdf import to_pgm
    return to_pgm(pmap.feasible.astype(float), 0.0, 1.0)
