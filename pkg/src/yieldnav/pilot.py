"""Conflict state machine, risk test, and a grid planner with signed (reversible) segments."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy.ndimage import label

from . import kernels
from .avoid import segment_feasible
from .field import PotentialMap
from .sim import Limits, RobotState, wrap_angle
from .track import Track, predict_path


class NoPath(RuntimeError):
    """Target unreachable through the feasible mask."""


class Mode(str, Enum):
    IDLE = "Idle"
    NAVIGATING = "Navigating"
    AVOIDING = "Avoiding"
    RECOVERING = "Recovering"


@dataclass(frozen=True)
class SavedContext:
    kind: str  # "pose" | "goal"
    x: float
    y: float
    heading: float | None = None

    @property
    def point(self) -> tuple[float, float]:
        return self.x, self.y


@dataclass(frozen=True)
class PilotState:
    mode: Mode = Mode.IDLE
    saved_context: SavedContext | None = None
    clear_timer: float = 0.0
    active_avoidance_point: tuple[float, float] | None = None
    nav_goal: tuple[float, float] | None = None

    def __post_init__(self):
        holding = self.mode in (Mode.AVOIDING, Mode.RECOVERING)
        if holding != (self.saved_context is not None):
            raise ValueError(f"{self.mode.value} with saved_context={self.saved_context}")

    @classmethod
    def start(cls, goal=None) -> PilotState:
        if goal is None:
            return cls(Mode.IDLE)
        return cls(Mode.NAVIGATING, nav_goal=(float(goal[0]), float(goal[1])))


@dataclass(frozen=True)
class PilotParams:
    d_conflict: float = 0.8
    risk_horizon: float = 1.5
    t_clear: float = 1.0
    eps_arrive: float = 0.15
    lambda_pot: float = 0.01
    allow_reverse: bool = True
    lookahead: float = 0.35


def _point_polyline_dist(p: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Distance from each row of ``p`` to the polyline ``poly`` (or point set if one row)."""
    if len(poly) == 1:
        return np.hypot(p[:, 0] - poly[0, 0], p[:, 1] - poly[0, 1])
    a = poly[:-1]
    ab = poly[1:] - a
    ab2 = np.einsum("ij,ij->i", ab, ab)
    ap = p[:, None, :] - a[None, :, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(ab2 > 0, np.einsum("kij,ij->ki", ap, ab) / ab2, 0.0)
    t = np.clip(t, 0.0, 1.0)
    closest = a[None, :, :] + t[:, :, None] * ab[None, :, :]
    d = np.hypot(p[:, None, 0] - closest[:, :, 0], p[:, None, 1] - closest[:, :, 1])
    return d.min(axis=1)


def assess_risk(robot_xy, tracks: list[Track], horizon: float, d_conflict: float,
                route=None, step: float = 0.1) -> tuple[bool, list[int]]:
    """Tracks whose predicted path passes within ``d_conflict`` of the robot or its route.

    ``route`` is the remaining planned polyline; the robot position is always included.
    """
    if not horizon > 0 or not d_conflict > 0:
        raise ValueError("horizon and d_conflict must be > 0")
    pts = [(float(robot_xy[0]), float(robot_xy[1]))]
    if route is not None and len(route):
        pts += [(float(x), float(y)) for x, y in np.asarray(route, dtype=float)[:, :2]]
    poly = np.array(pts)
    offending = []
    for t in tracks:
        samples = np.array([t.position] + predict_path(t, horizon, step))
        if _point_polyline_dist(samples, poly).min() <= d_conflict:
            offending.append(t.id)
    return bool(offending), sorted(offending)


def transition(pilot: PilotState, risk: bool, offending, robot: RobotState, dt: float,
               params: PilotParams = PilotParams(), settled: bool = True) -> PilotState:
    """One tick of the mode machine.

    Arrival needs the robot within ``eps_arrive`` of the target and, when the caller
    tracks it, the path follower reporting that it has settled.
    """
    mode = pilot.mode
    if mode in (Mode.IDLE, Mode.NAVIGATING):
        if risk:
            if mode == Mode.IDLE:
                ctx = SavedContext("pose", robot.x, robot.y, robot.heading)
            else:
                ctx = SavedContext("goal", pilot.nav_goal[0], pilot.nav_goal[1])
            return PilotState(Mode.AVOIDING, ctx, 0.0, None, None)
        if mode == Mode.NAVIGATING and pilot.nav_goal is not None:
            if settled and math.hypot(robot.x - pilot.nav_goal[0],
                                      robot.y - pilot.nav_goal[1]) <= params.eps_arrive:
                return PilotState(Mode.IDLE)
        return pilot
    if risk:
        return replace(pilot, mode=Mode.AVOIDING, clear_timer=0.0)
    if mode == Mode.AVOIDING:
        timer = pilot.clear_timer + dt
        # tolerance absorbs accumulated tick round-off
        if timer >= params.t_clear - 1e-9:
            return replace(pilot, mode=Mode.RECOVERING, clear_timer=timer, active_avoidance_point=None)
        return replace(pilot, clear_timer=timer)
    # Recovering
    ctx = pilot.saved_context
    timer = pilot.clear_timer + dt
    if settled and math.hypot(robot.x - ctx.x, robot.y - ctx.y) <= params.eps_arrive:
        if ctx.kind == "pose":
            return PilotState(Mode.IDLE)
        return PilotState(Mode.NAVIGATING, nav_goal=ctx.point)
    return replace(pilot, clear_timer=timer)


@dataclass(frozen=True)
class LocalPlan:
    waypoints: tuple[tuple[float, float], ...]
    direction_profile: tuple[int, ...]
    speed_profile: tuple[float, ...]
    turns: tuple[float, ...]  # in-place heading change before each segment

    @property
    def length(self) -> float:
        w = self.waypoints
        return sum(math.dist(a, b) for a, b in zip(w, w[1:]))

    def duration(self, omega_max: float) -> float:
        """Nominal execution time: straight segments at speed plus in-place turns."""
        w = self.waypoints
        t = 0.0
        for (a, b), v, turn in zip(zip(w, w[1:]), self.speed_profile, self.turns):
            t += math.dist(a, b) / v + abs(turn) / omega_max
        return t


def _escape_region(pmap: PotentialMap, i: int, j: int) -> np.ndarray:
    soft = ~pmap.feasible & ~pmap.hard
    region = np.zeros(pmap.shape, dtype=bool)
    region[i, j] = True
    if soft[i, j]:
        lab, _ = label(soft, structure=np.ones((3, 3)))
        region |= lab == lab[i, j]
    return region


def grid_path(pmap: PotentialMap, start, target, lam: float = 0.01) -> list[tuple[float, float]]:
    """Cell-center path from ``start`` to ``target`` (both included as given)."""
    sx, sy = float(start[0]), float(start[1])
    tx, ty = float(target[0]), float(target[1])
    if not pmap.is_feasible(tx, ty):
        raise NoPath("target is not feasible")
    if not pmap.in_bounds(sx, sy):
        raise NoPath("start outside map")
    si, sj = pmap.cell_of(sx, sy)
    gi, gj = pmap.cell_of(tx, ty)
    passable = pmap.feasible.copy()
    if not passable[si, sj]:
        passable |= _escape_region(pmap, si, sj)
    cells = kernels.grid_dijkstra(passable.view(np.uint8), np.ascontiguousarray(pmap.U),
                                  pmap.resolution, lam, si, sj, gi, gj)
    if len(cells) == 0:
        raise NoPath("target unreachable")
    inner = [pmap.cell_center(int(i), int(j)) for i, j in cells[1:-1]]
    return [(sx, sy)] + inner + [(tx, ty)]


def _decimate(pmap: PotentialMap, pts: list[tuple[float, float]]) -> list[tuple[float, float]]:
    escape = not pmap.is_feasible(*pts[0])
    out = [pts[0]]
    i = 0
    n = len(pts)
    while i < n - 1:
        k = n - 1
        while k > i + 1 and not segment_feasible(pmap, pts[i], pts[k], escape and i == 0):
            k -= 1
        out.append(pts[k])
        i = k
    return out


def plan_local(pmap: PotentialMap, from_pose: RobotState, target, allow_reverse: bool = True,
               v_max: float = 0.6, lam: float = 0.01) -> LocalPlan:
    """Shortest feasible path to ``target`` shortcut to line-of-sight waypoints.

    With ``allow_reverse`` each segment is driven forward or backward, whichever needs
    the smaller heading change; otherwise every segment is driven forward.
    """
    pts = _decimate(pmap, grid_path(pmap, from_pose.position, target, lam))
    pts = [pts[0]] + [p for a, p in zip(pts, pts[1:]) if math.dist(a, p) > 1e-9]
    heading = from_pose.heading
    dirs, speeds, turns = [], [], []
    for a, b in zip(pts, pts[1:]):
        phi = math.atan2(b[1] - a[1], b[0] - a[0])
        turn = wrap_angle(phi - heading)
        if allow_reverse and abs(turn) > math.pi / 2:
            dirs.append(-1)
            turn = wrap_angle(phi + math.pi - heading)
            heading = wrap_angle(phi + math.pi)
        else:
            dirs.append(1)
            heading = phi
        turns.append(turn)
        speeds.append(v_max)
    return LocalPlan(tuple(pts), tuple(dirs), tuple(speeds), tuple(turns))


@dataclass(frozen=True)
class Command:
    v: float
    omega: float
    arrived: bool = False


def _project(plan: LocalPlan, x: float, y: float) -> tuple[int, float]:
    """Segment index and arc length of the closest point on the plan."""
    best = (math.inf, 0, 0.0)
    s0 = 0.0
    w = plan.waypoints
    for k, (a, b) in enumerate(zip(w, w[1:])):
        ex, ey = b[0] - a[0], b[1] - a[1]
        L2 = ex * ex + ey * ey
        u = 0.0 if L2 == 0 else min(max(((x - a[0]) * ex + (y - a[1]) * ey) / L2, 0.0), 1.0)
        d = math.hypot(a[0] + u * ex - x, a[1] + u * ey - y)
        L = math.sqrt(L2)
        if d <= best[0] + 1e-9:
            best = (d, k, s0 + u * L)
        s0 += L
    return best[1], best[2]


def _point_at(plan: LocalPlan, s: float) -> tuple[float, float]:
    w = plan.waypoints
    for a, b in zip(w, w[1:]):
        L = math.dist(a, b)
        if s <= L and L > 0:
            u = s / L
            return a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])
        s -= L
    return w[-1]


def follow(plan: LocalPlan, robot: RobotState, dt: float, limits: Limits = Limits(),
           eps_arrive: float = 0.15, lookahead: float = 0.35) -> Command:
    """Pure pursuit along the plan with each segment's signed speed."""
    if not plan.waypoints:
        raise ValueError("empty plan")
    gx, gy = plan.waypoints[-1]
    remaining = math.hypot(gx - robot.x, gy - robot.y)
    if remaining <= eps_arrive or len(plan.waypoints) < 2:
        return Command(0.0, 0.0, True)
    k, s = _project(plan, robot.x, robot.y)
    tx, ty = _point_at(plan, s + lookahead)
    sign = plan.direction_profile[k]
    eff = robot.heading if sign > 0 else wrap_angle(robot.heading + math.pi)
    alpha = wrap_angle(math.atan2(ty - robot.y, tx - robot.x) - eff)
    omega = max(-limits.omega_max, min(limits.omega_max, 2.5 * alpha))
    if abs(alpha) > math.pi / 4:
        return Command(0.0, omega)
    speed = min(plan.speed_profile[k], limits.v_max, max(0.15, 1.2 * remaining))
    return Command(sign * speed * math.cos(alpha), omega)
