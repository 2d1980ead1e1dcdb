"""Planar world: static occupancy, scripted disc agents, unicycle robot, range sensor."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels

BEHAVIORS = ("loop", "once", "hold-at-end")


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    r = math.remainder(a, 2.0 * math.pi)
    if r <= -math.pi:
        r = math.pi
    return r


@dataclass(frozen=True)
class StaticMap:
    """Boolean occupancy grid. ``origin`` is the lower-left corner of cell (0, 0);
    rows run along +y and columns along +x."""

    resolution: float
    origin: tuple[float, float]
    cells: np.ndarray

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError("resolution must be > 0")
        cells = np.ascontiguousarray(self.cells, dtype=bool)
        if cells.ndim != 2 or cells.shape[0] < 1 or cells.shape[1] < 1:
            raise ValueError("cells must be a non-empty 2D grid")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) in world coordinates."""
        h, w = self.cells.shape
        ox, oy = self.origin
        return ox, oy, ox + w * self.resolution, oy + h * self.resolution

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return (math.floor((y - self.origin[1]) / self.resolution),
                math.floor((x - self.origin[0]) / self.resolution))

    def cell_center(self, i: int, j: int) -> tuple[float, float]:
        return (self.origin[0] + (j + 0.5) * self.resolution,
                self.origin[1] + (i + 0.5) * self.resolution)

    def contains(self, x: float, y: float) -> bool:
        i, j = self.cell_of(x, y)
        return 0 <= i < self.cells.shape[0] and 0 <= j < self.cells.shape[1]

    def occupied(self, x: float, y: float) -> bool:
        """Occupancy at a world point; outside the grid counts as occupied."""
        i, j = self.cell_of(x, y)
        if not (0 <= i < self.cells.shape[0] and 0 <= j < self.cells.shape[1]):
            return True
        return bool(self.cells[i, j])

    @classmethod
    def empty(cls, width: float, height: float, resolution: float = 0.1,
              origin: tuple[float, float] = (0.0, 0.0)) -> StaticMap:
        w = int(round(width / resolution))
        h = int(round(height / resolution))
        return cls(resolution, origin, np.zeros((h, w), dtype=bool))

    def with_rects(self, rects) -> StaticMap:
        """Copy with every cell whose center lies in one of the (x0, y0, x1, y1) boxes set."""
        cells = self.cells.copy()
        h, w = cells.shape
        xs = self.origin[0] + (np.arange(w) + 0.5) * self.resolution
        ys = self.origin[1] + (np.arange(h) + 0.5) * self.resolution
        for x0, y0, x1, y1 in rects:
            cols = (xs >= min(x0, x1)) & (xs <= max(x0, x1))
            rows = (ys >= min(y0, y1)) & (ys <= max(y0, y1))
            cells[np.ix_(rows, cols)] = True
        return replace(self, cells=cells)


@dataclass(frozen=True)
class AgentScript:
    """A disc agent moving piecewise-linearly through timed waypoints."""

    id: int
    shape_radius: float
    waypoints: tuple[tuple[float, float, float], ...]
    behavior: str = "hold-at-end"

    def __post_init__(self):
        wps = tuple((float(x), float(y), float(t)) for x, y, t in self.waypoints)
        if not wps:
            raise ValueError(f"agent {self.id}: at least one waypoint required")
        if not self.shape_radius > 0:
            raise ValueError(f"agent {self.id}: radius must be > 0")
        for a, b in zip(wps, wps[1:]):
            if not b[2] > a[2]:
                raise ValueError(f"agent {self.id}: arrival times must be strictly increasing")
        if not all(math.isfinite(v) for wp in wps for v in wp):
            raise ValueError(f"agent {self.id}: waypoints must be finite")
        if self.behavior not in BEHAVIORS:
            raise ValueError(f"agent {self.id}: behavior must be one of {BEHAVIORS}")
        object.__setattr__(self, "waypoints", wps)

    def position_at(self, t: float) -> tuple[float, float] | None:
        """Scripted center at time ``t``; None once a ``once`` agent has finished."""
        wps = self.waypoints
        t0, t_end = wps[0][2], wps[-1][2]
        if self.behavior == "loop" and t_end > t0 and t > t_end:
            t = t0 + math.fmod(t - t0, t_end - t0)
        if t <= t0:
            return wps[0][0], wps[0][1]
        if t >= t_end:
            if self.behavior == "once" and t > t_end:
                return None
            return wps[-1][0], wps[-1][1]
        for (x0, y0, ta), (x1, y1, tb) in zip(wps, wps[1:]):
            if ta <= t <= tb:
                u = (t - ta) / (tb - ta)
                return x0 + u * (x1 - x0), y0 + u * (y1 - y0)
        return wps[-1][0], wps[-1][1]

    def velocity_at(self, t: float) -> tuple[float, float]:
        wps = self.waypoints
        if self.behavior == "loop" and wps[-1][2] > wps[0][2] and t > wps[-1][2]:
            t = wps[0][2] + math.fmod(t - wps[0][2], wps[-1][2] - wps[0][2])
        for (x0, y0, ta), (x1, y1, tb) in zip(wps, wps[1:]):
            if ta <= t < tb:
                return (x1 - x0) / (tb - ta), (y1 - y0) / (tb - ta)
        return 0.0, 0.0


@dataclass(frozen=True)
class RobotState:
    x: float
    y: float
    heading: float = 0.0
    linear_velocity: float = 0.0
    angular_velocity: float = 0.0
    footprint_radius: float = 0.2

    @property
    def position(self) -> tuple[float, float]:
        return self.x, self.y


@dataclass(frozen=True)
class Limits:
    v_max: float = 0.6
    omega_max: float = 1.5


@dataclass(frozen=True)
class NoiseParams:
    range_sigma: float = 0.01
    jitter_xy: float = 0.01
    jitter_heading: float = 0.005


@dataclass(frozen=True)
class SensorFrame:
    """One scan. ``points`` are world-frame returns; ``sources`` records which body
    produced each return (-1 static map, otherwise the agent id) for evaluation."""

    timestamp: float
    sensor_pose: tuple[float, float, float]
    points: np.ndarray
    max_range: float
    beam_count: int
    sources: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


@dataclass(frozen=True)
class WorldState:
    time: float
    static_map: StaticMap
    robot: RobotState
    agents: tuple[AgentScript, ...] = ()
    limits: Limits = Limits()

    def agent_positions(self) -> list[tuple[AgentScript, tuple[float, float]]]:
        """Active agents and their centers at the current time."""
        out = []
        for a in self.agents:
            p = a.position_at(self.time)
            if p is not None:
                out.append((a, p))
        return out

    def command(self, v: float, omega: float) -> WorldState:
        """Store a velocity command on the robot, clipped to the limits."""
        lim = self.limits
        v = min(max(v, -lim.v_max), lim.v_max)
        omega = min(max(omega, -lim.omega_max), lim.omega_max)
        return replace(self, robot=replace(self.robot, linear_velocity=v, angular_velocity=omega))


def step_world(world: WorldState, dt: float) -> WorldState:
    """Advance time by ``dt``; the robot integrates its stored command as a unicycle."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    r = world.robot
    v, w = r.linear_velocity, r.angular_velocity
    mid = r.heading + 0.5 * w * dt
    robot = replace(
        r,
        x=r.x + v * dt * math.cos(mid),
        y=r.y + v * dt * math.sin(mid),
        heading=wrap_angle(r.heading + w * dt),
    )
    return replace(world, time=world.time + dt, robot=robot)


def cast_scan(world: WorldState, beam_count: int, max_range: float,
              noise: NoiseParams, rng: np.random.Generator) -> SensorFrame:
    """Simulated planar range scan from the jittered robot pose.

    Draws 3 jitter samples then ``beam_count`` range-noise samples from ``rng`` on
    every call, whether or not beams hit, so the stream advances identically.
    """
    if beam_count < 1:
        raise ValueError("beam_count must be >= 1")
    if not max_range > 0:
        raise ValueError("max_range must be > 0")
    jit = rng.standard_normal(3)
    rnoise = rng.standard_normal(beam_count)
    r = world.robot
    sx = r.x + noise.jitter_xy * jit[0]
    sy = r.y + noise.jitter_xy * jit[1]
    sh = wrap_angle(r.heading + noise.jitter_heading * jit[2])

    active = world.agent_positions()
    discs = np.array([[p[0], p[1], a.shape_radius] for a, p in active], dtype=float).reshape(-1, 3)
    ids = np.array([a.id for a, _ in active], dtype=np.int64)
    angles = sh + (2.0 * math.pi / beam_count) * np.arange(beam_count)
    m = world.static_map
    ranges, src = kernels.cast_rays(
        m.cells.view(np.uint8), m.origin[0], m.origin[1], m.resolution,
        sx, sy, np.ascontiguousarray(angles), float(max_range), discs,
    )
    hit = np.isfinite(ranges)
    rng_meas = np.clip(ranges[hit] + noise.range_sigma * rnoise[hit], 0.0, max_range)
    a = angles[hit]
    pts = np.column_stack((sx + rng_meas * np.cos(a), sy + rng_meas * np.sin(a)))
    s = src[hit]
    sources = np.where(s >= 0, ids[np.maximum(s, 0)] if len(ids) else -1, -1).astype(np.int64)
    return SensorFrame(
        timestamp=world.time,
        sensor_pose=(sx, sy, sh),
        points=pts,
        max_range=float(max_range),
        beam_count=beam_count,
        sources=sources,
    )
