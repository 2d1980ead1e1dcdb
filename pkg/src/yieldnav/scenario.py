"""Scenario files (YAML, schema version 1) and the full tunable parameter set."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .sim import BEHAVIORS, AgentScript, RobotState, StaticMap

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    """Invalid scenario; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class Params:
    # sim_world
    v_max: float = 0.6
    omega_max: float = 1.5
    robot_radius: float = 0.2
    beam_count: int = 720
    max_range: float = 12.0
    range_sigma: float = 0.01
    jitter_xy: float = 0.01
    jitter_heading: float = 0.005
    # dyn_detect
    tsdf_tau: float | None = None  # None: three cells
    omega_new: float = 1.0
    weight_max: float = 100.0
    n_free: int = 5
    # track
    cluster_delta: float = 0.3
    min_pts: int = 3
    match_threshold: float = 0.6
    m_drop: int = 5
    q_proc: float = 0.01
    r_meas: float = 0.02
    init_vel_var: float = 4.0
    confirm_frames: int = 3
    # field
    alpha: float = 1.0
    beta: float = 25.0
    d0: float = 1.0
    threshold: float = 90.0
    u_cap: float = 1000.0
    sweep_horizon: float = 1.5
    margin: float = 0.1
    r_goal: float = 1.5
    window: float = 8.0
    # avoid
    w_safe: float = 1.0
    w_dist: float = 0.2
    w_pot: float = 0.05
    w_hyst: float = 0.3
    n_samples: int = 200
    # pilot
    d_conflict: float = 0.8
    risk_horizon: float = 1.5
    t_clear: float = 1.0
    eps_arrive: float = 0.15
    lambda_pot: float = 0.01
    allow_reverse: bool = True
    lookahead: float = 0.35
    settle_tolerance: float = 0.05
    # runner
    no_feasible_window: float = 2.0
    deadlock_window: float = 10.0
    deadlock_progress: float = 0.2
    trace_candidates: bool = True

    @classmethod
    def from_overrides(cls, overrides: dict | None) -> Params:
        if not overrides:
            return cls()
        if not isinstance(overrides, dict):
            raise ScenarioError("params", "must be a mapping")
        known = {f.name: f for f in fields(cls)}
        kw = {}
        for name, value in overrides.items():
            if name not in known:
                raise ScenarioError(f"params.{name}", "unknown parameter")
            default = getattr(cls, name)
            kw[name] = _coerce(f"params.{name}", value, default)
        return cls(**kw)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _coerce(name: str, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ScenarioError(name, "expected true/false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ScenarioError(name, "expected an integer")
        return value
    if value is None and default is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ScenarioError(name, "expected a finite number")
    return float(value)


@dataclass(frozen=True)
class Scenario:
    name: str
    static_map: StaticMap
    robot: RobotState
    goal: tuple[float, float] | None
    agents: tuple[AgentScript, ...]
    duration: float
    tick: float = 0.1
    seed: int = 0
    avoidance: bool = True
    params: Params = field(default_factory=Params)

    @property
    def n_ticks(self) -> int:
        return int(round(self.duration / self.tick))

    def with_agents(self, agents) -> Scenario:
        return replace(self, agents=tuple(agents))

    def to_dict(self) -> dict:
        """Normalized, self-contained document (map inlined as text rows)."""
        return {
            "schema": SCHEMA_VERSION,
            "name": self.name,
            "map": {
                "resolution": self.static_map.resolution,
                "origin": list(self.static_map.origin),
                "grid": map_to_rows(self.static_map),
            },
            "robot": {
                "pose": [self.robot.x, self.robot.y, self.robot.heading],
                "goal": None if self.goal is None else list(self.goal),
            },
            "agents": [
                {"id": a.id, "radius": a.shape_radius, "behavior": a.behavior,
                 "waypoints": [list(w) for w in a.waypoints]}
                for a in self.agents
            ],
            "duration": self.duration,
            "tick": self.tick,
            "seed": self.seed,
            "avoidance": self.avoidance,
            "params": self.params.as_dict(),
        }


def map_to_rows(m: StaticMap) -> list[str]:
    """Text rows, top row first; '#' occupied, '.' free."""
    return ["".join("#" if c else "." for c in row) for row in m.cells[::-1]]


def _num(doc: dict, key: str, where: str, default=None, positive=False):
    if key not in doc:
        if default is None:
            raise ScenarioError(f"{where}{key}", "required")
        return default
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ScenarioError(f"{where}{key}", "expected a finite number")
    if positive and not v > 0:
        raise ScenarioError(f"{where}{key}", "must be > 0")
    return float(v)


def _point(v, name: str, n: int = 2) -> tuple[float, ...]:
    if not isinstance(v, (list, tuple)) or len(v) != n:
        raise ScenarioError(name, f"expected a list of {n} numbers")
    out = []
    for x in v:
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
            raise ScenarioError(name, "expected finite numbers")
        out.append(float(x))
    return tuple(out)


def _load_map(doc, base: Path | None) -> StaticMap:
    if not isinstance(doc, dict):
        raise ScenarioError("map", "must be a mapping")
    res = _num(doc, "resolution", "map.", positive=True)
    origin = _point(doc.get("origin", [0.0, 0.0]), "map.origin")
    sources = [k for k in ("grid", "image", "size") if k in doc]
    if len(sources) != 1:
        raise ScenarioError("map", "exactly one of grid, image, size is required")
    if "grid" in doc:
        rows = doc["grid"]
        if isinstance(rows, str):
            rows = [r for r in rows.splitlines() if r.strip()]
        if not isinstance(rows, list) or not rows or not all(isinstance(r, str) for r in rows):
            raise ScenarioError("map.grid", "expected non-empty text rows")
        width = len(rows[0])
        if any(len(r) != width for r in rows) or width == 0:
            raise ScenarioError("map.grid", "rows must have equal, nonzero length")
        bad = set("".join(rows)) - set("#.")
        if bad:
            raise ScenarioError("map.grid", f"unexpected characters {sorted(bad)}")
        cells = np.array([[c == "#" for c in r] for r in rows[::-1]], dtype=bool)
        m = StaticMap(res, origin, cells)
    elif "image" in doc:
        from PIL import Image
        path = Path(doc["image"])
        if base is not None and not path.is_absolute():
            path = base / path
        try:
            img = np.asarray(Image.open(path).convert("L"))
        except OSError as e:
            raise ScenarioError("map.image", f"cannot read {path}: {e}") from e
        m = StaticMap(res, origin, (img < 128)[::-1])
    else:
        w, h = _point(doc["size"], "map.size")
        if not (w > 0 and h > 0):
            raise ScenarioError("map.size", "must be positive")
        m = StaticMap.empty(w, h, res, origin)
    rects = doc.get("rects", [])
    if not isinstance(rects, list):
        raise ScenarioError("map.rects", "expected a list")
    boxes = [_point(r, f"map.rects[{i}]", 4) for i, r in enumerate(rects)]
    return m.with_rects(boxes) if boxes else m


def scenario_from_dict(doc: dict, base: Path | None = None) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("<root>", "scenario must be a mapping")
    allowed = {"schema", "name", "map", "robot", "agents", "duration", "tick", "seed",
               "avoidance", "params", "description"}
    for k in doc:
        if k not in allowed:
            raise ScenarioError(k, "unknown field")
    if doc.get("schema") != SCHEMA_VERSION:
        raise ScenarioError("schema", f"expected {SCHEMA_VERSION}")
    name = doc.get("name", "scenario")
    if not isinstance(name, str):
        raise ScenarioError("name", "expected a string")
    params = Params.from_overrides(doc.get("params"))
    m = _load_map(doc.get("map"), base)

    rdoc = doc.get("robot")
    if not isinstance(rdoc, dict) or "pose" not in rdoc:
        raise ScenarioError("robot.pose", "required")
    x, y, th = _point(rdoc["pose"], "robot.pose", 3)
    if m.occupied(x, y):
        raise ScenarioError("robot.pose", "inside an obstacle or outside the map")
    robot = RobotState(x, y, th, footprint_radius=params.robot_radius)
    goal = rdoc.get("goal")
    if goal is not None:
        goal = _point(goal, "robot.goal")
        if m.occupied(*goal):
            raise ScenarioError("robot.goal", "inside an obstacle or outside the map")

    agents = []
    adocs = doc.get("agents", [])
    if not isinstance(adocs, list):
        raise ScenarioError("agents", "expected a list")
    ids = set()
    for i, a in enumerate(adocs):
        where = f"agents[{i}]"
        if not isinstance(a, dict):
            raise ScenarioError(where, "must be a mapping")
        aid = a.get("id", i + 1)
        if isinstance(aid, bool) or not isinstance(aid, int) or aid < 0 or aid in ids:
            raise ScenarioError(f"{where}.id", "expected a unique non-negative integer")
        ids.add(aid)
        radius = _num(a, "radius", f"{where}.", default=0.25, positive=True)
        behavior = a.get("behavior", "hold-at-end")
        if behavior not in BEHAVIORS:
            raise ScenarioError(f"{where}.behavior", f"expected one of {list(BEHAVIORS)}")
        wps = a.get("waypoints")
        if not isinstance(wps, list) or not wps:
            raise ScenarioError(f"{where}.waypoints", "expected a non-empty list")
        pts = [_point(w, f"{where}.waypoints[{k}]", 3) for k, w in enumerate(wps)]
        for k, (px, py, _) in enumerate(pts):
            if not m.contains(px, py):
                raise ScenarioError(f"{where}.waypoints[{k}]", "outside the map")
        try:
            agents.append(AgentScript(aid, radius, tuple(pts), behavior))
        except ValueError as e:
            raise ScenarioError(f"{where}.waypoints", str(e)) from e

    duration = _num(doc, "duration", "", positive=True)
    tick = _num(doc, "tick", "", default=0.1, positive=True)
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ScenarioError("seed", "expected a non-negative integer")
    avoidance = doc.get("avoidance", True)
    if not isinstance(avoidance, bool):
        raise ScenarioError("avoidance", "expected true/false")
    return Scenario(name, m, robot, goal, tuple(agents), duration, tick, seed, avoidance, params)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ScenarioError("<file>", f"YAML parse error: {e}") from e
    return scenario_from_dict(doc, base=path.parent)


BUNDLED = ("stationary_yield", "corridor_retreat", "corridor_baseline", "multi_agent_field",
           "static_only_sanity", "crossing_stationary", "crossing_moving")


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("yieldnav") / "scenarios" / f"{name}.yaml"))


def load_bundled(name: str) -> Scenario:
    return load_scenario(bundled_path(name))
