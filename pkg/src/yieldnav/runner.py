"""Closed-loop scenario execution and line-delimited trace records.

One tick: scan, detect, track, assess risk, step the mode machine, act, integrate.
Every record is a JSON object serialized with sorted keys and floats rounded to
six decimals, so identical inputs give byte-identical traces.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .avoid import AvoidWeights, NoFeasiblePoint, select_avoidance_point
from .field import FieldParams, Window, build_potential, choose_local_goal, sweep_dilate
from .pilot import (
    LocalPlan, Mode, NoPath, PilotParams, PilotState, assess_risk, follow, plan_local, transition,
)
from .scenario import Scenario
from .sim import Limits, NoiseParams, WorldState, cast_scan, step_world
from .track import KalmanParams, Tracker
from .tsdf import TsdfGrid, process_frame

TRACE_VERSION = 1


def _num(x):
    x = float(x)
    if not math.isfinite(x):
        return None
    r = round(x, 6)
    return 0.0 if r == 0 else r


def _pt(p):
    return None if p is None else [_num(p[0]), _num(p[1])]


def dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"), allow_nan=False)


@dataclass
class TickView:
    """Everything the loop computed in one tick, handed to an optional observer."""

    tick: int
    time: float
    world: WorldState
    frame: object
    dynamic: object
    tracks: list
    pilot: PilotState
    pmap: object = None
    decision: object = None
    plan: LocalPlan | None = None


@dataclass
class RunTrace:
    records: list[dict]

    @property
    def header(self) -> dict:
        return self.records[0]

    @property
    def ticks(self) -> list[dict]:
        return [r for r in self.records if r["type"] == "tick"]

    @property
    def metrics(self) -> dict | None:
        last = self.records[-1]
        return last if last["type"] == "metrics" else None

    def lines(self) -> list[str]:
        return [dumps(r) for r in self.records]

    def text(self) -> str:
        return "\n".join(self.lines()) + "\n"

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.text())

    @classmethod
    def read(cls, path) -> RunTrace:
        with open(path, encoding="utf-8") as fh:
            recs = [json.loads(line) for line in fh if line.strip()]
        if not recs or recs[0].get("type") != "header":
            raise ValueError(f"{path}: not a trace (missing header)")
        return cls(recs)


def _quantized(pmap) -> str:
    thr = pmap.params.threshold
    q = np.round(np.clip(pmap.U / thr, 0.0, 1.0) * 254).astype(np.uint8)
    q[~pmap.feasible] = 255
    return q.tobytes().hex()


def _plan_record(plan: LocalPlan | None):
    if plan is None:
        return None
    return {"waypoints": [_pt(w) for w in plan.waypoints], "dirs": list(plan.direction_profile)}


class _Loop:
    def __init__(self, sc: Scenario, enabled: bool, seed: int):
        p = sc.params
        self.sc = sc
        self.p = p
        self.enabled = enabled
        self.m = sc.static_map
        sensor_ss, avoid_ss = np.random.SeedSequence(seed).spawn(2)
        self.sensor_rng = np.random.default_rng(sensor_ss)
        self.avoid_rng = np.random.default_rng(avoid_ss)
        self.limits = Limits(p.v_max, p.omega_max)
        self.noise = NoiseParams(p.range_sigma, p.jitter_xy, p.jitter_heading)
        self.world = WorldState(0.0, self.m, sc.robot, sc.agents, self.limits)
        self.grid = TsdfGrid.for_map(self.m, tau=p.tsdf_tau, n_free=p.n_free,
                                     w_new=p.omega_new, w_max=p.weight_max)
        self.tracker = Tracker(p.cluster_delta, p.min_pts, p.match_threshold, p.m_drop,
                               p.confirm_frames, KalmanParams(p.q_proc, p.r_meas, p.init_vel_var))
        self.pilot = PilotState.start(sc.goal)
        self.pparams = PilotParams(p.d_conflict, p.risk_horizon, p.t_clear, p.eps_arrive,
                                   p.lambda_pot, p.allow_reverse, p.lookahead)
        self.fparams = FieldParams(p.alpha, p.beta, p.d0, p.threshold, p.u_cap)
        self.weights = AvoidWeights(p.w_safe, p.w_dist, p.w_pot, p.w_hyst)
        # static route planning: obstacle repulsion only, over the whole map
        self.static_pmap = build_potential(self.m, [], sc.robot.position,
                                           replace(self.fparams, alpha=0.0))
        self.route: LocalPlan | None = None
        self.no_feasible_time = 0.0
        self.settled = False
        self.snapshot_due = True

    def _route_to(self, target) -> LocalPlan | None:
        try:
            return plan_local(self.static_pmap, self.world.robot, target, self.p.allow_reverse,
                              self.p.v_max, self.p.lambda_pot)
        except NoPath:
            return None

    def _remaining(self, plan: LocalPlan | None):
        if plan is None or len(plan.waypoints) < 2:
            return None
        r = self.world.robot
        w = plan.waypoints
        best, k = math.inf, 0
        for i, (a, b) in enumerate(zip(w, w[1:])):
            ex, ey = b[0] - a[0], b[1] - a[1]
            L2 = ex * ex + ey * ey
            u = 0.0 if L2 == 0 else min(max(((r.x - a[0]) * ex + (r.y - a[1]) * ey) / L2, 0.0), 1.0)
            d = math.hypot(a[0] + u * ex - r.x, a[1] + u * ey - r.y)
            if d < best:
                best, k = d, i
        return list(w[k + 1:])

    def _risk_route(self):
        mode = self.pilot.mode
        if mode == Mode.IDLE:
            return None
        if mode in (Mode.NAVIGATING, Mode.RECOVERING):
            return self._remaining(self.route)
        plan = self._route_to(self.pilot.saved_context.point)
        return None if plan is None else list(plan.waypoints[1:])

    def step(self, k: int, observer=None) -> dict:
        sc, p = self.sc, self.p
        dt = sc.tick
        t = k * dt
        self.world = replace(self.world, time=t)
        world = self.world
        robot = world.robot
        frame = cast_scan(world, p.beam_count, p.max_range, self.noise, self.sensor_rng)
        dyn = process_frame(self.grid, frame)
        self.tracker.step(dyn.points, dt)
        tracks = self.tracker.confirmed()

        if self.enabled:
            risk, offending = assess_risk(robot.position, tracks, p.risk_horizon, p.d_conflict,
                                          self._risk_route())
        else:
            risk, offending = False, []
        before = self.pilot
        self.pilot = transition(before, risk, offending, robot, dt, self.pparams, self.settled)
        events = []
        if self.pilot.mode != before.mode:
            events.append(f"{before.mode.value}->{self.pilot.mode.value}")
            if self.pilot.mode == Mode.AVOIDING and before.mode in (Mode.IDLE, Mode.NAVIGATING):
                self.snapshot_due = True
            self.route = None
            self.settled = False

        pmap = decision = plan = None
        x_g = None
        cmd_v = cmd_w = 0.0
        snapshot = None
        mode = self.pilot.mode
        if mode in (Mode.NAVIGATING, Mode.RECOVERING):
            target = self.pilot.nav_goal if mode == Mode.NAVIGATING else self.pilot.saved_context.point
            if self.route is None:
                self.route = self._route_to(target)
                if self.route is None:
                    events.append("no_path")
            plan = self.route
            if plan is not None:
                c = follow(plan, robot, dt, self.limits, p.settle_tolerance, p.lookahead)
                cmd_v, cmd_w = c.v, c.omega
                self.settled = c.arrived
        elif mode == Mode.AVOIDING:
            win = Window.around(self.m, robot.position, p.window)
            obstacles = [sweep_dilate(tr, p.sweep_horizon, p.margin,
                                      robot.footprint_radius, win) for tr in tracks]
            ctx = self.pilot.saved_context
            if ctx.kind == "goal":
                x_g = win.clamp(*ctx.point)
            else:
                near = [tr for tr in tracks if tr.id in offending] or tracks
                if near:
                    x_g = win.clamp(*choose_local_goal(robot.position, near, p.r_goal, self.m))
                else:
                    x_g = win.clamp(*robot.position)
            pmap = build_potential(self.m, obstacles, x_g, self.fparams, win)
            try:
                decision = select_avoidance_point(pmap, robot.position, self.pilot.active_avoidance_point,
                                                  self.weights, p.n_samples, self.avoid_rng)
            except NoFeasiblePoint:
                events.append("no_feasible_point")
                self.no_feasible_time += dt
            if decision is not None:
                self.no_feasible_time = 0.0
                x_star = decision.selected.point
                self.pilot = replace(self.pilot, active_avoidance_point=x_star)
                try:
                    plan = plan_local(pmap, robot, x_star, p.allow_reverse, p.v_max, p.lambda_pot)
                except NoPath:
                    events.append("no_path")
                if plan is not None:
                    c = follow(plan, robot, dt, self.limits, p.eps_arrive, p.lookahead)
                    cmd_v, cmd_w = c.v, c.omega
                if self.snapshot_due:
                    self.snapshot_due = False
                    snapshot = {"origin": _pt(pmap.origin), "shape": list(pmap.shape),
                                "resolution": _num(pmap.resolution), "u8": _quantized(pmap)}

        self.world = world.command(cmd_v, cmd_w)
        rec = {
            "type": "tick",
            "tick": k,
            "t": _num(t),
            "robot": [_num(robot.x), _num(robot.y), _num(robot.heading),
                      _num(robot.linear_velocity), _num(robot.angular_velocity)],
            "agents": [[a.id, _num(pos[0]), _num(pos[1]), _num(a.velocity_at(t)[0]),
                        _num(a.velocity_at(t)[1]), _num(a.shape_radius)]
                       for a, pos in world.agent_positions()],
            "n_points": int(len(frame.points)),
            "n_dynamic": int(len(dyn.points)),
            "tracks": [[tr.id, _num(tr.position[0]), _num(tr.position[1]), _num(tr.velocity[0]),
                        _num(tr.velocity[1]), tr.age, tr.missed] for tr in tracks],
            "risk": bool(risk),
            "offending": list(offending),
            "mode": mode.value,
            "context": None if self.pilot.saved_context is None else {
                "kind": self.pilot.saved_context.kind,
                "point": _pt(self.pilot.saved_context.point),
                "heading": None if self.pilot.saved_context.heading is None
                else _num(self.pilot.saved_context.heading),
            },
            "clear_timer": _num(self.pilot.clear_timer),
            "x_g": _pt(x_g),
            "decision": None if decision is None else self._decision_record(decision),
            "plan": _plan_record(plan),
            "cmd": [_num(self.world.robot.linear_velocity), _num(self.world.robot.angular_velocity)],
            "events": events,
            "no_feasible_time": _num(self.no_feasible_time),
        }
        if snapshot is not None:
            rec["snapshot"] = snapshot
        if observer is not None:
            observer(TickView(k, t, world, frame, dyn, tracks, self.pilot, pmap, decision, plan))
        self.world = step_world(self.world, dt)
        return rec

    def _decision_record(self, d) -> dict:
        s = d.selected
        out = {
            "selected": [_num(s.point[0]), _num(s.point[1]), _num(s.q_score)]
            + [_num(c) for c in s.components],
            "x_prev": _pt(d.x_prev),
            "n_candidates": len(d.candidates),
        }
        if self.p.trace_candidates:
            out["candidates"] = [[_num(c.point[0]), _num(c.point[1]), _num(c.q_score)]
                                 for c in d.candidates]
        return out


def run_scenario(scenario: Scenario, avoidance_enabled: bool | None = None, seed: int | None = None,
                 observer=None) -> RunTrace:
    """Run ``scenario`` for its full duration and return the trace (metrics appended)."""
    from .metrics import compute_metrics

    enabled = scenario.avoidance if avoidance_enabled is None else bool(avoidance_enabled)
    seed = scenario.seed if seed is None else int(seed)
    loop = _Loop(scenario, enabled, seed)
    header = {
        "type": "header",
        "version": TRACE_VERSION,
        "scenario": scenario.to_dict(),
        "avoidance_enabled": enabled,
        "seed": seed,
    }
    records = [json.loads(dumps(header))]
    for k in range(scenario.n_ticks):
        records.append(loop.step(k, observer))
    trace = RunTrace(records)
    m = compute_metrics(trace)
    records.append({"type": "metrics", **m})
    return trace
