"""Run metrics recomputed purely from trace records."""

from __future__ import annotations

import math

from .sim import AgentScript


def _records(trace):
    return trace.records if hasattr(trace, "records") else list(trace)


def mode_sequence(ticks) -> list[str]:
    """Modes in order of occurrence with consecutive repeats collapsed."""
    seq = []
    for r in ticks:
        if not seq or seq[-1] != r["mode"]:
            seq.append(r["mode"])
    return seq


def compute_metrics(trace) -> dict:
    recs = _records(trace)
    if not recs or recs[0].get("type") != "header":
        raise ValueError("trace must start with a header record")
    header = recs[0]
    ticks = [r for r in recs if r["type"] == "tick"]
    if not ticks:
        raise ValueError("trace has no tick records")
    sc = header["scenario"]
    params = sc["params"]
    robot_r = params["robot_radius"]
    scripts = {a["id"]: AgentScript(a["id"], a["radius"], tuple(tuple(w) for w in a["waypoints"]),
                                    a["behavior"]) for a in sc["agents"]}

    min_sep = math.inf
    collisions = 0
    deviation = 0.0
    for r in ticks:
        rx, ry = r["robot"][0], r["robot"][1]
        hit = False
        for aid, ax, ay, _vx, _vy, arad in r["agents"]:
            d = math.hypot(ax - rx, ay - ry)
            min_sep = min(min_sep, d)
            if d < robot_r + arad:
                hit = True
            ref = scripts[aid].position_at(r["t"])
            if ref is not None:
                deviation = max(deviation, math.hypot(ax - ref[0], ay - ref[1]))
        collisions += hit

    goal = sc["robot"]["goal"]
    eps = params["eps_arrive"]
    seq = mode_sequence(ticks)
    task_time = None
    recovery_error = None
    reached_goal = False
    if goal is not None:
        for r in ticks:
            if math.hypot(r["robot"][0] - goal[0], r["robot"][1] - goal[1]) <= eps:
                task_time = r["t"]
                reached_goal = True
                break
    else:
        saved = next((r["context"] for r in ticks
                      if r["context"] is not None and r["context"]["kind"] == "pose"), None)
        if saved is not None:
            left = False
            for r in ticks:
                if r["mode"] != "Idle":
                    left = True
                elif left:
                    task_time = r["t"]
                    break
            fx, fy = ticks[-1]["robot"][0], ticks[-1]["robot"][1]
            recovery_error = math.hypot(fx - saved["point"][0], fy - saved["point"][1])

    deadlock = _deadlock(ticks, goal, params["deadlock_window"], params["deadlock_progress"])
    window = params["no_feasible_window"]
    exceeded = any((r.get("no_feasible_time") or 0.0) > window + 1e-9 for r in ticks)

    def rnd(x):
        return None if x is None or not math.isfinite(x) else round(x, 6)

    return {
        "min_separation": rnd(min_sep),
        "human_deviation": rnd(deviation),
        "task_time": rnd(task_time),
        "recovery_error": rnd(recovery_error),
        "collisions": int(collisions),
        "deadlock": bool(deadlock),
        "reached_goal": reached_goal,
        "no_feasible_exceeded": bool(exceeded),
        "mode_sequence": ">".join(seq),
        "ticks": len(ticks),
    }


def _deadlock(ticks, goal, window: float, progress: float) -> bool:
    """True if, over some ``window`` seconds spent continuously Navigating, the
    distance to the goal never fell ``progress`` below its value at the start."""
    if goal is None:
        return False
    runs, cur = [], []
    for r in ticks:
        if r["mode"] == "Navigating":
            cur.append((r["t"], math.hypot(r["robot"][0] - goal[0], r["robot"][1] - goal[1])))
        elif cur:
            runs.append(cur)
            cur = []
    if cur:
        runs.append(cur)
    for run in runs:
        for i, (t0, d0) in enumerate(run):
            best = d0
            for t, d in run[i:]:
                best = min(best, d)
                if best <= d0 - progress:
                    break
                if t - t0 >= window - 1e-9:
                    return True
    return False
