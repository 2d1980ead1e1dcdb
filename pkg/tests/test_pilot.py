import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from conftest import pmap_from_cells
from yieldnav import kernels
from yieldnav.field import FieldParams
from yieldnav.pilot import (
    LocalPlan, Mode, NoPath, PilotParams, PilotState, SavedContext, assess_risk, follow, grid_path,
    plan_local, transition,
)
from yieldnav.sim import Limits, RobotState, StaticMap, WorldState, step_world
from yieldnav.track import Track

OPEN = FieldParams(alpha=0.0, beta=0.0)


def track(x, y, vx=0.0, vy=0.0, tid=1):
    return Track(tid, np.array([x, y, vx, vy], float), np.eye(4) * 0.01, (x - .2, y - .2, x + .2, y + .2))


def open_map(n=40, res=0.1):
    return pmap_from_cells(np.zeros((n, n), bool), res, params=OPEN)


# --- risk ---------------------------------------------------------------

def test_risk_examples():
    assert assess_risk((0, 0), [track(2, 0, -1, 0)], 1.5, 0.8) == (True, [1])
    assert assess_risk((0, 0), [track(-3, 2, 1, 0)], 1.5, 0.8) == (False, [])
    assert assess_risk((0, 0), [], 1.5, 0.8) == (False, [])


def test_risk_uses_route():
    t = track(5.0, 1.0, 0.0, -1.0)
    assert assess_risk((0, 0), [t], 1.5, 0.8) == (False, [])
    assert assess_risk((0, 0), [t], 1.5, 0.8, route=[(6.0, 0.0)]) == (True, [1])


def test_risk_rejects_bad_args():
    with pytest.raises(ValueError):
        assess_risk((0, 0), [], 0.0, 0.8)


# --- mode machine -------------------------------------------------------

R = RobotState(1.0, 2.0, 0.3)


def test_idle_risk_saves_pose():
    p = transition(PilotState(), True, [1], R, 0.1)
    assert p.mode == Mode.AVOIDING and p.saved_context == SavedContext("pose", 1.0, 2.0, 0.3)


def test_navigating_risk_saves_goal():
    p = transition(PilotState.start((5.0, 5.0)), True, [1], R, 0.1)
    assert p.saved_context == SavedContext("goal", 5.0, 5.0)


def test_clear_time_leads_to_recovering():
    p = transition(PilotState(), True, [1], R, 0.1)
    for _ in range(9):
        p = transition(p, False, [], R, 0.1)
        assert p.mode == Mode.AVOIDING
    p = transition(p, False, [], R, 0.1)
    assert p.mode == Mode.RECOVERING


def test_recovering_arrival():
    ctx = SavedContext("pose", 1.0, 2.0, 0.0)
    p = PilotState(Mode.RECOVERING, ctx)
    assert transition(p, False, [], RobotState(1.1, 2.05), 0.1).mode == Mode.IDLE
    assert transition(p, False, [], RobotState(1.5, 2.0), 0.1).mode == Mode.RECOVERING
    assert transition(p, False, [], RobotState(1.1, 2.05), 0.1, settled=False).mode == Mode.RECOVERING
    g = PilotState(Mode.RECOVERING, SavedContext("goal", 1.0, 2.0))
    out = transition(g, False, [], RobotState(1.0, 2.0), 0.1)
    assert out.mode == Mode.NAVIGATING and out.nav_goal == (1.0, 2.0) and out.saved_context is None


def test_recovering_risk_returns_to_avoiding_with_context():
    ctx = SavedContext("pose", 1.0, 2.0, 0.0)
    p = transition(PilotState(Mode.RECOVERING, ctx, 3.0), True, [2], RobotState(3, 3), 0.1)
    assert p.mode == Mode.AVOIDING and p.saved_context == ctx and p.clear_timer == 0.0


def test_context_invariant_enforced():
    with pytest.raises(ValueError):
        PilotState(Mode.AVOIDING)
    with pytest.raises(ValueError):
        PilotState(Mode.IDLE, SavedContext("pose", 0, 0))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=60),
       st.sampled_from([None, (3.0, 3.0)]))
def test_mode_machine_invariants(steps, goal):
    p = PilotState.start(goal)
    for risk, at_target in steps:
        robot = R
        if at_target and p.saved_context is not None:
            robot = RobotState(*p.saved_context.point)
        p = transition(p, risk, [1] if risk else [], robot, 0.1)
        assert (p.saved_context is not None) == (p.mode in (Mode.AVOIDING, Mode.RECOVERING))
        if risk:
            assert p.mode == Mode.AVOIDING and p.clear_timer == 0.0


# --- planner ------------------------------------------------------------

def test_target_behind_reverses_without_turning():
    pm = open_map()
    plan = plan_local(pm, RobotState(2.55, 2.05, 0.0), (1.55, 2.05), allow_reverse=True)
    assert plan.direction_profile == (-1,) and plan.turns == (0.0,)
    assert len(plan.waypoints) == 2


def test_target_behind_without_reverse_turns_around():
    pm = open_map()
    plan = plan_local(pm, RobotState(2.55, 2.05, 0.0), (1.55, 2.05), allow_reverse=False)
    assert plan.direction_profile == (1,)
    assert abs(plan.turns[0]) == pytest.approx(math.pi)
    assert plan.duration(1.5) > plan_local(pm, RobotState(2.55, 2.05, 0.0), (1.55, 2.05)).duration(1.5)


def test_plan_rejects_infeasible_or_unreachable_target():
    c = np.zeros((20, 20), bool)
    c[:, 10] = True
    pm = pmap_from_cells(c, 0.1, params=FieldParams(alpha=0.0, beta=0.0, threshold=1.0))
    with pytest.raises(NoPath):
        plan_local(pm, RobotState(0.35, 0.35), (1.05, 0.55))
    with pytest.raises(NoPath):
        plan_local(pm, RobotState(0.35, 0.35), (1.65, 0.55))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 39), st.integers(0, 39), st.integers(0, 39), st.integers(0, 39))
def test_open_map_path_length(i0, j0, i1, j1):
    pm = open_map()
    a, b = pm.cell_center(i0, j0), pm.cell_center(i1, j1)
    cells = grid_path(pm, a, b, lam=0.0)
    length = sum(math.dist(p, q) for p, q in zip(cells, cells[1:]))
    di, dj = abs(i1 - i0), abs(j1 - j0)
    octile = 0.1 * (max(di, dj) + (math.sqrt(2) - 1) * min(di, dj))
    assert length == pytest.approx(octile, abs=1e-9)
    plan = plan_local(pm, RobotState(*a), b)
    assert plan.length <= 1.08 * math.dist(a, b) + 1e-9


def _oracle_cost(passable, cost, res, lam, s, g):
    h, w = passable.shape
    rows, cols, vals = [], [], []
    for i in range(h):
        for j in range(w):
            if not passable[i, j]:
                continue
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    vi, vj = i + di, j + dj
                    if (di, dj) == (0, 0) or not (0 <= vi < h and 0 <= vj < w) or not passable[vi, vj]:
                        continue
                    if di and dj and not (passable[i + di, j] and passable[i, j + dj]):
                        continue
                    rows.append(i * w + j)
                    cols.append(vi * w + vj)
                    vals.append(res * math.hypot(di, dj) + lam * cost[vi, vj])
    graph = coo_matrix((vals, (rows, cols)), shape=(h * w, h * w)).tocsr()
    return dijkstra(graph, indices=s[0] * w + s[1])[g[0] * w + g[1]]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_dijkstra_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    passable = (rng.random((12, 14)) > 0.25).astype(np.uint8)
    cost = rng.uniform(0, 40, passable.shape)
    free = np.argwhere(passable)
    s, g = free[0], free[-1]
    cells = kernels.grid_dijkstra(passable, cost, 0.1, 0.01, int(s[0]), int(s[1]), int(g[0]), int(g[1]))
    want = _oracle_cost(passable, cost, 0.1, 0.01, s, g)
    if not np.isfinite(want):
        assert len(cells) == 0
        return
    got = sum(0.1 * math.hypot(*(b - a)) + 0.01 * cost[b[0], b[1]] for a, b in zip(cells, cells[1:]))
    assert got == pytest.approx(want, abs=1e-9)
    assert tuple(cells[0]) == tuple(s) and tuple(cells[-1]) == tuple(g)


@settings(max_examples=40, deadline=None)
@given(st.floats(-math.pi, math.pi), st.integers(0, 2**32 - 1))
def test_reverse_never_slower(heading, seed):
    rng = np.random.default_rng(seed)
    c = np.zeros((30, 30), bool)
    c[rng.integers(5, 25), 5:25] = True
    pm = pmap_from_cells(c, 0.1, params=FieldParams(alpha=0.0, beta=25.0, d0=0.3))
    feas = np.argwhere(pm.feasible)
    a = pm.cell_center(*feas[rng.integers(len(feas))])
    b = pm.cell_center(*feas[rng.integers(len(feas))])
    try:
        fast = plan_local(pm, RobotState(*a, heading), b, True)
    except NoPath:
        return
    slow = plan_local(pm, RobotState(*a, heading), b, False)
    assert fast.duration(1.5) <= slow.duration(1.5) + 1e-9
    assert len(fast.direction_profile) == len(fast.speed_profile) == len(fast.waypoints) - 1
    assert max(fast.speed_profile) <= 0.6


def test_plan_waypoints_are_mutually_feasible():
    from yieldnav.avoid import segment_feasible
    c = np.zeros((40, 40), bool)
    c[10:30, 20] = True
    pm = pmap_from_cells(c, 0.1, params=FieldParams(alpha=0.0))
    plan = plan_local(pm, RobotState(0.55, 2.05), (3.55, 2.05))
    for p, q in zip(plan.waypoints, plan.waypoints[1:]):
        assert pm.is_feasible(*q) and segment_feasible(pm, p, q)


# --- follower -----------------------------------------------------------

def test_follow_at_goal_reports_arrival():
    plan = LocalPlan(((0.0, 0.0), (1.0, 0.0)), (1,), (0.6,), (0.0,))
    c = follow(plan, RobotState(1.0, 0.0), 0.1)
    assert (c.v, c.omega, c.arrived) == (0.0, 0.0, True)


def test_follow_reverse_segment():
    plan = LocalPlan(((1.0, 0.0), (0.0, 0.2)), (-1,), (0.6,), (0.0,))
    c = follow(plan, RobotState(1.0, 0.0, 0.0), 0.1)
    assert c.v < 0
    assert c.omega < 0  # swings the tail toward +y


def test_follow_respects_limits():
    plan = LocalPlan(((0.0, 0.0), (5.0, 5.0)), (1,), (0.6,), (0.0,))
    for h in np.linspace(-3, 3, 13):
        c = follow(plan, RobotState(0.0, 0.0, h), 0.1, Limits(0.6, 1.5))
        assert abs(c.v) <= 0.6 and abs(c.omega) <= 1.5


def test_closed_loop_corridor_tracking():
    m = StaticMap.empty(10, 2, 0.1).with_rects([(0, 0, 10, 0.4), (0, 1.6, 10, 2.0)])
    from yieldnav.field import build_potential
    pm = build_potential(m, [], (5.0, 1.0), FieldParams(alpha=0.0))
    w = WorldState(0.0, m, RobotState(0.75, 1.05, 0.3))
    plan = plan_local(pm, w.robot, (9.05, 1.05))
    worst = 0.0
    for _ in range(400):
        c = follow(plan, w.robot, 0.1, w.limits, 0.05)
        if c.arrived:
            break
        w = step_world(w.command(c.v, c.omega), 0.1)
        worst = max(worst, abs(w.robot.y - 1.05))
    assert c.arrived and worst < 0.15
