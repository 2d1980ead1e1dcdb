import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import pmap_from_cells, walled_room
from yieldnav.field import (
    FieldParams, InflatedObstacle, Window, build_potential, choose_local_goal, clearance,
    distance_to_obstacles, repulsive, static_mask, sweep_dilate,
)
from yieldnav.sim import StaticMap
from yieldnav.track import Track, predict_path
from yieldnav.tsdf import BoundsError


def track(x, y, vx=0.0, vy=0.0, half=0.2, tid=1):
    return Track(tid, np.array([x, y, vx, vy], float), np.eye(4) * 0.01,
                 (x - half, y - half, x + half, y + half))


WIN = Window((0.0, 0.0), (60, 60), 0.1)


def brute_sweep(t, horizon, pad, win, step=0.1):
    """Enumerate every cell center against every swept box."""
    ox0, oy0, ox1, oy1 = t.bbox_offsets
    boxes = [(px + ox0 - pad, py + oy0 - pad, px + ox1 + pad, py + oy1 + pad)
             for px, py in [t.position] + predict_path(t, horizon, step)]
    out = set()
    for i in range(win.shape[0]):
        for j in range(win.shape[1]):
            cx, cy = win.cell_center(i, j)
            if any(b[0] <= cx <= b[2] and b[1] <= cy <= b[3] for b in boxes):
                out.add((i, j))
    return out


def test_stationary_sweep_is_inflated_bbox():
    t = track(3.05, 3.05)
    ob = sweep_dilate(t, 1.5, 0.1, 0.2, WIN)
    xs = [WIN.cell_center(i, j)[0] for i, j in ob.cell_set()]
    assert max(xs) - min(xs) == pytest.approx(0.4 + 2 * 0.3, abs=0.1 + 1e-9)
    assert ob.kind == "dynamic-swept" and ob.source == 1


def test_moving_sweep_extends_forward():
    t = track(2.0, 3.0, vx=1.0)
    cells = sweep_dilate(t, 1.0, 0.1, 0.2, WIN).cell_set()
    xs = [WIN.cell_center(i, j)[0] for i, j in cells]
    ahead, behind = max(xs) - 2.0, 2.0 - min(xs)
    assert ahead - behind == pytest.approx(1.0, abs=0.1 + 1e-9)


@settings(max_examples=30, deadline=None)
@given(st.floats(1, 5), st.floats(1, 5), st.floats(-1, 1), st.floats(-1, 1), st.floats(0.05, 2))
def test_sweep_matches_enumeration(x, y, vx, vy, horizon):
    t = track(x, y, vx, vy)
    ob = sweep_dilate(t, horizon, 0.1, 0.2, WIN)
    assert ob.cell_set() == brute_sweep(t, horizon, 0.3, WIN)
    assert ob.cells[ob.core].all()  # current footprint is claimed


def test_sweep_short_horizon_converges_to_bbox():
    t = track(3.0, 3.0, vx=0.8)
    short = sweep_dilate(t, 0.05, 0.1, 0.2, WIN).cell_set()
    assert short == sweep_dilate(track(3.0, 3.0), 0.05, 0.1, 0.2, WIN).cell_set()


@pytest.mark.parametrize("bad", [dict(horizon=0.0), dict(margin=-0.1)])
def test_sweep_rejects_bad_args(bad):
    kw = dict(horizon=1.0, margin=0.1) | bad
    with pytest.raises(ValueError):
        sweep_dilate(track(1, 1), kw["horizon"], kw["margin"], 0.2, WIN)


def test_local_goal_single_approacher():
    g = choose_local_goal((0.0, 0.0), [track(2.0, 0.0, vx=-1.0)], 1.5)
    assert g == pytest.approx((-1.5, 0.0), abs=1e-9)


def test_local_goal_saved_goal_wins():
    assert choose_local_goal((0, 0), [track(2, 0, -1)], saved_goal=(7.0, 8.0)) == (7.0, 8.0)


def test_local_goal_symmetric_uses_clearance():
    m = StaticMap.empty(6, 6, 0.1).with_rects([(0, 0, 6, 1.6)])
    r = (3.05, 2.55)
    tr = [track(1.05, 2.55, vx=1.0, tid=1), track(5.05, 2.55, vx=-1.0, tid=2)]
    g = choose_local_goal(r, tr, 1.5, m)
    assert g == pytest.approx((3.05, 4.05), abs=1e-9)
    assert clearance(m, *g) > clearance(m, 3.05, 1.05)


def test_clearance_matches_brute_force():
    m = walled_room(3.0, 3.0, 0.1, 0.3).with_rects([(1.2, 1.2, 1.5, 1.5)])
    occ = np.argwhere(m.cells)
    centers = np.column_stack(((occ[:, 1] + 0.5) * 0.1, (occ[:, 0] + 0.5) * 0.1))
    for x, y in [(0.65, 0.65), (2.05, 1.35), (1.05, 2.45)]:
        assert clearance(m, x, y) == pytest.approx(np.hypot(centers[:, 0] - x, centers[:, 1] - y).min())


def test_potential_examples():
    win = Window((-2.0, -2.0), (40, 40), 0.1)
    pm = build_potential(None, [], (0.05, 0.05), FieldParams(), win)
    assert pm.value_at(0.05, 0.05) == pytest.approx(0.0, abs=1e-9)
    pm2 = build_potential(None, [], (0.05, 0.05), FieldParams(alpha=2.0), win)
    assert pm2.value_at(1.05, 0.05) == pytest.approx(1.0, abs=1e-9)


def test_repulsive_boundary_and_cap():
    assert repulsive(1.0, 25, 1.0, 1000) == 0.0
    assert repulsive(2.0, 25, 1.0, 1000) == 0.0
    assert repulsive(0.0, 25, 1.0, 1000) == 1000.0
    assert repulsive(0.5, 25, 1.0, 1000) == pytest.approx(12.5, abs=1e-9)
    assert repulsive(0.01, 25, 1.0, 1000) == 1000.0


@given(st.floats(1e-6, 3.0), st.floats(1e-6, 3.0))
def test_repulsive_monotone(a, b):
    lo, hi = min(a, b), max(a, b)
    assert repulsive(lo, 25, 1.0, 1000) >= repulsive(hi, 25, 1.0, 1000)


def test_obstacle_cells_are_infeasible():
    c = np.zeros((10, 10), bool)
    c[4:6, 4:6] = True
    pm = pmap_from_cells(c, 0.1)
    assert pm.U[c].min() >= pm.params.threshold
    assert not pm.feasible[c].any()


def test_goal_outside_window_rejected():
    with pytest.raises(BoundsError):
        build_potential(None, [], (9.0, 9.0), FieldParams(), Window((0, 0), (10, 10), 0.1))


def test_invalid_params_rejected():
    w = Window((0, 0), (5, 5), 0.1)
    with pytest.raises(ValueError):
        build_potential(None, [], (0.1, 0.1), FieldParams(alpha=-1.0), w)
    with pytest.raises(ValueError):
        build_potential(None, [], (0.1, 0.1), FieldParams(d0=0.0), w)


def test_distance_examples():
    c = np.zeros((8, 8), bool)
    c[0, 0] = True
    pm = pmap_from_cells(c, 0.1)
    x0, y0 = pm.cell_center(0, 0)
    assert distance_to_obstacles(pm, (x0 + 0.3, y0 + 0.4)) == pytest.approx(0.5, abs=1e-9)
    assert distance_to_obstacles(pm, (x0, y0)) == 0.0
    with pytest.raises(BoundsError):
        distance_to_obstacles(pm, (-1.0, 0.0))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_distance_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    c = rng.random((12, 15)) < 0.15
    c[0, 0] = True
    pm = pmap_from_cells(c, 0.1)
    idx = np.argwhere(c)
    cx = (idx[:, 1] + 0.5) * 0.1
    cy = (idx[:, 0] + 0.5) * 0.1
    for i in range(12):
        for j in range(15):
            x, y = pm.cell_center(i, j)
            brute = 0.0 if c[i, j] else np.hypot(cx - x, cy - y).min()
            assert distance_to_obstacles(pm, (x, y)) == pytest.approx(brute, abs=1e-12)
            assert pm.distance[i, j] == pytest.approx(brute, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_removing_an_obstacle_never_raises_u(seed):
    rng = np.random.default_rng(seed)
    win = Window((0, 0), (20, 20), 0.1)
    obs = []
    for k in range(3):
        m = np.zeros(win.shape, bool)
        i, j = rng.integers(0, 18, 2)
        m[i:i + 2, j:j + 2] = True
        obs.append(InflatedObstacle(k, m, "dynamic-swept", m))
    full = build_potential(None, obs, (1.0, 1.0), FieldParams(), win)
    for k in range(3):
        fewer = build_potential(None, obs[:k] + obs[k + 1:], (1.0, 1.0), FieldParams(), win)
        assert np.all(fewer.U <= full.U + 1e-12)
    shuffled = build_potential(None, obs[::-1], (1.0, 1.0), FieldParams(), win)
    assert np.array_equal(shuffled.U, full.U) and np.array_equal(shuffled.feasible, full.feasible)


def test_feasible_is_threshold_and_u_nonnegative():
    m = walled_room(4, 4)
    pm = build_potential(m, [sweep_dilate(track(2, 2, 0.5), 1.5, 0.1, 0.2, Window.of_map(m))],
                         (1.0, 1.0), FieldParams())
    assert np.array_equal(pm.feasible, pm.U <= 90.0)
    assert pm.U.min() >= 0
    for o in pm.obstacles:
        assert not pm.feasible[o.cells].any()


def test_static_mask_marks_offmap_occupied():
    m = StaticMap.empty(2, 2, 0.1)
    win = Window((-0.5, 0.0), (20, 20), 0.1)
    mask = static_mask(m, win)
    assert mask[:, :5].all() and not mask[:, 5:].any()


def test_window_around_is_grid_aligned(room):
    w = Window.around(room, (3.02, 2.97), 8.0)
    assert w.shape == (80, 80)
    assert (w.origin[0] / 0.1) == pytest.approx(round(w.origin[0] / 0.1))
    assert w.in_bounds(3.02, 2.97)
    cx, cy = w.clamp(50.0, -50.0)
    assert w.in_bounds(cx, cy)
