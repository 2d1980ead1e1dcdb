import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import pmap_from_cells
from oracles import brute_argmax, dense_segment_feasible, exact_segment_feasible
from yieldnav import kernels
from yieldnav.avoid import (
    AvoidWeights, NoFeasiblePoint, sample_candidates, score_candidate, segment_feasible,
    select_avoidance_point,
)
from yieldnav.field import FieldParams, InflatedObstacle
from yieldnav.tsdf import BoundsError


def test_segment_examples():
    c = np.zeros((10, 10), bool)
    c[:, 5] = True
    pm = pmap_from_cells(c, 0.1)
    assert segment_feasible(pm, (0.15, 0.15), (0.15, 0.15))
    assert not segment_feasible(pm, (0.15, 0.45), (0.85, 0.45))
    assert segment_feasible(pm, (0.05, 0.05), (0.05, 0.95))
    with pytest.raises(BoundsError):
        segment_feasible(pm, (0.15, 0.15), (1.5, 0.15))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_segment_agrees_with_exact_and_dense_oracles(seed):
    rng = np.random.default_rng(seed)
    feas = rng.random((12, 12)) > 0.2
    hard = np.zeros(feas.shape, np.uint8)
    for _ in range(20):
        a = rng.uniform(0.001, 1.199, 2)
        b = rng.uniform(0.001, 1.199, 2)
        got = bool(kernels.segment_feasible(feas.view(np.uint8), hard, 0.0, 0.0, 0.1, *a, *b, False))
        assert got == exact_segment_feasible(feas, 0.1, a, b)
        if not dense_segment_feasible(feas, 0.1, a, b):
            assert not got


def test_segment_through_corner_touches_all_four():
    c = np.zeros((4, 4), bool)
    c[1, 2] = True  # diagonal neighbour off the straight path
    pm = pmap_from_cells(c, 1.0)
    assert not segment_feasible(pm, (1.5, 0.5), (3.5, 2.5))  # grazes the corner (2, 1)
    assert segment_feasible(pm, (0.5, 0.5), (0.5, 3.5))


def test_escape_lets_start_leave_soft_halo():
    c = np.zeros((20, 20), bool)
    c[10, 10] = True
    pm = pmap_from_cells(c, 0.1)
    start = pm.cell_center(10, 12)
    assert not pm.is_feasible(*start)
    out = pm.cell_center(10, 18)
    assert not segment_feasible(pm, start, out)
    assert segment_feasible(pm, start, out, escape=True)
    across = pm.cell_center(10, 2)
    assert not segment_feasible(pm, start, across, escape=True)  # would cross a hard cell


def test_sample_examples(rng):
    full = pmap_from_cells(np.ones((10, 10), bool), 0.1)
    assert sample_candidates(full, (0.55, 0.55), 50, rng) == []
    free = pmap_from_cells(np.zeros((10, 10), bool), 0.1, params=FieldParams(alpha=0.0, beta=0.0))
    assert len(sample_candidates(free, (0.55, 0.55), 100, rng)) == 100
    with pytest.raises(ValueError):
        sample_candidates(free, (0.55, 0.55), 0, rng)


def test_ring_candidates_reverified(rng):
    n = 30
    yy, xx = np.mgrid[0:n, 0:n]
    r = np.hypot(xx - 15, yy - 15)
    claimed = (r > 12) | ((r > 6) & (r < 7.5) & (xx < 20))
    pm = pmap_from_cells(claimed, 0.1, params=FieldParams(alpha=0.0, beta=1.0, d0=0.15))
    start = pm.cell_center(15, 15)
    cands = sample_candidates(pm, start, 300, rng)
    assert cands
    for c in cands:
        assert pm.is_feasible(*c.point)
        assert exact_segment_feasible(pm.feasible, 0.1, start, c.point)


def test_score_one_hot_reductions():
    c = np.zeros((10, 10), bool)
    c[0, 0] = True
    pm = pmap_from_cells(c, 0.1)
    x = pm.cell_center(4, 3)
    s = score_candidate(x, (0.05, 0.95), None, pm, AvoidWeights(1, 0, 0, 0))
    assert s.q_score == pytest.approx(math.hypot(0.3, 0.4), abs=1e-9)
    assert score_candidate(x, x, None, pm, AvoidWeights(0, 1, 0, 0)).q_score == pytest.approx(0.0, abs=1e-9)
    assert score_candidate(x, (0.95, 0.95), None, pm, AvoidWeights(0, 0, 0, 1)).q_score == 0.0


def test_single_feasible_cell_selected(rng):
    c = np.ones((9, 9), bool)
    c[4, 4] = False
    pm = pmap_from_cells(c, 1.0, params=FieldParams(alpha=0.0, beta=0.0, threshold=1.0))
    d = select_avoidance_point(pm, (4.5, 4.5), None, AvoidWeights(), 500, rng)
    assert d.selected.point == (4.5, 4.5)


def test_no_feasible_point_raises(rng):
    pm = pmap_from_cells(np.ones((5, 5), bool), 0.1)
    with pytest.raises(NoFeasiblePoint):
        select_avoidance_point(pm, (0.25, 0.25), None, AvoidWeights(), 50, rng)


def _random_pmap(seed):
    rng = np.random.default_rng(seed)
    c = np.zeros((10, 10), bool)
    i, j = rng.integers(0, 9, 2)
    c[i:i + rng.integers(1, 3), j:j + rng.integers(1, 3)] = True
    return pmap_from_cells(c, 1.0, goal=tuple(rng.uniform(0, 10, 2)),
                           params=FieldParams(alpha=0.5, beta=25.0, d0=2.0)), rng


def test_same_stream_same_decision():
    pm, _ = _random_pmap(3)
    x0 = next(pm.cell_center(i, j) for i, j in np.argwhere(pm.feasible))
    a = select_avoidance_point(pm, x0, None, AvoidWeights(), 100, np.random.default_rng(5))
    b = select_avoidance_point(pm, x0, None, AvoidWeights(), 100, np.random.default_rng(5))
    assert a == b


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 100.0))
def test_argmax_invariant_under_weight_scaling(seed, scale):
    pm, rng = _random_pmap(seed)
    feas = np.argwhere(pm.feasible)
    if len(feas) == 0:
        return
    x0 = pm.cell_center(*feas[len(feas) // 2])
    w = AvoidWeights(1.0, 0.2, 0.05, 0.3)
    a = select_avoidance_point(pm, x0, (5.0, 5.0), w, 0, None, exhaustive=True)
    qs = sorted(c.q_score for c in a.candidates)
    if any(abs(p - q) < 1e-9 for p, q in zip(qs, qs[1:])):
        return
    b = select_avoidance_point(pm, x0, (5.0, 5.0), w.scaled(scale), 0, None, exhaustive=True)
    assert a.selected.point == b.selected.point


def test_hysteresis_pull():
    free = pmap_from_cells(np.zeros((3, 7), bool), 1.0, params=FieldParams(alpha=0.0, beta=0.0))
    start = (3.5, 1.5)
    w = AvoidWeights(0.0, 0.0, 0.0, 0.3)
    for prev, want in [((0.5, 1.5), (0.5, 1.5)), ((6.5, 1.5), (6.5, 1.5))]:
        d = select_avoidance_point(free, start, prev, w, 0, None, exhaustive=True)
        assert d.selected.point == want


def test_selection_never_inside_dynamic_obstacle(rng):
    c = np.zeros((20, 20), bool)
    dyn = np.zeros((20, 20), bool)
    dyn[5:15, 8:12] = True
    pm = pmap_from_cells(c, 0.1, dynamic=[InflatedObstacle(1, dyn, "dynamic-swept", dyn)],
                         params=FieldParams())
    d = select_avoidance_point(pm, (0.25, 1.05), None, AvoidWeights(), 200, rng)
    i, j = pm.cell_of(*d.selected.point)
    assert not dyn[i, j] and pm.feasible[i, j]


def test_exhaustive_matches_brute_force():
    for seed in range(10):
        pm, rng = _random_pmap(100 + seed)
        feas = np.argwhere(pm.feasible)
        x0 = pm.cell_center(*feas[rng.integers(len(feas))])
        w = AvoidWeights(1.0, 0.2, 0.05, 0.1)
        d = select_avoidance_point(pm, x0, None, w, 0, None, exhaustive=True)
        assert d.selected.point == brute_argmax(pm, x0, None, (1.0, 0.2, 0.05, 0.1))
