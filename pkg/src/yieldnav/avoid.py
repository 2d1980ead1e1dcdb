"""Avoidance-point selection: feasible direct-connect sampling scored by a weighted evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .field import PotentialMap, distance_to_obstacles
from .tsdf import BoundsError


class NoFeasiblePoint(RuntimeError):
    """No sampled point survived the feasibility checks."""


@dataclass(frozen=True)
class AvoidWeights:
    safe: float = 1.0
    dist: float = 0.2
    pot: float = 0.05
    hyst: float = 0.3

    def scaled(self, c: float) -> AvoidWeights:
        return AvoidWeights(self.safe * c, self.dist * c, self.pot * c, self.hyst * c)


@dataclass(frozen=True)
class Candidate:
    point: tuple[float, float]
    q_score: float = math.nan
    components: tuple[float, float, float, float] | None = None  # S, D, U, H


@dataclass(frozen=True)
class AvoidanceDecision:
    candidates: tuple[Candidate, ...]
    selected: Candidate
    x_prev: tuple[float, float] | None
    weights: AvoidWeights
    seed: dict | None = field(default=None, repr=False)


def segment_feasible(pmap: PotentialMap, a, b, escape: bool = False) -> bool:
    """True iff every cell the segment a->b touches is feasible.

    ``escape`` lets the segment start inside a high-cost region and leave it, as long
    as the way out avoids static cells and current dynamic footprints.
    """
    ax, ay = float(a[0]), float(a[1])
    bx, by = float(b[0]), float(b[1])
    if not pmap.in_bounds(ax, ay) or not pmap.in_bounds(bx, by):
        raise BoundsError("segment endpoints must lie inside the map")
    return bool(kernels.segment_feasible(
        pmap.feasible.view(np.uint8), pmap.hard.view(np.uint8),
        pmap.origin[0], pmap.origin[1], pmap.resolution, ax, ay, bx, by, escape,
    ))


def _needs_escape(pmap: PotentialMap, x_start) -> bool:
    return not pmap.is_feasible(float(x_start[0]), float(x_start[1]))


def sample_candidates(pmap: PotentialMap, x_start, n_samples: int,
                      rng: np.random.Generator) -> list[Candidate]:
    """Uniform cell-center samples that are feasible and directly reachable from ``x_start``."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if not pmap.in_bounds(float(x_start[0]), float(x_start[1])):
        raise BoundsError("x_start outside map")
    h, w = pmap.shape
    flat = rng.integers(0, h * w, size=n_samples)
    escape = _needs_escape(pmap, x_start)
    out = []
    for f in flat:
        i, j = divmod(int(f), w)
        if not pmap.feasible[i, j]:
            continue
        p = pmap.cell_center(i, j)
        if segment_feasible(pmap, x_start, p, escape):
            out.append(Candidate(p))
    return out


def exhaustive_candidates(pmap: PotentialMap, x_start) -> list[Candidate]:
    """Every feasible, directly reachable cell center in row-major order."""
    escape = _needs_escape(pmap, x_start)
    out = []
    for i, j in zip(*np.nonzero(pmap.feasible)):
        p = pmap.cell_center(int(i), int(j))
        if segment_feasible(pmap, x_start, p, escape):
            out.append(Candidate(p))
    return out


def score_candidate(x, x_start, x_prev, pmap: PotentialMap, weights: AvoidWeights) -> Candidate:
    px, py = float(x[0]), float(x[1])
    S = distance_to_obstacles(pmap, (px, py))
    dx = px - float(x_start[0])
    dy = py - float(x_start[1])
    D = math.sqrt(dx * dx + dy * dy)
    U = pmap.value_at(px, py)
    if x_prev is None:
        H = 0.0
    else:
        hx = px - float(x_prev[0])
        hy = py - float(x_prev[1])
        H = math.sqrt(hx * hx + hy * hy)
    safe = weights.safe * S if weights.safe != 0 else 0.0
    q = safe - weights.dist * D - weights.pot * U - weights.hyst * H
    return Candidate((px, py), q, (S, D, U, H))


def _rank_key(c: Candidate):
    # highest Q, then shortest D, then lexicographic point
    return (-c.q_score, c.components[1], c.point[0], c.point[1])


def select_avoidance_point(pmap: PotentialMap, x_start, x_prev, weights: AvoidWeights,
                           n_samples: int, rng: np.random.Generator | None,
                           exhaustive: bool = False) -> AvoidanceDecision:
    """Sample, score and return the best candidate.

    Raises ``NoFeasiblePoint`` when nothing survives; the caller holds position and
    tries again next tick.
    """
    seed = None
    if exhaustive:
        raw = exhaustive_candidates(pmap, x_start)
    else:
        seed = rng.bit_generator.state
        raw = sample_candidates(pmap, x_start, n_samples, rng)
    if not raw:
        raise NoFeasiblePoint("no feasible candidate")
    scored = [score_candidate(c.point, x_start, x_prev, pmap, weights) for c in raw]
    best = min(scored, key=_rank_key)
    prev = None if x_prev is None else (float(x_prev[0]), float(x_prev[1]))
    return AvoidanceDecision(tuple(scored), best, prev, weights, seed)
