"""Clustering of dynamic returns, nearest-centroid association, constant-velocity Kalman tracks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree


@dataclass(frozen=True)
class Cluster:
    points: np.ndarray
    centroid: tuple[float, float]
    bbox: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax

    @classmethod
    def from_points(cls, points) -> Cluster:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        if len(pts) == 0:
            raise ValueError("cluster must be nonempty")
        c = pts.mean(axis=0)
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        return cls(pts, (float(c[0]), float(c[1])), (float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])))


def cluster_points(points, delta: float, min_pts: int = 3) -> list[Cluster]:
    """Connected components of the graph joining points at most ``delta`` apart.

    Output is independent of input order: points inside a cluster are sorted
    lexicographically and clusters are ordered by their first point.
    """
    if not delta > 0:
        raise ValueError("delta must be > 0")
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        return []
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]
    pairs = cKDTree(pts).query_pairs(delta, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    clusters = []
    seen = set()
    for idx in range(n):
        lab = labels[idx]
        if lab in seen:
            continue
        seen.add(lab)
        members = pts[labels == lab]
        if len(members) >= min_pts:
            clusters.append(Cluster.from_points(members))
    return clusters


@dataclass(frozen=True)
class KalmanParams:
    q_proc: float = 0.01
    r_meas: float = 0.02
    init_vel_var: float = 4.0


@dataclass(frozen=True)
class Track:
    id: int
    state: np.ndarray  # x, y, vx, vy
    covariance: np.ndarray
    bbox: tuple[float, float, float, float]
    age: int = 0
    missed: int = 0

    @property
    def position(self) -> tuple[float, float]:
        return float(self.state[0]), float(self.state[1])

    @property
    def velocity(self) -> tuple[float, float]:
        return float(self.state[2]), float(self.state[3])

    @property
    def bbox_offsets(self) -> tuple[float, float, float, float]:
        """bbox relative to the current position estimate."""
        x, y = self.position
        b = self.bbox
        return b[0] - x, b[1] - y, b[2] - x, b[3] - y


def new_track(track_id: int, cluster: Cluster, kp: KalmanParams = KalmanParams()) -> Track:
    """Zero-velocity start with a wide velocity prior."""
    state = np.array([cluster.centroid[0], cluster.centroid[1], 0.0, 0.0])
    cov = np.diag([kp.r_meas, kp.r_meas, kp.init_vel_var, kp.init_vel_var])
    return Track(track_id, state, cov, cluster.bbox)


def kf_predict(track: Track, dt: float, q_proc: float = KalmanParams.q_proc) -> Track:
    if dt < 0:
        raise ValueError("dt must be >= 0")
    if dt == 0:
        return track
    F = np.eye(4)
    F[0, 2] = F[1, 3] = dt
    state = F @ track.state
    P = F @ track.covariance @ F.T + (q_proc * dt) * np.eye(4)
    P = 0.5 * (P + P.T)
    shift_x = state[0] - track.state[0]
    shift_y = state[1] - track.state[1]
    b = track.bbox
    return replace(track, state=state, covariance=P,
                   bbox=(b[0] + shift_x, b[1] + shift_y, b[2] + shift_x, b[3] + shift_y))


_H = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])


def kf_update(track: Track, measurement, r_meas: float = KalmanParams.r_meas) -> Track:
    """Position-only update. A non-finite measurement is rejected and counts as a miss."""
    z = np.asarray(measurement, dtype=float)
    if z.shape != (2,) or not np.all(np.isfinite(z)):
        return replace(track, missed=track.missed + 1)
    P = track.covariance
    S = _H @ P @ _H.T + r_meas * np.eye(2)
    K = np.linalg.solve(S, _H @ P).T
    y = z - _H @ track.state
    state = track.state + K @ y
    # Joseph form keeps P symmetric PSD
    A = np.eye(4) - K @ _H
    P = A @ P @ A.T + r_meas * (K @ K.T)
    P = 0.5 * (P + P.T)
    return replace(track, state=state, covariance=P, missed=0)


def predict_path(track: Track, horizon: float, step: float) -> list[tuple[float, float]]:
    """Centroids at ``step, 2*step, ...`` up to ``horizon`` under constant velocity."""
    if not horizon > 0 or not step > 0:
        raise ValueError("horizon and step must be > 0")
    n = int(math.floor(horizon / step + 1e-9))
    x, y = track.position
    vx, vy = track.velocity
    return [(x + vx * k * step, y + vy * k * step) for k in range(1, n + 1)]


@dataclass
class Assignment:
    matches: list[tuple[int, int]]  # (cluster index, track index)
    unmatched_clusters: list[int]
    unmatched_tracks: list[int]


def associate(clusters, tracks, match_threshold: float) -> Assignment:
    """Greedy globally-nearest pairing on centroid distance."""
    if not match_threshold > 0:
        raise ValueError("match_threshold must be > 0")
    pairs = []
    for ci, c in enumerate(clusters):
        for ti, t in enumerate(tracks):
            tx, ty = t.position
            d = math.hypot(c.centroid[0] - tx, c.centroid[1] - ty)
            if d <= match_threshold:
                pairs.append((d, ci, ti))
    pairs.sort()
    used_c, used_t = set(), set()
    matches = []
    for _, ci, ti in pairs:
        if ci in used_c or ti in used_t:
            continue
        used_c.add(ci)
        used_t.add(ti)
        matches.append((ci, ti))
    return Assignment(
        matches=sorted(matches),
        unmatched_clusters=[i for i in range(len(clusters)) if i not in used_c],
        unmatched_tracks=[i for i in range(len(tracks)) if i not in used_t],
    )


@dataclass
class Tracker:
    """Per-frame predict / associate / update / spawn / drop cycle."""

    delta: float = 0.3
    min_pts: int = 3
    match_threshold: float = 0.6
    m_drop: int = 5
    confirm_frames: int = 3
    kalman: KalmanParams = KalmanParams()
    tracks: list[Track] = field(default_factory=list)
    next_id: int = 1

    def step(self, dynamic_points, dt: float) -> list[Track]:
        clusters = cluster_points(dynamic_points, self.delta, self.min_pts)
        predicted = [kf_predict(t, dt, self.kalman.q_proc) for t in self.tracks]
        asg = associate(clusters, predicted, self.match_threshold)
        out = []
        for ci, ti in asg.matches:
            t = kf_update(predicted[ti], clusters[ci].centroid, self.kalman.r_meas)
            out.append(replace(t, bbox=clusters[ci].bbox, age=t.age + 1))
        for ti in asg.unmatched_tracks:
            t = predicted[ti]
            t = replace(t, missed=t.missed + 1, age=t.age + 1)
            if t.missed <= self.m_drop:
                out.append(t)
        for ci in asg.unmatched_clusters:
            out.append(new_track(self.next_id, clusters[ci], self.kalman))
            self.next_id += 1
        out.sort(key=lambda t: t.id)
        self.tracks = out
        return out

    def confirmed(self) -> list[Track]:
        """Tracks old enough to act on; fresh tracks are often noise."""
        return [t for t in self.tracks if t.age >= self.confirm_frames]
