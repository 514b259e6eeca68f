"""Hand-designed goal assignment planners.

Every planner maps a :class:`~activemap.episode.Scene` to one goal per robot
(a frontier-cluster centre cell, or ``None`` to hold position).  Costs are
geodesic distances through known-free space.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.optimize import linear_sum_assignment

from . import geodesy
from .mapping import UNKNOWN

# stands in for inf inside assignment solvers
_BIG = 1e9


def _finite_costs(d: np.ndarray) -> np.ndarray:
    return np.where(np.isfinite(d), d, _BIG)


def nearest_frontier_planner(scene) -> list:
    """Each robot independently heads for its closest reachable cluster centre."""
    d = scene.robot_center_distances
    centers = scene.centers
    goals = []
    for row in d:
        j = int(np.argmin(row))
        goals.append(centers[j] if np.isfinite(row[j]) else None)
    return goals


def information_gain(grid, center, radius: float) -> int:
    """Unknown cells inside the disk of ``radius`` around ``center`` (occlusion ignored)."""
    h, w = grid.shape
    cx, cy = center
    r = int(np.floor(radius))
    x0, x1 = max(cx - r, 0), min(cx + r + 1, w)
    y0, y1 = max(cy - r, 0), min(cy + r + 1, h)
    ys, xs = np.mgrid[y0:y1, x0:x1]
    disk = (xs - cx) ** 2 + (ys - cy) ** 2 <= radius * radius
    return int(np.count_nonzero(disk & (grid.cells[y0:y1, x0:x1] == UNKNOWN)))


def utility_planner(scene) -> list:
    """Greedy information gain: the centre with the most unknown cells within sensor range."""
    gains = np.array([information_gain(scene.grid, c, scene.sensor_range) for c in scene.centers])
    d = scene.robot_center_distances
    goals = []
    for row in d:
        reachable = np.flatnonzero(np.isfinite(row))
        if not len(reachable):
            goals.append(None)
            continue
        # max gain, then shortest distance, then lowest index
        j = min(reachable, key=lambda k: (-gains[k], row[k], k))
        goals.append(scene.centers[j])
    return goals


def voronoi_planner(scene) -> list:
    """Split centres by nearest robot; each robot works its own cell of the partition."""
    d = scene.robot_center_distances
    n_r, n_f = d.shape
    centers = scene.centers
    owner = np.argmin(d, axis=0)
    goals: list = [None] * n_r
    taken = set()
    for i in range(n_r):
        own = [j for j in range(n_f) if owner[j] == i and np.isfinite(d[i, j])]
        if own:
            j = min(own, key=lambda k: (d[i, k], k))
            goals[i] = centers[j]
            taken.add(j)
    for i in range(n_r):
        if goals[i] is not None:
            continue
        options = [j for j in range(n_f) if np.isfinite(d[i, j])]
        if not options:
            continue
        free = [j for j in options if j not in taken] or options
        j = min(free, key=lambda k: (d[i, k], k))
        goals[i] = centers[j]
        taken.add(j)
    return goals


class CoScanPlanner:
    """K-means over raw frontier points, robots matched to clusters at minimum total cost.

    The goal handed to a robot is the frontier point nearest its cluster's
    centroid, so goals here need not be greedy-cluster centres.
    """

    def __init__(self, seed: int = 0, iters: int = 20):
        self.seed = seed
        self.iters = iters

    def __call__(self, scene) -> list:
        pts = np.asarray(scene.frontiers, dtype=float)
        n_r = len(scene.robots)
        k = min(n_r, len(pts))
        rng = np.random.default_rng([self.seed, scene.steps])
        if k == 1:
            centroids = pts.mean(axis=0, keepdims=True)
        else:
            # an empty cluster keeps its centroid, which still snaps to a frontier below
            with warnings.catch_warnings():
                warnings.filterwarnings("ignore", "One of the clusters is empty")
                centroids, _ = kmeans2(pts, k, iter=self.iters, minit="++", seed=rng)
        reps = []
        for c in centroids:
            j = int(np.argmin(((pts - c) ** 2).sum(axis=1)))
            reps.append(tuple(int(v) for v in scene.frontiers[j]))
        cost = np.array([[f.at(rep) for rep in reps] for f in scene.robot_fields])
        rows, cols = linear_sum_assignment(_finite_costs(cost))
        goals: list = [None] * n_r
        for i, j in zip(rows, cols):
            if np.isfinite(cost[i, j]):
                goals[i] = reps[j]
        for i in range(n_r):
            if goals[i] is None and np.isfinite(cost[i]).any():
                goals[i] = reps[int(np.argmin(cost[i]))]
        return goals


def center_distances(scene) -> np.ndarray:
    """(n_f, n_f) geodesic distances between cluster centres."""
    return geodesy.distance_table(scene.grid.free_mask, scene.centers, scene.centers)


def cheapest_insertion_tours(robot_costs: np.ndarray, center_costs: np.ndarray) -> list[list[int]]:
    """Open tours (one per robot) covering every centre, built by cheapest insertion.

    With no more centres than robots this is a minimum-cost assignment and
    surplus robots get empty tours.  Otherwise each robot is first seeded with
    one centre by assignment, then the remaining centres are inserted one at
    a time wherever they add the least length.
    """
    n_r, n_f = robot_costs.shape
    rc, cc = _finite_costs(robot_costs), _finite_costs(center_costs)
    rows, cols = linear_sum_assignment(rc)
    tours: list[list[int]] = [[] for _ in range(n_r)]
    for i, j in zip(rows, cols):
        tours[i].append(int(j))
    left = sorted(set(range(n_f)) - {int(j) for j in cols})

    def added(i, tour, pos, j):
        prev = rc[i, j] if pos == 0 else cc[tour[pos - 1], j]
        if pos == len(tour):
            return prev
        old = rc[i, tour[0]] if pos == 0 else cc[tour[pos - 1], tour[pos]]
        return prev + cc[j, tour[pos]] - old

    while left:
        best = None
        for j in left:
            for i, tour in enumerate(tours):
                for pos in range(len(tour) + 1):
                    c = added(i, tour, pos, j)
                    if best is None or c < best[0]:
                        best = (c, j, i, pos)
        _, j, i, pos = best
        tours[i].insert(pos, j)
        left.remove(j)
    return tours


def tour_length(robot_cost_row: np.ndarray, center_costs: np.ndarray, tour) -> float:
    if not tour:
        return 0.0
    total = robot_cost_row[tour[0]]
    for a, b in zip(tour[:-1], tour[1:]):
        total += center_costs[a, b]
    return float(total)


def mtsp_planner(scene) -> list:
    """Multi-robot open tours over all centres; each robot heads to its first stop."""
    d = scene.robot_center_distances
    cc = center_distances(scene) if len(scene.centers) > d.shape[0] else np.zeros((d.shape[1],) * 2)
    tours = cheapest_insertion_tours(d, cc)
    return [scene.centers[t[0]] if t and np.isfinite(d[i, t[0]]) else None for i, t in enumerate(tours)]


PLANNERS = {
    "nearest": lambda seed: nearest_frontier_planner,
    "utility": lambda seed: utility_planner,
    "voronoi": lambda seed: voronoi_planner,
    "coscan": lambda seed: CoScanPlanner(seed),
    "mtsp": lambda seed: mtsp_planner,
}


def make_planner(name: str, seed: int = 0):
    """Instantiate a baseline by registry name."""
    try:
        return PLANNERS[name](seed)
    except KeyError:
        raise KeyError(f"unknown planner {name!r}; choose from {sorted(PLANNERS)}") from None
