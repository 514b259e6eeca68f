"""Node features and the robot / frontier / history graphs built each planning cycle."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import geodesy
from .mapping import FrontierClusters, OccupancyGrid
from .neuralcore import autodiff as ad

FEATURE_SCALE = 8
UNREACHABLE = 2.0
HISTORY_CAPACITY = 8

ROBOT, FRONTIER = 0, 1


# --------------------------------------------------------------------------- #
# bilinear sampling


def _bilerp_weights(points, fh: int, fw: int):
    """Corner indices (into the flattened fh*fw map) and weights for each point.

    A map-space point ``(x, y)`` is scaled by 1/8 and sampled between
    feature-cell centres; points beyond the outer centres clamp to the border.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    u = np.clip(pts[:, 0] / FEATURE_SCALE - 0.5, 0.0, fw - 1)
    v = np.clip(pts[:, 1] / FEATURE_SCALE - 0.5, 0.0, fh - 1)
    x0 = np.minimum(np.floor(u).astype(np.int64), max(fw - 2, 0))
    y0 = np.minimum(np.floor(v).astype(np.int64), max(fh - 2, 0))
    x1 = np.minimum(x0 + 1, fw - 1)
    y1 = np.minimum(y0 + 1, fh - 1)
    tx = u - x0
    ty = v - y0
    idx = np.stack([y0 * fw + x0, y0 * fw + x1, y1 * fw + x0, y1 * fw + x1], axis=1)
    w = np.stack([(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty], axis=1)
    return idx, w


def bilerp_many(points, feat):
    """Sample a channel-last (fh, fw, C) feature map at map-space points -> (N, C).

    Works on numpy arrays and on autodiff tensors (gradients flow to ``feat``).
    """
    if isinstance(feat, ad.Tensor):
        fh, fw, c = feat.shape
        idx, w = _bilerp_weights(points, fh, fw)
        flat = ad.reshape(feat, (fh * fw, c))
        out = None
        for k in range(4):
            term = ad.gather_rows(flat, idx[:, k]) * w[:, k : k + 1]
            out = term if out is None else out + term
        return out
    feat = np.asarray(feat, dtype=float)
    fh, fw, c = feat.shape
    idx, w = _bilerp_weights(points, fh, fw)
    flat = feat.reshape(fh * fw, c)
    return (flat[idx] * w[:, :, None]).sum(axis=1)


def bilerp(p, feat):
    """Feature vector at a single map-space point."""
    out = bilerp_many([p], feat)
    return out[0] if not isinstance(out, ad.Tensor) else ad.reshape(out, (-1,))


# --------------------------------------------------------------------------- #
# nodes and history


@dataclass(frozen=True)
class TopoNode:
    category: tuple[int, int]
    geometric: tuple[float, float, float]
    rep: np.ndarray = field(repr=False)

    @property
    def features(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.category, float), np.asarray(self.geometric, float), self.rep])


@dataclass
class History:
    """Per-robot FIFO buffers of past poses and past goals (with their feature vectors)."""

    n_robots: int
    capacity: int = HISTORY_CAPACITY
    robots: list = field(default_factory=list)
    goals: list = field(default_factory=list)

    def __post_init__(self):
        if not self.robots:
            self.robots = [deque(maxlen=self.capacity) for _ in range(self.n_robots)]
        if not self.goals:
            self.goals = [deque(maxlen=self.capacity) for _ in range(self.n_robots)]

    def record(self, robots, goal_cells, goal_counts, robot_reps, goal_reps):
        """Append one executed decision: each robot's pose and its goal."""
        for i, r in enumerate(robots):
            self.robots[i].append((r.cell, float(r.heading), np.asarray(robot_reps[i], float).copy()))
            if goal_cells[i] is not None:
                self.goals[i].append((tuple(goal_cells[i]), float(goal_counts[i]), np.asarray(goal_reps[i], float).copy()))

    def robot_entries(self):
        return [e for buf in self.robots for e in buf]

    def goal_entries(self):
        return [e for buf in self.goals for e in buf]

    def copy(self) -> "History":
        h = History(self.n_robots, self.capacity)
        h.robots = [deque(buf, maxlen=self.capacity) for buf in self.robots]
        h.goals = [deque(buf, maxlen=self.capacity) for buf in self.goals]
        return h


# --------------------------------------------------------------------------- #
# graph set


def complete_adjacency(n: int) -> np.ndarray:
    return np.ones((n, n), dtype=bool)


def bipartite_edges(na: int, nb: int) -> np.ndarray:
    return np.array([(i, j) for i in range(na) for j in range(nb)], dtype=np.int64).reshape(-1, 2)


@dataclass
class NodeSet:
    """A group of graph nodes: map-space points plus raw (category, x, y, s) attributes."""

    category: int
    cells: np.ndarray  # (n, 2) integer cells
    scalar: np.ndarray  # (n,) heading or frontier count
    rep: np.ndarray  # (n, C) feature vectors (fixed for history nodes)

    def __len__(self) -> int:
        return len(self.cells)

    @property
    def points(self) -> np.ndarray:
        return self.cells.astype(float) + 0.5

    def nodes(self) -> list[TopoNode]:
        cat = (1, 0) if self.category == ROBOT else (0, 1)
        return [
            TopoNode(cat, (float(p[0]), float(p[1]), float(s)), r)
            for p, s, r in zip(self.points, self.scalar, self.rep)
        ]


@dataclass
class TopoGraphSet:
    robots: NodeSet
    frontiers: NodeSet
    hist_robots: NodeSet
    hist_goals: NodeSet
    d_rf: np.ndarray
    d_rr: np.ndarray
    d_fg: np.ndarray
    map_shape: tuple[int, int]
    raw_d_rf: np.ndarray = None

    @property
    def n_r(self) -> int:
        return len(self.robots)

    @property
    def n_f(self) -> int:
        return len(self.frontiers)

    @property
    def G_r(self) -> np.ndarray:
        return complete_adjacency(len(self.robots))

    @property
    def G_f(self) -> np.ndarray:
        return complete_adjacency(len(self.frontiers))

    @property
    def G_r_hist(self) -> np.ndarray:
        return complete_adjacency(len(self.hist_robots))

    @property
    def G_g_hist(self) -> np.ndarray:
        return complete_adjacency(len(self.hist_goals))

    @property
    def E_rf(self) -> np.ndarray:
        return bipartite_edges(self.n_r, self.n_f)

    @property
    def E_rr_hist(self) -> np.ndarray:
        return bipartite_edges(self.n_r, len(self.hist_robots))

    @property
    def E_fg_hist(self) -> np.ndarray:
        return bipartite_edges(self.n_f, len(self.hist_goals))


def _norm_dist(raw: np.ndarray, diag: float) -> np.ndarray:
    out = raw / diag
    out[~np.isfinite(raw)] = UNREACHABLE
    return out


def _empty_nodes(category: int, c: int) -> NodeSet:
    return NodeSet(category, np.zeros((0, 2), np.int64), np.zeros(0), np.zeros((0, c)))


def build_graph_set(robots, clusters: FrontierClusters, obs_features, grid: OccupancyGrid, history: History | None = None):
    """Assemble nodes and FMM-weighted cross edges for one decision.

    ``obs_features`` is the channel-last observation feature map used to fill
    the representation part of each current node.  Distances are geodesic
    through known-free space, divided by the map diagonal, with
    :data:`UNREACHABLE` for pairs that cannot reach each other.
    """
    feats = obs_features.data if isinstance(obs_features, ad.Tensor) else np.asarray(obs_features)
    c = feats.shape[-1]
    if len(clusters) == 0:
        raise ValueError("no frontier clusters: exploration is complete")
    r_cells = np.array([r.cell for r in robots], dtype=np.int64).reshape(-1, 2)
    r_nodes = NodeSet(ROBOT, r_cells, np.array([float(r.heading) for r in robots]), bilerp_many(r_cells + 0.5, feats))
    f_cells = np.asarray(clusters.centers, dtype=np.int64).reshape(-1, 2)
    f_nodes = NodeSet(FRONTIER, f_cells, np.asarray(clusters.counts, float), bilerp_many(f_cells + 0.5, feats))

    if history is not None and history.robot_entries():
        ent = history.robot_entries()
        hr = NodeSet(ROBOT, np.array([e[0] for e in ent], np.int64), np.array([e[1] for e in ent]), np.stack([e[2] for e in ent]))
    else:
        hr = _empty_nodes(ROBOT, c)
    if history is not None and history.goal_entries():
        ent = history.goal_entries()
        hg = NodeSet(FRONTIER, np.array([e[0] for e in ent], np.int64), np.array([e[1] for e in ent]), np.stack([e[2] for e in ent]))
    else:
        hg = _empty_nodes(FRONTIER, c)

    diag = math.hypot(*grid.shape)
    trav = grid.free_mask
    raw_rf = geodesy.distance_table(trav, r_cells, f_cells)
    raw_rr = geodesy.distance_table(trav, r_cells, hr.cells) if len(hr) else np.zeros((len(r_cells), 0))
    raw_fg = geodesy.distance_table(trav, f_cells, hg.cells) if len(hg) else np.zeros((len(f_cells), 0))
    return TopoGraphSet(
        robots=r_nodes,
        frontiers=f_nodes,
        hist_robots=hr,
        hist_goals=hg,
        d_rf=_norm_dist(raw_rf, diag),
        d_rr=_norm_dist(raw_rr, diag),
        d_fg=_norm_dist(raw_fg, diag),
        map_shape=grid.shape,
        raw_d_rf=raw_rf,
    )
