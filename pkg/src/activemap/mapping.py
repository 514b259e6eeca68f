"""Shared occupancy map, frontier detection/clustering and 5-channel map stacks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .worldsim import FREE, OBSTACLE, DepthScan, GroundTruthMap, RobotState

UNKNOWN = -1
DEFAULT_R_CLUS = 8.0

CHANNELS = ("obstacle", "free", "robot", "frontier", "trajectory")


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    cells: np.ndarray

    @classmethod
    def empty(cls, height: int, width: int) -> "OccupancyGrid":
        return cls(np.full((height, width), UNKNOWN, dtype=np.int8))

    @classmethod
    def like(cls, world: GroundTruthMap) -> "OccupancyGrid":
        return cls.empty(world.height, world.width)

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    @property
    def explored_count(self) -> int:
        return int(np.count_nonzero(self.cells != UNKNOWN))

    @property
    def free_mask(self) -> np.ndarray:
        return self.cells == FREE

    def __eq__(self, other):
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return np.array_equal(self.cells, other.cells)

    def __hash__(self):
        return hash(self.cells.tobytes())


def integrate_scan(grid: OccupancyGrid, state: RobotState, scan: DepthScan) -> OccupancyGrid:
    """Merge one scan into the map.  Obstacle evidence always wins over free."""
    cells = grid.cells.copy()
    free = scan.free_cells()
    if len(free):
        xs, ys = free[:, 0], free[:, 1]
        keep = cells[ys, xs] != OBSTACLE
        cells[ys[keep], xs[keep]] = FREE
    hits = scan.hit_cells()
    if len(hits):
        cells[hits[:, 1], hits[:, 0]] = OBSTACLE
    return OccupancyGrid(cells)


def exploration_rate(grid: OccupancyGrid, world: GroundTruthMap) -> float:
    """Known-free cells of the reachable region over its size."""
    known = np.count_nonzero((grid.cells == FREE) & world.free_component)
    return known / world.free_count


def frontier_mask(grid: OccupancyGrid) -> np.ndarray:
    unknown = grid.cells == UNKNOWN
    pad = np.pad(unknown, 1, constant_values=False)
    near = pad[:-2, 1:-1] | pad[2:, 1:-1] | pad[1:-1, :-2] | pad[1:-1, 2:]
    return (grid.cells == FREE) & near


def detect_frontiers(grid: OccupancyGrid) -> np.ndarray:
    """Free cells with at least one unknown 4-neighbour, as ``(n, 2)`` (x, y) rows in row-major order."""
    ys, xs = np.nonzero(frontier_mask(grid))
    return np.stack([xs, ys], axis=1).astype(np.int64)


@dataclass
class FrontierClusters:
    clusters: list
    centers: np.ndarray
    counts: np.ndarray

    def __len__(self) -> int:
        return len(self.clusters)

    def center_cells(self) -> list[tuple[int, int]]:
        return [(int(x), int(y)) for x, y in self.centers]


def _medoid(members: np.ndarray) -> int:
    if len(members) == 1:
        return 0
    diff = members[:, None, :] - members[None, :, :]
    dist = np.sqrt((diff.astype(float) ** 2).sum(-1))
    avg = dist.sum(1) / (len(members) - 1)
    return int(np.argmin(avg))


def cluster_frontiers(points, r_clus: float = DEFAULT_R_CLUS) -> FrontierClusters:
    """Greedy adjacent-neighbour clustering of frontier points.

    Seeds are taken in row-major order; a cluster keeps absorbing any
    remaining point within ``r_clus`` of one of its members.  The centre is
    the member with the smallest mean distance to the other members.
    """
    if r_clus <= 0:
        raise ValueError("r_clus must be positive")
    pts = np.asarray(points, dtype=np.int64).reshape(-1, 2)
    if len(pts) == 0:
        return FrontierClusters([], np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.int64))
    order = np.lexsort((pts[:, 0], pts[:, 1]))
    pts = pts[order]
    diff = pts[:, None, :] - pts[None, :, :]
    adj = (diff.astype(float) ** 2).sum(-1) <= r_clus * r_clus + 1e-9

    remaining = np.ones(len(pts), dtype=bool)
    clusters, centers, counts = [], [], []
    for seed in range(len(pts)):
        if not remaining[seed]:
            continue
        remaining[seed] = False
        members = [seed]
        head = 0
        while head < len(members):
            grab = np.nonzero(adj[members[head]] & remaining)[0]
            remaining[grab] = False
            members.extend(grab.tolist())
            head += 1
        members.sort()
        block = pts[members]
        clusters.append(block)
        centers.append(block[_medoid(block)])
        counts.append(len(block))
    return FrontierClusters(clusters, np.array(centers, dtype=np.int64), np.array(counts, dtype=np.int64))


def observation_stack(grid: OccupancyGrid, robots, frontiers, trails) -> np.ndarray:
    """The ``(5, H, W)`` observation stack: obstacle, free, robot, frontier, trajectory."""
    h, w = grid.shape
    obs = np.zeros((5, h, w))
    obs[0] = grid.cells == OBSTACLE
    obs[1] = grid.cells == FREE
    for r in robots:
        x, y = r.cell if isinstance(r, RobotState) else r
        _check_cell(x, y, w, h)
        obs[2, y, x] = 1.0
    fr = np.asarray(frontiers, dtype=np.int64).reshape(-1, 2)
    if len(fr):
        if fr[:, 0].max() >= w or fr[:, 1].max() >= h or fr.min() < 0:
            raise ShapeError("frontier cell outside grid")
        obs[3, fr[:, 1], fr[:, 0]] = 1.0
    for trail in trails:
        for x, y in trail:
            _check_cell(x, y, w, h)
            obs[4, y, x] = 1.0
    return obs


def build_stacks(grid: OccupancyGrid, truth: GroundTruthMap, robots, frontiers, trails):
    """Observation and privilege stacks, each ``(5, H, W)`` float arrays in {0, 1}.

    The privilege stack is the observation stack with ground-truth
    obstacle/free channels swapped in.
    """
    if grid.shape != truth.shape:
        raise ShapeError(f"grid shape {grid.shape} != world shape {truth.shape}")
    obs = observation_stack(grid, robots, frontiers, trails)
    priv = obs.copy()
    priv[0] = truth.cells == OBSTACLE
    priv[1] = truth.cells == FREE
    return obs, priv


def _check_cell(x, y, w, h):
    if not (0 <= x < w and 0 <= y < h):
        raise ShapeError(f"cell {(x, y)} outside {w}x{h} grid")
