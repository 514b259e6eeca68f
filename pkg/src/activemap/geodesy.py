"""Fast-marching distance fields, descent paths and the waypoint action heuristic.

The solver marches a unit-speed eikonal front over traversable cells using a
first-order upwind update on the 8-neighbour stencil: each trial value is the
best of the one-sided axis/diagonal updates and the two-neighbour quadratic
update on every (axis, diagonal) simplex.  Diagonal terms are only used when
both flanking cells are traversable, so the front never squeezes through a
corner.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numba
import numpy as np

from .mapping import OccupancyGrid
from .worldsim import ROTATION_STEP, Action, RobotState

SQRT2 = math.sqrt(2.0)

_NEIGHBOURS8 = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1))


class PathError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class DistanceField:
    values: np.ndarray
    sources: tuple[tuple[int, int], ...]
    traversable: np.ndarray

    def at(self, cell) -> float:
        x, y = cell
        if not (0 <= y < self.values.shape[0] and 0 <= x < self.values.shape[1]):
            return math.inf
        return float(self.values[y, x])


@numba.njit(cache=True)
def _trial_value(T, acc, trav, y, x):
    H, W = T.shape
    best = np.inf
    for k in range(4):
        if k == 0:
            ay, ax = 0, 1
        elif k == 1:
            ay, ax = 0, -1
        elif k == 2:
            ay, ax = 1, 0
        else:
            ay, ax = -1, 0
        ny, nx = y + ay, x + ax
        if ny < 0 or ny >= H or nx < 0 or nx >= W or not acc[ny, nx]:
            continue
        a = T[ny, nx]
        if a + 1.0 < best:
            best = a + 1.0
        for s in range(2):
            if s == 0:
                py, px = ax, ay
            else:
                py, px = -ax, -ay
            fy, fx = y + py, x + px
            dy, dx = ny + py, nx + px
            if fy < 0 or fy >= H or fx < 0 or fx >= W or not trav[fy, fx]:
                continue
            if dy < 0 or dy >= H or dx < 0 or dx >= W or not acc[dy, dx]:
                continue
            b = T[dy, dx]
            if b + 1.4142135623730951 < best:
                best = b + 1.4142135623730951
            d = a - b
            if d >= 0.0 and d <= 0.7071067811865476:
                v = a + math.sqrt(1.0 - d * d)
                if v - a >= d and v < best:
                    best = v
    return best


@numba.njit(cache=True)
def _march(trav, src_y, src_x):
    H, W = trav.shape
    T = np.full((H, W), np.inf)
    acc = np.zeros((H, W), dtype=np.bool_)
    heap = [(0.0, np.int64(0))]
    heap.pop()
    for k in range(src_y.shape[0]):
        T[src_y[k], src_x[k]] = 0.0
        heapq.heappush(heap, (0.0, np.int64(src_y[k] * W + src_x[k])))
    while len(heap) > 0:
        t, idx = heapq.heappop(heap)
        y = idx // W
        x = idx - y * W
        if acc[y, x]:
            continue
        acc[y, x] = True
        for dy in range(-1, 2):
            for dx in range(-1, 2):
                if dy == 0 and dx == 0:
                    continue
                ny, nx = y + dy, x + dx
                if ny < 0 or ny >= H or nx < 0 or nx >= W:
                    continue
                if acc[ny, nx] or not trav[ny, nx]:
                    continue
                v = _trial_value(T, acc, trav, ny, nx)
                if v < T[ny, nx]:
                    T[ny, nx] = v
                    heapq.heappush(heap, (v, np.int64(ny * W + nx)))
    return T


def _traversable(grid, traversable) -> np.ndarray:
    if traversable is None:
        if isinstance(grid, OccupancyGrid):
            return grid.free_mask
        return np.asarray(grid, dtype=bool)
    if callable(traversable):
        return np.asarray(traversable(grid), dtype=bool)
    return np.asarray(traversable, dtype=bool)


def fmm_field(grid, sources, traversable=None) -> DistanceField:
    """Geodesic distance (in cells) from ``sources`` through traversable cells.

    ``grid`` is an :class:`OccupancyGrid` (known-free cells are traversable by
    default) or a boolean traversability array.  ``traversable`` may override
    that with a mask or a predicate ``grid -> mask``.  Non-traversable or
    unreachable cells get ``inf``.
    """
    trav = np.ascontiguousarray(_traversable(grid, traversable))
    srcs = [(int(x), int(y)) for x, y in sources]
    if not srcs:
        raise ValueError("fmm_field needs at least one source")
    for x, y in srcs:
        if not (0 <= y < trav.shape[0] and 0 <= x < trav.shape[1]) or not trav[y, x]:
            raise ValueError(f"source {(x, y)} is not traversable")
    sx = np.array([c[0] for c in srcs], dtype=np.int64)
    sy = np.array([c[1] for c in srcs], dtype=np.int64)
    values = _march(trav, sy, sx)
    return DistanceField(values, tuple(srcs), trav)


def geodesic_distance(grid, a, b, traversable=None) -> float:
    """Distance from cell ``a`` to cell ``b``; ``inf`` if unreachable."""
    return fmm_field(grid, [a], traversable).at(b)


def distance_table(grid, sources, targets, traversable=None) -> np.ndarray:
    """``len(sources) x len(targets)`` geodesic distances, one march per source.

    Sources that are not traversable get a row of ``inf``.
    """
    trav = _traversable(grid, traversable)
    out = np.full((len(sources), len(targets)), np.inf)
    for i, s in enumerate(sources):
        x, y = int(s[0]), int(s[1])
        if not (0 <= y < trav.shape[0] and 0 <= x < trav.shape[1]) or not trav[y, x]:
            continue
        field = fmm_field(trav, [(x, y)])
        for j, t in enumerate(targets):
            out[i, j] = field.at(t)
    return out


def _can_step(trav, x, y, dx, dy) -> bool:
    h, w = trav.shape
    nx, ny = x + dx, y + dy
    if not (0 <= nx < w and 0 <= ny < h) or not trav[ny, nx]:
        return False
    if dx != 0 and dy != 0:
        return bool(trav[y, nx] and trav[ny, x])
    return True


def next_cell(field: DistanceField, cell) -> tuple[int, int] | None:
    """Lowest-valued admissible 8-neighbour with a strictly smaller value."""
    x, y = cell
    v = field.values
    best, best_val = None, v[y, x]
    for dx, dy in _NEIGHBOURS8:
        if _can_step(field.traversable, x, y, dx, dy) and v[y + dy, x + dx] < best_val:
            best, best_val = (x + dx, y + dy), v[y + dy, x + dx]
    return best


def extract_path(field: DistanceField, start) -> list[tuple[int, int]]:
    """Descend the field from ``start`` to a source, returning every visited cell."""
    x, y = int(start[0]), int(start[1])
    if not np.isfinite(field.at((x, y))):
        raise PathError(f"start {(x, y)} is unreachable")
    path = [(x, y)]
    while field.values[y, x] > 0.0:
        nxt = next_cell(field, (x, y))
        if nxt is None:
            raise PathError(f"descent stalled at {(x, y)}")
        x, y = nxt
        path.append(nxt)
    return path


def path_length(path) -> float:
    return float(sum(math.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(path, path[1:])))


def _wrap(angle: float) -> float:
    return (angle + math.pi) % (2 * math.pi) - math.pi


def waypoint_action(state: RobotState, waypoint) -> Action:
    """Face the waypoint, then move forward; rotation ties break left."""
    if tuple(waypoint) == state.cell:
        return Action.STAY
    px, py = state.position
    bearing = math.atan2(waypoint[1] + 0.5 - py, waypoint[0] + 0.5 - px)
    diff = _wrap(bearing - state.heading)
    if abs(diff) <= ROTATION_STEP / 2 + 1e-9:
        return Action.FORWARD
    if abs(abs(diff) - math.pi) < 1e-9:
        return Action.ROTATE_LEFT
    return Action.ROTATE_LEFT if diff > 0 else Action.ROTATE_RIGHT
