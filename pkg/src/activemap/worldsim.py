"""Deterministic 2D grid world: map loading, robot kinematics and ray-cast sensing.

Cells are addressed as ``(x, y)`` with ``x`` the column and ``y`` the row;
arrays are indexed ``[y, x]``.  Robot positions are continuous coordinates in
cell units where cell ``(x, y)`` spans ``[x, x+1) x [y, y+1)``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np

FREE = 0
OBSTACLE = 1

ROTATION_STEP = math.pi / 6
N_HEADINGS = 12
SPAWN_RADIUS = 6.0

# 8-neighbour moves indexed by octant (angle / 45 deg)
_OCTANT_MOVES = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))


class MapFormatError(ValueError):
    """Raised when a map document contains an invalid character or shape."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class EmptyWorldError(ValueError):
    pass


class SpawnError(RuntimeError):
    pass


class Action(Enum):
    FORWARD = "forward"
    ROTATE_LEFT = "rotate_left"
    ROTATE_RIGHT = "rotate_right"
    STAY = "stay"


@dataclass(frozen=True, eq=False)
class GroundTruthMap:
    """Static free/obstacle world.  Immutable after construction."""

    cells: np.ndarray
    free_component: np.ndarray
    spawn_cells: tuple[tuple[int, int], ...] = ()
    cell_size: float = 0.1
    name: str = ""

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
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    @property
    def free_count(self) -> int:
        return int(self.free_component.sum())

    def is_free(self, cell: tuple[int, int]) -> bool:
        x, y = cell
        if not (0 <= x < self.width and 0 <= y < self.height):
            return False
        return self.cells[y, x] == FREE

    def to_text(self) -> str:
        spawn = set(self.spawn_cells)
        rows = []
        for y in range(self.height):
            row = []
            for x in range(self.width):
                if self.cells[y, x] == OBSTACLE:
                    row.append("#")
                else:
                    row.append("S" if (x, y) in spawn else ".")
            rows.append("".join(row))
        return "\n".join(rows) + "\n"


@dataclass(frozen=True)
class RobotState:
    position: tuple[float, float]
    heading: float
    id: int = 0

    @property
    def cell(self) -> tuple[int, int]:
        return (int(math.floor(self.position[0])), int(math.floor(self.position[1])))

    @property
    def heading_index(self) -> int:
        return int(round(self.heading / ROTATION_STEP)) % N_HEADINGS


@dataclass(frozen=True)
class SensorConfig:
    max_range: float = 30.0
    fov: float = 2 * math.pi
    ray_count: int = 72

    def __post_init__(self):
        if self.max_range < 1:
            raise ValueError("max_range must be >= 1")
        if self.ray_count < 1:
            raise ValueError("ray_count must be >= 1")

    @property
    def omnidirectional(self) -> bool:
        return self.fov >= 2 * math.pi - 1e-12


@dataclass
class DepthScan:
    """Result of one sensing pass.

    ``hit_range`` is NaN and ``hit_cell`` is ``(-1, -1)`` for rays that saw no
    obstacle.  ``ray_cells`` holds, for every ray, the traversed cells in order
    and ``free_len`` how many of them precede the hit (or the whole ray).
    """

    origin: tuple[float, float]
    directions: np.ndarray
    hit_range: np.ndarray
    hit_cell: np.ndarray
    ray_cells: np.ndarray = field(repr=False)
    free_len: np.ndarray = field(repr=False)
    max_range: float = 30.0

    def rays(self):
        """Yield ``(direction, hit_range or None, hit_cell or None)`` per ray."""
        for k, d in enumerate(self.directions):
            if np.isnan(self.hit_range[k]):
                yield float(d), None, None
            else:
                yield float(d), float(self.hit_range[k]), (int(self.hit_cell[k, 0]), int(self.hit_cell[k, 1]))

    def free_cells(self) -> np.ndarray:
        """All (x, y) cells observed as free, as an ``(n, 2)`` array."""
        mask = np.arange(self.ray_cells.shape[1])[None, :] < self.free_len[:, None]
        return self.ray_cells[mask]

    def hit_cells(self) -> np.ndarray:
        hit = ~np.isnan(self.hit_range)
        return self.hit_cell[hit]


# --------------------------------------------------------------------------- #
# loading


def _largest_component(free: np.ndarray) -> np.ndarray:
    h, w = free.shape
    label = np.full(free.shape, -1, dtype=np.int64)
    sizes = []
    for y0 in range(h):
        for x0 in range(w):
            if not free[y0, x0] or label[y0, x0] >= 0:
                continue
            lab = len(sizes)
            label[y0, x0] = lab
            queue = deque([(x0, y0)])
            n = 0
            while queue:
                x, y = queue.popleft()
                n += 1
                for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    nx, ny = x + dx, y + dy
                    if 0 <= nx < w and 0 <= ny < h and free[ny, nx] and label[ny, nx] < 0:
                        label[ny, nx] = lab
                        queue.append((nx, ny))
            sizes.append(n)
    if not sizes:
        return np.zeros(free.shape, dtype=bool)
    # ties go to the component found first in row-major order
    best = int(np.argmax(sizes))
    return label == best


def world_from_cells(obstacle: np.ndarray, spawn_cells=(), cell_size: float = 0.1, name: str = "") -> GroundTruthMap:
    """Build a world from a boolean obstacle array, padding a closed border if needed."""
    obstacle = np.asarray(obstacle, dtype=bool)
    spawn = [tuple(c) for c in spawn_cells]
    border_closed = (
        obstacle[0, :].all() and obstacle[-1, :].all() and obstacle[:, 0].all() and obstacle[:, -1].all()
    )
    if not border_closed:
        obstacle = np.pad(obstacle, 1, constant_values=True)
        spawn = [(x + 1, y + 1) for x, y in spawn]
    cells = np.where(obstacle, OBSTACLE, FREE).astype(np.int8)
    comp = _largest_component(~obstacle)
    if not comp.any():
        raise EmptyWorldError("map has no free cells")
    cells.setflags(write=False)
    comp.setflags(write=False)
    return GroundTruthMap(cells=cells, free_component=comp, spawn_cells=tuple(spawn), cell_size=cell_size, name=name)


def load_world(text: str, cell_size: float = 0.1, name: str = "") -> GroundTruthMap:
    """Parse a plain-text map ('#' obstacle, '.' free, 'S' free spawn cell)."""
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    while lines and not lines[0].strip():
        lines.pop(0)
    if not lines:
        raise EmptyWorldError("map document is empty")
    width = len(lines[0])
    obstacle = np.zeros((len(lines), width), dtype=bool)
    spawn = []
    for y, line in enumerate(lines):
        if len(line) != width:
            raise MapFormatError(f"row length {len(line)} differs from first row length {width}", y + 1, len(line) + 1)
        for x, ch in enumerate(line):
            if ch == "#":
                obstacle[y, x] = True
            elif ch == "S":
                spawn.append((x, y))
            elif ch != ".":
                raise MapFormatError(f"unknown map character {ch!r}", y + 1, x + 1)
    return world_from_cells(obstacle, spawn, cell_size=cell_size, name=name)


def load_world_file(path, cell_size: float = 0.1) -> GroundTruthMap:
    from pathlib import Path

    path = Path(path)
    return load_world(path.read_text(), cell_size=cell_size, name=path.stem)


# --------------------------------------------------------------------------- #
# robots


def cell_center(cell: tuple[int, int]) -> tuple[float, float]:
    return (cell[0] + 0.5, cell[1] + 0.5)


def spawn_robots(world: GroundTruthMap, n_r: int, seed: int, radius: float = SPAWN_RADIUS) -> list[RobotState]:
    """Place ``n_r`` robots on distinct free cells clustered around a seeded anchor.

    The anchor is drawn from the preferred spawn cells when the map has any,
    otherwise from the whole free component.  Every other robot lies within
    ``radius`` (cell-centre distance) of the anchor.
    """
    if n_r < 1:
        raise SpawnError("n_r must be >= 1")
    comp = world.free_component
    if comp.sum() < n_r:
        raise SpawnError(f"free component has {int(comp.sum())} cells, need {n_r}")
    rng = np.random.default_rng(seed)
    preferred = [c for c in world.spawn_cells if comp[c[1], c[0]]]
    if preferred:
        anchors = preferred
    else:
        ys, xs = np.nonzero(comp)
        anchors = list(zip(xs.tolist(), ys.tolist()))
    anchor = anchors[int(rng.integers(len(anchors)))]

    ys, xs = np.nonzero(comp)
    d = np.hypot(xs - anchor[0], ys - anchor[1])
    near = [(int(x), int(y)) for x, y, dd in zip(xs, ys, d) if dd <= radius and (x, y) != anchor]
    if len(near) < n_r - 1:
        raise SpawnError(f"only {len(near) + 1} free cells within radius {radius} of the spawn anchor")
    picks = rng.choice(len(near), size=n_r - 1, replace=False) if n_r > 1 else []
    cells = [anchor] + [near[int(i)] for i in picks]
    headings = rng.integers(N_HEADINGS, size=n_r)
    return [
        RobotState(position=cell_center(c), heading=int(k) * ROTATION_STEP, id=i)
        for i, (c, k) in enumerate(zip(cells, headings))
    ]


def step(world: GroundTruthMap, state: RobotState, action: Action) -> RobotState:
    """Apply one low-level action.

    Forward moves to the 8-neighbour nearest the heading.  The move is a
    no-op when the destination is an obstacle or when a diagonal move would
    squeeze between two obstacle corners.
    """
    if action is Action.STAY:
        return state
    if action is Action.ROTATE_LEFT:
        k = (state.heading_index + 1) % N_HEADINGS
        return RobotState(state.position, k * ROTATION_STEP, state.id)
    if action is Action.ROTATE_RIGHT:
        k = (state.heading_index - 1) % N_HEADINGS
        return RobotState(state.position, k * ROTATION_STEP, state.id)

    octant = int(round(state.heading / (math.pi / 4))) % 8
    dx, dy = _OCTANT_MOVES[octant]
    x, y = state.cell
    dest = (x + dx, y + dy)
    if not world.is_free(dest):
        return state
    if dx != 0 and dy != 0 and not world.is_free((x + dx, y)) and not world.is_free((x, y + dy)):
        return state
    px, py = state.position
    return RobotState((px + dx, py + dy), state.heading, state.id)


# --------------------------------------------------------------------------- #
# sensing


def supercover(origin: tuple[float, float], angle: float, max_range: float) -> list[tuple[int, int]]:
    """Cells touched by the ray from ``origin`` along ``angle``, in visiting order.

    When the ray passes exactly through a cell corner both flanking cells are
    visited before the diagonal one.  Traversal stops before the first cell
    whose centre lies farther than ``max_range`` from the origin.
    """
    x0, y0 = origin
    dx, dy = math.cos(angle), math.sin(angle)
    if abs(dx) < 1e-12:
        dx = 0.0
    if abs(dy) < 1e-12:
        dy = 0.0
    cx, cy = int(math.floor(x0)), int(math.floor(y0))
    sx = 1 if dx > 0 else -1
    sy = 1 if dy > 0 else -1
    inf = float("inf")
    if dx != 0.0:
        t_max_x = ((cx + 1 - x0) / dx) if dx > 0 else ((x0 - cx) / -dx)
        t_dx = 1.0 / abs(dx)
    else:
        t_max_x, t_dx = inf, inf
    if dy != 0.0:
        t_max_y = ((cy + 1 - y0) / dy) if dy > 0 else ((y0 - cy) / -dy)
        t_dy = 1.0 / abs(dy)
    else:
        t_max_y, t_dy = inf, inf

    def within(c):
        return math.hypot(c[0] + 0.5 - x0, c[1] + 0.5 - y0) <= max_range + 1e-9

    out = [(cx, cy)]
    eps = 1e-9
    while True:
        t = min(t_max_x, t_max_y)
        if t > max_range:
            break
        if abs(t_max_x - t_max_y) <= eps:
            flanks = [(cx + sx, cy), (cx, cy + sy)]
            nxt = (cx + sx, cy + sy)
            stop = False
            for c in flanks:
                if not within(c):
                    stop = True
                    break
                out.append(c)
            if stop:
                break
            cx, cy = nxt
            t_max_x += t_dx
            t_max_y += t_dy
        elif t_max_x < t_max_y:
            cx += sx
            t_max_x += t_dx
        else:
            cy += sy
            t_max_y += t_dy
        if not within((cx, cy)):
            break
        out.append((cx, cy))
    return out


def _ray_angles(cfg: SensorConfig, heading: float) -> np.ndarray:
    if cfg.omnidirectional:
        return np.arange(cfg.ray_count) * (2 * math.pi / cfg.ray_count)
    if cfg.ray_count == 1:
        return np.array([heading])
    return heading + np.linspace(-cfg.fov / 2, cfg.fov / 2, cfg.ray_count)


@lru_cache(maxsize=256)
def _ray_table(frac: tuple[float, float], angles: tuple[float, ...], max_range: float):
    """Relative cell offsets for each ray, padded into a rectangular table."""
    rays = [supercover(frac, a, max_range) for a in angles]
    length = max(len(r) for r in rays)
    table = np.zeros((len(rays), length, 2), dtype=np.int64)
    lens = np.zeros(len(rays), dtype=np.int64)
    for k, r in enumerate(rays):
        arr = np.array(r, dtype=np.int64)
        table[k, : len(r)] = arr
        table[k, len(r):] = arr[-1]
        lens[k] = len(r)
    table.setflags(write=False)
    lens.setflags(write=False)
    return table, lens


def sense(world: GroundTruthMap, state: RobotState, cfg: SensorConfig = SensorConfig()) -> DepthScan:
    """Cast rays from the robot and report the first obstacle on each."""
    px, py = state.position
    cx, cy = state.cell
    frac = (round(px - cx, 9), round(py - cy, 9))
    angles = _ray_angles(cfg, state.heading)
    table, lens = _ray_table(frac, tuple(np.round(angles, 12).tolist()), float(cfg.max_range))
    xs = table[:, :, 0] + cx
    ys = table[:, :, 1] + cy
    inside = (xs >= 0) & (xs < world.width) & (ys >= 0) & (ys < world.height)
    occ = np.ones(xs.shape, dtype=bool)
    occ[inside] = world.cells[ys[inside], xs[inside]] == OBSTACLE
    valid = np.arange(table.shape[1])[None, :] < lens[:, None]
    occ &= valid
    has_hit = occ.any(axis=1)
    first = np.where(has_hit, occ.argmax(axis=1), lens)
    n = len(angles)
    hit_range = np.full(n, np.nan)
    hit_cell = np.full((n, 2), -1, dtype=np.int64)
    rows = np.nonzero(has_hit)[0]
    hx = xs[rows, first[rows]]
    hy = ys[rows, first[rows]]
    hit_cell[rows, 0] = hx
    hit_cell[rows, 1] = hy
    hit_range[rows] = np.hypot(hx + 0.5 - px, hy + 0.5 - py)
    cells = np.stack([xs, ys], axis=-1)
    return DepthScan(
        origin=(px, py),
        directions=np.asarray(angles, dtype=float),
        hit_range=hit_range,
        hit_cell=hit_cell,
        ray_cells=cells,
        free_len=first,
        max_range=float(cfg.max_range),
    )
