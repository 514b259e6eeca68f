"""The perception -> goal -> path -> act loop shared by the benchmark and training.

A planning cycle assigns one long-term goal per robot and then runs
``horizon`` low-level steps (fewer only if the episode ends).  Robots that
reach their goal hold position for the rest of the cycle.  With
``replan_on_goal_seen`` the cycle instead ends as soon as any goal stops
being a frontier cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import geodesy
from .mapping import (
    DEFAULT_R_CLUS,
    FrontierClusters,
    OccupancyGrid,
    build_stacks,
    cluster_frontiers,
    detect_frontiers,
    exploration_rate,
    frontier_mask,
    integrate_scan,
    observation_stack,
)
from .worldsim import Action, GroundTruthMap, SensorConfig, sense, spawn_robots, step

COMPLETION_RATE = 0.99


@dataclass(frozen=True)
class EpisodeConfig:
    n_robots: int = 3
    horizon: int = 15
    max_steps: int | None = None
    sensor: SensorConfig = SensorConfig()
    r_clus: float = DEFAULT_R_CLUS
    completion: float = COMPLETION_RATE
    replan_on_goal_seen: bool = False

    def step_cap(self, world: GroundTruthMap) -> int:
        if self.max_steps is not None:
            return int(self.max_steps)
        return default_step_cap(world, self.horizon)


def default_step_cap(world: GroundTruthMap, horizon: int = 15) -> int:
    return int(math.ceil(4 * world.diagonal * horizon))


@dataclass
class Scene:
    """What a planner may look at: the shared map, robots and frontier clusters (never the ground truth)."""

    grid: OccupancyGrid
    robots: list
    frontiers: np.ndarray
    clusters: FrontierClusters
    trails: list
    sensor_range: float
    steps: int

    @property
    def centers(self) -> list[tuple[int, int]]:
        return self.clusters.center_cells()

    @cached_property
    def robot_fields(self) -> list:
        trav = self.grid.free_mask
        return [geodesy.fmm_field(trav, [r.cell]) for r in self.robots]

    @cached_property
    def robot_center_distances(self) -> np.ndarray:
        """(n_r, n_f) geodesic distances from each robot to each cluster centre."""
        out = np.full((len(self.robots), len(self.clusters)), np.inf)
        for i, f in enumerate(self.robot_fields):
            for j, c in enumerate(self.centers):
                out[i, j] = f.at(c)
        return out

    def observation_stack(self) -> np.ndarray:
        return observation_stack(self.grid, self.robots, self.frontiers, self.trails)


@dataclass
class EpisodeMetrics:
    steps_to_completion: int
    exploration_rate: float
    curve: list
    path_lengths: list
    overlap_ratio: float
    cycles: int
    completed: bool


@dataclass
class EpisodeTrace:
    world: GroundTruthMap
    grid: OccupancyGrid
    trails: list
    goals: list = field(default_factory=list)
    robots: list = field(default_factory=list)


class Episode:
    def __init__(self, world: GroundTruthMap, cfg: EpisodeConfig, seed: int):
        self.world = world
        self.cfg = cfg
        self.seed = seed
        self.cap = cfg.step_cap(world)
        self.robots = spawn_robots(world, cfg.n_robots, seed)
        self.grid = OccupancyGrid.like(world)
        for r in self.robots:
            self.grid = integrate_scan(self.grid, r, sense(world, r, cfg.sensor))
        self.trails = [[r.cell] for r in self.robots]
        self.moves = [0] * len(self.robots)
        self.steps = 0
        self.cycles = 0
        self.curve = [self.rate]
        self.goal_log = []

    @property
    def rate(self) -> float:
        return exploration_rate(self.grid, self.world)

    @property
    def explored_area(self) -> int:
        """Known-free cells of the reachable region."""
        return int(np.count_nonzero(self.grid.free_mask & self.world.free_component))

    @property
    def complete(self) -> bool:
        return self.rate >= self.cfg.completion or not frontier_mask(self.grid).any()

    @property
    def done(self) -> bool:
        return self.complete or self.steps >= self.cap

    def scene(self) -> Scene:
        frontiers = detect_frontiers(self.grid)
        return Scene(
            grid=self.grid,
            robots=list(self.robots),
            frontiers=frontiers,
            clusters=cluster_frontiers(frontiers, self.cfg.r_clus),
            trails=self.trails,
            sensor_range=self.cfg.sensor.max_range,
            steps=self.steps,
        )

    def stacks(self, scene: Scene | None = None):
        scene = scene or self.scene()
        return build_stacks(self.grid, self.world, self.robots, scene.frontiers, self.trails)

    def run_cycle(self, goals) -> int:
        """Drive every robot toward its goal (``None`` = hold position).  Returns steps taken."""
        self.cycles += 1
        self.goal_log.append([None if g is None else tuple(int(v) for v in g) for g in goals])
        trav = self.grid.free_mask
        fields = [None if g is None else geodesy.fmm_field(trav, [tuple(g)]) for g in goals]
        taken = 0
        for _ in range(self.cfg.horizon):
            if self.done:
                break
            for i, r in enumerate(self.robots):
                f = fields[i]
                if f is None or not np.isfinite(f.at(r.cell)):
                    continue
                waypoint = geodesy.next_cell(f, r.cell) or r.cell
                action = geodesy.waypoint_action(r, waypoint)
                if action is Action.STAY:
                    continue
                nr = step(self.world, r, action)
                if nr.cell != r.cell:
                    self.moves[i] += 1
                    self.trails[i].append(nr.cell)
                self.robots[i] = nr
            for r in self.robots:
                self.grid = integrate_scan(self.grid, r, sense(self.world, r, self.cfg.sensor))
            self.steps += 1
            taken += 1
            if not self.cfg.replan_on_goal_seen:
                continue
            fmask = frontier_mask(self.grid)
            if any(g is not None and not fmask[g[1], g[0]] for g in goals):
                break
        self.curve.append(self.rate)
        return taken

    def metrics(self) -> EpisodeMetrics:
        visits = {}
        for i, trail in enumerate(self.trails):
            for c in set(trail):
                visits[c] = visits.get(c, 0) + 1
        overlap = sum(1 for v in visits.values() if v >= 2) / max(len(visits), 1)
        return EpisodeMetrics(
            steps_to_completion=self.steps,
            exploration_rate=self.rate,
            curve=list(self.curve),
            path_lengths=list(self.moves),
            overlap_ratio=overlap,
            cycles=self.cycles,
            completed=self.complete,
        )

    def trace(self) -> EpisodeTrace:
        return EpisodeTrace(
            world=self.world,
            grid=self.grid,
            trails=[list(t) for t in self.trails],
            goals=[list(g) for g in self.goal_log],
            robots=list(self.robots),
        )


def run_planner_episode(world: GroundTruthMap, planner, cfg: EpisodeConfig, seed: int):
    """Run one episode with ``planner(scene) -> goals`` until completion or the step cap."""
    ep = Episode(world, cfg, seed)
    while not ep.done:
        scene = ep.scene()
        if len(scene.clusters) == 0:
            break
        goals = planner(scene)
        before = ep.steps
        ep.run_cycle(goals)
        if ep.steps == before and all(g is None for g in goals):
            # nobody can move; no later cycle would differ
            break
    return ep
