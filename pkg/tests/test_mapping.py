import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from activemap.errors import ShapeError
from activemap.mapping import (
    UNKNOWN,
    OccupancyGrid,
    build_stacks,
    cluster_frontiers,
    detect_frontiers,
    exploration_rate,
    integrate_scan,
    observation_stack,
)
from activemap.worldsim import FREE, OBSTACLE, Action, RobotState, SensorConfig, sense, spawn_robots, step, world_from_cells
from oracles import check_cluster_invariants, frontier_oracle, room


def _one_ray(world, state, max_range):
    return sense(world, state, SensorConfig(max_range=max_range, ray_count=1, fov=0.0))


def test_hit_at_range_three_marks_three_free_one_obstacle():
    w = room(6, 3)  # wall column at x = 5
    r = RobotState((2.5, 1.5), 0.0)
    g = integrate_scan(OccupancyGrid.like(w), r, _one_ray(w, r, 10))
    assert np.count_nonzero(g.cells == FREE) == 3
    assert np.count_nonzero(g.cells == OBSTACLE) == 1
    assert g.cells[1, 5] == OBSTACLE


def test_no_hit_ray_of_range_five():
    w = room(30, 3)
    r = RobotState((1.5, 1.5), 0.0)
    g = integrate_scan(OccupancyGrid.like(w), r, _one_ray(w, r, 5))
    assert np.count_nonzero(g.cells == FREE) == 6
    assert np.count_nonzero(g.cells == OBSTACLE) == 0


def test_integrate_is_idempotent(small_room):
    r = spawn_robots(small_room, 1, 0)[0]
    scan = sense(small_room, r)
    g1 = integrate_scan(OccupancyGrid.like(small_room), r, scan)
    g2 = integrate_scan(g1, r, scan)
    assert np.array_equal(g1.cells, g2.cells)


def test_fully_explored_has_no_frontiers(small_room):
    g = OccupancyGrid(small_room.cells.astype(np.int8).copy())
    assert len(detect_frontiers(g)) == 0


def test_single_free_cell_is_frontier():
    g = OccupancyGrid.empty(5, 5)
    g.cells[2, 3] = FREE
    assert detect_frontiers(g).tolist() == [[3, 2]]


def test_sensed_disk_matches_predicate_scan():
    g = OccupancyGrid.empty(21, 21)
    ys, xs = np.mgrid[:21, :21]
    g.cells[(xs - 10) ** 2 + (ys - 10) ** 2 <= 25] = FREE
    got = {tuple(p) for p in detect_frontiers(g).tolist()}
    assert got == frontier_oracle(g.cells)
    assert len(got) > 0


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 100_000), h=st.integers(1, 12), w=st.integers(1, 12))
def test_frontiers_match_oracle_on_random_grids(seed, h, w):
    rng = np.random.default_rng(seed)
    g = OccupancyGrid(rng.integers(-1, 2, size=(h, w)).astype(np.int8))
    got = {tuple(p) for p in detect_frontiers(g).tolist()}
    assert got == frontier_oracle(g.cells)


def test_single_point_cluster():
    c = cluster_frontiers([(4, 7)], 8)
    assert len(c) == 1 and c.center_cells() == [(4, 7)] and c.counts.tolist() == [1]


def test_two_far_points_are_separate():
    c = cluster_frontiers([(0, 0), (9, 0)], 8)
    assert len(c) == 2 and c.counts.tolist() == [1, 1]


def test_collinear_chain_center_is_middle():
    pts = [(7 * k, 3) for k in range(5)]
    c = cluster_frontiers(pts, 8)
    assert len(c) == 1
    avg = {p: sum(math.dist(p, q) for q in pts) / 4 for p in pts}
    assert min(avg, key=avg.get) == (14, 3)
    assert c.center_cells() == [(14, 3)]


def test_empty_input_gives_no_clusters():
    c = cluster_frontiers(np.zeros((0, 2)), 8)
    assert len(c) == 0 and c.centers.shape == (0, 2)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.integers(1, 200), r=st.sampled_from([2.0, 4.0, 8.0]))
def test_cluster_invariants(seed, n, r):
    rng = np.random.default_rng(seed)
    pts = np.unique(rng.integers(0, 60, size=(n, 2)), axis=0)
    check_cluster_invariants(pts, cluster_frontiers(pts, r), r)


def test_stacks_empty_grid_no_robots(small_room):
    obs, priv = build_stacks(OccupancyGrid.like(small_room), small_room, [], np.zeros((0, 2)), [])
    assert not obs.any()
    assert not priv[2:].any()
    assert np.array_equal(priv[0], small_room.cells == OBSTACLE)
    assert np.array_equal(priv[1], small_room.cells == FREE)


def test_stacks_converge_after_full_exploration(small_room):
    g = OccupancyGrid(small_room.cells.astype(np.int8).copy())
    robots = spawn_robots(small_room, 2, 0)
    obs, priv = build_stacks(g, small_room, robots, detect_frontiers(g), [[r.cell] for r in robots])
    assert np.array_equal(obs, priv)


def test_stack_shape_mismatch(small_room):
    with pytest.raises(ShapeError):
        build_stacks(OccupancyGrid.empty(3, 3), small_room, [], [], [])


def test_stack_channel_invariants_and_trails():
    w = room(20, 16)
    rng = np.random.default_rng(5)
    robots = spawn_robots(w, 3, 5)
    g = OccupancyGrid.like(w)
    trails = [[r.cell] for r in robots]
    for _ in range(40):
        robots = [step(w, r, list(Action)[rng.integers(4)]) for r in robots]
        for i, r in enumerate(robots):
            trails[i].append(r.cell)
            g = integrate_scan(g, r, sense(w, r, SensorConfig(max_range=4)))
    fr = detect_frontiers(g)
    obs = observation_stack(g, robots, fr, trails)
    assert not (obs[0].astype(bool) & obs[1].astype(bool)).any()
    assert obs[2].sum() == len({r.cell for r in robots})
    union = {c for t in trails for c in t}
    ys, xs = np.nonzero(obs[4])
    assert set(zip(xs.tolist(), ys.tolist())) == union
    oracle = frontier_oracle(g.cells)
    ys, xs = np.nonzero(obs[3])
    assert set(zip(xs.tolist(), ys.tolist())) <= oracle


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_mapping_monotone_and_sound(seed):
    rng = np.random.default_rng(seed)
    obs = rng.random((16, 16)) < 0.25
    obs[0, :] = obs[-1, :] = obs[:, 0] = obs[:, -1] = True
    obs[7:9, 7:9] = False
    w = world_from_cells(obs)
    robots = spawn_robots(w, 2, seed)
    g = OccupancyGrid.like(w)
    known_before = g.cells != UNKNOWN
    for _ in range(15):
        robots = [step(w, r, list(Action)[rng.integers(4)]) for r in robots]
        for r in robots:
            g = integrate_scan(g, r, sense(w, r, SensorConfig(max_range=5, ray_count=36)))
        known = g.cells != UNKNOWN
        assert (known | ~known_before).all()
        known_before = known
        assert (g.cells[known] == w.cells[known]).all()
    assert 0.0 <= exploration_rate(g, w) <= 1.0
