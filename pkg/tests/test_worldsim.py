import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from activemap.worldsim import (
    FREE,
    OBSTACLE,
    ROTATION_STEP,
    Action,
    EmptyWorldError,
    MapFormatError,
    RobotState,
    SensorConfig,
    SpawnError,
    load_world,
    load_world_file,
    sense,
    spawn_robots,
    step,
    supercover,
    world_from_cells,
)
from oracles import flood4, room


def test_five_by_five_room_has_nine_free_cells():
    w = room(5, 5)
    assert w.free_count == 9
    assert np.array_equal(w.free_component, w.cells == FREE)


def test_unknown_character_reports_position():
    with pytest.raises(MapFormatError) as exc:
        load_world("#####\n#..X#\n#####")
    assert (exc.value.line, exc.value.column) == (2, 4)


def test_ragged_rows_rejected():
    with pytest.raises(MapFormatError):
        load_world("####\n#..\n####")


def test_all_obstacle_map_is_empty_world():
    with pytest.raises(EmptyWorldError):
        load_world("###\n###\n###")


def test_free_component_is_larger_room():
    text = "\n".join([
        "##########",
        "#..#.....#",
        "#..#.....#",
        "#..#.....#",
        "##########",
    ])
    w = load_world(text)
    free = w.cells == FREE
    oracle = flood4(free, (5, 2))
    assert np.array_equal(w.free_component, oracle)
    assert w.free_count == 15


def test_open_border_is_padded():
    w = load_world("...\n.S.\n...")
    assert w.shape == (5, 5)
    assert w.spawn_cells == ((2, 2),)
    assert (w.cells[0] == OBSTACLE).all() and (w.cells[:, -1] == OBSTACLE).all()


def test_round_trip_text(tmp_path):
    w = room(7, 6)
    p = tmp_path / "box.txt"
    p.write_text(w.to_text())
    w2 = load_world_file(p)
    assert w2.name == "box"
    assert np.array_equal(w.cells, w2.cells)


def test_spawn_single_robot_in_free_cell(small_room):
    (r,) = spawn_robots(small_room, 1, seed=3)
    assert small_room.free_component[r.cell[1], r.cell[0]]
    assert r.heading_index * ROTATION_STEP == pytest.approx(r.heading)


def test_spawn_is_deterministic(small_room):
    assert spawn_robots(small_room, 3, 11) == spawn_robots(small_room, 3, 11)


def test_spawn_three_in_nine_cell_room():
    w = room(5, 5)
    for seed in range(20):
        robots = spawn_robots(w, 3, seed, radius=6)
        cells = [r.cell for r in robots]
        assert len(set(cells)) == 3
        for a in cells:
            for b in cells:
                assert math.dist(a, b) <= 6


def test_spawn_error_when_too_few_cells():
    with pytest.raises(SpawnError):
        spawn_robots(room(4, 4), 5, 0)


def test_hit_range_two_cells_from_wall():
    w = room(10, 5)
    r = RobotState((7.5, 2.5), 0.0)
    scan = sense(w, r, SensorConfig(max_range=10, ray_count=4))
    assert scan.directions[0] == 0.0
    assert scan.hit_range[0] == pytest.approx(2.0)
    assert tuple(scan.hit_cell[0]) == (9, 2)


def test_long_corridor_ray_has_no_hit():
    w = room(60, 3)
    scan = sense(w, RobotState((1.5, 1.5), 0.0), SensorConfig(max_range=20, ray_count=4))
    assert np.isnan(scan.hit_range[0])
    assert scan.free_len[0] == 21


def test_supercover_visits_both_flanks_at_corner():
    cells = supercover((0.5, 0.5), math.pi / 4, 3)
    assert cells[:4] == [(0, 0), (1, 0), (0, 1), (1, 1)]


def test_checkerboard_gap_blocks_ray():
    obs = np.zeros((6, 6), dtype=bool)
    obs[0, :] = obs[-1, :] = obs[:, 0] = obs[:, -1] = True
    obs[2, 3] = obs[3, 2] = True  # diagonal pair, gap between (2, 2) and (3, 3)
    w = world_from_cells(obs)
    cfg = SensorConfig(max_range=5, ray_count=8)
    scan = sense(w, RobotState((2.5, 2.5), 0.0), cfg)
    k = int(np.argmin(np.abs(scan.directions - math.pi / 4)))
    assert tuple(scan.hit_cell[k]) in {(3, 2), (2, 3)}
    visited = [tuple(c) for c in scan.ray_cells[k][: scan.free_len[k]]]
    assert (3, 3) not in visited


def test_forward_into_wall_is_noop():
    w = room(5, 5)
    r = RobotState((3.5, 2.5), 0.0)
    assert step(w, r, Action.FORWARD) == r


def test_twelve_left_turns_restore_heading():
    w = room(5, 5)
    r0 = RobotState((2.5, 2.5), 2 * ROTATION_STEP)
    r = r0
    for _ in range(12):
        r = step(w, r, Action.ROTATE_LEFT)
    assert r.heading_index == r0.heading_index
    assert r.heading == pytest.approx(r0.heading)


def test_forward_heading_zero_moves_plus_x():
    w = room(8, 8)
    r = step(w, RobotState((2.5, 3.5), 0.0), Action.FORWARD)
    assert r.cell == (3, 3)


def test_diagonal_squeeze_blocked():
    obs = np.zeros((6, 6), dtype=bool)
    obs[0, :] = obs[-1, :] = obs[:, 0] = obs[:, -1] = True
    obs[2, 3] = obs[3, 2] = True
    w = world_from_cells(obs)
    r = RobotState((2.5, 2.5), 2 * ROTATION_STEP)  # 60 degrees maps to the +x+y octant
    assert step(w, r, Action.FORWARD).cell == (2, 2)


def _fuzz_world(seed):
    rng = np.random.default_rng(seed)
    obs = rng.random((14, 14)) < 0.3
    obs[0, :] = obs[-1, :] = obs[:, 0] = obs[:, -1] = True
    obs[6:9, 6:9] = False
    return world_from_cells(obs)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), actions=st.lists(st.sampled_from(list(Action)), max_size=60))
def test_robots_never_enter_obstacles(seed, actions):
    w = _fuzz_world(seed)
    (r,) = spawn_robots(w, 1, seed)
    for a in actions:
        r = step(w, r, a)
        assert w.cells[r.cell[1], r.cell[0]] == FREE


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), rays=st.integers(1, 90), rng_=st.floats(1, 12))
def test_sense_is_pure_and_sound(seed, rays, rng_):
    w = _fuzz_world(seed)
    (r,) = spawn_robots(w, 1, seed)
    cfg = SensorConfig(max_range=rng_, ray_count=rays)
    a, b = sense(w, r, cfg), sense(w, r, cfg)
    assert np.array_equal(a.hit_range, b.hit_range, equal_nan=True)
    assert np.array_equal(a.hit_cell, b.hit_cell)
    for k in range(rays):
        before = a.ray_cells[k][: a.free_len[k]]
        assert all(w.cells[y, x] == FREE for x, y in before)
        if not np.isnan(a.hit_range[k]):
            x, y = a.hit_cell[k]
            assert w.cells[y, x] == OBSTACLE
            assert a.hit_range[k] <= rng_ + 1e-9


def test_limited_fov_spans_heading():
    w = room(20, 20)
    cfg = SensorConfig(max_range=5, fov=math.pi / 2, ray_count=5)
    scan = sense(w, RobotState((10.5, 10.5), math.pi), cfg)
    assert scan.directions.min() == pytest.approx(math.pi - math.pi / 4)
    assert scan.directions.max() == pytest.approx(math.pi + math.pi / 4)
