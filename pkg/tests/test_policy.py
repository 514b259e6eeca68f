import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from activemap.bench.gradcheck import run_battery, tiny_scene
from activemap.errors import ShapeError
from activemap.mapping import FrontierClusters, OccupancyGrid
from activemap.neuralcore import autodiff as ad
from activemap.neuralcore.gradcheck import check_gradients
from activemap.neuralcore.layers import conv_encoder
from activemap.policy import (
    ExplorationComplete,
    PolicyConfig,
    PolicyPlanner,
    asym_features,
    assignment_logits,
    candidate_mask,
    goal_log_probs,
    init_policy_params,
    mi_embed,
    mi_estimate,
    mi_estimate_from_scores,
    mi_loss,
    mi_loss_from_scores,
    pad_stack,
    pair_distances,
    pair_scores,
    policy_terms,
    select_goals,
    state_value,
)
from activemap.topograph import build_graph_set
from activemap.worldsim import RobotState, load_world_file
from activemap.bench.config import bundled_corpus
from oracles import room, scene_for


@pytest.fixture(scope="module")
def ps():
    return init_policy_params(0)


def _stacks(seed, size=64):
    rng = np.random.default_rng(seed)
    return (rng.random((5, size, size)) < 0.3).astype(float), (rng.random((5, size, size)) < 0.3).astype(float)


# --------------------------------------------------------------------------- #
# asymmetric features and critic


def test_identical_stacks_give_zero_disparity(ps):
    obs, _ = _stacks(0)
    f = asym_features(obs, obs, ps)
    assert not f.dF.data.any()
    other = init_policy_params(7)
    assert not asym_features(obs, obs, other).dF.data.any()


def test_disparity_length_for_64_grid(ps):
    obs, priv = _stacks(1)
    f = asym_features(obs, priv, ps)
    assert f.dF.shape == (2048,)
    assert f.F.shape == f.F_hat.shape == (8, 8, 32)
    assert np.array_equal(f.dF.data, (f.F.data - f.F_hat.data).ravel())


def test_shared_encoder_matches_separate_passes(ps):
    obs, priv = _stacks(2, 16)
    f = asym_features(obs, priv, ps)
    assert np.allclose(f.F.data, conv_encoder(obs, ps).data)
    assert np.allclose(f.F_hat.data, conv_encoder(priv, ps).data)


def test_batched_features(ps):
    obs = np.stack([_stacks(k, 16)[0] for k in range(3)])
    priv = np.stack([_stacks(k, 16)[1] for k in range(3)])
    f = asym_features(obs, priv, ps)
    assert f.dF.shape == (3, 2 * 2 * 32)
    single = asym_features(obs[1], priv[1], ps)
    assert np.allclose(f.dF.data[1], single.dF.data)


def test_mismatched_stacks_rejected(ps):
    with pytest.raises(ShapeError):
        asym_features(np.zeros((5, 16, 16)), np.zeros((5, 8, 8)), ps)


def test_disparity_gradient_check():
    ps = init_policy_params(3)
    obs, priv = _stacks(3, 16)
    proj = np.random.default_rng(3).normal(size=(2 * 2 * 32,))
    names = [n for n in ps.names() if n.startswith("enc.")]
    res = check_gradients("dF", lambda: ad.tsum(asym_features(obs, priv, ps).dF * proj), ps, per_tensor=3, names=names)
    assert res.passed(1e-4), res


def test_zero_disparity_zero_value(ps):
    assert state_value(np.zeros(2048), ps).item() == 0.0


def test_value_is_deterministic_and_scene_dependent(ps):
    w = load_world_file(bundled_corpus() / "medium_a.txt")
    ep, scene = scene_for(w, 2, 0)
    obs, priv = ep.stacks(scene)
    v1 = state_value(asym_features(obs, priv, ps).dF, ps).item()
    assert state_value(asym_features(obs, priv, ps).dF, ps).item() == v1
    # same observation, different hidden region: block part of the truth
    priv2 = priv.copy()
    unseen = obs[0] + obs[1] == 0
    priv2[0][unseen & (np.arange(64)[None, :] > 40)] = 1.0
    priv2[1][unseen & (np.arange(64)[None, :] > 40)] = 0.0
    v2 = state_value(asym_features(obs, priv2, ps).dF, ps).item()
    assert v1 != v2


def test_value_pads_small_maps_and_rejects_large(ps):
    assert state_value(np.ones(2 * 2 * 32), ps).shape == ()
    with pytest.raises(ShapeError):
        state_value(np.ones(9 * 9 * 32), ps)


# --------------------------------------------------------------------------- #
# mutual information


def _eq_loss(S):
    """Row-wise softmax cross-entropy with the diagonal as the target."""
    b = len(S)
    total = 0.0
    for i in range(b):
        total += -math.log(math.exp(S[i][i]) / sum(math.exp(S[i][j]) for j in range(b)))
    return total / b


def _eq_estimate(t_pos, t_neg):
    p = sum(math.log(1 + math.exp(-t)) for t in t_pos) / len(t_pos)
    n = sum(math.log(1 + math.exp(t)) for t in t_neg) / len(t_neg)
    return p - n


def test_mi_loss_single_pair_is_zero():
    assert mi_loss_from_scores(np.array([[3.2]])).item() == 0.0


def test_mi_loss_perfect_separation_limit():
    S = np.full((3, 3), -50.0)
    np.fill_diagonal(S, 50.0)
    assert mi_loss_from_scores(S).item() < 1e-20


def test_mi_loss_matches_direct_transcription():
    S = np.random.default_rng(4).normal(size=(4, 4)) * 2
    assert mi_loss_from_scores(S).item() == pytest.approx(_eq_loss(S.tolist()), abs=1e-12)


def test_mi_loss_on_embeddings(ps):
    rng = np.random.default_rng(5)
    F, G = rng.normal(size=(2, 4, 2, 2, 32))
    z, zh = mi_embed(F, ps), mi_embed(G, ps)
    assert np.allclose(np.linalg.norm(z.data, axis=1), 1.0)
    d = pair_distances(z, zh).data
    assert np.allclose(d, np.linalg.norm(z.data[:, None] - zh.data[None], axis=-1) / 2)
    S = pair_scores(z, zh, ps).data
    assert mi_loss(z, zh, ps).item() == pytest.approx(_eq_loss(S.tolist()), abs=1e-12)
    with pytest.raises(ValueError):
        mi_loss(np.zeros((0, 64)), np.zeros((0, 64)), ps)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), b=st.integers(1, 8), scale=st.floats(0.01, 20))
def test_mi_loss_non_negative(seed, b, scale):
    S = np.random.default_rng(seed).normal(size=(b, b)) * scale
    assert mi_loss_from_scores(S).item() >= -1e-12


def test_mi_estimate_zero_statistics_network():
    ps = init_policy_params(0)
    for n in ps.names():
        if n.startswith("mi.T"):
            ps[n].data[...] = 0.0
    rng = np.random.default_rng(6)
    z = mi_embed(rng.normal(size=(3, 2, 2, 32)), ps)
    zh = mi_embed(rng.normal(size=(3, 2, 2, 32)), ps)
    assert mi_estimate(z, zh, ps).item() == 0.0
    assert mi_estimate_from_scores(np.zeros(1), np.zeros(1)).item() == pytest.approx(math.log(2) - math.log(2))


def test_mi_estimate_separation_limit():
    assert abs(mi_estimate_from_scores(np.array([60.0]), np.array([-60.0])).item()) < 1e-20


def test_mi_estimate_matches_direct_evaluation():
    rng = np.random.default_rng(7)
    tp, tn = rng.normal(size=5) * 3, rng.normal(size=11) * 3
    assert mi_estimate_from_scores(tp, tn).item() == pytest.approx(_eq_estimate(tp, tn), abs=1e-12)


def test_mi_estimate_uses_diagonal_as_positives(ps):
    rng = np.random.default_rng(8)
    z = mi_embed(rng.normal(size=(3, 2, 2, 32)), ps)
    zh = mi_embed(rng.normal(size=(3, 2, 2, 32)), ps)
    S = pair_scores(z, zh, ps).data
    off = ~np.eye(3, dtype=bool)
    assert mi_estimate(z, zh, ps).item() == pytest.approx(_eq_estimate(np.diag(S), S[off]), abs=1e-12)
    with pytest.raises(ValueError):
        mi_estimate(z[:1], zh[:1], ps)


# --------------------------------------------------------------------------- #
# goal selection


def _graphs(ps, robots, centers, counts=None, size=32):
    cells = np.full((size, size), -1, dtype=np.int8)
    cells[2 : size - 2, 2 : size - 2] = 0
    grid = OccupancyGrid(cells)
    centers = np.asarray(centers)
    clusters = FrontierClusters([c[None] for c in centers], centers, np.asarray(counts or [1] * len(centers)))
    F = np.random.default_rng(0).normal(size=(size // 8, size // 8, 32))
    return build_graph_set(robots, clusters, F, grid, None)


def test_single_robot_single_cluster(ps):
    g = _graphs(ps, [RobotState((5.5, 5.5), 0.0)], [[20, 20]])
    a = select_goals(g, ps)
    assert a.clusters.tolist() == [0] and a.centers == [(20, 20)]
    assert a.probs.tolist() == [[1.0]]
    assert a.log_prob == 0.0


def test_no_clusters_signals_completion(ps):
    g = _graphs(ps, [RobotState((5.5, 5.5), 0.0)], [[20, 20]])
    g.frontiers = g.frontiers.__class__(g.frontiers.category, np.zeros((0, 2), np.int64), np.zeros(0), np.zeros((0, 32)))
    with pytest.raises(ExplorationComplete):
        select_goals(g, ps)


def test_diagonal_affinity_two_by_two_matches_hungarian():
    ps = init_policy_params(1, PolicyConfig(distance_prior=20.0))
    robots = [RobotState((4.5, 4.5), 0.0), RobotState((27.5, 27.5), 0.0, 1)]
    g = _graphs(ps, robots, [[5, 8], [27, 24]])
    a = select_goals(g, ps, cfg=PolicyConfig(distance_prior=20.0))
    cost = g.raw_d_rf
    best = min(itertools.permutations(range(2)), key=lambda p: cost[0, p[0]] + cost[1, p[1]])
    assert tuple(a.clusters.tolist()) == best


def test_argmax_is_deterministic(ps):
    w = room(32, 32)
    _, scene = scene_for(w, 3, 2)
    plans = [PolicyPlanner(ps, n_robots=3)(scene) for _ in range(2)]
    assert plans[0] == plans[1]


def test_sampling_is_seeded(ps):
    w = room(32, 32)
    _, scene = scene_for(w, 3, 4)
    a = PolicyPlanner(ps, mode="sample", seed=5)(scene)
    b = PolicyPlanner(ps, mode="sample", seed=5)(scene)
    assert a == b


@settings(max_examples=12, deadline=None)
@given(seed=st.integers(0, 10_000), n_r=st.integers(1, 4), steps=st.integers(0, 30))
def test_goals_are_current_cluster_centres(ps, seed, n_r, steps):
    w = room(40, 24)
    ep, scene = scene_for(w, n_r, seed, steps)
    if len(scene.clusters) == 0:
        return
    planner = PolicyPlanner(ps, mode="sample", seed=seed)
    assign, graphs, F = planner.decide(scene, scene.observation_stack())
    assert set(assign.centers) <= set(scene.centers)
    assert np.allclose(assign.probs.sum(1), 1.0, atol=1e-9)
    assert (assign.probs[~candidate_mask(graphs)] < 1e-12).all()


def test_row_shift_leaves_argmax_unchanged(ps):
    grid, robots, clusters = tiny_scene(np.random.default_rng(0))
    F = np.random.default_rng(1).normal(size=(4, 4, 32))
    g = build_graph_set(robots, clusters, F, grid, None)
    logits = assignment_logits(g, ps).data
    from activemap.neuralcore.layers import sinkhorn

    base = sinkhorn(logits, 0.1, 50).data
    shifted = logits.copy()
    shifted[1] += 3.7
    moved = sinkhorn(shifted, 0.1, 50).data
    assert np.allclose(base, moved, atol=1e-8)
    assert np.array_equal(base.argmax(1), moved.argmax(1))


def test_unreachable_clusters_get_zero_probability(ps):
    cells = np.full((32, 32), -1, dtype=np.int8)
    cells[2:14, 2:14] = 0
    cells[20:30, 20:30] = 0
    grid = OccupancyGrid(cells)
    centers = np.array([[13, 5], [25, 25]])
    clusters = FrontierClusters([c[None] for c in centers], centers, np.array([3, 3]))
    g = build_graph_set([RobotState((4.5, 4.5), 0.0)], clusters, np.zeros((4, 4, 32)), grid, None)
    logp = goal_log_probs(g, ps).data
    assert logp[0, 1] < -1e8
    assert select_goals(g, ps).centers == [(13, 5)]


def test_policy_terms_match_selection(ps):
    grid, robots, clusters = tiny_scene(np.random.default_rng(0))
    obs, _ = _stacks(9, 32)
    F = conv_encoder(obs, ps)
    g = build_graph_set(robots, clusters, F.data, grid, None)
    a = select_goals(g, ps)
    logp, ent = policy_terms(g, F, a.clusters, ps)
    assert logp.item() == pytest.approx(a.log_prob, abs=1e-9)
    p = a.probs
    assert ent.item() == pytest.approx(-(p * np.log(p)).sum(), abs=1e-6)


def test_end_to_end_gradients():
    res = {r.name: r for r in run_battery(seed=1, per_tensor=2)}
    e2e = res["policy_end_to_end"]
    assert e2e.entries == 20
    assert e2e.max_rel_error <= 1e-3


def test_pad_stack_to_multiple_of_eight():
    assert pad_stack(np.ones((5, 36, 40))).shape == (5, 40, 40)
    assert pad_stack(np.ones((2, 5, 16, 16))).shape == (2, 5, 16, 16)
