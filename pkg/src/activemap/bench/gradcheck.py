"""The numeric gradient battery run by ``activemap gradcheck``."""

from __future__ import annotations

import numpy as np

from ..mapping import FrontierClusters
from ..neuralcore import autodiff as ad
from ..neuralcore.gradcheck import GradCheckResult, check_gradients
from ..neuralcore.layers import (
    ENCODER_LAYERS,
    conv_encoder,
    gat_cross_layer,
    gat_self_layer,
    init_conv_stack,
    init_gat_cross,
    init_gat_self,
    init_mlp,
    mlp,
    sinkhorn,
)
from ..neuralcore.params import ParameterSet
from ..policy import (
    asym_features,
    init_policy_params,
    mi_embed,
    mi_estimate,
    mi_loss,
    policy_terms,
    state_value,
)
from ..topograph import History, build_graph_set
from ..mapping import OccupancyGrid, FREE
from ..worldsim import RobotState

TOLERANCE = 1e-4


def _mlp_case(rng):
    ps = ParameterSet()
    init_mlp(ps, "m", (6, 8, 1), rng)
    x = rng.normal(size=(5, 6))
    return "mlp", lambda: ad.tsum(mlp(x, ps, "m", 2) ** 2), ps


def _encoder_case(rng):
    ps = ParameterSet()
    init_conv_stack(ps, "enc", ENCODER_LAYERS, rng)
    x = (rng.random((5, 16, 16)) < 0.4).astype(float)
    proj = rng.normal(size=(2, 2, 32))
    return "conv_encoder", lambda: ad.tsum(conv_encoder(x, ps) * proj), ps


def _gat_self_case(rng):
    ps = ParameterSet()
    init_gat_self(ps, "g", 8, rng, hk=4)
    ps.add("nodes", rng.normal(size=(5, 8)))
    adj = rng.random((5, 5)) < 0.6
    np.fill_diagonal(adj, True)
    proj = rng.normal(size=(5, 8))
    return "gat_self_layer", lambda: ad.tsum(gat_self_layer(ps["nodes"], adj, ps, "g") * proj), ps


def _gat_cross_case(rng):
    ps = ParameterSet()
    init_gat_cross(ps, "x", 8, rng, hk=4)
    ps.add("a", rng.normal(size=(3, 8)))
    ps.add("b", rng.normal(size=(4, 8)))
    d = rng.random((3, 4))
    proj = rng.normal(size=(3, 8))

    def loss():
        out, _, logits = gat_cross_layer(ps["a"], ps["b"], d, ps, "x", return_logits=True)
        return ad.tsum(out * proj) + ad.tsum(logits)

    return "gat_cross_layer", loss, ps


def _sinkhorn_case(rng):
    ps = ParameterSet()
    ps.add("affinity", rng.normal(size=(4, 5)))
    proj = rng.normal(size=(4, 5))
    return "sinkhorn", lambda: ad.tsum(sinkhorn(ps["affinity"], 0.5, 20) * proj), ps


def _policy_params(rng):
    return init_policy_params(int(rng.integers(1 << 30)))


def _asym_case(rng):
    ps = _policy_params(rng)
    obs = (rng.random((5, 16, 16)) < 0.4).astype(float)
    priv = (rng.random((5, 16, 16)) < 0.4).astype(float)
    names = [n for n in ps.names() if n.startswith(("enc.", "value."))]

    def loss():
        feats = asym_features(obs, priv, ps)
        return state_value(feats.dF, ps)

    return "asym_encoder_value", loss, ps, names


def _mi_cases(rng):
    ps = _policy_params(rng)
    F = rng.normal(size=(4, 2, 2, 32))
    G = F + 0.5 * rng.normal(size=F.shape)
    names = [n for n in ps.names() if n.startswith("mi.")]

    def loss_mi():
        return mi_loss(mi_embed(F, ps), mi_embed(G, ps), ps)

    def loss_est():
        return mi_estimate(mi_embed(F, ps), mi_embed(G, ps), ps)

    return [("mi_loss", loss_mi, ps, names), ("mi_estimate", loss_est, ps, names)]


def tiny_scene(rng, size: int = 32):
    """A small open room with two robots and three frontier clusters."""
    cells = np.full((size, size), -1, dtype=np.int8)
    cells[4:20, 4:20] = FREE
    grid = OccupancyGrid(cells)
    robots = [RobotState((6.5, 6.5), 0.0, 0), RobotState((15.5, 10.5), np.pi / 2, 1)]
    clusters = FrontierClusters(
        clusters=[np.array([[19, 8]]), np.array([[10, 19]]), np.array([[19, 19]])],
        centers=np.array([[19, 8], [10, 19], [19, 19]]),
        counts=np.array([4, 6, 2]),
    )
    return grid, robots, clusters


def _policy_case(rng):
    """Full policy loss (log-prob + entropy + value + contrastive) on a 32x32 scene."""
    ps = _policy_params(rng)
    grid, robots, clusters = tiny_scene(rng)
    obs = (rng.random((2, 5, 32, 32)) < 0.4).astype(float)
    priv = (rng.random((2, 5, 32, 32)) < 0.4).astype(float)
    hist = History(2)
    with ad.no_grad():
        F0 = conv_encoder(obs[0], ps).data
    g0 = build_graph_set(robots, clusters, F0, grid, hist)
    hist.record(robots, [(19, 8), (10, 19)], [4, 6], g0.robots.rep, g0.frontiers.rep[:2])
    graphs = build_graph_set(robots, clusters, F0, grid, hist)
    names = list(rng.choice(ps.names(), size=20, replace=False))

    def loss():
        feats = asym_features(obs, priv, ps)
        logp, ent = policy_terms(graphs, feats.F[0], [0, 2], ps)
        v = state_value(feats.dF, ps)
        z, zh = mi_embed(feats.F, ps), mi_embed(feats.F_hat, ps)
        return logp + 0.1 * ent + ad.tsum(v * v) + mi_loss(z, zh, ps)

    return "policy_end_to_end", loss, ps, names


def run_battery(seed: int = 0, per_tensor: int = 4) -> list[GradCheckResult]:
    rng = np.random.default_rng(seed)
    cases = [_mlp_case(rng), _encoder_case(rng), _gat_self_case(rng), _gat_cross_case(rng), _sinkhorn_case(rng)]
    cases.append(_asym_case(rng))
    cases.extend(_mi_cases(rng))
    cases.append(_policy_case(rng))
    results = []
    for case in cases:
        name, fn, ps = case[:3]
        names = case[3] if len(case) > 3 else None
        k = 1 if name == "policy_end_to_end" else per_tensor
        results.append(check_gradients(name, fn, ps, per_tensor=k, names=names, seed=seed))
    return results
