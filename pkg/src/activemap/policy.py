"""Learned goal assignment: shared-encoder features, critic, MI terms and graph matching.

The actor path (:func:`select_goals`) only ever sees the observation feature
map; the privilege stack reaches the critic (:func:`state_value`) and the
mutual-information terms through :func:`asym_features`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .neuralcore import autodiff as ad
from .neuralcore.autodiff import Tensor
from .neuralcore.layers import (
    ENCODER_LAYERS,
    FEATURE_CHANNELS,
    MASKED_LOGIT,
    conv_encoder,
    conv_stack,
    gat_cross_layer,
    gat_self_layer,
    init_conv_stack,
    init_gat_cross,
    init_gat_self,
    init_mlp,
    mlp,
    sinkhorn_log,
)
from .neuralcore.params import ParameterSet
from .topograph import ROBOT, History, NodeSet, TopoGraphSet, bilerp_many, build_graph_set


class ExplorationComplete(Exception):
    """Raised when there is nothing left to assign (no frontier clusters)."""


@dataclass(frozen=True)
class PolicyConfig:
    c_h: int = FEATURE_CHANNELS
    value_grid: tuple[int, int] = (8, 8)
    value_hidden: int = 64
    embed_dim: int = 64
    t_hidden: int = 16
    temperature: float = 0.1
    sinkhorn_iters: int = 20
    distance_prior: float = 1.0

    @property
    def node_dim(self) -> int:
        return 2 * self.c_h

    @property
    def value_input(self) -> int:
        return self.value_grid[0] * self.value_grid[1] * self.c_h


SELF_GRAPHS = ("gat.r", "gat.f", "gat.rh", "gat.gh")
CROSS_GRAPHS = ("gat.rrh", "gat.fgh", "gat.rf")
MI_CONV = ((FEATURE_CHANNELS, FEATURE_CHANNELS, 1),) * 4


def init_policy_params(seed: int = 0, cfg: PolicyConfig = PolicyConfig()) -> ParameterSet:
    rng = np.random.default_rng(seed)
    ps = ParameterSet()
    init_conv_stack(ps, "enc", ENCODER_LAYERS, rng)
    init_mlp(ps, "node", (5, cfg.c_h, cfg.c_h), rng)
    for name in SELF_GRAPHS:
        init_gat_self(ps, name, cfg.node_dim, rng)
    for name in CROSS_GRAPHS:
        init_gat_cross(ps, name, cfg.node_dim, rng)
    _seed_distance_channel(ps, "gat.rf", cfg.distance_prior)
    init_mlp(ps, "value", (cfg.value_input, cfg.value_hidden, cfg.value_hidden, 1), rng)
    init_conv_stack(ps, "mi.conv", MI_CONV, rng)
    init_mlp(ps, "mi.mlp", (cfg.c_h, cfg.embed_dim, cfg.embed_dim, cfg.embed_dim), rng)
    init_mlp(ps, "mi.T", (1, cfg.t_hidden, 1), rng)
    return ps


def _seed_distance_channel(ps: ParameterSet, name: str, strength: float):
    """Dedicate hidden unit 0 of a cross layer's score MLP to the edge distance.

    The unit passes d through unchanged and feeds the score with weight
    ``-strength``, so an untrained policy already leans toward nearer
    clusters.  Everything stays trainable.
    """
    w1, b1, w2 = ps[f"{name}.phi.0.w"], ps[f"{name}.phi.0.b"], ps[f"{name}.phi.1.w"]
    w1.data[:, 0] = 0.0
    w1.data[-1, 0] = 1.0
    b1.data[0] = 0.0
    w2.data[0, 0] = -strength


# --------------------------------------------------------------------------- #
# asymmetric features and critic


@dataclass
class AsymFeatures:
    F: Tensor
    F_hat: Tensor
    dF: Tensor


def asym_features(obs, priv, ps: ParameterSet) -> AsymFeatures:
    """Encode both stacks with the same encoder; ``dF`` is the flattened difference.

    Accepts single (5,H,W) stacks or batches (B,5,H,W); batched ``dF`` is (B, D).
    """
    obs, priv = np.asarray(obs, float), np.asarray(priv, float)
    if obs.shape != priv.shape:
        raise ShapeError(f"observation {obs.shape} and privilege {priv.shape} stacks differ")
    both = np.concatenate([obs[None], priv[None]]) if obs.ndim == 3 else np.concatenate([obs, priv])
    feats = conv_encoder(both, ps)
    n = 1 if obs.ndim == 3 else obs.shape[0]
    F, F_hat = feats[:n], feats[n:]
    if obs.ndim == 3:
        F, F_hat = ad.reshape(F, F.shape[1:]), ad.reshape(F_hat, F_hat.shape[1:])
    diff = F - F_hat
    dF = ad.flatten(diff) if obs.ndim == 3 else ad.reshape(diff, (n, -1))
    return AsymFeatures(F, F_hat, dF)


def _value_grid_input(dF, cfg: PolicyConfig):
    """Lay a flattened (fh*fw*C) disparity onto the fixed value grid, zero-padding the rest."""
    dF = ad.as_tensor(dF)
    batched = dF.ndim == 2
    x = dF if batched else ad.reshape(dF, (1, -1))
    n, d = x.shape
    gh, gw = cfg.value_grid
    if d == cfg.value_input:
        return x, batched
    cells = d // cfg.c_h
    if d % cfg.c_h or cells > gh * gw:
        raise ShapeError(f"disparity of length {d} does not fit the {gh}x{gw}x{cfg.c_h} value grid")
    side = int(round(math.sqrt(cells)))
    if side * side != cells:
        raise ShapeError("non-square disparity maps need an explicit value grid")
    x = ad.pad_to(ad.reshape(x, (n, side, side, cfg.c_h)), (n, gh, gw, cfg.c_h))
    return ad.reshape(x, (n, -1)), batched


def state_value(dF, ps: ParameterSet, cfg: PolicyConfig = PolicyConfig()) -> Tensor:
    """Critic V(s) from the observation/privilege disparity: scalar, or (B,) for a batch."""
    if not np.all(np.isfinite(ad.as_tensor(dF).data)):
        raise ValueError("disparity must be finite")
    x, batched = _value_grid_input(dF, cfg)
    v = ad.reshape(mlp(x, ps, "value", 3), (-1,))
    return v if batched else ad.reshape(v, ())


# --------------------------------------------------------------------------- #
# mutual information


def mi_embed(F, ps: ParameterSet) -> Tensor:
    """Unit-length embeddings of channel-last feature maps: (fh,fw,C) -> (64,), (B,fh,fw,C) -> (B,64)."""
    F = ad.as_tensor(F)
    single = F.ndim == 3
    x = ad.transpose(F, (2, 0, 1) if single else (0, 3, 1, 2))
    if single:
        x = ad.reshape(x, (1,) + x.shape)
    h = ad.relu(conv_stack(x, ps, "mi.conv", MI_CONV))
    pooled = ad.mean(h, axis=(2, 3))
    z = ad.l2_normalize(mlp(pooled, ps, "mi.mlp", 3), axis=1)
    return ad.reshape(z, (-1,)) if single else z


def pair_distances(z, z_hat) -> Tensor:
    """Normalised L2 distance between unit vectors, in [0, 1]: d_ij = |z_i - z_hat_j| / 2."""
    z, z_hat = ad.as_tensor(z), ad.as_tensor(z_hat)
    sq = 2.0 - 2.0 * ad.matmul(z, ad.transpose(z_hat))
    return ad.sqrt(ad.maximum(sq, 1e-12)) * 0.5


def pair_scores(z, z_hat, ps: ParameterSet) -> Tensor:
    """Statistics-network scores T(d_ij) for every (z_i, z_hat_j) pair, as (B, B)."""
    d = pair_distances(z, z_hat)
    b = d.shape[0]
    t = mlp(ad.reshape(d, (b * b, 1)), ps, "mi.T", 2)
    return ad.reshape(t, (b, b))


def mi_loss_from_scores(scores) -> Tensor:
    """Contrastive loss: diagonal entries are positives, the rest of each row negatives."""
    scores = ad.as_tensor(scores)
    b = scores.shape[0]
    if b == 0:
        raise ValueError("mutual-information loss needs at least one pair")
    pos = ad.tsum(scores * np.eye(b), axis=1)
    return ad.mean(ad.logsumexp(scores, axis=1) - pos)


def mi_loss(z, z_hat, ps: ParameterSet) -> Tensor:
    if ad.as_tensor(z).shape[0] == 0:
        raise ValueError("mutual-information loss needs at least one pair")
    return mi_loss_from_scores(pair_scores(z, z_hat, ps))


def mi_estimate_from_scores(t_pos, t_neg) -> Tensor:
    """mean softplus(-T) over positives minus mean softplus(T) over negatives."""
    t_pos, t_neg = ad.as_tensor(t_pos), ad.as_tensor(t_neg)
    if t_pos.size == 0 or t_neg.size == 0:
        raise ValueError("need at least one positive and one negative pair")
    return ad.mean(ad.softplus(-t_pos)) - ad.mean(ad.softplus(t_neg))


def mi_estimate(z, z_hat, ps: ParameterSet) -> Tensor:
    scores = pair_scores(z, z_hat, ps)
    b = scores.shape[0]
    if b < 2:
        raise ValueError("need a batch of at least two for negative pairs")
    eye = np.eye(b, dtype=bool)
    flat = ad.reshape(scores, (-1,))
    pos = ad.gather_rows(flat, np.flatnonzero(eye.ravel()))
    neg = ad.gather_rows(flat, np.flatnonzero(~eye.ravel()))
    return mi_estimate_from_scores(pos, neg)


# --------------------------------------------------------------------------- #
# goal selection


@dataclass
class GoalAssignment:
    clusters: np.ndarray  # (n_r,) chosen cluster index per robot
    centers: list  # chosen centre cell per robot
    probs: np.ndarray  # (n_r, n_f) assignment distribution rows
    log_prob: float  # sum over robots of the chosen entries' log-probs


def _geometric(nodes: NodeSet, map_shape) -> np.ndarray:
    h, w = map_shape
    pts = nodes.points
    if nodes.category == ROBOT:
        s = nodes.scalar / (2 * math.pi)
    else:
        s = np.log1p(nodes.scalar) / 5.0
    cat = np.zeros((len(nodes), 2))
    cat[:, 0 if nodes.category == ROBOT else 1] = 1.0
    return np.column_stack([cat, pts[:, 0] / w, pts[:, 1] / h, s])


def _node_inputs(nodes: NodeSet, map_shape, ps: ParameterSet, rep=None) -> Tensor:
    enc = ad.relu(mlp(_geometric(nodes, map_shape), ps, "node", 2))
    return ad.concat([enc, ad.as_tensor(nodes.rep if rep is None else rep)], axis=1)


def assignment_logits(graphs: TopoGraphSet, ps: ParameterSet, F=None) -> Tensor:
    """Robot-by-cluster affinity A_M read from the final robot->frontier cross layer.

    When ``F`` (the observation feature map) is given, current-node feature
    vectors are re-sampled from it so gradients reach the encoder; otherwise
    the vectors stored in ``graphs`` are used.
    """
    if graphs.n_f == 0:
        raise ExplorationComplete("no frontier clusters")
    rep_r = rep_f = None
    if F is not None:
        rep_r = bilerp_many(graphs.robots.points, F)
        rep_f = bilerp_many(graphs.frontiers.points, F)
    R = gat_self_layer(_node_inputs(graphs.robots, graphs.map_shape, ps, rep_r), graphs.G_r, ps, "gat.r")
    Fr = gat_self_layer(_node_inputs(graphs.frontiers, graphs.map_shape, ps, rep_f), graphs.G_f, ps, "gat.f")
    if len(graphs.hist_robots):
        Rh = gat_self_layer(_node_inputs(graphs.hist_robots, graphs.map_shape, ps), graphs.G_r_hist, ps, "gat.rh")
        R = gat_cross_layer(R, Rh, graphs.d_rr, ps, "gat.rrh")
    if len(graphs.hist_goals):
        Gh = gat_self_layer(_node_inputs(graphs.hist_goals, graphs.map_shape, ps), graphs.G_g_hist, ps, "gat.gh")
        Fr = gat_cross_layer(Fr, Gh, graphs.d_fg, ps, "gat.fgh")
    _, _, logits = gat_cross_layer(R, Fr, graphs.d_rf, ps, "gat.rf", return_logits=True)
    return logits


def candidate_mask(graphs: TopoGraphSet) -> np.ndarray:
    """Which (robot, cluster) pairs the assignment may use.

    A pair is allowed when the cluster centre is reachable from the robot
    through known-free space.  A robot that reaches no centre keeps every
    entry (it will hold position wherever it is sent), and a centre nobody
    reaches is excluded.
    """
    reach = np.isfinite(graphs.raw_d_rf) if graphs.raw_d_rf is not None else np.ones((graphs.n_r, graphs.n_f), bool)
    if not reach.any():
        return np.ones_like(reach)
    mask = reach.copy()
    cols = reach.any(axis=0)
    mask[~reach.any(axis=1)] = cols
    return mask


def goal_log_probs(graphs: TopoGraphSet, ps: ParameterSet, cfg: PolicyConfig = PolicyConfig(), F=None) -> Tensor:
    """Log of the Sinkhorn-normalised assignment rows, (n_r, n_f).

    Disallowed pairs come out at (about) :data:`MASKED_LOGIT`, i.e. zero probability.
    """
    logits = assignment_logits(graphs, ps, F)
    mask = candidate_mask(graphs)
    cols = np.flatnonzero(mask.any(axis=0))
    if len(cols) == graphs.n_f:
        return sinkhorn_log(logits, cfg.temperature, cfg.sinkhorn_iters, mask)
    sub = sinkhorn_log(logits[:, cols], cfg.temperature, cfg.sinkhorn_iters, mask[:, cols])
    # scatter back to every cluster; dropped columns get the masked log-weight
    place = np.zeros((len(cols), graphs.n_f))
    place[np.arange(len(cols)), cols] = 1.0
    dropped = np.full(graphs.n_f, MASKED_LOGIT)
    dropped[cols] = 0.0
    return ad.matmul(sub, place) + dropped


def select_goals(
    graphs: TopoGraphSet,
    ps: ParameterSet,
    mode: str = "argmax",
    rng: np.random.Generator | None = None,
    cfg: PolicyConfig = PolicyConfig(),
) -> GoalAssignment:
    """Pick one frontier cluster per robot: row argmax, or a categorical sample per row."""
    if mode not in ("argmax", "sample"):
        raise ValueError(f"unknown mode {mode!r}")
    with ad.no_grad():
        logp = goal_log_probs(graphs, ps, cfg).data
    probs = np.exp(logp)
    probs /= probs.sum(axis=1, keepdims=True)
    if mode == "argmax":
        choice = np.argmax(logp, axis=1)
    else:
        if rng is None:
            raise ValueError("sampling needs an rng")
        choice = np.array([rng.choice(len(p), p=p) for p in probs])
    cells = [tuple(int(v) for v in graphs.frontiers.cells[j]) for j in choice]
    log_prob = float(logp[np.arange(len(choice)), choice].sum())
    return GoalAssignment(choice, cells, probs, log_prob)


def policy_terms(graphs: TopoGraphSet, F, actions, ps: ParameterSet, cfg: PolicyConfig = PolicyConfig()):
    """Differentiable (joint log-prob of ``actions``, summed row entropy) for one decision."""
    logp = goal_log_probs(graphs, ps, cfg, F)
    n_r = logp.shape[0]
    flat = ad.reshape(logp, (-1,))
    chosen = ad.gather_rows(flat, np.arange(n_r) * logp.shape[1] + np.asarray(actions))
    entropy = -ad.tsum(ad.exp(logp) * logp)
    return ad.tsum(chosen), entropy


# --------------------------------------------------------------------------- #
# planner wrapper


class PolicyPlanner:
    """Stateful planner: encodes the observation stack, keeps history, assigns goals."""

    def __init__(self, ps: ParameterSet, cfg: PolicyConfig = PolicyConfig(), mode: str = "argmax", seed: int = 0, n_robots: int | None = None):
        self.ps = ps
        self.cfg = cfg
        self.mode = mode
        self.rng = np.random.default_rng(seed)
        self.history = History(n_robots) if n_robots else None
        self.last = None

    def assign(self, scene, F) -> tuple[GoalAssignment, TopoGraphSet]:
        """Assign goals from an already-encoded observation feature map and log them to history."""
        if self.history is None:
            self.history = History(len(scene.robots))
        graphs = build_graph_set(scene.robots, scene.clusters, F, scene.grid, self.history)
        assign = select_goals(graphs, self.ps, self.mode, self.rng, self.cfg)
        self.history.record(
            scene.robots,
            assign.centers,
            [scene.clusters.counts[j] for j in assign.clusters],
            graphs.robots.rep,
            graphs.frontiers.rep[assign.clusters],
        )
        return assign, graphs

    def decide(self, scene, obs_stack):
        """Return (GoalAssignment, graphs, observation features) for the current scene."""
        with ad.no_grad():
            F = conv_encoder(pad_stack(obs_stack), self.ps).data
        assign, graphs = self.assign(scene, F)
        return assign, graphs, F

    def __call__(self, scene):
        assign, _, _ = self.decide(scene, scene.observation_stack())
        return assign.centers


def pad_stack(stack: np.ndarray) -> np.ndarray:
    """Zero-pad the spatial dims of a (..., H, W) stack up to multiples of 8."""
    stack = np.asarray(stack, float)
    h, w = stack.shape[-2:]
    ph, pw = (-h) % 8, (-w) % 8
    if not ph and not pw:
        return stack
    widths = [(0, 0)] * (stack.ndim - 2) + [(0, ph), (0, pw)]
    return np.pad(stack, widths)
