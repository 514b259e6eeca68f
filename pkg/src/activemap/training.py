"""PPO with an asymmetric critic and a contrastive mutual-information auxiliary loss.

One MDP step is one planning cycle: the action is the joint goal assignment,
the reward is the newly explored area minus a per-cycle time cost.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .episode import Episode, EpisodeConfig, EpisodeMetrics
from .errors import NumericError
from .neuralcore import autodiff as ad
from .neuralcore.params import Adam, ParameterSet
from .policy import (
    PolicyConfig,
    PolicyPlanner,
    asym_features,
    mi_embed,
    mi_estimate,
    mi_loss,
    pad_stack,
    policy_terms,
    state_value,
)
from .worldsim import GroundTruthMap, SensorConfig

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "mean_steps", "mean_explo_rate", "loss_clip", "loss_vf", "entropy", "loss_mi", "mi_estimate")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-5
    gamma: float = 0.99
    gae_lambda: float = 0.95
    c1: float = 3.0
    c2: float = 1.0
    c3: float = 1.0
    clip_eps: float = 0.2
    ppo_epochs: int = 4
    epochs: int = 200
    horizon: int = 15
    max_steps: int = 1800
    a1: float = 0.005
    a2: float = 0.225
    n_robots: int = 2
    max_grad_norm: float | None = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.clip_eps < 1.0:
            raise ValueError("clip_eps must lie in (0, 1)")
        for name in ("gamma", "gae_lambda", "horizon", "ppo_epochs"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.lr < 0 or self.max_steps < 0 or self.epochs < 0:
            raise ValueError("lr, max_steps and epochs must be non-negative")

    def episode_config(self, sensor: SensorConfig = SensorConfig()) -> EpisodeConfig:
        return EpisodeConfig(n_robots=self.n_robots, horizon=self.horizon, max_steps=self.max_steps, sensor=sensor)


def reward(area_now: float, area_prev: float, cfg: TrainConfig = TrainConfig()) -> float:
    """a1 * (newly explored cells) - a2."""
    if area_now < area_prev or area_prev < 0:
        raise ValueError("explored area must be non-decreasing and non-negative")
    return cfg.a1 * (area_now - area_prev) - cfg.a2


def gae(rewards, values, bootstrap_value: float, gamma: float, lam: float, dones=None):
    """Generalised advantage estimates and returns (= advantages + values).

    ``dones[t]`` cuts the bootstrap after step t (terminal state).
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    if rewards.shape != values.shape:
        raise ValueError("rewards and values must have equal lengths")
    n = len(rewards)
    dones = np.zeros(n, bool) if dones is None else np.asarray(dones, bool)
    adv = np.zeros(n)
    running = 0.0
    next_value = bootstrap_value
    for t in range(n - 1, -1, -1):
        keep = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_value * keep - values[t]
        running = delta + gamma * lam * keep * running
        adv[t] = running
        next_value = values[t]
    return adv, adv + values


@dataclass
class RolloutBuffer:
    obs: list = field(default_factory=list)
    priv: list = field(default_factory=list)
    graphs: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    log_probs: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    values: list = field(default_factory=list)
    dones: list = field(default_factory=list)
    areas: list = field(default_factory=list)  # explored area after each cycle
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.rewards)

    @property
    def closed(self) -> bool:
        return self.advantages is not None

    def add(self, obs, priv, graphs, actions, log_prob, value):
        if self.closed:
            raise RuntimeError("buffer already closed")
        self.obs.append(obs)
        self.priv.append(priv)
        self.graphs.append(graphs)
        self.actions.append(np.asarray(actions, dtype=np.int64))
        self.log_probs.append(float(log_prob))
        self.values.append(float(value))

    def finish_step(self, r: float, area: float, done: bool):
        self.rewards.append(float(r))
        self.areas.append(float(area))
        self.dones.append(bool(done))

    def close(self, bootstrap_value: float, cfg: TrainConfig):
        self.advantages, self.returns = gae(self.rewards, self.values, bootstrap_value, cfg.gamma, cfg.gae_lambda, self.dones)

    @staticmethod
    def merge(buffers) -> "RolloutBuffer":
        out = RolloutBuffer()
        for b in buffers:
            if not b.closed:
                raise RuntimeError("merge needs closed buffers")
            for name in ("obs", "priv", "graphs", "actions", "log_probs", "rewards", "values", "dones", "areas"):
                getattr(out, name).extend(getattr(b, name))
        out.advantages = np.concatenate([b.advantages for b in buffers]) if buffers else np.zeros(0)
        out.returns = np.concatenate([b.returns for b in buffers]) if buffers else np.zeros(0)
        return out


def _critic_value(obs, priv, ps, pcfg):
    with ad.no_grad():
        feats = asym_features(obs, priv, ps)
        v = state_value(feats.dF, ps, pcfg).item()
    return feats.F.data, v


def rollout(
    world: GroundTruthMap,
    ps: ParameterSet,
    cfg: TrainConfig = TrainConfig(),
    seed: int = 0,
    pcfg: PolicyConfig = PolicyConfig(),
) -> tuple[RolloutBuffer, EpisodeMetrics]:
    """Play one episode with a sampling policy and return the closed buffer plus metrics."""
    ep = Episode(world, cfg.episode_config(), seed)
    planner = PolicyPlanner(ps, pcfg, mode="sample", seed=seed, n_robots=cfg.n_robots)
    buf = RolloutBuffer()
    area_prev = 0.0
    bootstrap = 0.0
    while not ep.done:
        scene = ep.scene()
        if len(scene.clusters) == 0:
            break
        obs, priv = (pad_stack(s) for s in ep.stacks(scene))
        F, value = _critic_value(obs, priv, ps, pcfg)
        assign, graphs = planner.assign(scene, F)
        buf.add(obs, priv, graphs, assign.clusters, assign.log_prob, value)
        ep.run_cycle(assign.centers)
        area = float(ep.explored_area)
        buf.finish_step(reward(area, area_prev, cfg), area, ep.complete)
        area_prev = area
    if len(buf) and not ep.complete:
        obs, priv = (pad_stack(s) for s in ep.stacks())
        bootstrap = _critic_value(obs, priv, ps, pcfg)[1]
    buf.close(bootstrap, cfg)
    return buf, ep.metrics()


# --------------------------------------------------------------------------- #
# update


@dataclass
class LossReport:
    loss_clip: float
    loss_vf: float
    entropy: float
    loss_mi: float
    mi_estimate: float
    total: float
    grad_norm: float = 0.0


def ppo_objective(buf: RolloutBuffer, ps: ParameterSet, cfg: TrainConfig, pcfg: PolicyConfig = PolicyConfig()):
    """Differentiable loss (to minimise) and the detached terms that make it up.

    The maximised objective is L_clip - c1 * L_vf + c2 * S - c3 * L_mi, so
    the returned loss is its negation.  The contrastive loss pairs each
    observation embedding with the privilege embedding of the same step
    (positive) and of the other steps in the batch (negatives).
    """
    n = len(buf)
    if n == 0:
        raise ValueError("empty buffer")
    if not buf.closed:
        raise RuntimeError("buffer must be closed before an update")
    adv = buf.advantages
    if n > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    old_logp = np.asarray(buf.log_probs)

    groups: dict = {}
    for i, o in enumerate(buf.obs):
        groups.setdefault(o.shape, []).append(i)

    clip_sum = vf_sum = ent_sum = None
    mi_terms, est_terms = [], []
    for idx in groups.values():
        feats = asym_features(np.stack([buf.obs[i] for i in idx]), np.stack([buf.priv[i] for i in idx]), ps)
        values = state_value(feats.dF, ps, pcfg)
        vf = ad.tsum((values - buf.returns[idx]) ** 2)
        surr = None
        ent = None
        for k, i in enumerate(idx):
            logp, h = policy_terms(buf.graphs[i], feats.F[k], buf.actions[i], ps, pcfg)
            ratio = ad.exp(logp - old_logp[i])
            s = ad.minimum(ratio * adv[i], ad.clip(ratio, 1 - cfg.clip_eps, 1 + cfg.clip_eps) * adv[i])
            surr = s if surr is None else surr + s
            ent = h if ent is None else ent + h
        clip_sum = surr if clip_sum is None else clip_sum + surr
        vf_sum = vf if vf_sum is None else vf_sum + vf
        ent_sum = ent if ent_sum is None else ent_sum + ent
        if cfg.c3 != 0.0 or len(idx) > 1:
            z, z_hat = mi_embed(feats.F, ps), mi_embed(feats.F_hat, ps)
            mi_terms.append((mi_loss(z, z_hat, ps), len(idx)))
            if len(idx) > 1:
                with ad.no_grad():
                    est_terms.append((mi_estimate(z, z_hat, ps).item(), len(idx)))

    l_clip = clip_sum / n
    l_vf = vf_sum / n
    ent = ent_sum / n
    if mi_terms:
        l_mi = None
        for t, m in mi_terms:
            part = t * (m / n)
            l_mi = part if l_mi is None else l_mi + part
    else:
        l_mi = ad.Tensor(0.0)
    objective = l_clip - cfg.c1 * l_vf + cfg.c2 * ent - cfg.c3 * l_mi
    loss = -objective
    est = sum(v * m for v, m in est_terms) / sum(m for _, m in est_terms) if est_terms else float("nan")
    report = LossReport(l_clip.item(), l_vf.item(), ent.item(), l_mi.item(), est, loss.item())
    return loss, report


def ppo_update(
    buf: RolloutBuffer,
    ps: ParameterSet,
    cfg: TrainConfig,
    optimizer: Adam | None = None,
    pcfg: PolicyConfig = PolicyConfig(),
) -> LossReport:
    """Run ``cfg.ppo_epochs`` full-batch steps; returns the epoch-averaged loss report."""
    optimizer = optimizer or Adam(ps, lr=cfg.lr, max_grad_norm=cfg.max_grad_norm)
    reports = []
    for _ in range(cfg.ppo_epochs):
        ps.zero_grad()
        loss, rep = ppo_objective(buf, ps, cfg, pcfg)
        if not np.isfinite(loss.item()):
            raise NumericError(f"non-finite PPO loss ({rep}); update aborted")
        loss.backward()
        rep.grad_norm = optimizer.step(ps.grads())
        ps.zero_grad()
        reports.append(rep)
    fields = {k: float(np.mean([getattr(r, k) for r in reports])) for k in asdict(reports[0])}
    return LossReport(**fields)


# --------------------------------------------------------------------------- #
# loop


def evaluate(worlds, ps, cfg: TrainConfig, seeds, pcfg: PolicyConfig = PolicyConfig()) -> list[EpisodeMetrics]:
    """Greedy (argmax) episodes with the training step cap; same counter as the baselines."""
    from .episode import run_planner_episode

    out = []
    for w in worlds:
        for s in seeds:
            planner = PolicyPlanner(ps, pcfg, mode="argmax", seed=s, n_robots=cfg.n_robots)
            out.append(run_planner_episode(w, planner, cfg.episode_config(), s).metrics())
    return out


def train(
    worlds,
    cfg: TrainConfig = TrainConfig(),
    pcfg: PolicyConfig = PolicyConfig(),
    params: ParameterSet | None = None,
    log_path=None,
    checkpoint_path=None,
    checkpoint_every: int = 50,
):
    """PPO over the given worlds; one rollout per world per epoch.  Returns (params, log rows)."""
    ps = params if params is not None else _init(cfg, pcfg)
    opt = Adam(ps, lr=cfg.lr, max_grad_norm=cfg.max_grad_norm)
    rows = []
    writer = fh = None
    if log_path is not None:
        Path(log_path).parent.mkdir(parents=True, exist_ok=True)
        fh = open(log_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(LOG_COLUMNS)
    try:
        for epoch in range(cfg.epochs):
            bufs, metrics = [], []
            for k, w in enumerate(worlds):
                seed = cfg.seed * 1_000_003 + epoch * len(worlds) + k
                b, m = rollout(w, ps, cfg, seed, pcfg)
                if len(b):
                    bufs.append(b)
                metrics.append(m)
            if not bufs:
                continue
            rep = ppo_update(RolloutBuffer.merge(bufs), ps, cfg, opt, pcfg)
            row = {
                "epoch": epoch,
                "mean_steps": float(np.mean([m.steps_to_completion for m in metrics])),
                "mean_explo_rate": float(np.mean([m.exploration_rate for m in metrics])),
                "loss_clip": rep.loss_clip,
                "loss_vf": rep.loss_vf,
                "entropy": rep.entropy,
                "loss_mi": rep.loss_mi,
                "mi_estimate": rep.mi_estimate,
            }
            rows.append(row)
            log.info("epoch %d steps %.1f rate %.3f mi %.4f", epoch, row["mean_steps"], row["mean_explo_rate"], rep.mi_estimate)
            if writer is not None:
                writer.writerow([f"{row[c]:.6g}" if c != "epoch" else row[c] for c in LOG_COLUMNS])
                fh.flush()
            if checkpoint_path is not None and (epoch + 1) % checkpoint_every == 0:
                ps.save(checkpoint_path)
    finally:
        if fh is not None:
            fh.close()
    if checkpoint_path is not None:
        ps.save(checkpoint_path)
    return ps, rows


def _init(cfg: TrainConfig, pcfg: PolicyConfig) -> ParameterSet:
    from .policy import init_policy_params

    return init_policy_params(cfg.seed, pcfg)
