"""Seeded episode runner and the benchmark suite report."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..baselines import PLANNERS, make_planner
from ..episode import Episode, EpisodeMetrics, run_planner_episode
from ..neuralcore.params import ParameterSet, load_checkpoint
from ..policy import PolicyPlanner, init_policy_params
from ..worldsim import GroundTruthMap, load_world_file
from .config import RunConfig, UsageError

POLICY = "policy"
SIZE_CLASSES = ("small", "medium", "large")

ROW_COLUMNS = (
    "map", "size_class", "free_cells", "planner", "seed", "robots",
    "steps", "exploration_rate", "completed", "cycles", "overlap_ratio", "path_length",
)
AGG_COLUMNS = ("planner", "size_class", "episodes", "steps_mean", "steps_std", "rate_mean", "rate_std", "completed_frac")


def planner_names() -> list[str]:
    return sorted(PLANNERS) + [POLICY]


def policy_params(cfg: RunConfig) -> ParameterSet:
    if cfg.checkpoint:
        try:
            return load_checkpoint(cfg.checkpoint)
        except OSError as exc:
            raise UsageError(f"cannot read checkpoint {cfg.checkpoint}: {exc}") from exc
    return init_policy_params(0)


def make_any_planner(name: str, cfg: RunConfig, seed: int, params: ParameterSet | None = None):
    if name == POLICY:
        return PolicyPlanner(params if params is not None else policy_params(cfg), mode="argmax", seed=seed, n_robots=cfg.robots)
    if name not in PLANNERS:
        raise UsageError(f"unknown planner {name!r}; choose from {planner_names()}")
    return make_planner(name, seed)


def run_episode(cfg: RunConfig, world: GroundTruthMap, seed: int, planner: str | None = None, params=None) -> tuple[EpisodeMetrics, Episode]:
    """One full episode; the step counter is the same for every planner."""
    name = planner or cfg.planners[0]
    pl = make_any_planner(name, cfg, seed, params)
    ep = run_planner_episode(world, pl, cfg.episode_config(), seed)
    return ep.metrics(), ep


def size_classes(free_counts: dict) -> dict:
    """Label maps small/medium/large by tertiles of their free-cell counts."""
    values = np.array(sorted(free_counts.values()), dtype=float)
    q1, q2 = np.quantile(values, [1 / 3, 2 / 3])
    out = {}
    for name, n in free_counts.items():
        out[name] = "small" if n <= q1 else ("medium" if n <= q2 else "large")
    return out


@dataclass(frozen=True)
class _Job:
    path: str
    planner: str
    seed: int


def _run_job(args):
    cfg, job = args
    world = load_world_file(job.path)
    m, _ = run_episode(cfg, world, job.seed, job.planner)
    return job, m


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def run_suite(cfg: RunConfig, csv_path=None) -> tuple[list[dict], list[dict]]:
    """Every (map, seed, planner) episode plus per planner/size-class aggregates.

    Rows are sorted before writing so the CSV is byte-identical across runs.
    """
    cfg.validate()
    for p in cfg.planners:
        if p != POLICY and p not in PLANNERS:
            raise UsageError(f"unknown planner {p!r}; choose from {planner_names()}")
    paths = cfg.map_paths()
    worlds = {str(p): load_world_file(p) for p in paths}
    classes = size_classes({k: w.free_count for k, w in worlds.items()})
    jobs = [_Job(str(p), pl, s) for p in paths for pl in cfg.planners for s in cfg.seeds]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_run_job, [(cfg, j) for j in jobs]))
    else:
        results = [_run_job((cfg, j)) for j in jobs]

    rows = []
    for job, m in results:
        w = worlds[job.path]
        rows.append(
            {
                "map": w.name or Path(job.path).stem,
                "size_class": classes[job.path],
                "free_cells": w.free_count,
                "planner": job.planner,
                "seed": job.seed,
                "robots": cfg.robots,
                "steps": m.steps_to_completion,
                "exploration_rate": m.exploration_rate,
                "completed": int(m.completed),
                "cycles": m.cycles,
                "overlap_ratio": m.overlap_ratio,
                "path_length": int(sum(m.path_lengths)),
            }
        )
    rows.sort(key=lambda r: (r["map"], r["planner"], r["seed"]))
    agg = aggregate(rows)
    if csv_path is not None:
        Path(csv_path).parent.mkdir(parents=True, exist_ok=True)
        Path(csv_path).write_text(format_suite_csv(rows, agg), newline="")
    return rows, agg


def aggregate(rows: list[dict]) -> list[dict]:
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["planner"], r["size_class"]), []).append(r)
    out = []
    order = {c: i for i, c in enumerate(SIZE_CLASSES)}
    for (planner, cls) in sorted(groups, key=lambda k: (k[0], order.get(k[1], 9))):
        g = groups[(planner, cls)]
        steps = np.array([r["steps"] for r in g], dtype=float)
        rate = np.array([r["exploration_rate"] for r in g], dtype=float)
        out.append(
            {
                "planner": planner,
                "size_class": cls,
                "episodes": len(g),
                "steps_mean": float(steps.mean()),
                "steps_std": float(steps.std()),
                "rate_mean": float(rate.mean()),
                "rate_std": float(rate.std()),
                "completed_frac": float(np.mean([r["completed"] for r in g])),
            }
        )
    return out


def format_suite_csv(rows: list[dict], agg: list[dict]) -> str:
    """Episode table, a blank line, then the aggregate table."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROW_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) if isinstance(r[c], float) else r[c] for c in ROW_COLUMNS])
    buf.write("\n")
    w.writerow(AGG_COLUMNS)
    for a in agg:
        w.writerow([_fmt(a[c]) if isinstance(a[c], float) else a[c] for c in AGG_COLUMNS])
    return buf.getvalue()


def read_suite_csv(path) -> tuple[list[dict], list[dict]]:
    text = Path(path).read_text()
    head, _, tail = text.partition("\n\n")
    rows = list(csv.DictReader(io.StringIO(head)))
    agg = list(csv.DictReader(io.StringIO(tail)))
    return rows, agg


def corpus_maps(names=None) -> dict[str, GroundTruthMap]:
    """Load the bundled corpus (optionally a subset by name)."""
    from .config import bundled_corpus

    out = {}
    for p in sorted(bundled_corpus().glob("*.txt")):
        if names is None or p.stem in names:
            out[p.stem] = load_world_file(p)
    return out
