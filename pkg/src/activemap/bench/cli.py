"""Command-line entry point: ``activemap {run,suite,train,render,gradcheck}``.

Exit codes: 0 on success, 2 on usage errors, 1 on runtime errors.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from ..worldsim import MapFormatError, load_world_file
from .config import RunConfig, UsageError, apply_settings, bundled_corpus, load_config_file

log = logging.getLogger("activemap")

# flag dest -> RunConfig setting key
_FLAG_KEYS = {
    "map": "maps",
    "corpus": "corpus",
    "planner": "planners",
    "robots": "robots",
    "seed": "seeds",
    "seeds": "seeds",
    "max_steps": "max_steps",
    "horizon": "horizon",
    "out": "out",
    "checkpoint": "checkpoint",
    "workers": "workers",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value settings file (flags override it)")
    p.add_argument("--map", action="append", help="ASCII map file (repeatable)")
    p.add_argument("--corpus", help="directory of .txt maps, or 'bundled'")
    p.add_argument("--planner", help="planner name(s), comma separated")
    p.add_argument("--robots", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", help="e.g. 0-19 or 1,2,3")
    p.add_argument("--max-steps", dest="max_steps")
    p.add_argument("--horizon", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--checkpoint", help="policy parameter file")
    p.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="activemap", description="Multi-robot active mapping workbench")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    for name, help_ in (("run", "one episode"), ("suite", "benchmark suite"), ("train", "PPO training")):
        p = sub.add_parser(name, help=help_)
        _common(p)
        if name == "run":
            p.add_argument("--scale", type=int, default=4, help="pixels per cell in the trace image")
        if name == "train":
            p.add_argument("--epochs", type=int, default=200)
            p.add_argument("--lr", type=float, default=1e-4)
    p = sub.add_parser("render", help="trace JSON -> PPM image")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True, help="output .ppm path")
    p.add_argument("--scale", type=int, default=4)
    p = sub.add_parser("gradcheck", help="finite-difference gradient battery")
    p.add_argument("--seed", type=int, default=0)
    return ap


def resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg = apply_settings(cfg, load_config_file(args.config))
    flags = {}
    for dest, key in _FLAG_KEYS.items():
        v = getattr(args, dest, None)
        if v is None:
            continue
        if dest == "map":
            v = ",".join(v)
        flags[key] = v
    return apply_settings(cfg, flags).validate()


def _cmd_run(args) -> int:
    from .plotting import plot_curves, plot_trace
    from .render import Trace, rasterize, render
    from .runner import run_episode

    cfg = resolve_config(args)
    path = cfg.map_paths()[0]
    world = load_world_file(path)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.seeds[0]
    planner = cfg.planners[0]
    m, ep = run_episode(cfg, world, seed, planner)
    trace = Trace.from_episode(ep)
    trace.save(out / "trace.json")
    render(trace, out / "trace.ppm", scale=args.scale)
    plot_trace(rasterize(trace), out / "trace.png")
    plot_curves({planner: [m.curve]}, out / "curve.png", cfg.horizon)
    with open(out / "run.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("map", "planner", "seed", "robots", "steps", "exploration_rate", "completed", "cycles", "overlap_ratio"))
        w.writerow((path.stem, planner, seed, cfg.robots, m.steps_to_completion, f"{m.exploration_rate:.6f}", int(m.completed), m.cycles, f"{m.overlap_ratio:.6f}"))
    print(f"{path.stem} {planner} seed={seed}: steps={m.steps_to_completion} rate={m.exploration_rate:.4f} cycles={m.cycles}")
    return 0


def _cmd_suite(args) -> int:
    from .plotting import plot_suite
    from .runner import run_suite

    cfg = resolve_config(args)
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from exc
    rows, agg = run_suite(cfg, out / "suite.csv")
    plot_suite(agg, out / "suite_steps.png")
    for a in agg:
        print(f"{a['planner']:>8} {a['size_class']:>6}  n={a['episodes']:<3} steps {a['steps_mean']:8.1f} +- {a['steps_std']:6.1f}  rate {a['rate_mean']:.4f}")
    print(f"{len(rows)} episodes -> {out / 'suite.csv'}")
    return 0


def _cmd_train(args) -> int:
    from ..neuralcore.params import load_checkpoint
    from ..training import TrainConfig, train
    from .plotting import plot_training

    if args.map is None and args.corpus is None and args.config is None:
        corpus = bundled_corpus()
        args.map = [str(corpus / f"{n}.txt") for n in ("medium_a", "medium_b", "medium_c")]
    rc = resolve_config(args)
    worlds = [load_world_file(p) for p in rc.map_paths()]
    tcfg = TrainConfig(
        lr=args.lr,
        epochs=args.epochs,
        horizon=rc.horizon,
        max_steps=rc.max_steps if rc.max_steps is not None else TrainConfig.max_steps,
        n_robots=rc.robots if args.robots is not None else TrainConfig.n_robots,
        seed=rc.seeds[0],
    )
    out = Path(rc.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = Path(rc.checkpoint) if rc.checkpoint else out / "policy.ckpt"
    start = load_checkpoint(ckpt) if rc.checkpoint and ckpt.exists() else None
    train(worlds, tcfg, params=start, log_path=out / "train_log.csv", checkpoint_path=ckpt)
    plot_training(out / "train_log.csv", out / "training.png")
    print(f"trained {tcfg.epochs} epochs on {len(worlds)} maps -> {ckpt}")
    return 0


def _cmd_render(args) -> int:
    from .plotting import plot_trace
    from .render import Trace, rasterize, render

    try:
        trace = Trace.load(args.trace)
    except OSError as exc:
        raise UsageError(f"cannot read trace {args.trace}: {exc}") from exc
    out = render(trace, args.out, scale=args.scale)
    plot_trace(rasterize(trace), out.with_suffix(".png"))
    print(f"wrote {out}")
    return 0


def _cmd_gradcheck(args) -> int:
    from .gradcheck import TOLERANCE, run_battery

    ok = True
    for r in run_battery(seed=args.seed):
        status = "PASS" if r.passed(TOLERANCE) else "FAIL"
        ok &= r.passed(TOLERANCE)
        print(f"{status} {r.name:<20} max rel err {r.max_rel_error:.2e} over {r.entries} entries (worst {r.worst})")
    return 0 if ok else 1


COMMANDS = {"run": _cmd_run, "suite": _cmd_suite, "train": _cmd_train, "render": _cmd_render, "gradcheck": _cmd_gradcheck}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (MapFormatError, KeyError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report, then signal failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
