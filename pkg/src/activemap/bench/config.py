"""Run configuration: a plain ``key = value`` file overlaid by command-line flags."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from ..episode import EpisodeConfig
from ..mapping import DEFAULT_R_CLUS
from ..worldsim import SensorConfig


class UsageError(ValueError):
    """Bad configuration or arguments; the CLI maps this to exit code 2."""


def bundled_corpus() -> Path:
    return Path(str(resources.files("activemap") / "corpus"))


@dataclass
class RunConfig:
    maps: list = field(default_factory=list)
    corpus: str | None = None
    planners: list = field(default_factory=lambda: ["nearest"])
    robots: int = 3
    seeds: list = field(default_factory=lambda: [0])
    max_steps: int | None = None
    horizon: int = 15
    sensor_range: float = 30.0
    rays: int = 72
    r_clus: float = DEFAULT_R_CLUS
    replan_on_goal_seen: bool = False
    out: str = "out"
    checkpoint: str | None = None
    workers: int = 1

    def validate(self) -> "RunConfig":
        if self.robots < 1:
            raise UsageError("robots must be >= 1")
        if not self.seeds:
            raise UsageError("at least one seed is required")
        if not self.planners:
            raise UsageError("at least one planner is required")
        if self.max_steps is not None and self.max_steps < 0:
            raise UsageError("max-steps must be >= 0")
        if self.horizon < 1:
            raise UsageError("horizon must be >= 1")
        return self

    def episode_config(self) -> EpisodeConfig:
        return EpisodeConfig(
            n_robots=self.robots,
            horizon=self.horizon,
            max_steps=self.max_steps,
            sensor=SensorConfig(max_range=self.sensor_range, ray_count=self.rays),
            r_clus=self.r_clus,
            replan_on_goal_seen=self.replan_on_goal_seen,
        )

    def map_paths(self) -> list[Path]:
        paths = [Path(m) for m in self.maps]
        if self.corpus is not None:
            root = bundled_corpus() if self.corpus in ("", "bundled") else Path(self.corpus)
            if not root.is_dir():
                raise UsageError(f"corpus directory {root} does not exist")
            paths += sorted(root.glob("*.txt"))
        if not paths:
            raise UsageError("no maps: give --map or a non-empty --corpus")
        return paths


def _int_list(text: str) -> list[int]:
    """Parse ``"0,1,2"`` or a range ``"0-9"`` (or a mix) into ints."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1) if not part.startswith("-") else (part, part)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


_PARSERS = {
    "maps": lambda v: [s.strip() for s in str(v).split(",") if s.strip()],
    "map": lambda v: [s.strip() for s in str(v).split(",") if s.strip()],
    "corpus": str,
    "planners": lambda v: [s.strip() for s in str(v).split(",") if s.strip()],
    "planner": lambda v: [s.strip() for s in str(v).split(",") if s.strip()],
    "robots": int,
    "seeds": _int_list,
    "seed": lambda v: [int(v)],
    "max_steps": lambda v: None if str(v).lower() in ("", "none", "auto") else int(v),
    "horizon": int,
    "sensor_range": float,
    "rays": int,
    "r_clus": float,
    "replan_on_goal_seen": _bool,
    "out": str,
    "checkpoint": str,
    "workers": int,
}
_ALIASES = {"map": "maps", "planner": "planners", "seed": "seeds"}


def apply_settings(cfg: RunConfig, settings: dict) -> RunConfig:
    """Return a copy of ``cfg`` with ``settings`` (raw strings or values) applied."""
    updates = {}
    for raw_key, value in settings.items():
        key = raw_key.strip().replace("-", "_")
        if key not in _PARSERS:
            raise UsageError(f"unknown setting {raw_key!r}")
        try:
            parsed = _PARSERS[key](value)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad value for {raw_key}: {value!r}") from exc
        updates[_ALIASES.get(key, key)] = parsed
    return dataclasses.replace(cfg, **updates)


def parse_config_text(text: str) -> dict:
    settings = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {n}: expected key = value")
        key, value = line.split("=", 1)
        settings[key.strip()] = value.strip()
    return settings


def load_config_file(path) -> dict:
    try:
        return parse_config_text(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
