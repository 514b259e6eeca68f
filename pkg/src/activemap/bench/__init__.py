"""Benchmark harness: configuration, episode runner, reports, rendering and the CLI."""

from .config import RunConfig, UsageError, load_config_file
from .runner import corpus_maps, run_episode, run_suite, size_classes

__all__ = ["RunConfig", "UsageError", "corpus_maps", "load_config_file", "run_episode", "run_suite", "size_classes"]
