"""Trajectory images: binary PPM rasters and a JSON trace format."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..mapping import FREE, OBSTACLE, UNKNOWN

OBSTACLE_RGB = (0, 200, 0)
FREE_RGB = (173, 216, 230)
UNKNOWN_RGB = (128, 128, 128)
GOAL_RGB = (255, 255, 255)
ROBOT_RGB = (
    (220, 20, 60),
    (30, 60, 220),
    (255, 140, 0),
    (148, 0, 211),
    (0, 128, 128),
    (139, 69, 19),
    (255, 20, 147),
    (0, 0, 0),
)

_CELL_CHARS = {UNKNOWN: "?", FREE: ".", OBSTACLE: "#"}
_CHAR_CELLS = {v: k for k, v in _CELL_CHARS.items()}


@dataclass
class Trace:
    """What a rendered frame needs: the final map knowledge, trails and goals."""

    cells: np.ndarray  # (H, W) occupancy values
    trails: list  # per robot, list of (x, y)
    goals: list  # per cycle, per robot (x, y) or None

    @classmethod
    def from_episode(cls, ep) -> "Trace":
        t = ep.trace()
        return cls(np.array(t.grid.cells), t.trails, t.goals)

    def to_json(self) -> str:
        return json.dumps(
            {
                "width": int(self.cells.shape[1]),
                "height": int(self.cells.shape[0]),
                "grid": ["".join(_CELL_CHARS[int(v)] for v in row) for row in self.cells],
                "trails": [[list(map(int, c)) for c in t] for t in self.trails],
                "goals": [[None if g is None else list(map(int, g)) for g in cyc] for cyc in self.goals],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "Trace":
        d = json.loads(text)
        cells = np.array([[_CHAR_CELLS[ch] for ch in row] for row in d["grid"]], dtype=np.int8)
        if cells.shape != (d["height"], d["width"]):
            raise ValueError("trace grid does not match its declared size")
        trails = [[tuple(c) for c in t] for t in d["trails"]]
        goals = [[None if g is None else tuple(g) for g in cyc] for cyc in d["goals"]]
        return cls(cells, trails, goals)

    def save(self, path):
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "Trace":
        return cls.from_json(Path(path).read_text())


def rasterize(trace: Trace, scale: int = 1) -> np.ndarray:
    """(H*scale, W*scale, 3) uint8 image of the trace."""
    cells = np.asarray(trace.cells)
    img = np.empty(cells.shape + (3,), dtype=np.uint8)
    img[:] = UNKNOWN_RGB
    img[cells == FREE] = FREE_RGB
    img[cells == OBSTACLE] = OBSTACLE_RGB
    for i, trail in enumerate(trace.trails):
        colour = ROBOT_RGB[i % len(ROBOT_RGB)]
        for x, y in trail:
            img[y, x] = colour
    for cycle in trace.goals:
        for g in cycle:
            if g is not None:
                img[g[1], g[0]] = GOAL_RGB
    if scale > 1:
        img = img.repeat(scale, axis=0).repeat(scale, axis=1)
    return img


def ppm_bytes(img: np.ndarray) -> bytes:
    h, w = img.shape[:2]
    return f"P6\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img, dtype=np.uint8).tobytes()


def render(trace: Trace, path, scale: int = 1) -> Path:
    """Write the trace as a binary PPM (P6) image."""
    path = Path(path)
    path.write_bytes(ppm_bytes(rasterize(trace, scale)))
    return path


def read_ppm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P6" or parts[2] != b"255":
        raise ValueError("not a binary 8-bit PPM")
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3)
