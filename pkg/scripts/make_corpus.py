"""Regenerate the bundled floorplan corpus (deterministic; output is committed)."""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np
from scipy import ndimage

# name, height, width, min room side, furniture count, seed
LAYOUTS = [
    ("small_a", 36, 36, 7, 3, 11),
    ("small_b", 32, 40, 7, 4, 12),
    ("small_c", 40, 32, 8, 2, 13),
    ("small_d", 36, 40, 9, 5, 14),
    ("medium_a", 64, 64, 9, 8, 21),
    ("medium_b", 64, 64, 11, 6, 22),
    ("medium_c", 64, 64, 10, 10, 23),
    ("medium_d", 64, 64, 13, 5, 24),
    ("large_a", 96, 96, 11, 16, 31),
    ("large_b", 96, 96, 13, 12, 32),
    ("large_c", 96, 96, 12, 20, 33),
    ("large_d", 96, 96, 15, 14, 34),
]


def _partition(grid, rng, y0, x0, y1, x1, min_side):
    """Recursively wall off the free rectangle [y0,y1) x [x0,x1) and punch a door per wall."""
    h, w = y1 - y0, x1 - x0
    can_v = w >= 2 * min_side + 1
    can_h = h >= 2 * min_side + 1
    if not (can_v or can_h):
        return
    vertical = can_v and (not can_h or w > h or (w == h and rng.random() < 0.5))
    if vertical:
        wx = int(rng.integers(x0 + min_side, x1 - min_side))
        grid[y0:y1, wx] = True
        door = int(rng.integers(2, 4))
        dy = int(rng.integers(y0, y1 - door + 1))
        grid[dy : dy + door, wx] = False
        _partition(grid, rng, y0, x0, y1, wx, min_side)
        _partition(grid, rng, y0, wx + 1, y1, x1, min_side)
    else:
        wy = int(rng.integers(y0 + min_side, y1 - min_side))
        grid[wy, x0:x1] = True
        door = int(rng.integers(2, 4))
        dx = int(rng.integers(x0, x1 - door + 1))
        grid[wy, dx : dx + door] = False
        _partition(grid, rng, y0, x0, wy, x1, min_side)
        _partition(grid, rng, wy + 1, x0, y1, x1, min_side)


def _connected(obstacle):
    _, n = ndimage.label(~obstacle)
    return n == 1


def make_map(height, width, min_side, furniture, seed):
    for attempt in range(1000):
        rng = np.random.default_rng(seed * 1000 + attempt)
        grid = np.zeros((height, width), dtype=bool)
        grid[0, :] = grid[-1, :] = grid[:, 0] = grid[:, -1] = True
        _partition(grid, rng, 1, 1, height - 1, width - 1, min_side)
        if not _connected(grid):
            continue
        placed = 0
        for _ in range(furniture * 20):
            if placed == furniture:
                break
            fh, fw = (int(v) for v in rng.integers(1, 4, size=2))
            y = int(rng.integers(2, height - fh - 2))
            x = int(rng.integers(2, width - fw - 2))
            # keep a one-cell margin of free space around every piece
            if grid[y - 1 : y + fh + 1, x - 1 : x + fw + 1].any():
                continue
            trial = grid.copy()
            trial[y : y + fh, x : x + fw] = True
            if _connected(trial):
                grid = trial
                placed += 1
        return grid
    raise RuntimeError("could not generate a connected layout")


def to_text(grid):
    return "\n".join("".join("#" if v else "." for v in row) for row in grid) + "\n"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "src/activemap/corpus"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, h, w, side, furn, seed in LAYOUTS:
        grid = make_map(h, w, side, furn, seed)
        (out / f"{name}.txt").write_text(to_text(grid))
        print(f"{name}: {w}x{h}, {int((~grid).sum())} free cells")


if __name__ == "__main__":
    main()
