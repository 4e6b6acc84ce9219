#!/usr/bin/env python3
"""Regenerate the benchmark fixtures under benchmarks/.

The MovingAI files are not bundled, so this writes a seeded stand-in with the
same name, size and obstacle density: a 32x32 grid with 20% random obstacles
(unreachable pockets filled in) and 25 random scenario files whose starts
and goals are pairwise distinct within each file.

    python tools/make_fixtures.py [--out benchmarks]
"""

import argparse
import random
from collections import deque
from pathlib import Path

WIDTH = HEIGHT = 32
OBSTACLE_RATIO = 0.20
NUM_SCENS = 25
ENTRIES = 200


def make_grid(rng):
    cells = [(r, c) for r in range(HEIGHT) for c in range(WIDTH)]
    blocked = set(rng.sample(cells, round(OBSTACLE_RATIO * len(cells))))
    free = [x for x in cells if x not in blocked]
    # keep the largest connected component
    seen, best = set(), []
    for s in free:
        if s in seen:
            continue
        comp, queue = [s], deque([s])
        seen.add(s)
        while queue:
            r, c = queue.popleft()
            for n in ((r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)):
                if n not in seen and n not in blocked and 0 <= n[0] < HEIGHT and 0 <= n[1] < WIDTH:
                    seen.add(n)
                    comp.append(n)
                    queue.append(n)
        if len(comp) > len(best):
            best = comp
    keep = set(best)
    return [[(r, c) in keep for c in range(WIDTH)] for r in range(HEIGHT)]


def distances(grid, src):
    dist = {src: 0}
    queue = deque([src])
    while queue:
        r, c = queue.popleft()
        for n in ((r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)):
            if 0 <= n[0] < HEIGHT and 0 <= n[1] < WIDTH and grid[n[0]][n[1]] and n not in dist:
                dist[n] = dist[(r, c)] + 1
                queue.append(n)
    return dist


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="benchmarks")
    ap.add_argument("--seed", type=int, default=20240601)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    out = Path(args.out)
    (out / "maps").mkdir(parents=True, exist_ok=True)
    (out / "scens").mkdir(parents=True, exist_ok=True)

    grid = make_grid(rng)
    name = "random-32-32-20"
    rows = ["".join("." if x else "@" for x in row) for row in grid]
    (out / "maps" / f"{name}.map").write_text(
        f"type octile\nheight {HEIGHT}\nwidth {WIDTH}\nmap\n" + "\n".join(rows) + "\n"
    )
    free = [(r, c) for r in range(HEIGHT) for c in range(WIDTH) if grid[r][c]]
    for k in range(1, NUM_SCENS + 1):
        starts = rng.sample(free, ENTRIES)
        goals = rng.sample(free, ENTRIES)
        lines = ["version 1"]
        for s, g in zip(starts, goals):
            if s == g:
                continue
            d = distances(grid, s)[g]
            lines.append(
                f"{d // 4}\t{name}.map\t{WIDTH}\t{HEIGHT}\t{s[1]}\t{s[0]}\t{g[1]}\t{g[0]}\t{d:.8f}"
            )
        (out / "scens" / f"{name}-random-{k}.scen").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
