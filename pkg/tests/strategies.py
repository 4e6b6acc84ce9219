"""Random grids, instances and constraint sets shared by the test modules."""

import random
from collections import deque

from hypothesis import strategies as st

from decbs.core import EdgeConstraint, GridMap, MapfInstance, MaxLength, MinLength, VertexConstraint


def connected_cells(grid, start):
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in grid.neighbors(u):
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


def random_grid(rng, max_side, obstacle_ratio=0.2, min_side=2):
    width = rng.randint(min_side, max_side)
    height = rng.randint(min_side, max_side)
    passable = [rng.random() >= obstacle_ratio for _ in range(width * height)]
    if not any(passable):
        passable[0] = True
    return GridMap(width, height, tuple(passable))


def random_instance(rng, max_side=6, agents=(2, 3), obstacle_ratio=0.2):
    """Instance whose agents all live in one connected component."""
    while True:
        grid = random_grid(rng, max_side, obstacle_ratio)
        free = [c for c in range(grid.size) if grid.passable[c]]
        comp = sorted(connected_cells(grid, rng.choice(free)))
        n = rng.randint(*agents)
        if len(comp) < n + 1:
            continue
        starts = rng.sample(comp, n)
        goals = rng.sample(comp, n)
        return MapfInstance(grid, tuple(starts), tuple(goals))


def random_constraints(rng, grid, agent, start, goal, count, t_max=8):
    """Up to ``count`` constraints on ``agent``; never forbids the start at t=0."""
    free = [c for c in range(grid.size) if grid.passable[c]]
    out = []
    for _ in range(count):
        kind = rng.random()
        t = rng.randint(1, t_max)
        if kind < 0.5:
            cell = goal if rng.random() < 0.25 else rng.choice(free)
            out.append(VertexConstraint(agent, cell, t))
        elif kind < 0.8:
            u = rng.choice(free)
            nbrs = grid.neighbors(u)
            if nbrs:
                out.append(EdgeConstraint(agent, u, rng.choice(nbrs), t))
        elif kind < 0.9:
            out.append(MinLength(agent, t))
        else:
            out.append(MaxLength(agent, t + 4))
    # constraints on another agent must be ignored
    if rng.random() < 0.3:
        out.append(VertexConstraint(agent + 1, start, 1))
    return out


seeds = st.integers(min_value=0, max_value=2**32 - 1)


def rng_from(seed):
    return random.Random(seed)
