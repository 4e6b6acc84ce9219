"""Brute-force ground truth for small instances.

Nothing here shares code with the solvers beyond the plain data types:
distances, constraint checks and collision counting are re-derived so the
solvers can be checked against them.
"""

from __future__ import annotations

import heapq
import itertools
from collections import deque
from typing import Iterable, Sequence

from .core import (
    INF,
    Cell,
    Conflict,
    EdgeConstraint,
    GridMap,
    MapfInstance,
    MaxLength,
    MinLength,
    Path,
    VertexConstraint,
    edge_conflict,
    vertex_conflict,
)


class OracleInfeasible(RuntimeError):
    """The brute-force search exceeded its state or path cap."""


def _neighbors(grid: GridMap, cell: Cell) -> list[Cell]:
    r, c = divmod(cell, grid.width)
    out = [cell]
    for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
        if 0 <= rr < grid.height and 0 <= cc < grid.width and grid.passable[rr * grid.width + cc]:
            out.append(rr * grid.width + cc)
    return out


def bfs_distances(grid: GridMap, goal: Cell) -> dict[Cell, int]:
    dist = {goal: 0}
    queue = deque([goal])
    while queue:
        u = queue.popleft()
        for v in _neighbors(grid, u)[1:]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


class _Rules:
    """Literal reading of a constraint list for one agent."""

    def __init__(self, omega: Iterable, agent: int | None) -> None:
        self.vertex = []
        self.edge = []
        self.max_len = INF
        self.min_len = 0
        for c in omega:
            if agent is not None and c.agent != agent:
                continue
            if isinstance(c, VertexConstraint):
                self.vertex.append((c.cell, c.t))
            elif isinstance(c, EdgeConstraint):
                self.edge.append((c.u, c.v, c.t))
            elif isinstance(c, MaxLength):
                self.max_len = min(self.max_len, c.t)
            elif isinstance(c, MinLength):
                self.min_len = max(self.min_len, c.t)

    def latest(self) -> int:
        times = [t for _, t in self.vertex] + [t for _, _, t in self.edge] + [self.min_len]
        if self.max_len != INF:
            times.append(self.max_len)
        return max(times)

    def can_occupy(self, cell: Cell, t: int) -> bool:
        return (cell, t) not in self.vertex

    def can_move(self, u: Cell, v: Cell, t: int) -> bool:
        return (u, v, t) not in self.edge

    def can_finish(self, goal: Cell, t: int) -> bool:
        if t < self.min_len or t > self.max_len:
            return False
        return all(not (cell == goal and tt >= t) for cell, tt in self.vertex)


def time_expanded_bfs(
    grid: GridMap,
    start: Cell,
    goal: Cell,
    omega: Iterable = (),
    agent: int | None = None,
    horizon: int | None = None,
) -> float:
    """Optimal constrained cost by sweeping the time-expanded graph one layer
    at a time; ``inf`` if no path finishes within ``horizon``."""
    rules = _Rules(omega, agent)
    if horizon is None:
        horizon = grid.num_vertices + 1 + max(rules.latest(), 0)
    if not rules.can_occupy(start, 0):
        return INF
    layer = {start}
    for t in range(horizon + 1):
        if goal in layer and rules.can_finish(goal, t):
            return t
        nxt = set()
        for u in layer:
            for v in _neighbors(grid, u):
                if rules.can_occupy(v, t + 1) and (u == v or rules.can_move(u, v, t + 1)):
                    nxt.add(v)
        if not nxt:
            return INF
        layer = nxt
    return INF


def enumerate_bounded_paths(
    grid: GridMap,
    start: Cell,
    goal: Cell,
    omega: Iterable,
    cost_bound: int,
    agent: int | None = None,
    cap: int = 200_000,
) -> set[Path]:
    """Every constraint-respecting start-to-goal path with cost <= bound.

    Paths that reach the goal and wait there are distinct paths of higher
    cost; a path only counts if the agent may rest at the goal from its last
    timestep on.
    """
    rules = _Rules(omega, agent)
    dist = bfs_distances(grid, goal)
    out: set[Path] = set()
    if start not in dist or not rules.can_occupy(start, 0):
        return out
    walk = [start]

    def dfs(t: int) -> None:
        u = walk[-1]
        if u == goal and rules.can_finish(goal, t):
            out.add(Path(walk))
            if len(out) > cap:
                raise OracleInfeasible(f"more than {cap} paths")
        if t == cost_bound:
            return
        for v in _neighbors(grid, u):
            if v not in dist or t + 1 + dist[v] > cost_bound:
                continue
            if rules.can_occupy(v, t + 1) and (u == v or rules.can_move(u, v, t + 1)):
                walk.append(v)
                dfs(t + 1)
                walk.pop()

    dfs(0)
    return out


def naive_collisions(paths: Sequence[Sequence[Cell]]) -> list[Conflict]:
    """Pairwise double loop over agents and timesteps."""
    out = []
    if not paths:
        return out
    horizon = max(len(p) for p in paths)

    def at(p, t):
        return p[t] if t < len(p) else p[-1]

    for i in range(len(paths)):
        for j in range(i + 1, len(paths)):
            pi, pj = paths[i], paths[j]
            for t in range(horizon):
                if at(pi, t) == at(pj, t):
                    out.append(vertex_conflict(i, j, at(pi, t), t))
                if t and at(pi, t - 1) != at(pi, t):
                    if at(pi, t - 1) == at(pj, t) and at(pi, t) == at(pj, t - 1):
                        out.append(edge_conflict(i, j, at(pi, t - 1), at(pi, t), t))
    return out


def count_path_conflicts(path: Sequence[Cell], others: Iterable[Sequence[Cell]]) -> int:
    """Collisions of one path against other agents' paths, one per
    (timestep, other agent) overlap, resting included."""
    return sum(
        1 for c in naive_collisions([path, *[o for o in others if o]]) if c.a1 == 0
    )


def joint_state_astar(
    instance: MapfInstance,
    horizon: int | None = None,
    max_expansions: int = 2_000_000,
) -> tuple[int, list[Path]] | None:
    """Minimum-flowtime collision-free solution by A* over joint positions.

    Time an agent spends waiting at its goal is charged only if it later
    leaves, which makes the objective exactly the sum of arrival times. The
    state is (positions, unpaid waits per agent). Returns ``None`` when no
    solution exists within ``horizon`` timesteps (default |V| + N).
    """
    grid = instance.grid
    n = instance.num_agents
    goals = instance.goals
    if horizon is None:
        horizon = grid.num_vertices + n
    dists = [bfs_distances(grid, g) for g in goals]
    if any(s not in d for s, d in zip(instance.starts, dists)):
        return None
    moves = {c: _neighbors(grid, c) for c in range(grid.size) if grid.passable[c]}

    def h(pos):
        return sum(dists[i][pos[i]] for i in range(n))

    start = (tuple(instance.starts), (0,) * n)
    parents: dict = {start: None}
    best_g = {start: 0}
    heap = [(h(start[0]), 0, 0, 0, start)]
    closed = set()
    counter = itertools.count()
    expansions = 0
    while heap:
        f, _, g, t, state = heapq.heappop(heap)
        if state in closed:
            continue
        closed.add(state)
        pos, pending = state
        if pos == goals:
            return g, _trace(parents, state, goals)
        expansions += 1
        if expansions > max_expansions:
            raise OracleInfeasible(f"more than {max_expansions} joint states")
        if t >= horizon:
            continue
        for nxt in itertools.product(*(moves[p] for p in pos)):
            if len(set(nxt)) < n:
                continue
            if any(
                nxt[a] == pos[b] and nxt[b] == pos[a] and pos[a] != pos[b]
                for a in range(n)
                for b in range(a + 1, n)
            ):
                continue
            step = 0
            new_pending = list(pending)
            for a in range(n):
                if pos[a] == goals[a] and nxt[a] == goals[a]:
                    new_pending[a] += 1
                else:
                    step += 1 + pending[a]
                    new_pending[a] = 0
            key = (nxt, tuple(new_pending))
            g2 = g + step
            if key in closed or best_g.get(key, INF) <= g2:
                continue
            best_g[key] = g2
            parents[key] = state
            heapq.heappush(heap, (g2 + h(nxt), next(counter), g2, t + 1, key))
    return None


def _trace(parents, state, goals) -> list[Path]:
    seq = []
    while state is not None:
        seq.append(state[0])
        state = parents[state]
    seq.reverse()
    paths = []
    for a, goal in enumerate(goals):
        cells = [s[a] for s in seq]
        end = len(cells) - 1
        while end > 0 and cells[end - 1] == goal:
            end -= 1
        paths.append(Path(cells[: end + 1]))
    return paths
