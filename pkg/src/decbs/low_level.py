"""Single-agent space-time search under a constraint set.

Three searches share one state space, ``(cell, t)`` with unit-cost moves
and waits:

* :func:`shortest_path_search` - A* returning the exact constrained optimum.
* :func:`focal_search_low` - focal search (OPEN by ``f``, FOCAL by conflict
  count) returning a lower bound and a path within ``w`` of it.
* :func:`bounded_best_first` - best-first on conflict count over every node
  whose ``f`` stays within ``w`` times a known optimum.

``h`` is the exact static distance to the goal, raised to respect the
earliest time the goal may be accepted (minimum-length and goal vertex
constraints), which keeps it admissible and consistent.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

from .core import (
    INF,
    Cell,
    Conflict,
    EdgeConstraint,
    GridMap,
    MaxLength,
    MinLength,
    Path,
    VertexConstraint,
    edge_conflict,
    vertex_conflict,
)

# Tests flip this on to assert f and d never decrease along generated edges.
CHECK_INVARIANTS = False

SHORTEST = "shortest"
FOCAL = "focal"
DOUBLE = "double"
LOW_MODES = (SHORTEST, FOCAL, DOUBLE)


@lru_cache(maxsize=4096)
def distance_table(grid: GridMap, goal: Cell) -> tuple[float, ...]:
    """Static shortest distance from every cell to ``goal`` (reverse BFS)."""
    dist = [INF] * grid.size
    if not grid.is_passable(goal):
        return tuple(dist)
    dist[goal] = 0
    queue = deque([goal])
    while queue:
        u = queue.popleft()
        du = dist[u] + 1
        for v in grid.neighbors(u):
            if dist[v] == INF:
                dist[v] = du
                queue.append(v)
    return tuple(dist)


def as_fraction(w) -> Fraction:
    """Exact rational for a suboptimality factor given as str, int, float or Fraction.

    Floats go through their shortest repr so ``1.1`` means 11/10.
    """
    if isinstance(w, Fraction):
        return w
    if isinstance(w, float):
        return Fraction(repr(w))
    return Fraction(w)


def scaled_floor(w: Fraction, value: int) -> int:
    return (w.numerator * value) // w.denominator


class AgentConstraints:
    """The constraints of one agent, indexed for O(1) lookups during search."""

    __slots__ = ("size", "vertex", "edge", "max_len", "min_len", "goal_block", "latest")

    def __init__(self, size: int) -> None:
        self.size = size
        self.vertex: set[int] = set()
        self.edge: set[int] = set()
        self.max_len = INF
        self.min_len = 0
        self.goal_block = -1
        # latest vertex/edge constraint time
        self.latest = -1

    @classmethod
    def build(cls, constraints: Iterable, agent: int, goal: Cell, size: int) -> AgentConstraints:
        ac = cls(size)
        for c in constraints:
            if c.agent != agent:
                continue
            if isinstance(c, VertexConstraint):
                ac.vertex.add(c.t * size + c.cell)
                ac.latest = max(ac.latest, c.t)
                if c.cell == goal:
                    ac.goal_block = max(ac.goal_block, c.t)
            elif isinstance(c, EdgeConstraint):
                ac.edge.add((c.t * size + c.u) * size + c.v)
                ac.latest = max(ac.latest, c.t)
            elif isinstance(c, MaxLength):
                ac.max_len = min(ac.max_len, c.t)
            elif isinstance(c, MinLength):
                ac.min_len = max(ac.min_len, c.t)
            else:
                raise TypeError(f"unknown constraint {c!r}")
        return ac

    @property
    def earliest_goal(self) -> int:
        return max(self.min_len, self.goal_block + 1)

    def default_horizon(self, grid: GridMap) -> int:
        latest = self.latest
        if self.min_len > latest:
            latest = self.min_len
        if self.max_len != INF and self.max_len > latest:
            latest = int(self.max_len)
        return grid.num_vertices + 1 + max(latest, 0)

    def satisfied_by(self, path: Sequence[Cell]) -> bool:
        size = self.size
        T = len(path) - 1
        if T > self.max_len or T < self.min_len or T <= self.goal_block:
            return False
        for t, v in enumerate(path):
            if t * size + v in self.vertex:
                return False
            if t and (t * size + path[t - 1]) * size + v in self.edge:
                return False
        return True


class ConflictAvoidanceTable:
    """Where the other agents are: ``(cell, t)`` and ``(move, t)`` to agent
    lists, plus the cells where agents park after finishing."""

    __slots__ = ("size", "vertex", "edge", "rest", "paths", "excluded", "_goal_times")

    def __init__(self, size: int) -> None:
        self.size = size
        self.vertex: dict[int, list[int]] = {}
        # (t*size + from)*size + to -> agents moving from->to arriving at t
        self.edge: dict[int, list[int]] = {}
        # cell -> [(T, agent)], agent occupies cell for every t > T
        self.rest: dict[Cell, list[tuple[int, int]]] = {}
        self.paths: dict[int, Sequence[Cell]] = {}
        self.excluded: frozenset[int] = frozenset()
        self._goal_times: dict[Cell, list[tuple[int, int]]] = {}

    def __len__(self) -> int:
        return len(self.paths)

    @classmethod
    def build(
        cls, paths: Sequence[Sequence[Cell] | None], excluded: int | Iterable[int] | None, size: int
    ) -> ConflictAvoidanceTable:
        if excluded is None:
            excluded = ()
        elif isinstance(excluded, int):
            excluded = (excluded,)
        cat = cls(size)
        cat.excluded = frozenset(excluded)
        for a, p in enumerate(paths):
            if p is None or a in cat.excluded or len(p) == 0:
                continue
            cat.add(a, p)
        return cat

    def add(self, agent: int, path: Sequence[Cell]) -> None:
        size = self.size
        vertex, edge = self.vertex, self.edge
        self.paths[agent] = path
        prev = None
        for t, v in enumerate(path):
            key = t * size + v
            lst = vertex.get(key)
            if lst is None:
                vertex[key] = [agent]
            else:
                lst.append(agent)
            if prev is not None and prev != v:
                ekey = (key - v + prev) * size + v
                lst = edge.get(ekey)
                if lst is None:
                    edge[ekey] = [agent]
                else:
                    lst.append(agent)
            prev = v
        self.rest.setdefault(path[-1], []).append((len(path) - 1, agent))
        self._goal_times.clear()

    def agents_at(self, cell: Cell, t: int) -> list[int]:
        out = list(self.vertex.get(t * self.size + cell, ()))
        for T, a in self.rest.get(cell, ()):
            if t > T:
                out.append(a)
        return out

    def count(self, cell: Cell, t: int) -> int:
        return len(self.agents_at(cell, t))

    def agents_swapping(self, u: Cell, v: Cell, t: int) -> list[int]:
        """Agents moving ``v -> u`` arriving at ``t``, i.e. colliding with a
        move ``u -> v`` arriving at ``t``."""
        if u == v:
            return []
        return list(self.edge.get((t * self.size + v) * self.size + u, ()))

    def goal_visits_after(self, cell: Cell, t: int) -> int:
        """Occupancies of ``cell`` by other agents at timesteps ``> t``."""
        times = self._goal_times.get(cell)
        if times is None:
            times = [(tt, a) for a, p in self.paths.items() for tt, v in enumerate(p) if v == cell]
            self._goal_times[cell] = times
        return sum(1 for tt, _ in times if tt > t)

    def path_conflicts(self, agent: int, path: Sequence[Cell]) -> list[Conflict]:
        """Collisions between ``path`` (owned by ``agent``) and the table."""
        out: list[Conflict] = []
        for t, v in enumerate(path):
            for a in self.agents_at(v, t):
                out.append(vertex_conflict(agent, a, v, t))
            if t:
                for a in self.agents_swapping(path[t - 1], v, t):
                    out.append(edge_conflict(agent, a, path[t - 1], v, t))
        goal, T = path[-1], len(path) - 1
        for a, p in self.paths.items():
            for tt in range(T + 1, len(p)):
                if p[tt] == goal:
                    out.append(vertex_conflict(agent, a, goal, tt))
        return out

    def path_conflict_count(self, path: Sequence[Cell]) -> int:
        return len(self.path_conflicts(-1, path))


def build_cat(
    paths: Sequence[Sequence[Cell] | None], excluded: int | Iterable[int] | None, size: int
) -> ConflictAvoidanceTable:
    return ConflictAvoidanceTable.build(paths, excluded, size)


@dataclass
class LowLevelResult:
    lb: float
    path: Path | None
    shortest_expanded: int = 0
    focal_expanded: int = 0
    bfs_expanded: int = 0

    @property
    def cost(self) -> float:
        return INF if self.path is None else self.path.cost

    @property
    def found(self) -> bool:
        return self.path is not None


def _unpack(node) -> Path:
    cells = []
    while node is not None:
        cells.append(node[0])
        node = node[1]
    cells.reverse()
    return Path(cells)


def _setup(grid: GridMap, start: Cell, goal: Cell, cons: AgentConstraints | None, horizon):
    if cons is None:
        cons = AgentConstraints(grid.size)
    dist = distance_table(grid, goal)
    if horizon is None:
        horizon = cons.default_horizon(grid)
    max_cost = horizon if cons.max_len == INF else min(horizon, int(cons.max_len))
    return cons, dist, cons.earliest_goal, max_cost


def _h(dist, earliest, cell, t):
    h = dist[cell]
    e = earliest - t
    return e if e > h else h


def shortest_path_search(
    grid: GridMap,
    start: Cell,
    goal: Cell,
    cons: AgentConstraints | None = None,
    horizon: int | None = None,
) -> LowLevelResult:
    """A* over ``(cell, t)``. ``lb`` is the exact optimal constrained cost."""
    cons, dist, earliest, max_cost = _setup(grid, start, goal, cons, horizon)
    size = grid.size
    vcons, econs = cons.vertex, cons.edge
    result = LowLevelResult(INF, None)
    h0 = _h(dist, earliest, start, 0)
    if h0 > max_cost or start in vcons:
        return result
    # once no constraint lies ahead and the goal is acceptable, waiting never
    # helps, so (cell, t) is dominated by any earlier visit to cell
    collapse = max(cons.latest + 1, earliest)
    moves = grid._moves
    heap = [(h0, 0, 0, start, 0, (start, None))]
    closed: set[int] = set()
    seq = 0
    expanded = 0
    while heap:
        f, _, _, u, t, node = heapq.heappop(heap)
        key = (t if t < collapse else collapse) * size + u
        if key in closed:
            continue
        closed.add(key)
        expanded += 1
        if u == goal and t >= earliest:
            result.lb = t
            result.path = _unpack(node)
            break
        t2 = t + 1
        base = t2 * size
        for v in moves[u]:
            if base + v in vcons:
                continue
            if u != v and (base + u) * size + v in econs:
                continue
            h = dist[v]
            if earliest - t2 > h:
                h = earliest - t2
            f2 = t2 + h
            if f2 > max_cost:
                continue
            if ((t2 if t2 < collapse else collapse) * size + v) in closed:
                continue
            if CHECK_INVARIANTS:
                assert f2 >= f, "f decreased along an edge"
            seq += 1
            heapq.heappush(heap, (f2, -t2, -seq, v, t2, (v, node)))
    result.shortest_expanded = expanded
    return result


class _Node:
    __slots__ = ("cell", "t", "f", "d", "parent", "alive", "open", "terminal")

    def __init__(self, cell, t, f, d, parent, terminal=False):
        self.cell = cell
        self.t = t
        self.f = f
        self.d = d
        self.parent = parent
        self.alive = True
        self.open = True
        self.terminal = terminal

    def path(self) -> Path:
        cells = []
        node = self
        while node is not None:
            cells.append(node.cell)
            node = node.parent
        cells.reverse()
        return Path(cells)


def _cat_views(cat: ConflictAvoidanceTable | None):
    if cat is None or len(cat) == 0:
        return None, None, None
    return cat.vertex, cat.edge, cat.rest


def _step_conflicts(cv, ce, cr, size, u, v, t2) -> int:
    """Conflicts picked up by moving ``u -> v`` arriving at ``t2``."""
    n = 0
    lst = cv.get(t2 * size + v)
    if lst:
        n = len(lst)
    r = cr.get(v)
    if r:
        for T, _ in r:
            if t2 > T:
                n += 1
    if u != v:
        lst = ce.get((t2 * size + v) * size + u)
        if lst:
            n += len(lst)
    return n


def focal_search_low(
    grid: GridMap,
    start: Cell,
    goal: Cell,
    cons: AgentConstraints | None,
    w,
    cat: ConflictAvoidanceTable | None = None,
    horizon: int | None = None,
    lb_floor: int = 0,
) -> LowLevelResult:
    """Focal search. FOCAL holds open nodes with ``f <= w * f_front`` where
    ``f_front`` is the minimum ``f`` in OPEN.

    The returned ``lb`` is ``f_front`` when the goal is popped, or
    ``lb_floor`` if that is larger; callers pass the agent's bound from a
    less constrained node, which stays valid.
    """
    w = as_fraction(w)
    if w < 1:
        raise ValueError("suboptimality factor must be >= 1")
    cons, dist, earliest, max_cost = _setup(grid, start, goal, cons, horizon)
    size = grid.size
    vcons, econs = cons.vertex, cons.edge
    cv, ce, cr = _cat_views(cat)
    result = LowLevelResult(INF, None)
    h0 = _h(dist, earliest, start, 0)
    if h0 > max_cost or start in vcons:
        return result

    moves = grid._moves
    open_count = [0] * (max_cost + 2)
    buckets: dict[int, list[_Node]] = {}
    focal: list = []
    best: dict[int, _Node] = {}
    seq = 0
    limit = -1

    d0 = _step_conflicts(cv, ce, cr, size, start, start, 0) if cv is not None else 0
    # the wait-in-place entry above double counts nothing: edge lookups skip u == v

    def push(node: _Node) -> None:
        nonlocal seq
        seq += 1
        open_count[node.f] += 1
        if node.f <= limit:
            heapq.heappush(focal, (node.d, node.f, -seq, node))
        else:
            buckets.setdefault(node.f, []).append((seq, node))

    def offer(key: int, node: _Node) -> None:
        old = best.get(key)
        if old is not None:
            if old.d <= node.d:
                return
            if old.open:
                old.alive = False
                open_count[old.f] -= 1
        best[key] = node
        push(node)

    def offer_terminal(node: _Node) -> None:
        d = node.d + (cat.goal_visits_after(goal, node.t) if cv is not None else 0)
        term = _Node(node.cell, node.t, node.f, d, node.parent, terminal=True)
        offer(-1 - (node.t * size + node.cell), term)

    root = _Node(start, 0, h0, d0, None)
    offer(start, root)
    if start == goal and earliest == 0:
        offer_terminal(root)

    f_min = h0
    expanded = 0
    while True:
        while f_min <= max_cost and open_count[f_min] == 0:
            f_min += 1
        if f_min > max_cost:
            break
        new_limit = min(max_cost, scaled_floor(w, f_min))
        if new_limit > limit:
            for f in range(limit + 1, new_limit + 1):
                for s, node in buckets.pop(f, ()):
                    if node.alive:
                        heapq.heappush(focal, (node.d, node.f, -s, node))
            limit = new_limit
        node = None
        while focal:
            cand = heapq.heappop(focal)[3]
            if cand.alive:
                node = cand
                break
        if node is None:  # pragma: no cover - every f_min node sits in FOCAL
            break
        node.alive = False
        node.open = False
        open_count[node.f] -= 1
        if node.terminal:
            result.lb = f_min if f_min > lb_floor else lb_floor
            result.path = node.path()
            break
        expanded += 1
        u, t, d = node.cell, node.t, node.d
        t2 = t + 1
        base = t2 * size
        for v in moves[u]:
            key = base + v
            if key in vcons:
                continue
            if u != v and (base + u) * size + v in econs:
                continue
            h = dist[v]
            if earliest - t2 > h:
                h = earliest - t2
            f2 = t2 + h
            if f2 > max_cost:
                continue
            d2 = d + _step_conflicts(cv, ce, cr, size, u, v, t2) if cv is not None else d
            if CHECK_INVARIANTS:
                assert f2 >= node.f and d2 >= d, "f or d decreased along an edge"
            child = _Node(v, t2, f2, d2, node)
            offer(key, child)
            if v == goal and t2 >= earliest:
                offer_terminal(child)
    result.focal_expanded = expanded
    return result


def bounded_best_first(
    grid: GridMap,
    start: Cell,
    goal: Cell,
    cons: AgentConstraints | None,
    w,
    lb: float,
    cat: ConflictAvoidanceTable | None = None,
    horizon: int | None = None,
) -> LowLevelResult:
    """Best-first search on conflict count, discarding nodes with
    ``f > w * lb``. ``lb`` must be the exact constrained optimum.

    The first goal popped has the fewest conflicts among all admissible
    paths of cost ``<= floor(w * lb)``, and the lowest cost among those.
    """
    w = as_fraction(w)
    if w < 1:
        raise ValueError("suboptimality factor must be >= 1")
    result = LowLevelResult(lb, None)
    if lb == INF:
        return result
    cons, dist, earliest, max_cost = _setup(grid, start, goal, cons, horizon)
    bound = min(max_cost, scaled_floor(w, int(lb)))
    size = grid.size
    vcons, econs = cons.vertex, cons.edge
    cv, ce, cr = _cat_views(cat)
    h0 = _h(dist, earliest, start, 0)
    if h0 > bound or start in vcons:
        return result

    moves = grid._moves
    heap: list = []
    best_d: dict[int, int] = {}
    closed: set[int] = set()
    seq = 0

    def push(key, d, f, cell, t, parent, terminal):
        nonlocal seq
        old = best_d.get(key)
        if old is not None and old <= d:
            return
        best_d[key] = d
        seq += 1
        heapq.heappush(heap, (d, f, -seq, key, cell, t, parent, terminal))

    def push_terminal(d, f, cell, t, parent):
        if cv is not None:
            d += cat.goal_visits_after(goal, t)
        push(-1 - (t * size + cell), d, f, cell, t, parent, True)

    d0 = _step_conflicts(cv, ce, cr, size, start, start, 0) if cv is not None else 0
    push(start, d0, h0, start, 0, None, False)
    if start == goal and earliest == 0:
        push_terminal(d0, h0, start, 0, None)

    expanded = 0
    while heap:
        d, f, _, key, u, t, parent, terminal = heapq.heappop(heap)
        if key in closed:
            continue
        closed.add(key)
        node = (u, parent)
        if terminal:
            result.path = _unpack(node)
            break
        expanded += 1
        t2 = t + 1
        base = t2 * size
        for v in moves[u]:
            key2 = base + v
            if key2 in vcons or key2 in closed:
                continue
            if u != v and (base + u) * size + v in econs:
                continue
            h = dist[v]
            if earliest - t2 > h:
                h = earliest - t2
            f2 = t2 + h
            if f2 > bound:
                continue
            d2 = d + _step_conflicts(cv, ce, cr, size, u, v, t2) if cv is not None else d
            if CHECK_INVARIANTS:
                assert f2 >= f and d2 >= d, "f or d decreased along an edge"
            push(key2, d2, f2, v, t2, node, False)
            if v == goal and t2 >= earliest:
                push_terminal(d2, f2, v, t2, node)
    result.bfs_expanded = expanded
    return result


def low_level_search(
    mode: str,
    grid: GridMap,
    start: Cell,
    goal: Cell,
    cons: AgentConstraints | None = None,
    w=1,
    cat: ConflictAvoidanceTable | None = None,
    horizon: int | None = None,
    lb_floor: int = 0,
) -> LowLevelResult:
    """Dispatch on ``mode``: ``shortest`` (CBS/BCBS), ``focal`` (ECBS) or
    ``double`` (shortest-path phase fixing the bound, then bounded
    best-first on conflicts)."""
    if mode == SHORTEST:
        return shortest_path_search(grid, start, goal, cons, horizon)
    if mode == FOCAL:
        return focal_search_low(grid, start, goal, cons, w, cat, horizon, lb_floor)
    if mode == DOUBLE:
        first = shortest_path_search(grid, start, goal, cons, horizon)
        if first.lb == INF:
            return first
        second = bounded_best_first(grid, start, goal, cons, w, first.lb, cat, horizon)
        second.shortest_expanded = first.shortest_expanded
        if second.path is None:  # pragma: no cover - the optimal path always qualifies
            second.path = first.path
        return second
    raise ValueError(f"unknown low-level mode {mode!r}")
