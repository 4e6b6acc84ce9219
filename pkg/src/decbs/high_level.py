"""Constraint-tree search: CBS, BCBS(w, 1), ECBS and DECBS as configurations
of one loop, with optional bypassing (BC) and target reasoning (TR)."""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .core import (
    EDGE,
    INF,
    TARGET,
    VERTEX,
    Conflict,
    EdgeConstraint,
    MapfInstance,
    MaxLength,
    MinLength,
    Path,
    RunStats,
    Solution,
    VertexConstraint,
    detect_collisions,
    target_conflict,
)
from .low_level import (
    DOUBLE,
    FOCAL,
    LOW_MODES,
    SHORTEST,
    AgentConstraints,
    as_fraction,
    build_cat,
    low_level_search,
    scaled_floor,
)

BEST_FIRST = "best"
HIGH_MODES = (BEST_FIRST, FOCAL)

SOLVERS = ("cbs", "bcbs", "ecbs", "decbs")

# Tests flip this on to assert the OPEN front lower bound never decreases.
CHECK_INVARIANTS = False


@dataclass(frozen=True)
class SolverConfig:
    w_high: Fraction = Fraction(1)
    w_low: Fraction = Fraction(1)
    high_mode: str = BEST_FIRST
    low_mode: str = SHORTEST
    enable_bc: bool = False
    enable_tr: bool = False
    horizon: int | None = None
    node_limit: int | None = None
    time_limit: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "w_high", as_fraction(self.w_high))
        object.__setattr__(self, "w_low", as_fraction(self.w_low))
        if self.w_high < 1 or self.w_low < 1:
            raise ValueError("suboptimality factors must be >= 1")
        if self.high_mode not in HIGH_MODES:
            raise ValueError(f"high_mode must be one of {HIGH_MODES}")
        if self.low_mode not in LOW_MODES:
            raise ValueError(f"low_mode must be one of {LOW_MODES}")
        if self.time_limit is not None and self.time_limit <= 0:
            raise ValueError("time_limit must be positive")

    @classmethod
    def for_solver(cls, name: str, w=1, **kw) -> SolverConfig:
        """``cbs`` ignores ``w``; ``bcbs`` is BCBS(w, 1)."""
        w = as_fraction(w)
        if name == "cbs":
            return cls(Fraction(1), Fraction(1), BEST_FIRST, SHORTEST, **kw)
        if name == "bcbs":
            return cls(w, Fraction(1), FOCAL, SHORTEST, **kw)
        if name == "ecbs":
            return cls(w, w, FOCAL, FOCAL, **kw)
        if name == "decbs":
            return cls(w, w, FOCAL, DOUBLE, **kw)
        raise ValueError(f"unknown solver {name!r}; expected one of {SOLVERS}")


@dataclass(eq=False)
class CTNode:
    constraints: dict[int, tuple]
    paths: list[Path]
    lower_bounds: list[int]
    cost: int
    lb_cost: int
    conflicts: list[Conflict]
    gen: int
    in_open: bool = field(default=False, repr=False)

    @property
    def d(self) -> int:
        return len(self.conflicts)

    def all_constraints(self) -> list:
        return [c for cs in self.constraints.values() for c in cs]


def compute_d(node_or_paths: CTNode | Solution) -> int:
    """Number of pairwise vertex and edge collisions in a node's solution."""
    paths = node_or_paths.paths if isinstance(node_or_paths, CTNode) else node_or_paths
    return len(detect_collisions(paths))


def _target_from(conflicts: Sequence[Conflict], paths: Sequence[Path]) -> Conflict | None:
    best, best_key = None, None
    for c in conflicts:
        if c.kind != VERTEX:
            continue
        key = (c.t, c.a1, c.a2)
        if best_key is not None and key >= best_key:
            continue
        cell = c.loc[0]
        for rest, other in ((c.a1, c.a2), (c.a2, c.a1)):
            p = paths[rest]
            if p[-1] == cell and c.t >= len(p) - 1:
                best, best_key = target_conflict(rest, other, cell, c.t), key
                break
    return best


def detect_target_conflict(sol: Solution) -> Conflict | None:
    """Earliest collision in which one agent has already reached its goal and
    another agent steps onto it."""
    return _target_from(detect_collisions(sol), sol)


class Deadline:
    def __init__(self, seconds: float | None) -> None:
        self.start = time.perf_counter()
        self.seconds = seconds

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self.start

    @property
    def expired(self) -> bool:
        return self.seconds is not None and self.elapsed > self.seconds


class Solver:
    def __init__(self, instance: MapfInstance, config: SolverConfig) -> None:
        self.instance = instance
        self.config = config
        self.grid = instance.grid
        self.stats = RunStats()
        self._gen = 0
        self._limit = -1
        self._open: list = []
        self._pending: list = []
        self._focal: list = []
        # the collision-free node a successful search ends on
        self.goal_node: CTNode | None = None

    # -- low level ---------------------------------------------------------

    def _replan(self, paths: list, constraints: tuple, k: int, lb_floor: int):
        inst, cfg = self.instance, self.config
        cons = AgentConstraints.build(constraints, k, inst.goals[k], self.grid.size)
        cat = build_cat(paths, k, self.grid.size)
        res = low_level_search(
            cfg.low_mode,
            self.grid,
            inst.starts[k],
            inst.goals[k],
            cons,
            cfg.w_low,
            cat,
            cfg.horizon,
            lb_floor if cfg.low_mode == FOCAL else 0,
        )
        st = self.stats
        st.ll_shortest_expanded += res.shortest_expanded
        st.ll_focal_expanded += res.focal_expanded
        st.ll_bfs_expanded += res.bfs_expanded
        return res, cat

    def _next_gen(self) -> int:
        self._gen += 1
        return self._gen

    def build_root(self) -> CTNode | None:
        n = self.instance.num_agents
        paths: list = [None] * n
        lbs = [0] * n
        for k in range(n):
            res, _ = self._replan(paths, (), k, 0)
            if not res.found:
                return None
            paths[k] = res.path
            lbs[k] = int(res.lb)
        return CTNode(
            constraints={},
            paths=paths,
            lower_bounds=lbs,
            cost=sum(p.cost for p in paths),
            lb_cost=sum(lbs),
            conflicts=detect_collisions(paths),
            gen=self._next_gen(),
        )

    def make_child(self, parent: CTNode, added: Sequence, replan: Sequence[int]) -> CTNode | None:
        constraints = dict(parent.constraints)
        for c in added:
            constraints[c.agent] = constraints.get(c.agent, ()) + (c,)
        paths = list(parent.paths)
        lbs = list(parent.lower_bounds)
        cat = None
        for k in replan:
            res, cat = self._replan(paths, constraints.get(k, ()), k, lbs[k])
            if not res.found:
                return None
            paths[k] = res.path
            lbs[k] = int(res.lb)
        if len(replan) == 1:
            k = replan[0]
            conflicts = [c for c in parent.conflicts if c.a1 != k and c.a2 != k]
            conflicts.extend(cat.path_conflicts(k, paths[k]))
        else:
            conflicts = detect_collisions(paths)
        return CTNode(
            constraints=constraints,
            paths=paths,
            lower_bounds=lbs,
            cost=sum(p.cost for p in paths),
            lb_cost=sum(lbs),
            conflicts=conflicts,
            gen=self._next_gen(),
        )

    # -- branching ---------------------------------------------------------

    def choose_conflict(self, node: CTNode) -> Conflict:
        """The first collision. With TR on, a vertex collision on a goal the
        resting agent already reached is split as a target conflict instead."""
        first = min(node.conflicts, key=Conflict.sort_key)
        if self.config.enable_tr and first.kind == VERTEX:
            tc = _target_from((first,), node.paths)
            if tc is not None:
                return tc
        return first

    def expand_node(self, node: CTNode, conflict: Conflict) -> list[CTNode]:
        """Children for ``conflict``; a child whose agent has no path under
        the new constraints is dropped."""
        if conflict.kind == TARGET:
            return self.split_target_conflict(node, conflict)
        children = []
        for k in conflict.agents:
            if conflict.kind == VERTEX:
                added = VertexConstraint(k, conflict.loc[0], conflict.t)
            elif conflict.kind == EDGE:
                u, v = conflict.loc
                if k == conflict.a2:
                    u, v = v, u
                added = EdgeConstraint(k, u, v, conflict.t)
            else:  # pragma: no cover
                raise ValueError(conflict.kind)
            child = self.make_child(node, (added,), (k,))
            if child is not None:
                children.append(child)
        return children

    def split_target_conflict(self, node: CTNode, conflict: Conflict) -> list[CTNode]:
        """Either agent ``i`` is still travelling at ``t`` (length >= t+1), or
        it is done by ``t`` and ``j`` stays off its goal at ``t``."""
        i, j, t = conflict.a1, conflict.a2, conflict.t
        goal = conflict.loc[0]
        children = []
        a = self.make_child(node, (MinLength(i, t + 1),), (i,))
        if a is not None:
            children.append(a)
        b = self.make_child(node, (MaxLength(i, t), VertexConstraint(j, goal, t)), (i, j))
        if b is not None:
            children.append(b)
        return children

    def try_bypass(self, node: CTNode, children: Sequence[CTNode]) -> CTNode | None:
        """Adopt a child's paths into ``node`` when that lowers the collision
        count and the cost stays within ``w_high`` of ``node``'s bound.

        Each changed path must also stay within ``w_low`` of that agent's
        bound in ``node``; otherwise descendants can end up with
        ``c > w * c_L`` and never become eligible for FOCAL.
        """
        w, w_low = self.config.w_high, self.config.w_low
        best = None
        for q in children:
            if q.d >= node.d or q.cost > scaled_floor(w, node.lb_cost):
                continue
            if any(
                q.paths[k] is not node.paths[k]
                and q.paths[k].cost > scaled_floor(w_low, node.lower_bounds[k])
                for k in range(len(q.paths))
            ):
                continue
            if best is None or (q.d, q.cost) < (best.d, best.cost):
                best = q
        if best is None:
            return None
        return CTNode(
            constraints=node.constraints,
            paths=best.paths,
            lower_bounds=node.lower_bounds,
            cost=best.cost,
            lb_cost=node.lb_cost,
            conflicts=best.conflicts,
            gen=self._next_gen(),
        )

    # -- OPEN / FOCAL --------------------------------------------------------

    def _push(self, node: CTNode) -> None:
        node.in_open = True
        self.stats.ct_generated += 1
        heapq.heappush(self._open, (node.lb_cost, node.cost, node.gen, node))
        if self.config.high_mode == FOCAL:
            if node.cost <= self._limit:
                heapq.heappush(self._focal, (node.d, node.cost, node.gen, node))
            else:
                heapq.heappush(self._pending, (node.cost, node.gen, node))

    def _front(self) -> CTNode | None:
        heap = self._open
        while heap and not heap[0][3].in_open:
            heapq.heappop(heap)
        return heap[0][3] if heap else None

    def _select(self, front: CTNode) -> CTNode:
        if self.config.high_mode == BEST_FIRST:
            return heapq.heappop(self._open)[3]
        limit = scaled_floor(self.config.w_high, front.lb_cost)
        if limit > self._limit:
            self._limit = limit
            pending, focal = self._pending, self._focal
            while pending and pending[0][0] <= limit:
                _, _, node = heapq.heappop(pending)
                if node.in_open:
                    heapq.heappush(focal, (node.d, node.cost, node.gen, node))
        while self._focal:
            node = heapq.heappop(self._focal)[3]
            if node.in_open:
                return node
        raise RuntimeError("OPEN front is not FOCAL-eligible (c > w * c_L)")

    def solve(self) -> Solution | None:
        cfg, st = self.config, self.stats
        deadline = Deadline(cfg.time_limit)
        try:
            root = self.build_root()
            if root is None:
                return None
            st.root_lb = root.lb_cost
            self._push(root)
            last_front = -1
            while True:
                if deadline.expired:
                    return None
                if cfg.node_limit is not None and st.ct_expanded >= cfg.node_limit:
                    return None
                front = self._front()
                if front is None:
                    return None
                if CHECK_INVARIANTS:
                    assert front.lb_cost >= last_front, "OPEN front lower bound decreased"
                    last_front = front.lb_cost
                node = self._select(front)
                node.in_open = False
                st.ct_expanded += 1
                if not node.conflicts:
                    self.goal_node = node
                    st.solved = True
                    st.solution_cost = node.cost
                    return node.paths
                conflict = self.choose_conflict(node)
                children = self.expand_node(node, conflict)
                if cfg.enable_bc:
                    adopted = self.try_bypass(node, children)
                    if adopted is not None:
                        self._push(adopted)
                        continue
                for child in children:
                    self._push(child)
        finally:
            st.runtime = deadline.elapsed


def solve(instance: MapfInstance, config: SolverConfig) -> tuple[Solution | None, RunStats]:
    solver = Solver(instance, config)
    sol = solver.solve()
    return sol, solver.stats
