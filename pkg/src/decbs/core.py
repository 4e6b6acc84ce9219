"""Domain types shared by the solvers: grid graph, instances, paths,
constraints, conflicts and run statistics, plus solution validation.

Cells are integer ids ``row * width + col``. Use :meth:`GridMap.index` and
:meth:`GridMap.coord` to convert. Timesteps start at 0 and every action
(move or wait) takes one step. An agent whose path ends at ``T`` keeps
occupying its last cell for every ``t > T``.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field, fields
from typing import Iterable, NamedTuple, Sequence

Cell = int

INF = math.inf


class StructuralError(ValueError):
    """A path is not a legal start-to-goal walk on the map."""


class InstanceError(ValueError):
    """An instance breaks the start/goal distinctness or passability rules."""


@dataclass(frozen=True, eq=False)
class GridMap:
    """4-connected grid. ``passable`` is row-major, one flag per cell."""

    width: int
    height: int
    passable: tuple[bool, ...]
    _moves: tuple[tuple[int, ...], ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError("grid dimensions must be positive")
        if len(self.passable) != self.width * self.height:
            raise ValueError(
                f"expected {self.width * self.height} cells, got {len(self.passable)}"
            )
        object.__setattr__(self, "passable", tuple(bool(p) for p in self.passable))
        moves = []
        for cell in range(self.width * self.height):
            if not self.passable[cell]:
                moves.append(())
                continue
            r, c = divmod(cell, self.width)
            nbrs = [cell]
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < self.height and 0 <= cc < self.width:
                    other = rr * self.width + cc
                    if self.passable[other]:
                        nbrs.append(other)
            moves.append(tuple(nbrs))
        object.__setattr__(self, "_moves", tuple(moves))

    @classmethod
    def from_rows(cls, rows: Sequence[str]) -> GridMap:
        """Build from strings where ``.`` is free and anything else blocked."""
        height = len(rows)
        width = len(rows[0]) if rows else 0
        if any(len(r) != width for r in rows):
            raise ValueError("ragged rows")
        return cls(width, height, tuple(ch == "." for row in rows for ch in row))

    @property
    def size(self) -> int:
        return self.width * self.height

    @property
    def num_vertices(self) -> int:
        return sum(self.passable)

    def index(self, row: int, col: int) -> Cell:
        if not (0 <= row < self.height and 0 <= col < self.width):
            raise IndexError(f"({row}, {col}) outside {self.height}x{self.width} grid")
        return row * self.width + col

    def coord(self, cell: Cell) -> tuple[int, int]:
        return divmod(cell, self.width)

    def is_passable(self, cell: Cell) -> bool:
        return 0 <= cell < self.size and self.passable[cell]

    def moves(self, cell: Cell) -> tuple[int, ...]:
        """Successor cells including the wait action (``cell`` itself, first)."""
        return self._moves[cell]

    def neighbors(self, cell: Cell) -> tuple[int, ...]:
        return self._moves[cell][1:]

    def is_adjacent_or_same(self, u: Cell, v: Cell) -> bool:
        return v in self._moves[u]

    def edges(self) -> list[tuple[Cell, Cell]]:
        """Undirected move edges (u < v), excluding the wait self-loops."""
        return [(u, v) for u in range(self.size) for v in self.neighbors(u) if u < v]


@dataclass(frozen=True)
class MapfInstance:
    grid: GridMap
    starts: tuple[Cell, ...]
    goals: tuple[Cell, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "starts", tuple(self.starts))
        object.__setattr__(self, "goals", tuple(self.goals))
        if len(self.starts) != len(self.goals):
            raise InstanceError("starts and goals differ in length")
        if len(set(self.starts)) != len(self.starts):
            raise InstanceError("duplicate start locations")
        if len(set(self.goals)) != len(self.goals):
            raise InstanceError("duplicate goal locations")
        for i, (s, g) in enumerate(zip(self.starts, self.goals)):
            if not self.grid.is_passable(s) or not self.grid.is_passable(g):
                raise InstanceError(f"agent {i}: start or goal is blocked")

    @property
    def num_agents(self) -> int:
        return len(self.starts)


class Path(tuple):
    """Cells ``v_0..v_T`` visited at timesteps ``0..T``; cost is ``T``."""

    __slots__ = ()

    def __new__(cls, vertices: Iterable[Cell] = ()) -> Path:
        return super().__new__(cls, vertices)

    @property
    def cost(self) -> int:
        return len(self) - 1

    def at(self, t: int) -> Cell:
        return self[t] if t < len(self) else self[-1]

    def __repr__(self) -> str:
        return f"Path({list(self)})"


Solution = Sequence[Path]


def flowtime(sol: Solution) -> int:
    return sum(len(p) - 1 for p in sol)


# --- constraints -----------------------------------------------------------


class VertexConstraint(NamedTuple):
    agent: int
    cell: Cell
    t: int


class EdgeConstraint(NamedTuple):
    """Agent may not be at ``u`` at ``t - 1`` and at ``v`` at ``t``."""

    agent: int
    u: Cell
    v: Cell
    t: int


class MaxLength(NamedTuple):
    agent: int
    t: int


class MinLength(NamedTuple):
    agent: int
    t: int


Constraint = VertexConstraint | EdgeConstraint | MaxLength | MinLength


# --- conflicts -------------------------------------------------------------

VERTEX = "vertex"
EDGE = "edge"
TARGET = "target"
_KIND_RANK = {VERTEX: 0, EDGE: 1, TARGET: 0}


class Conflict(NamedTuple):
    """A collision ``(a1, a2, t)``.

    vertex: both agents at ``loc[0]`` at ``t``; ``a1 < a2``.
    edge: ``a1`` moves ``loc[0] -> loc[1]`` arriving at ``t`` while ``a2``
    moves the opposite way; ``a1 < a2``.
    target: ``a1`` has finished (``t >= T^a1``) and rests at its goal
    ``loc[0]`` where ``a2`` shows up at ``t``.
    """

    kind: str
    a1: int
    a2: int
    t: int
    loc: tuple[Cell, ...]

    @property
    def agents(self) -> tuple[int, int]:
        return (self.a1, self.a2)

    def sort_key(self) -> tuple[int, int, int, int]:
        return (self.t, _KIND_RANK[self.kind], min(self.a1, self.a2), max(self.a1, self.a2))


def vertex_conflict(i: int, j: int, cell: Cell, t: int) -> Conflict:
    if i > j:
        i, j = j, i
    return Conflict(VERTEX, i, j, t, (cell,))


def edge_conflict(i: int, j: int, u: Cell, v: Cell, t: int) -> Conflict:
    """``i`` moves ``u -> v`` and ``j`` moves ``v -> u``, arriving at ``t``."""
    if i > j:
        i, j, u, v = j, i, v, u
    return Conflict(EDGE, i, j, t, (u, v))


def target_conflict(resting: int, other: int, cell: Cell, t: int) -> Conflict:
    return Conflict(TARGET, resting, other, t, (cell,))


# --- statistics ------------------------------------------------------------


@dataclass
class RunStats:
    ct_expanded: int = 0
    ct_generated: int = 0
    ll_shortest_expanded: int = 0
    ll_focal_expanded: int = 0
    ll_bfs_expanded: int = 0
    runtime: float = 0.0
    solved: bool = False
    solution_cost: float = INF
    root_lb: float = INF

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


# --- validation ------------------------------------------------------------


def check_structure(instance: MapfInstance, sol: Solution) -> None:
    """Raise :class:`StructuralError` unless every path is a legal walk
    from its agent's start to its goal."""
    grid = instance.grid
    if len(sol) != instance.num_agents:
        raise StructuralError(
            f"solution has {len(sol)} paths for {instance.num_agents} agents"
        )
    for i, path in enumerate(sol):
        if len(path) == 0:
            raise StructuralError(f"agent {i}: empty path")
        if path[0] != instance.starts[i]:
            raise StructuralError(f"agent {i}: path does not begin at its start")
        if path[-1] != instance.goals[i]:
            raise StructuralError(f"agent {i}: path does not end at its goal")
        for t, cell in enumerate(path):
            if not grid.is_passable(cell):
                raise StructuralError(f"agent {i}: blocked cell {cell} at t={t}")
            if t and not grid.is_adjacent_or_same(path[t - 1], cell):
                raise StructuralError(f"agent {i}: illegal move at t={t}")


def detect_collisions(sol: Solution) -> list[Conflict]:
    """Every vertex and edge collision, rest-at-goal occupancy included.

    A vertex collision among ``k`` agents at one cell-time yields one
    conflict per agent pair.
    """
    conflicts: list[Conflict] = []
    if not sol:
        return conflicts
    horizon = max(len(p) for p in sol)
    n = len(sol)
    for t in range(horizon):
        here: dict[Cell, list[int]] = defaultdict(list)
        for i in range(n):
            p = sol[i]
            here[p[t] if t < len(p) else p[-1]].append(i)
        for cell, agents in here.items():
            if len(agents) > 1:
                for a in range(len(agents)):
                    for b in range(a + 1, len(agents)):
                        conflicts.append(Conflict(VERTEX, agents[a], agents[b], t, (cell,)))
        if t == 0:
            continue
        moves: dict[tuple[Cell, Cell], list[int]] = defaultdict(list)
        for i in range(n):
            p = sol[i]
            if t < len(p) and p[t - 1] != p[t]:
                moves[(p[t - 1], p[t])].append(i)
        for (u, v), movers in list(moves.items()):
            for j in moves.get((v, u), ()):
                for i in movers:
                    if i < j:
                        conflicts.append(Conflict(EDGE, i, j, t, (u, v)))
    return conflicts


def validate_solution(instance: MapfInstance, sol: Solution) -> list[Conflict]:
    """Return all collisions in ``sol`` (empty when valid).

    Raises :class:`StructuralError` when a path starts or ends in the wrong
    place, crosses a blocked cell or jumps between non-adjacent cells.
    """
    check_structure(instance, sol)
    return sorted(detect_collisions(sol), key=Conflict.sort_key)


def get_first_collision(sol: Solution) -> Conflict | None:
    conflicts = detect_collisions(sol)
    return min(conflicts, key=Conflict.sort_key) if conflicts else None
