from collections import Counter

import pytest
from hypothesis import given, settings

from decbs.core import (
    EDGE,
    VERTEX,
    GridMap,
    InstanceError,
    MapfInstance,
    Path,
    RunStats,
    StructuralError,
    detect_collisions,
    edge_conflict,
    flowtime,
    get_first_collision,
    validate_solution,
    vertex_conflict,
)
from decbs.oracle import joint_state_astar, naive_collisions
from strategies import random_grid, rng_from, seeds

OPEN3 = GridMap.from_rows(["...", "...", "..."])


def cell(r, c, grid=OPEN3):
    return grid.index(r, c)


# --- GridMap / MapfInstance / Path ------------------------------------------------


def test_grid_cell_count_must_match():
    with pytest.raises(ValueError):
        GridMap(2, 2, (True, True, True))


def test_grid_ring_has_eight_vertices_and_edges():
    # centre blocked: the 8 outer cells form a cycle, so 8 undirected edges
    grid = GridMap.from_rows(["...", ".@.", "..."])
    assert grid.num_vertices == 8
    assert len(grid.edges()) == 8
    assert grid.moves(0)[0] == 0, "wait is the first move"
    assert all(u in grid.moves(u) for u in range(grid.size) if grid.passable[u])


def test_edges_connect_only_four_neighbours():
    grid = GridMap.from_rows(["..", ".."])
    assert sorted(grid.edges()) == [(0, 1), (0, 2), (1, 3), (2, 3)]


@pytest.mark.parametrize(
    "starts,goals",
    [((0, 0), (1, 2)), ((0, 1), (2, 2)), ((0, 4), (1, 2))],
)
def test_instance_rejects_duplicates_and_blocked(starts, goals):
    grid = GridMap.from_rows(["...", ".@."])
    with pytest.raises(InstanceError):
        MapfInstance(grid, starts, goals)


def test_path_cost_and_rest_occupancy():
    p = Path([3, 4, 5])
    assert p.cost == 2
    assert p.at(1) == 4
    assert p.at(10) == 5


def test_flowtime_examples():
    assert flowtime([Path([0])]) == 0
    assert flowtime([Path([0, 1, 2, 3]), Path([5, 4, 3, 6, 7])]) == 7


def test_flowtime_four_cycle_rotation_matches_oracle():
    grid = GridMap.from_rows(["..", ".."])
    inst = MapfInstance(grid, (0, 3), (3, 0))
    sol = [Path([0, 1, 3]), Path([3, 2, 0])]
    assert validate_solution(inst, sol) == []
    assert flowtime(sol) == 4
    assert joint_state_astar(inst)[0] == 4


def test_run_stats_defaults():
    st = RunStats()
    assert not st.solved and st.solution_cost == float("inf")
    assert set(st.as_dict()) >= {"ct_expanded", "ll_bfs_expanded", "root_lb"}


# --- validation ---------------------------------------------------------------------


def test_disjoint_paths_are_valid():
    inst = MapfInstance(OPEN3, (cell(0, 0), cell(2, 0)), (cell(0, 2), cell(2, 2)))
    sol = [Path([cell(0, 0), cell(0, 1), cell(0, 2)]), Path([cell(2, 0), cell(2, 1), cell(2, 2)])]
    assert validate_solution(inst, sol) == []


def test_swap_is_one_edge_conflict_at_arrival():
    inst = MapfInstance(OPEN3, (cell(0, 0), cell(0, 1)), (cell(0, 1), cell(0, 0)))
    sol = [Path([cell(0, 0), cell(0, 1)]), Path([cell(0, 1), cell(0, 0)])]
    conflicts = validate_solution(inst, sol)
    assert conflicts == [edge_conflict(0, 1, cell(0, 0), cell(0, 1), 1)]
    assert conflicts[0].kind == EDGE and conflicts[0].t == 1


def test_collision_with_resting_agent():
    inst = MapfInstance(OPEN3, (cell(0, 0), cell(1, 0)), (cell(0, 0), cell(2, 0)))
    # agent 1 walks through agent 0's goal after agent 0 has finished at t=0
    sol = [Path([cell(0, 0)]), Path([cell(1, 0), cell(0, 0), cell(1, 0), cell(2, 0)])]
    conflicts = validate_solution(inst, sol)
    assert conflicts == [vertex_conflict(0, 1, cell(0, 0), 1)]


@pytest.mark.parametrize(
    "paths",
    [
        [[1, 2], [3, 4]],  # wrong start
        [[0, 1], [3, 5]],  # wrong goal
        [[0, 2], [3, 4]],  # jump
        [[0, 1], [3, 4, 4, 7, 4]],  # passes through a blocked cell
    ],
)
def test_structural_errors(paths):
    grid = GridMap.from_rows(["...", "..@", ".@@"])
    # cell 4 is the centre; 5 and 7 are blocked
    inst = MapfInstance(grid, (0, 3), (1, 4))
    with pytest.raises(StructuralError):
        validate_solution(inst, [Path(p) for p in paths])


def test_wrong_path_count_is_structural():
    inst = MapfInstance(OPEN3, (0, 1), (2, 3))
    with pytest.raises(StructuralError):
        validate_solution(inst, [Path([0, 1, 2])])


def test_first_collision_prefers_earliest():
    # vertex collision at t=2 on (0,2), then a swap between (0,2) and (1,2) at t=4
    a = Path([cell(0, 0), cell(0, 1), cell(0, 2), cell(0, 2), cell(1, 2)])
    b = Path([cell(2, 2), cell(1, 2), cell(0, 2), cell(1, 2), cell(0, 2)])
    sol = [a, b]
    assert {(c.kind, c.t) for c in detect_collisions(sol)} == {(VERTEX, 2), (EDGE, 4)}
    assert get_first_collision(sol) == vertex_conflict(0, 1, cell(0, 2), 2)


def test_first_collision_tie_break_by_pair():
    # agents 0, 1 and 2 all reach the centre at t=3: (0,1) comes first
    c = cell(1, 1)
    sol = [
        Path([cell(0, 0), cell(0, 0), cell(0, 1), c]),
        Path([cell(2, 2), cell(2, 2), cell(2, 1), c]),
        Path([cell(0, 2), cell(0, 2), cell(1, 2), c]),
    ]
    assert get_first_collision(sol) == vertex_conflict(0, 1, c, 3)


def test_vertex_before_edge_at_same_timestep():
    # (1,2) swap at t=1 and (0,3) share a cell at t=1
    sol = [Path([4, 5]), Path([1, 2]), Path([2, 1]), Path([6, 5])]
    first = get_first_collision(sol)
    assert first.kind == VERTEX and first.t == 1 and first.agents == (0, 3)


def test_collision_free_has_no_first_collision():
    assert get_first_collision([Path([0, 1]), Path([4, 5])]) is None


def test_three_agents_swap_into_shared_move():
    # two agents make the same move while a third swaps with them: every pair counts
    sol = [Path([0, 1]), Path([0, 1]), Path([1, 0])]
    assert Counter(detect_collisions(sol)) == Counter(naive_collisions(sol))


# --- properties ------------------------------------------------------------------------


def _random_solution(rng):
    grid = random_grid(rng, 4, obstacle_ratio=0.0)
    n = rng.randint(1, 4)
    paths = []
    for _ in range(n):
        p = [rng.randrange(grid.size)]
        for _ in range(rng.randint(0, 6)):
            p.append(rng.choice(grid.moves(p[-1])))
        paths.append(Path(p))
    return paths


@settings(max_examples=300, deadline=None)
@given(seeds)
def test_collisions_match_naive_checker(seed):
    sol = _random_solution(rng_from(seed))
    assert Counter(detect_collisions(sol)) == Counter(naive_collisions(sol))


@settings(max_examples=200, deadline=None)
@given(seeds)
def test_first_collision_is_a_minimal_collision(seed):
    sol = _random_solution(rng_from(seed))
    all_conflicts = detect_collisions(sol)
    first = get_first_collision(sol)
    if not all_conflicts:
        assert first is None
        return
    assert first in all_conflicts
    assert first.t == min(c.t for c in all_conflicts)
