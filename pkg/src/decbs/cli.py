"""Command-line experiment runner.

    decbs solve --map M.map --scen S.scen --agents 30 --w 1.1 --solver decbs [--bc] [--tr]
    decbs suite --map M.map --scen scens/ --agents 60 75 90 --w 1.1 \\
                --configs ecbs+bc+tr decbs+bc+tr --out runs/results.csv

``solve`` prints one result row (CSV with header) and exits 0 when solved,
1 when not, 2 on bad input. ``suite`` writes next to ``--out``:

* ``results.csv``: one row per run, every column deterministic (no runtime)
* ``results.timing.csv``: wall-clock runtime per run
* ``results.summary.txt``: success rates, means and pairwise comparisons
* ``results.tables/``: plot-ready CSV tables keyed by agent count
* ``results.meta.json``: the settings that produced the files
"""

from __future__ import annotations

import argparse
import itertools
import json
import math
import random
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path as FsPath
from statistics import mean
from typing import Sequence

from .core import InstanceError, MapfInstance, RunStats, StructuralError, validate_solution
from .high_level import SOLVERS, SolverConfig, solve
from .io import (
    RESULT_COLUMNS,
    ParseError,
    ResultRow,
    build_instance,
    format_results,
    load_map,
    load_scen,
    map_name,
    write_results,
)
from .low_level import as_fraction

DEFAULT_TIME_LIMIT = 60.0

# Columns of results.csv: everything except wall-clock time, so a rerun of
# the same settings reproduces the file byte for byte.
DETERMINISTIC_COLUMNS = [c for c in RESULT_COLUMNS if c != "runtime"]
TIMING_COLUMNS = ["map", "scen", "agents", "w", "solver", "bc", "tr", "solved", "runtime"]
NODE_COUNTERS = ("ct_expanded", "ct_generated", "ll_shortest_expanded",
                 "ll_focal_expanded", "ll_bfs_expanded")

SHUFFLE_NOTE = (
    "scenario entries shuffled with the given seed before taking the first N "
    "agents; a stand-in for unspecified random test case generation"
)


# --- run configurations -------------------------------------------------------


@dataclass(frozen=True, order=True)
class RunConfig:
    """One cell of the solver/optimization matrix."""

    solver: str
    bc: bool = False
    tr: bool = False

    def __post_init__(self) -> None:
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}; expected one of {SOLVERS}")

    @classmethod
    def parse(cls, text: str) -> RunConfig:
        """``decbs``, ``ecbs+bc``, ``decbs+bc+tr`` and so on."""
        name, *flags = text.strip().lower().split("+")
        unknown = set(flags) - {"bc", "tr"}
        if unknown:
            raise ValueError(f"unknown option(s) {sorted(unknown)} in {text!r}")
        return cls(name, "bc" in flags, "tr" in flags)

    @property
    def label(self) -> str:
        return self.solver + ("+bc" if self.bc else "") + ("+tr" if self.tr else "")


@dataclass(frozen=True)
class RunSpec:
    map_path: str
    scen_path: str
    agents: int
    w: str
    config: RunConfig
    time_limit: float = DEFAULT_TIME_LIMIT
    seed: int | None = None
    node_limit: int | None = None


@dataclass
class RunOutcome:
    row: ResultRow
    # None when nothing was returned; False flags a solver bug.
    valid: bool | None = None
    error: str | None = None


@lru_cache(maxsize=8)
def _cached_map(path: str):
    return load_map(path)


@lru_cache(maxsize=64)
def _cached_scen(path: str):
    return tuple(load_scen(path))


def make_instance(map_path: str, scen_path: str, agents: int, seed: int | None = None) -> MapfInstance:
    """First ``agents`` scenario entries, after a seeded shuffle when
    ``seed`` is given. The shuffle depends only on the seed and the scenario
    file name, so every solver sees the same instance."""
    grid = _cached_map(str(map_path))
    entries = list(_cached_scen(str(scen_path)))
    if seed is not None:
        random.Random(f"{seed}:{FsPath(scen_path).name}").shuffle(entries)
    return build_instance(grid, entries, agents)


def execute(run: RunSpec) -> RunOutcome:
    """Solve one instance and validate whatever comes back. Failures are
    reported in the outcome instead of raised."""
    row = ResultRow(map_name(run.map_path), map_name(run.scen_path), run.agents,
                    float(as_fraction(run.w)), run.config.solver, run.config.bc, run.config.tr)
    outcome = RunOutcome(row)
    try:
        instance = make_instance(run.map_path, run.scen_path, run.agents, run.seed)
        config = SolverConfig.for_solver(
            run.config.solver, run.w, enable_bc=run.config.bc, enable_tr=run.config.tr,
            time_limit=run.time_limit, node_limit=run.node_limit,
        )
        sol, stats = solve(instance, config)
    except (ParseError, InstanceError, ValueError, OSError) as e:
        outcome.error = str(e)
        row.stats = RunStats(runtime=run.time_limit)
        return outcome
    if sol is not None:
        try:
            outcome.valid = not validate_solution(instance, sol)
        except StructuralError:
            outcome.valid = False
    else:
        stats.solved = False
        stats.solution_cost = math.inf
        stats.runtime = run.time_limit
    row.stats = stats
    return outcome


# --- suites ---------------------------------------------------------------------


@dataclass
class SuiteSpec:
    map_path: str
    scen_paths: list[str]
    agents: list[int]
    ws: list[str]
    configs: list[RunConfig]
    time_limit: float = DEFAULT_TIME_LIMIT
    seed: int | None = None
    out: str = "results.csv"
    node_limit: int | None = None
    workers: int = 1

    def __post_init__(self) -> None:
        if not self.configs:
            raise ValueError("solver matrix is empty")
        if not self.scen_paths or not self.agents or not self.ws:
            raise ValueError("need at least one scenario, agent count and w")
        if self.time_limit <= 0:
            raise ValueError("time limit must be positive")
        for w in self.ws:
            if as_fraction(w) < 1:
                raise ValueError(f"w must be >= 1, got {w}")

    def runs(self) -> list[RunSpec]:
        """Run order: agents, w, scenario, then solver configuration."""
        return [
            RunSpec(self.map_path, scen, n, w, cfg, self.time_limit, self.seed, self.node_limit)
            for n, w, scen, cfg in itertools.product(self.agents, self.ws, self.scen_paths, self.configs)
        ]

    def metadata(self) -> dict:
        meta = {
            "map": self.map_path,
            "scens": list(self.scen_paths),
            "agents": list(self.agents),
            "w": list(self.ws),
            "configs": [c.label for c in self.configs],
            "time_limit": self.time_limit,
            "node_limit": self.node_limit,
            "seed": self.seed,
            "instances": "first N scenario entries",
        }
        if self.seed is not None:
            meta["instances"] = SHUFFLE_NOTE
        return meta


def expand_scen_paths(paths: Sequence[str]) -> list[str]:
    """Directories expand to their ``*.scen`` files, sorted by name."""
    out = []
    for p in paths:
        fp = FsPath(p)
        if fp.is_dir():
            out.extend(str(x) for x in sorted(fp.glob("*.scen")))
        else:
            out.append(str(fp))
    if not out:
        raise ValueError("no scenario files found")
    return out


@dataclass
class SuiteResult:
    outcomes: list[RunOutcome]
    summary: str = ""
    files: dict = field(default_factory=dict)

    @property
    def rows(self) -> list[ResultRow]:
        return [o.row for o in self.outcomes]

    @property
    def invalid(self) -> list[RunOutcome]:
        return [o for o in self.outcomes if o.valid is False]


def check_inputs(spec: SuiteSpec) -> None:
    """Parse every input once so a bad file aborts before any run starts."""
    grid = load_map(spec.map_path)
    for scen in spec.scen_paths:
        entries = load_scen(scen)
        for n in spec.agents:
            build_instance(grid, entries, n)


def run_suite(spec: SuiteSpec, write: bool = True) -> SuiteResult:
    check_inputs(spec)
    runs = spec.runs()
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            # map() yields in submission order, i.e. run order
            outcomes = list(pool.map(execute, runs))
    else:
        outcomes = [execute(r) for r in runs]
    result = SuiteResult(outcomes)
    result.summary = summarize(result.rows, spec.configs, result.invalid, outcomes)
    if write:
        result.files = write_suite(spec, result)
    return result


def write_suite(spec: SuiteSpec, result: SuiteResult) -> dict:
    out = FsPath(spec.out)
    stem = out.with_suffix("")
    files = {
        "results": out,
        "timing": FsPath(f"{stem}.timing.csv"),
        "summary": FsPath(f"{stem}.summary.txt"),
        "meta": FsPath(f"{stem}.meta.json"),
        "tables": FsPath(f"{stem}.tables"),
    }
    write_results(result.rows, files["results"], DETERMINISTIC_COLUMNS)
    write_results(result.rows, files["timing"], TIMING_COLUMNS)
    files["summary"].write_text(result.summary)
    files["meta"].write_text(json.dumps(spec.metadata(), indent=2, sort_keys=True) + "\n")
    files["tables"].mkdir(exist_ok=True)
    for name, text in plot_tables(result.rows, spec.configs).items():
        (files["tables"] / name).write_text(text)
    return files


# --- statistics ---------------------------------------------------------------------


def improvement(runtime_a: float, runtime_b: float) -> float:
    """Relative speed-up of B over A: (runtime(A) - runtime(B)) / runtime(A)."""
    if runtime_a <= 0:
        return math.nan
    return (runtime_a - runtime_b) / runtime_a


def _instance_key(row: ResultRow) -> tuple:
    return (row.map, row.scen, row.agents, row.w)


def _config_of(row: ResultRow) -> RunConfig:
    return RunConfig(row.solver, row.bc, row.tr)


def success_rate(rows: Sequence[ResultRow]) -> float:
    return sum(r.stats.solved for r in rows) / len(rows) if rows else math.nan


def common_solved(rows: Sequence[ResultRow], configs: Sequence[RunConfig]) -> set:
    """Instances every configuration in ``configs`` solved."""
    solved: dict[RunConfig, set] = {c: set() for c in configs}
    for r in rows:
        c = _config_of(r)
        if c in solved and r.stats.solved:
            solved[c].add(_instance_key(r))
    sets = list(solved.values())
    return set.intersection(*sets) if sets else set()


def mean_over(rows: Sequence[ResultRow], column: str, keys: set | None = None) -> float:
    vals = [getattr(r.stats, column) for r in rows
            if r.stats.solved and (keys is None or _instance_key(r) in keys)]
    return mean(vals) if vals else math.nan


def compare(rows: Sequence[ResultRow], a: RunConfig, b: RunConfig) -> dict:
    """Node and runtime means of ``a`` and ``b`` over instances both solved."""
    common = common_solved(rows, [a, b])
    ra = [r for r in rows if _config_of(r) == a]
    rb = [r for r in rows if _config_of(r) == b]
    out = {"common": len(common)}
    for col in (*NODE_COUNTERS, "runtime", "solution_cost"):
        out[col] = (mean_over(ra, col, common), mean_over(rb, col, common))
    out["improvement"] = improvement(*out["runtime"])
    return out


def low_level_nodes(config: RunConfig) -> str:
    """Counter that measures a solver's low-level effort: FOCAL expansions
    for ECBS, best-first expansions for DECBS, A* expansions otherwise."""
    return {"ecbs": "ll_focal_expanded", "decbs": "ll_bfs_expanded"}.get(
        config.solver, "ll_shortest_expanded")


def _num(x: float, fmt: str = ".6g") -> str:
    return "nan" if isinstance(x, float) and math.isnan(x) else format(x, fmt)


def summarize(rows: Sequence[ResultRow], configs: Sequence[RunConfig],
              invalid: Sequence[RunOutcome] = (), outcomes: Sequence[RunOutcome] = ()) -> str:
    lines = []
    groups = sorted({(r.agents, r.w) for r in rows})
    for n, w in groups:
        grp = [r for r in rows if (r.agents, r.w) == (n, w)]
        common = common_solved(grp, configs)
        lines.append(f"agents={n} w={_num(w)}: {len({_instance_key(r) for r in grp})} instances, "
                     f"{len(common)} solved by every configuration")
        for c in configs:
            rc = [r for r in grp if _config_of(r) == c]
            lines.append(
                f"  {c.label:<14} success={_num(success_rate(rc), '.3f')} "
                f"runtime(solved)={_num(mean_over(rc, 'runtime'), '.4g')}s "
                + " ".join(f"{k}={_num(mean_over(rc, k, common), '.1f')}" for k in NODE_COUNTERS)
            )
        for a, b in itertools.combinations(configs, 2):
            cmp = compare(grp, a, b)
            ll_a = cmp[low_level_nodes(a)][0]
            ll_b = cmp[low_level_nodes(b)][1]
            ratio = ll_b / ll_a if ll_a else math.nan
            ct_a, ct_b = cmp["ct_expanded"]
            lines.append(
                f"  {a.label} vs {b.label}: common={cmp['common']} "
                f"improvement={_num(100 * cmp['improvement'], '.1f')}% "
                f"low-level ratio={_num(ratio, '.3f')} "
                f"ct ratio={_num(ct_b / ct_a if ct_a else math.nan, '.3f')}"
            )
    errors = [o for o in outcomes if o.error]
    lines.append(f"runs={len(rows)} errors={len(errors)} invalid solutions={len(invalid)}")
    for o in errors:
        lines.append(f"  error {o.row.scen} agents={o.row.agents} {o.row.solver}: {o.error}")
    return "\n".join(lines) + "\n"


def plot_tables(rows: Sequence[ResultRow], configs: Sequence[RunConfig]) -> dict[str, str]:
    """One CSV per metric: a row per (w, agents), a column per configuration."""
    metrics = {
        "success_rate": lambda rc, common: success_rate(rc),
        "runtime": lambda rc, common: mean_over(rc, "runtime"),
        "ct_expanded": lambda rc, common: mean_over(rc, "ct_expanded", common),
        "low_level_expanded": None,
    }
    groups = sorted({(r.w, r.agents) for r in rows})
    tables = {}
    for name, fn in metrics.items():
        lines = ["w,agents," + ",".join(c.label for c in configs)]
        for w, n in groups:
            grp = [r for r in rows if (r.w, r.agents) == (w, n)]
            common = common_solved(grp, configs)
            vals = []
            for c in configs:
                rc = [r for r in grp if _config_of(r) == c]
                v = mean_over(rc, low_level_nodes(c), common) if fn is None else fn(rc, common)
                vals.append(_num(v))
            lines.append(f"{_num(w)},{n}," + ",".join(vals))
        tables[f"{name}.csv"] = "\n".join(lines) + "\n"
    return tables


# --- argument parsing -------------------------------------------------------------


def _w_arg(text: str) -> str:
    try:
        w = as_fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if w < 1:
        raise argparse.ArgumentTypeError(f"w must be >= 1, got {text}")
    return text


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _config_arg(text: str) -> RunConfig:
    try:
        return RunConfig.parse(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="decbs", description="Bounded-suboptimal MAPF experiments")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one instance and print its result row")
    s.add_argument("--map", required=True)
    s.add_argument("--scen", required=True)
    s.add_argument("--agents", type=int, required=True)
    s.add_argument("--w", type=_w_arg, default="1")
    s.add_argument("--solver", choices=SOLVERS, required=True)
    s.add_argument("--bc", action="store_true", help="bypass conflicts")
    s.add_argument("--tr", action="store_true", help="target reasoning")
    s.add_argument("--time-limit", type=_positive_float, default=DEFAULT_TIME_LIMIT)
    s.add_argument("--node-limit", type=int)
    s.add_argument("--seed", type=int, help="shuffle scenario entries before taking the first N")
    s.add_argument("--stats-out", help="also write the row to this CSV file")

    u = sub.add_parser("suite", help="run a benchmark matrix and summarize it")
    u.add_argument("--map", required=True)
    u.add_argument("--scen", nargs="+", required=True, help="scen files or directories")
    u.add_argument("--agents", type=int, nargs="+", required=True)
    u.add_argument("--w", type=_w_arg, nargs="+", default=["1.1"])
    u.add_argument("--configs", type=_config_arg, nargs="+", required=True,
                   help="solver[+bc][+tr], e.g. ecbs+bc+tr decbs+bc+tr")
    u.add_argument("--time-limit", type=_positive_float, default=DEFAULT_TIME_LIMIT)
    u.add_argument("--node-limit", type=int)
    u.add_argument("--seed", type=int)
    u.add_argument("--out", default="results.csv")
    u.add_argument("--workers", type=int, default=1)
    return ap


def cmd_solve(args) -> int:
    run = RunSpec(args.map, args.scen, args.agents, args.w, RunConfig(args.solver, args.bc, args.tr),
                  args.time_limit, args.seed, args.node_limit)
    try:
        make_instance(run.map_path, run.scen_path, run.agents, run.seed)
    except (ParseError, InstanceError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    outcome = execute(run)
    if outcome.error:
        print(f"error: {outcome.error}", file=sys.stderr)
        return 2
    if outcome.valid is False:
        print("error: solver returned a colliding solution", file=sys.stderr)
        return 2
    sys.stdout.write(format_results([outcome.row]))
    if args.stats_out:
        write_results([outcome.row], args.stats_out)
    return 0 if outcome.row.stats.solved else 1


def cmd_suite(args) -> int:
    try:
        spec = SuiteSpec(args.map, expand_scen_paths(args.scen), args.agents, args.w, args.configs,
                         args.time_limit, args.seed, args.out, args.node_limit, args.workers)
        result = run_suite(spec)
    except (ParseError, InstanceError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    sys.stdout.write(result.summary)
    return 1 if result.invalid else 0


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "solve":
        return cmd_solve(args)
    return cmd_suite(args)


if __name__ == "__main__":
    sys.exit(main())
