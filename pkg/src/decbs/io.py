"""MovingAI ``.map`` / ``.scen`` parsing and results CSV."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field, fields
from pathlib import Path as FsPath
from typing import Iterable, Sequence

from .core import GridMap, InstanceError, MapfInstance, RunStats

PASSABLE = frozenset(".G")
BLOCKED = frozenset("@OT")


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def parse_map(text: str) -> GridMap:
    """Parse a MovingAI map. ``.``/``G`` are passable, ``@``/``O``/``T``
    blocked; any other glyph is an error. Grids are read as 4-connected."""
    lines = text.splitlines()
    header = {}
    expected = ("type", "height", "width", "map")
    for lineno, key in enumerate(expected, start=1):
        if lineno > len(lines):
            raise ParseError(f"missing '{key}' header", lineno)
        parts = lines[lineno - 1].split()
        if not parts or parts[0].lower() != key:
            raise ParseError(f"expected '{key}' header", lineno)
        if key in ("height", "width"):
            if len(parts) != 2 or not parts[1].isdigit() or int(parts[1]) <= 0:
                raise ParseError(f"bad {key}", lineno)
            header[key] = int(parts[1])
    height, width = header["height"], header["width"]
    body = lines[4:]
    while body and not body[-1].strip():
        body.pop()
    if len(body) < height:
        raise ParseError(f"truncated grid: {len(body)} of {height} rows", 4 + len(body) + 1)
    if len(body) > height:
        raise ParseError(f"grid has more than {height} rows", 4 + height + 1)
    cells = []
    for r, row in enumerate(body):
        lineno = 5 + r
        if len(row) != width:
            raise ParseError(f"row has {len(row)} cells, expected {width}", lineno)
        for ch in row:
            if ch in PASSABLE:
                cells.append(True)
            elif ch in BLOCKED:
                cells.append(False)
            else:
                raise ParseError(f"unknown glyph {ch!r}", lineno)
    return GridMap(width, height, tuple(cells))


def render_map(grid: GridMap) -> str:
    rows = [
        "".join("." if grid.passable[r * grid.width + c] else "@" for c in range(grid.width))
        for r in range(grid.height)
    ]
    return f"type octile\nheight {grid.height}\nwidth {grid.width}\nmap\n" + "\n".join(rows) + "\n"


def load_map(path) -> GridMap:
    return parse_map(FsPath(path).read_text())


@dataclass(frozen=True)
class ScenarioEntry:
    bucket: int
    map_name: str
    map_width: int
    map_height: int
    # (col, row) as in the file
    start: tuple[int, int]
    goal: tuple[int, int]
    # octile distance; informational only
    reference_length: float


def parse_scen(text: str) -> list[ScenarioEntry]:
    lines = text.splitlines()
    if not lines or lines[0].split() != ["version", "1"]:
        raise ParseError("expected 'version 1'", 1)
    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 9:
            parts = line.split()
        if len(parts) != 9:
            raise ParseError(f"expected 9 fields, got {len(parts)}", lineno)
        try:
            bucket = int(parts[0])
            w, h, sx, sy, gx, gy = (int(p) for p in parts[2:8])
            ref = float(parts[8])
        except ValueError as e:
            raise ParseError(f"malformed field ({e})", lineno) from None
        for x, y, what in ((sx, sy, "start"), (gx, gy, "goal")):
            if not (0 <= x < w and 0 <= y < h):
                raise ParseError(f"{what} ({x}, {y}) outside {w}x{h} map", lineno)
        if (sx, sy) == (gx, gy):
            raise ParseError("start equals goal", lineno)
        out.append(ScenarioEntry(bucket, parts[1], w, h, (sx, sy), (gx, gy), ref))
    return out


def load_scen(path) -> list[ScenarioEntry]:
    return parse_scen(FsPath(path).read_text())


def build_instance(grid: GridMap, entries: Sequence[ScenarioEntry], n: int) -> MapfInstance:
    """Instance from the first ``n`` entries. Prefixes with repeated starts
    or goals are rejected, not repaired."""
    if n < 1:
        raise ValueError("agent count must be positive")
    if n > len(entries):
        raise ValueError(f"requested {n} agents but the scenario has {len(entries)} entries")
    starts, goals = [], []
    for k, e in enumerate(entries[:n]):
        if (e.map_width, e.map_height) != (grid.width, grid.height):
            raise InstanceError(f"entry {k}: scenario dimensions do not match the map")
        starts.append(grid.index(e.start[1], e.start[0]))
        goals.append(grid.index(e.goal[1], e.goal[0]))
    return MapfInstance(grid, tuple(starts), tuple(goals))


# --- results ---------------------------------------------------------------

_STAT_FIELDS = [f.name for f in fields(RunStats)]


@dataclass
class ResultRow:
    map: str
    scen: str
    agents: int
    w: float
    solver: str
    bc: bool = False
    tr: bool = False
    stats: RunStats = field(default_factory=RunStats)

    def as_record(self) -> dict:
        rec = {"map": self.map, "scen": self.scen, "agents": self.agents, "w": self.w,
               "solver": self.solver, "bc": self.bc, "tr": self.tr}
        rec.update(self.stats.as_dict())
        return rec


RESULT_COLUMNS = ["map", "scen", "agents", "w", "solver", "bc", "tr", *_STAT_FIELDS]
_INT_COLUMNS = {"agents", "ct_expanded", "ct_generated", "ll_shortest_expanded",
                "ll_focal_expanded", "ll_bfs_expanded"}
_BOOL_COLUMNS = {"bc", "tr", "solved"}
_FLOAT_COLUMNS = {"w", "runtime", "solution_cost", "root_lb"}


def _fmt(col: str, value) -> str:
    if col in _BOOL_COLUMNS:
        return "1" if value else "0"
    if col in _FLOAT_COLUMNS:
        value = float(value)
        if math.isinf(value):
            return "inf"
        return f"{value:.6g}"
    return str(value)


def _parse(col: str, text: str):
    if col in _BOOL_COLUMNS:
        return text == "1"
    if col in _INT_COLUMNS:
        return int(text)
    if col in _FLOAT_COLUMNS:
        return float(text)
    return text


def format_results(rows: Iterable[ResultRow], columns: Sequence[str] = RESULT_COLUMNS) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        rec = row.as_record()
        writer.writerow([_fmt(c, rec[c]) for c in columns])
    return buf.getvalue()


def write_results(rows: Iterable[ResultRow], destination, columns: Sequence[str] = RESULT_COLUMNS) -> None:
    """Comma-separated rows under a fixed header. ``destination`` is a path
    or an open text stream. Floats carry 6 significant digits; unsolved
    costs are written as ``inf``."""
    text = format_results(rows, columns)
    if hasattr(destination, "write"):
        destination.write(text)
        return
    dest = FsPath(destination)
    if dest.parent and not dest.parent.exists():
        dest.parent.mkdir(parents=True, exist_ok=True)
    with open(dest, "w", newline="") as fh:
        fh.write(text)


def read_results(source) -> list[ResultRow]:
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = FsPath(source).read_text()
    reader = csv.DictReader(io.StringIO(text))
    rows = []
    for rec in reader:
        vals = {c: _parse(c, v) for c, v in rec.items()}
        stats = RunStats(**{k: vals[k] for k in _STAT_FIELDS if k in vals})
        rows.append(ResultRow(vals["map"], vals["scen"], vals["agents"], vals["w"],
                              vals["solver"], vals["bc"], vals["tr"], stats))
    return rows


def map_name(path) -> str:
    return os.path.splitext(os.path.basename(str(path)))[0]
