"""Plain-text file formats: coincidence grids, 1-D histograms and JSON reports.

Count grid CSV::

    # biphoton count grid v1
    # axis_s kind=frequency center=2586.9 step=0.086 n=128 unit=rad/ps
    # axis_i kind=frequency center=2276.9 step=0.086 n=128 unit=rad/ps
    # seed=12345
    # generator=numpy.random.Philox
    # total_expected=1000000.0
    3,0,1,...

followed by ``n_s`` rows of ``n_i`` comma-separated integers.  Row ``j``
is signal bin ``j`` (ascending), column ``k`` is idler bin ``k``
(ascending).  Floats are written with ``repr`` so they read back exactly.
"""
from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .estimate import Hist1D
from .simulate import GENERATOR_NAME, UNITS, Axis, CountGrid, Grid2D

COUNT_GRID_MAGIC = "# biphoton count grid v1"


class FormatError(ValueError):
    """A data file does not follow the documented layout."""


def _axis_line(name: str, axis: Axis) -> str:
    return f"# {name} kind={axis.kind} center={axis.center!r} step={axis.step!r} n={axis.n} unit={axis.unit}"


def format_count_grid(counts: CountGrid) -> str:
    lines = [
        COUNT_GRID_MAGIC,
        _axis_line("axis_s", counts.grid.axis_s),
        _axis_line("axis_i", counts.grid.axis_i),
        f"# seed={counts.seed}",
        f"# generator={counts.generator}",
        f"# total_expected={float(counts.total_expected)!r}",
    ]
    lines.extend(",".join(map(str, row)) for row in counts.counts.tolist())
    return "\n".join(lines) + "\n"


def write_count_grid(path, counts: CountGrid) -> Path:
    path = Path(path)
    path.write_text(format_count_grid(counts), encoding="utf-8", newline="\n")
    return path


_AXIS_RE = re.compile(
    r"^# (axis_[si]) kind=(\w+) center=(\S+) step=(\S+) n=(\d+) unit=(\S+)$"
)


def parse_count_grid(text: str, source: str = "<counts>") -> CountGrid:
    header = {}
    axes = {}
    rows = []
    lines = text.splitlines()
    if not lines or lines[0].strip() != COUNT_GRID_MAGIC:
        raise FormatError(f"{source}:1: missing header line {COUNT_GRID_MAGIC!r}")
    for number, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _AXIS_RE.match(line)
            if m:
                name, kind, center, step, n, unit = m.groups()
                if kind not in UNITS or UNITS[kind] != unit:
                    raise FormatError(f"{source}:{number}: axis kind {kind!r} with unit {unit!r} is not recognised")
                try:
                    axes[name] = Axis(float(center), float(step), int(n), kind)
                except ValueError as exc:
                    raise FormatError(f"{source}:{number}: {exc}") from None
                continue
            key, sep, value = line[1:].strip().partition("=")
            if not sep:
                raise FormatError(f"{source}:{number}: malformed header line {line!r}")
            header[key.strip()] = value.strip()
            continue
        try:
            rows.append([int(v) for v in line.split(",")])
        except ValueError:
            raise FormatError(f"{source}:{number}: row must hold comma-separated integers") from None
    for key in ("axis_s", "axis_i"):
        if key not in axes:
            raise FormatError(f"{source}: missing '# {key} ...' header")
    grid = Grid2D(axes["axis_s"], axes["axis_i"])
    if len(rows) != grid.shape[0] or any(len(r) != grid.shape[1] for r in rows):
        widths = sorted({len(r) for r in rows})
        raise FormatError(
            f"{source}: expected {grid.shape[0]} rows of {grid.shape[1]} counts, "
            f"got {len(rows)} rows with lengths {widths}"
        )
    counts = np.asarray(rows, dtype=np.int64)
    if np.any(counts < 0):
        raise FormatError(f"{source}: counts must be non-negative")
    try:
        seed = int(header.get("seed", "0"))
        total = float(header.get("total_expected", counts.sum()))
    except ValueError as exc:
        raise FormatError(f"{source}: {exc}") from None
    return CountGrid(grid, counts, total, seed, header.get("generator", GENERATOR_NAME))


def read_count_grid(path) -> CountGrid:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror or exc}") from None
    return parse_count_grid(text, str(path))


def format_hist(hist: Hist1D, quantity: str) -> str:
    lines = [f"# {quantity} unit={hist.unit}", "# center,weight"]
    lines.extend(f"{c!r},{w!r}" for c, w in zip(hist.centers.tolist(), hist.weights.tolist()))
    return "\n".join(lines) + "\n"


def write_hist(path, hist: Hist1D, quantity: str) -> Path:
    path = Path(path)
    path.write_text(format_hist(hist, quantity), encoding="utf-8", newline="\n")
    return path


def read_hist(path) -> Hist1D:
    path = Path(path)
    unit = ""
    centers, weights = [], []
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if line.startswith("#"):
            m = re.search(r"unit=(\S*)", line)
            if m:
                unit = m.group(1)
            continue
        if not line.strip():
            continue
        try:
            c, w = line.split(",")
            centers.append(float(c))
            weights.append(float(w))
        except ValueError:
            raise FormatError(f"{path}:{number}: expected 'center,weight'") from None
    return Hist1D(np.array(centers), np.array(weights), unit)


def dump_json(obj) -> str:
    """Stable JSON text: fixed key order, ``repr`` floats, trailing newline."""
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dump_json(obj), encoding="utf-8", newline="\n")
    return path


def read_json_report(path) -> dict:
    path = Path(path)
    try:
        report = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    if report.get("schema") != "biphoton.report":
        raise FormatError(f"{path}: not a biphoton report")
    return report
