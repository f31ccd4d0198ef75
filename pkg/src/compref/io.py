"""CSV and JSON artifacts: refined partitions, controllers, traces and reports.

Floats are written with ``repr`` so that every file reads back to the exact
same values, and rows are sorted so that equal inputs give equal bytes.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .composition import GlobalController
from .geometry import SymbolId
from .refinement import LocalController


def _path_str(path) -> str:
    return ".".join(str(i) for i in path)


def _path_parse(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(".")) if text else ()


def _f(v) -> str:
    return repr(float(v))


def partition_file(out: Path, subsystem: int) -> Path:
    return Path(out) / f"partition_S{subsystem}.csv"


def controller_file(out: Path, subsystem: int) -> Path:
    return Path(out) / f"controller_S{subsystem}.csv"


def valid_symbols(a, c: LocalController, k: int) -> set[SymbolId]:
    """Symbols of step ``k`` carrying a control; every symbol of the last step."""
    if k == a.cells.r:
        return set(a.symbols(k))
    return {s for (step, s) in c.table if step == k}


def write_partition(out, a, c: LocalController) -> Path:
    """Leaves of every step's cell with their bounds and validity."""
    dims = a.dims
    path = partition_file(out, a.spec.id)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "cell", "path"] + [f"low_{d}" for d in dims] + [f"high_{d}" for d in dims] + ["valid"])
        for k in range(a.cells.r + 1):
            valid = valid_symbols(a, c, k)
            for s in sorted(a.symbols(k)):
                b = a.box(s, k)
                w.writerow([k, s.cell, _path_str(s.path)] + [_f(v) for v in b.low] + [_f(v) for v in b.high]
                           + [int(s in valid)])
    return path


def write_controller(out, a, c: LocalController) -> Path:
    path = controller_file(out, a.spec.id)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "subsystem", "cell", "path"] + [f"u_{j}" for j in c.J])
        for (k, s), u in c.items():
            w.writerow([k, c.subsystem, s.cell, _path_str(s.path)] + [_f(v) for v in u])
    return path


def write_artifacts(out, results) -> list[Path]:
    """Partition and controller files of each refinement result (or of a :class:`GlobalController`)."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(results, GlobalController):
        pairs = zip(results.abstractions, results.controllers)
    else:
        pairs = ((r.abstraction, r.controller) for r in results)
    paths = []
    for a, c in pairs:
        paths.append(write_partition(out, a, c))
        paths.append(write_controller(out, a, c))
    return paths


def read_artifacts(problem, out) -> GlobalController:
    """Rebuild the global controller of ``problem`` from a directory written by :func:`write_artifacts`."""
    out = Path(out)
    abstractions, controllers = [], []
    for i, sub in enumerate(problem.subsystems):
        a = problem.abstraction(i)
        with open(partition_file(out, sub.id), newline="") as fh:
            for row in csv.DictReader(fh):
                a.partitions[int(row["step"])].ensure_leaf(SymbolId(int(row["cell"]), _path_parse(row["path"])))
        c = LocalController(sub.id, sub.J)
        with open(controller_file(out, sub.id), newline="") as fh:
            reader = csv.DictReader(fh)
            cols = [f"u_{j}" for j in sub.J]
            if reader.fieldnames is None or any(col not in reader.fieldnames for col in cols):
                raise ValueError(f"{controller_file(out, sub.id)}: expected control columns {cols}")
            for row in reader:
                s = SymbolId(int(row["cell"]), _path_parse(row["path"]))
                c.table[(int(row["step"]), s)] = tuple(float(row[col]) for col in cols)
        abstractions.append(a)
        controllers.append(c)
    return GlobalController(problem, abstractions, controllers)


def write_traces(path, trajectories: np.ndarray) -> Path:
    """One row per (trial, step) with the state coordinates."""
    path = Path(path)
    B, steps, n = trajectories.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "step"] + [f"x_{d}" for d in range(n)])
        for b in range(B):
            for k in range(steps):
                w.writerow([b, k] + [_f(v) for v in trajectories[b, k]])
    return path


def write_json(path, payload) -> Path:
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path
