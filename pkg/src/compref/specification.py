"""Finite cell-sequence specifications over a grid partition."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .geometry import Box, GridPartition, OutOfDomain, project


class SpecificationError(ValueError):
    pass


@dataclass(frozen=True)
class CellSequence:
    """Cells ``sigma^0 ... sigma^r`` of ``partition`` to be visited at successive sampling times."""

    partition: GridPartition
    cells: tuple[int, ...]

    def __post_init__(self):
        cells = tuple(int(c) for c in self.cells)
        if len(cells) < 2:
            raise SpecificationError("a specification needs at least two cells (r >= 1)")
        bad = [c for c in cells if not 0 <= c < self.partition.n_cells]
        if bad:
            raise SpecificationError(f"cells {bad} are not cells of the partition")
        object.__setattr__(self, "cells", cells)

    @classmethod
    def from_coords(cls, partition: GridPartition, coords: Iterable[Sequence[int]]) -> "CellSequence":
        """Build from per-dimension interval indices, one list per step."""
        cells = []
        for step, c in enumerate(coords):
            c = tuple(int(v) for v in c)
            if len(c) != len(partition.shape) or any(not 0 <= v < m for v, m in zip(c, partition.shape)):
                raise SpecificationError(f"step {step}: coordinates {c} outside grid shape {partition.shape}")
            cells.append(partition.cell_index(c))
        return cls(partition, tuple(cells))

    @classmethod
    def from_boxes(cls, partition: GridPartition, boxes: Iterable[Box]) -> "CellSequence":
        cells = []
        for b in boxes:
            cell = partition.locate_cell(b.center)
            if partition.cell_box(cell) != b:
                raise SpecificationError(f"{b} is not a cell of the partition")
            cells.append(cell)
        return cls(partition, tuple(cells))

    @property
    def r(self) -> int:
        return len(self.cells) - 1

    def box(self, k: int) -> Box:
        self._check_step(k)
        return self.partition.cell_box(self.cells[k])

    def coords(self, k: int) -> tuple[int, ...]:
        self._check_step(k)
        return self.partition.cell_coords(self.cells[k])

    def _check_step(self, k):
        if not 0 <= k <= self.r:
            raise SpecificationError(f"step {k} outside 0..{self.r}")


def projected_step(spec: CellSequence, k: int, dims: Iterable[int]) -> Box:
    return project(spec.box(k), dims)


def check_trace(spec: CellSequence, trace) -> bool:
    """Whether ``x^k`` lies in ``sigma^k`` for every ``k`` (half-open cell membership)."""
    trace = np.asarray(trace, dtype=float)
    if trace.shape[0] != spec.r + 1:
        raise SpecificationError(f"trace has {trace.shape[0]} states, expected {spec.r + 1}")
    for k, x in enumerate(trace):
        try:
            if spec.partition.locate_cell(x) != spec.cells[k]:
                return False
        except OutOfDomain:
            return False
    return True
