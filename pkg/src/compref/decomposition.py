"""Subsystem index sets and assume-guarantee restricted reachable sets.

A subsystem models the states ``I = Ic | Io`` and the controls ``J``.  The
states outside ``I`` and the controls outside ``J`` act as bounded external
inputs.  Two internal obligations tighten its over-approximations:

* unobserved states start in the current cell of the plan (the initial
  box takes its bounds on those dimensions from ``sigma^k``, not from ``X``);
* observed but uncontrolled states reach the next cell, so the successor box
  is intersected with ``sigma^{k+1}`` on those dimensions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dynamics import ReachEvaluator
from .geometry import EMPTY, Box, RefinedPartition, SymbolId, project
from .specification import CellSequence


class DecompositionError(ValueError):
    pass


class OverlapError(DecompositionError):
    def __init__(self, dim, kind="state"):
        super().__init__(f"{kind} dimension {dim} is assigned to more than one subsystem")
        self.dim = dim


class UncoveredError(DecompositionError):
    def __init__(self, dim, kind="state"):
        super().__init__(f"{kind} dimension {dim} is assigned to no subsystem")
        self.dim = dim


class SymbolOutsideCell(ValueError):
    pass


@dataclass(frozen=True)
class SubsystemSpec:
    id: int
    Ic: tuple[int, ...]
    Io: tuple[int, ...] = ()
    J: tuple[int, ...] = ()

    def __post_init__(self):
        for name in ("Ic", "Io", "J"):
            object.__setattr__(self, name, tuple(sorted(int(v) for v in getattr(self, name))))
        if set(self.Ic) & set(self.Io):
            raise DecompositionError(f"subsystem {self.id}: controlled and observed states overlap")

    @property
    def I(self) -> tuple[int, ...]:  # noqa: E743
        return tuple(sorted(set(self.Ic) | set(self.Io)))

    def K(self, n: int) -> tuple[int, ...]:
        return tuple(d for d in range(n) if d not in self.I)

    def L(self, p: int) -> tuple[int, ...]:
        return tuple(d for d in range(p) if d not in self.J)


def validate_decomposition(subsystems: Sequence[SubsystemSpec], n: int, p: int) -> None:
    """Raise unless the controlled states and the controls are both partitioned."""
    for kind, size, attr in (("state", n, "Ic"), ("control", p, "J")):
        seen = set()
        for s in subsystems:
            for d in getattr(s, attr):
                if not 0 <= d < size:
                    raise DecompositionError(f"subsystem {s.id}: {kind} index {d} out of range")
                if d in seen:
                    raise OverlapError(d, kind)
                seen.add(d)
        for d in range(size):
            if d not in seen:
                raise UncoveredError(d, kind)
    for s in subsystems:
        if any(not 0 <= d < n for d in s.Io):
            raise DecompositionError(f"subsystem {s.id}: observed index out of range")


@dataclass
class SubsystemAbstraction:
    """Symbolic model of one subsystem along a cell plan.

    ``partitions[k]`` is the partition used at step ``k``: a duplicated cell
    of the plan gets its own refinement at each step it appears.
    ``controls`` lists the discrete values of ``u_J`` in the order in which
    they are tried.
    """

    spec: SubsystemSpec
    cells: CellSequence
    controls: np.ndarray
    evaluator: ReachEvaluator
    arity: int = 2
    partitions: list[RefinedPartition] = field(default=None)

    def __post_init__(self):
        self.controls = np.atleast_2d(np.asarray(self.controls, dtype=float))
        sysU = self.evaluator.system.U
        if self.controls.shape[1] != len(self.spec.J):
            raise DecompositionError(f"subsystem {self.spec.id}: control values must have {len(self.spec.J)} entries")
        UJ = project(sysU, self.spec.J)
        if np.any(self.controls < UJ.lo) or np.any(self.controls > UJ.hi):
            raise DecompositionError(f"subsystem {self.spec.id}: control values outside the control set")
        if self.partitions is None:
            base = self.cells.partition.project(self.spec.I)
            self.partitions = [RefinedPartition(base, self.arity) for _ in range(self.cells.r + 1)]

    @property
    def dims(self) -> tuple[int, ...]:
        return self.spec.I

    @property
    def system(self):
        return self.evaluator.system

    def cell(self, k: int) -> int:
        """Base cell of ``partitions[k]`` holding the projection of ``sigma^k``."""
        return self.cells.partition.project_cell(self.cells.cells[k], self.spec.I)

    def symbols(self, k: int) -> list[SymbolId]:
        return self.partitions[k].leaves(self.cell(k))

    def box(self, s: SymbolId, k: int) -> Box:
        return self.partitions[k].decode(s)

    def control_box(self, u: Sequence[float]) -> Box:
        sysU = self.system.U
        return sysU.replace(Box(self.spec.J, tuple(u), tuple(u))) if self.spec.J else sysU


def rs_ag1(abs_: SubsystemAbstraction, s: SymbolId, u, k: int) -> Box:
    """Over-approximation from ``sigma^k`` restricted to ``s`` on ``I``, with ``u_J`` pinned."""
    sb = abs_.box(s, k)
    cell = abs_.cells.box(k)
    if not sb.issubset(project(cell, abs_.dims)):
        raise SymbolOutsideCell(f"symbol {s} is not inside the projection of cell {k}")
    X0 = cell.replace(sb)
    return abs_.evaluator.over_reach(X0, abs_.control_box(u))


def restrict_observed(abs_: SubsystemAbstraction, reach: Box, k: int):
    Io = abs_.spec.Io
    if not Io:
        return reach
    nxt = project(abs_.cells.box(k + 1), Io)
    cut = project(reach, Io).intersect(nxt)
    if cut is EMPTY:
        return EMPTY
    return reach.replace(cut)


def rs_ag2(abs_: SubsystemAbstraction, s: SymbolId, u, k: int):
    """``rs_ag1`` cut down to ``sigma^{k+1}`` on the observed-uncontrolled dimensions, or EMPTY."""
    if not 0 <= k < abs_.cells.r:
        raise ValueError(f"step {k} has no successor step")
    return restrict_observed(abs_, rs_ag1(abs_, s, u, k), k)


def post_i(abs_: SubsystemAbstraction, s: SymbolId, u, k: int) -> set[SymbolId]:
    """Leaves of ``partitions[k + 1]`` meeting the projected ``rs_ag2`` (closed boxes)."""
    reach = rs_ag2(abs_, s, u, k)
    if reach is EMPTY:
        return set()
    return successors(abs_, reach, k)


def successors(abs_: SubsystemAbstraction, reach: Box, k: int) -> set[SymbolId]:
    p = abs_.partitions[k + 1]
    target = project(reach, abs_.dims).intersect(p.domain)
    if target is EMPTY:
        return set()
    return set(p.leaves_intersecting(target))
