"""Plan-guided partition refinement for one subsystem.

The plan is processed backwards.  At each step the symbols of the
current cell whose successors (for some control) all land in the valid set
of the next step are valid.  When a step has no valid symbol, the coarsest
queued step is refined by splitting its invalid symbols, and valid sets are
recomputed from that step down to the current one.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .decomposition import SubsystemAbstraction, rs_ag2
from .geometry import EMPTY, SymbolId, covered_by, project

log = logging.getLogger(__name__)


class Unrealizable(RuntimeError):
    def __init__(self, subsystem, step, cell, depth, evaluations=0, trace=()):
        super().__init__(
            f"subsystem {subsystem}: no valid symbol at step {step} (cell {cell}) "
            f"with refinement depth {depth}"
        )
        self.subsystem = subsystem
        self.step = step
        self.cell = cell
        self.depth = depth
        self.evaluations = evaluations
        self.trace = list(trace)

    def __reduce__(self):
        return (Unrealizable, (self.subsystem, self.step, self.cell, self.depth, self.evaluations, self.trace))


@dataclass
class LocalController:
    """Control values of one subsystem keyed by ``(step, symbol)``."""

    subsystem: int
    J: tuple[int, ...]
    table: dict[tuple[int, SymbolId], tuple[float, ...]] = field(default_factory=dict)
    alternatives: dict[tuple[int, SymbolId], tuple[tuple[float, ...], ...]] | None = None

    def __call__(self, k: int, s: SymbolId):
        return self.table.get((k, s))

    def __len__(self):
        return len(self.table)

    def steps(self) -> list[int]:
        return sorted({k for k, _ in self.table})

    def items(self):
        return sorted(self.table.items())


@dataclass
class ValidTable:
    """Valid symbols ``V^k`` of every step; ``V^k`` doubles as the region it covers."""

    sets: list[set[SymbolId]]

    def __getitem__(self, k):
        return self.sets[k]

    def __len__(self):
        return len(self.sets)


class RefineQueue:
    """Steps awaiting refinement, served coarsest first and then least recently refined."""

    def __init__(self):
        self._entries: dict[int, list[int]] = {}
        self._clock = 0

    def __contains__(self, step):
        return step in self._entries

    def __len__(self):
        return len(self._entries)

    def add(self, step: int) -> None:
        if step not in self._entries:
            self._entries[step] = [0, self._tick()]

    def _tick(self):
        self._clock += 1
        return self._clock

    def depth(self, step: int) -> int:
        return self._entries[step][0]

    def first(self, eligible: Callable[[int], bool] = lambda _s: True):
        ranked = sorted((d, t, s) for s, (d, t) in self._entries.items() if eligible(s))
        return ranked[0][2] if ranked else None

    def refined(self, step: int) -> None:
        entry = self._entries[step]
        entry[0] += 1
        entry[1] = self._tick()


def queue_policy(queue: RefineQueue, eligible: Callable[[int], bool] = lambda _s: True):
    return queue.first(eligible)


def valid_sets(abs_: SubsystemAbstraction, k: int, next_valid: set[SymbolId],
               known: dict[SymbolId, tuple] | None = None, all_controls: bool = False):
    """Valid symbols of step ``k`` and their first admissible control.

    Symbols already in ``known`` keep their control and are not re-evaluated;
    this is sound because ``next_valid`` never shrinks during refinement.
    Returns ``(valid, entries, alternatives)`` where ``alternatives`` is only
    filled when ``all_controls`` is set.
    """
    p_next = abs_.partitions[k + 1]
    known = {} if known is None else known
    valid, entries, alternatives = set(), {}, {}
    for s in abs_.symbols(k):
        if s in known:
            valid.add(s)
            entries[s] = known[s]
            continue
        found = []
        for u in abs_.controls:
            reach = rs_ag2(abs_, s, u, k)
            if reach is EMPTY:
                continue
            if covered_by(project(reach, abs_.dims), next_valid, p_next):
                found.append(tuple(float(v) for v in u))
                if not all_controls:
                    break
        if found:
            valid.add(s)
            entries[s] = found[0]
            if all_controls:
                alternatives[s] = tuple(found)
    return valid, entries, alternatives


@dataclass
class RefinementResult:
    abstraction: SubsystemAbstraction
    valid: ValidTable
    controller: LocalController
    trace: list[int]
    evaluations: int

    @property
    def subsystem(self) -> int:
        return self.abstraction.spec.id

    @property
    def max_depth(self) -> int:
        a = self.abstraction
        return max(a.partitions[k].depth(a.cell(k)) for k in range(a.cells.r + 1))


def refine_subsystem(abs_: SubsystemAbstraction, max_depth: int = 6, all_controls: bool = False,
                     check_progress: bool = False) -> RefinementResult:
    """Refine ``abs_`` until its first step has a valid symbol.

    Raises :class:`Unrealizable` when every queued step is fully valid or has
    reached ``max_depth`` while the current step is still empty.
    """
    r = abs_.cells.r
    sid = abs_.spec.id
    start = abs_.evaluator.count
    V: list[set[SymbolId]] = [set() for _ in range(r + 1)]
    entries: list[dict[SymbolId, tuple]] = [{} for _ in range(r)]
    alts: list[dict] = [{} for _ in range(r)]
    V[r] = set(abs_.symbols(r))
    queue = RefineQueue()
    trace = []

    def update(l):
        V[l], entries[l], new_alts = valid_sets(abs_, l, V[l + 1], entries[l], all_controls)
        alts[l].update(new_alts)

    def splittable(step):
        return [s for s in abs_.symbols(step) if s not in V[step] and s.depth < max_depth]

    for k in range(r - 1, -1, -1):
        update(k)
        queue.add(k)
        while not V[k]:
            j = queue.first(lambda step: bool(splittable(step)))
            if j is None:
                depth = abs_.partitions[k].depth(abs_.cell(k))
                raise Unrealizable(sid, k, abs_.cells.cells[k], depth, abs_.evaluator.count - start, trace)
            before = [set(v) for v in V] if check_progress else None
            for s in splittable(j):
                abs_.partitions[j].split(s)
            queue.refined(j)
            trace.append(j)
            for l in range(j, k - 1, -1):
                update(l)
            if check_progress:
                for l in range(r + 1):
                    assert before[l] <= V[l], f"valid set of step {l} shrank"
            log.info(
                "S%s step=%d refined=%d depth=%d |V|=%d evaluations=%d",
                sid, k, j, queue.depth(j), len(V[k]), abs_.evaluator.count - start,
            )

    controller = LocalController(sid, abs_.spec.J)
    for k in range(r):
        for s, u in entries[k].items():
            controller.table[(k, s)] = u
    if all_controls:
        controller.alternatives = {(k, s): a for k in range(r) for s, a in alts[k].items()}
    return RefinementResult(abs_, ValidTable(V), controller, trace, abs_.evaluator.count - start)
