"""Problem container and the per-subsystem synthesis driver."""
from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .decomposition import SubsystemAbstraction, SubsystemSpec, validate_decomposition
from .dynamics import ControlSystem, ReachEvaluator
from .geometry import GridPartition
from .refinement import RefinementResult, Unrealizable, refine_subsystem
from .specification import CellSequence


@dataclass
class Problem:
    """Everything the refinement needs: system, grid, plan, decomposition and control sets."""

    system: ControlSystem
    grid: GridPartition
    spec: CellSequence
    subsystems: list[SubsystemSpec]
    controls: list[np.ndarray]
    tau: float = 1.0
    steps: int = 60
    arity: int = 2
    name: str = ""

    def __post_init__(self):
        validate_decomposition(self.subsystems, self.system.n, self.system.p)
        if len(self.controls) != len(self.subsystems):
            raise ValueError("one control set per subsystem is required")
        if self.grid.domain != self.system.X:
            raise ValueError("the grid must partition the state space of the system")
        if self.spec.partition != self.grid:
            raise ValueError("the plan must be defined on the problem grid")

    def evaluator(self) -> ReachEvaluator:
        return ReachEvaluator(self.system, self.tau, self.steps)

    def abstraction(self, i: int, evaluator: ReachEvaluator | None = None) -> SubsystemAbstraction:
        return SubsystemAbstraction(self.subsystems[i], self.spec, self.controls[i],
                                    evaluator or self.evaluator(), self.arity)


@dataclass
class Synthesis:
    """Per-subsystem outcomes in subsystem order: a result or the failure that stopped it."""

    problem: Problem
    outcomes: list[RefinementResult | Unrealizable]
    wall_time: float = 0.0

    @property
    def results(self) -> list[RefinementResult]:
        return [o for o in self.outcomes if isinstance(o, RefinementResult)]

    @property
    def failures(self) -> list[Unrealizable]:
        return [o for o in self.outcomes if isinstance(o, Unrealizable)]

    @property
    def ok(self) -> bool:
        return not self.failures

    @property
    def evaluations(self) -> int:
        return sum(o.evaluations for o in self.outcomes)

    def global_controller(self):
        from .composition import GlobalController

        if not self.ok:
            raise self.failures[0]
        return GlobalController.from_results(self.problem, self.results)


def _refine_one(args):
    problem, i, max_depth, all_controls = args
    try:
        return refine_subsystem(problem.abstraction(i), max_depth=max_depth, all_controls=all_controls)
    except Unrealizable as exc:
        return exc


def synthesize(problem: Problem, max_depth: int = 6, threads: int = 1, all_controls: bool = False,
               strict: bool = False) -> Synthesis:
    """Run the refinement of every subsystem independently.

    A subsystem that cannot be made valid is recorded as an
    :class:`~compref.refinement.Unrealizable` outcome; with ``strict`` the
    first such failure is raised instead.  Workers only change the wall
    time, never the outcomes.
    """
    t0 = time.perf_counter()
    jobs = [(problem, i, max_depth, all_controls) for i in range(len(problem.subsystems))]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_refine_one, jobs))
    else:
        outcomes = [_refine_one(job) for job in jobs]
    syn = Synthesis(problem, outcomes, time.perf_counter() - t0)
    if strict and syn.failures:
        raise syn.failures[0]
    return syn
