"""Composition of subsystem partitions and controllers, and closed-loop checks.

The composed partition is only materialised for small examples.  The global
controller never builds it: the symbol of subsystem ``i`` holding a state
``x`` is found by locating ``x`` in that subsystem's partition directly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

from .decomposition import SubsystemAbstraction, post_i, rs_ag2
from .dynamics import integrate
from .geometry import (EMPTY, Box, GeometryError, GridPartition, OutOfDomain, RefinedPartition, SymbolId, covered_by,
                       project)
from .refinement import LocalController
from .specification import check_trace


class DomainMismatch(GeometryError):
    pass


class Undefined(LookupError):
    """No control: subsystem ``subsystem`` has no valid symbol holding the state at ``step``."""

    def __init__(self, subsystem, step):
        super().__init__(f"controller of subsystem {subsystem} is undefined at step {step}")
        self.subsystem = subsystem
        self.step = step


# -- partition composition ----------------------------------------------------


@dataclass(frozen=True)
class ComposedPartition:
    """Explicit list of the maximal boxes of a composition of partitions."""

    dims: tuple[int, ...]
    cells: tuple[Box, ...]
    members: tuple = field(default=(), compare=False, repr=False)

    def __len__(self):
        return len(self.cells)

    def __iter__(self):
        return iter(self.cells)

    @property
    def domain(self) -> Box:
        lo = np.min([c.lo for c in self.cells], axis=0)
        hi = np.max([c.hi for c in self.cells], axis=0)
        return Box(self.dims, tuple(lo), tuple(hi))

    def locate(self, x: Sequence[float]) -> Box:
        """Cell holding ``x``; ties on shared faces go to the upper cell as in the grid convention."""
        x = np.asarray(x, dtype=float)
        top = self.domain.hi
        for c in self.cells:
            if np.all(c.lo <= x) and np.all((x < c.hi) | ((x == c.hi) & (c.hi == top))):
                return c
        raise OutOfDomain(f"point {x.tolist()} outside the composed partition")


def partition_cells(X) -> tuple[tuple[int, ...], list[Box]]:
    """Dimensions and cell boxes of any partition-like object."""
    if isinstance(X, ComposedPartition):
        return X.dims, list(X.cells)
    if isinstance(X, RefinedPartition):
        return X.dims, [X.decode(s) for s in X.all_leaves()]
    if isinstance(X, GridPartition):
        return X.dims, [X.cell_box(c) for c in range(X.n_cells)]
    boxes = list(X)
    if not boxes:
        raise GeometryError("a partition needs at least one cell")
    dims = boxes[0].dims
    if any(b.dims != dims for b in boxes):
        raise GeometryError("all cells of a partition must share their dimensions")
    return dims, boxes


def _hull(boxes, dims, keep):
    idx = [dims.index(d) for d in keep]
    lo = np.min([[b.low[i] for i in idx] for b in boxes], axis=0)
    hi = np.max([[b.high[i] for i in idx] for b in boxes], axis=0)
    return lo, hi


def cap(Xi, Xj) -> ComposedPartition:
    """Coarsest common refinement of two partitions on possibly overlapping dimensions.

    Each pair of cells overlapping with positive volume on the shared
    dimensions yields one cell: their intersection on the shared
    dimensions, and each member's own bounds on its private dimensions.
    """
    di, ci = partition_cells(Xi)
    dj, cj = partition_cells(Xj)
    shared = tuple(sorted(set(di) & set(dj)))
    dims = tuple(sorted(set(di) | set(dj)))
    if shared:
        lo_i, hi_i = _hull(ci, di, shared)
        lo_j, hi_j = _hull(cj, dj, shared)
        if not (np.allclose(lo_i, lo_j, rtol=0, atol=1e-12) and np.allclose(hi_i, hi_j, rtol=0, atol=1e-12)):
            raise DomainMismatch(f"partitions cover different domains on shared dims {shared}")
    Li, Hi = np.array([c.low for c in ci]), np.array([c.high for c in ci])
    Lj, Hj = np.array([c.low for c in cj]), np.array([c.high for c in cj])
    if shared:
        si = [di.index(d) for d in shared]
        sj = [dj.index(d) for d in shared]
        lo = np.maximum(Li[:, None, si], Lj[None, :, sj])
        hi = np.minimum(Hi[:, None, si], Hj[None, :, sj])
        pairs = np.argwhere(np.all(hi > lo, axis=2))
    else:
        pairs = np.argwhere(np.ones((len(ci), len(cj)), dtype=bool))
    cells = []
    for a, b in pairs:
        low, high = [], []
        for d in dims:
            if d in shared:
                low.append(max(Li[a, di.index(d)], Lj[b, dj.index(d)]))
                high.append(min(Hi[a, di.index(d)], Hj[b, dj.index(d)]))
            elif d in di:
                low.append(Li[a, di.index(d)])
                high.append(Hi[a, di.index(d)])
            else:
                low.append(Lj[b, dj.index(d)])
                high.append(Hj[b, dj.index(d)])
        cells.append(Box(dims, tuple(low), tuple(high)))
    cells.sort(key=lambda c: (c.low, c.high))
    return ComposedPartition(dims, tuple(cells), (Xi, Xj))


def cap_all(partitions: Iterable) -> ComposedPartition:
    return reduce(cap, partitions)


def decompose(p: RefinedPartition, item) -> SymbolId:
    """Leaf of ``p`` containing the projection of a state or of a composed cell."""
    if isinstance(item, Box):
        b = project(item, p.dims)
        s = p.locate(b.center)
        if not b.issubset(p.decode(s)):
            raise GeometryError(f"{item} is not inside a single symbol of the partition")
        return s
    x = np.asarray(item, dtype=float)
    return p.locate(x)


# -- composed controller ------------------------------------------------------


@dataclass
class GlobalController:
    """Product of the local controllers, applied through the per-step partitions."""

    problem: object
    abstractions: list[SubsystemAbstraction]
    controllers: list[LocalController]

    @classmethod
    def from_results(cls, problem, results) -> "GlobalController":
        return cls(problem, [r.abstraction for r in results], [r.controller for r in results])

    @property
    def spec(self):
        return self.problem.spec

    @property
    def system(self):
        return self.problem.system

    @property
    def r(self) -> int:
        return self.spec.r

    def symbol(self, i: int, x, k: int) -> SymbolId | None:
        a = self.abstractions[i]
        try:
            return a.partitions[k].locate(np.asarray(x, dtype=float)[list(a.dims)])
        except OutOfDomain:
            return None

    def symbols(self, x, k: int) -> list[SymbolId | None]:
        return [self.symbol(i, x, k) for i in range(len(self.abstractions))]

    def valid(self, i: int, k: int) -> set[SymbolId]:
        if k == self.r:
            return set(self.abstractions[i].symbols(k))
        return {s for (step, s) in self.controllers[i].table if step == k}

    def __call__(self, x, k: int) -> np.ndarray:
        u = np.full(self.system.p, np.nan)
        for i, (a, c) in enumerate(zip(self.abstractions, self.controllers)):
            s = self.symbol(i, x, k)
            uj = None if s is None else c(k, s)
            if uj is None:
                raise Undefined(a.spec.id, k)
            u[list(a.spec.J)] = uj
        return u

    def defined(self, x, k: int) -> bool:
        try:
            self(x, k)
        except Undefined:
            return False
        return True


def global_control(gc: GlobalController, x, k: int) -> np.ndarray:
    return gc(x, k)


def sample_valid_states(gc: GlobalController, k: int, n: int, rng, max_rounds: int = 200) -> np.ndarray:
    """``n`` states of ``sigma^k`` at which the global controller is defined.

    Controlled coordinates are drawn inside valid symbols of their owning
    subsystem (symbols picked with probability proportional to volume);
    candidates violating another subsystem's observed coordinates are rejected.
    """
    spec = gc.spec
    cell = spec.box(k)
    n_dims = gc.system.n
    pools = []
    for i, a in enumerate(gc.abstractions):
        syms = sorted(gc.valid(i, k))
        if not syms:
            raise Undefined(a.spec.id, k)
        boxes = [a.box(s, k) for s in syms]
        lo = np.array([b.lo for b in boxes])
        hi = np.array([b.hi for b in boxes])
        vol = np.prod(hi - lo, axis=1)
        ic = [a.dims.index(d) for d in a.spec.Ic]
        pools.append((list(a.spec.Ic), lo[:, ic], hi[:, ic], vol / vol.sum()))
    out = []
    for _ in range(max_rounds):
        x = np.tile(cell.center, (n, 1))
        for dims, lo, hi, prob in pools:
            pick = rng.choice(len(prob), size=n, p=prob)
            x[:, dims] = rng.uniform(lo[pick], hi[pick])
        out.extend(row for row in x if gc.defined(row, k))
        if len(out) >= n:
            return np.array(out[:n]).reshape(n, n_dims)
    raise RuntimeError(f"only {len(out)} of {n} valid states found at step {k}")


def _step(gc: GlobalController, x: np.ndarray, u: np.ndarray, rng) -> np.ndarray:
    sys = gc.system
    steps = 1 if sys.discrete else gc.problem.steps
    w = rng.uniform(sys.W.lo, sys.W.hi, size=(steps, len(x), sys.q))
    return integrate(sys, x, u, lambda i: w[i], gc.problem.tau, gc.problem.steps)


# -- closed loop ---------------------------------------------------------------


@dataclass
class ClosedLoopReport:
    trials: int
    satisfied: int
    trajectories: np.ndarray
    undefined: list[tuple[int, int]] = field(default_factory=list)

    @property
    def rate(self) -> float:
        return self.satisfied / self.trials if self.trials else 0.0

    @property
    def ok(self) -> bool:
        return self.satisfied == self.trials


def simulate(gc: GlobalController, x0, rng) -> tuple[np.ndarray, np.ndarray, list[tuple[int, int]]]:
    """Closed-loop trajectories from the rows of ``x0`` with random step-wise disturbances.

    Returns ``(trajectories, controls, undefined)``: arrays of shape
    ``(B, r + 1, n)`` and ``(B, r, p)``, and the ``(trial, step)`` pairs at
    which the controller was undefined (that trajectory is then frozen and
    filled with NaN).
    """
    x = np.atleast_2d(np.asarray(x0, dtype=float))
    B, r = len(x), gc.r
    traj = np.full((B, r + 1, gc.system.n), np.nan)
    controls = np.full((B, r, gc.system.p), np.nan)
    traj[:, 0] = x
    alive = np.ones(B, dtype=bool)
    undefined = []
    for k in range(r):
        for b in np.flatnonzero(alive):
            try:
                controls[b, k] = gc(traj[b, k], k)
            except Undefined:
                alive[b] = False
                undefined.append((int(b), k))
        idx = np.flatnonzero(alive)
        if len(idx):
            traj[idx, k + 1] = _step(gc, traj[idx, k], controls[idx, k], rng)
    return traj, controls, undefined


def closed_loop_trials(gc: GlobalController, trials: int, seed: int = 0) -> ClosedLoopReport:
    """Simulate ``trials`` runs from valid initial states and check every trace against the plan."""
    rng = np.random.default_rng(seed)
    x0 = sample_valid_states(gc, 0, trials, rng)
    traj, _, undefined = simulate(gc, x0, rng)
    ok = sum(1 for t in traj if not np.isnan(t).any() and check_trace(gc.spec, t))
    return ClosedLoopReport(trials, ok, traj, undefined)


# -- abstraction checks --------------------------------------------------------


@dataclass
class FeedbackReport:
    samples: int
    violations: int
    details: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.violations == 0

    @property
    def checked(self) -> int:
        return self.samples

    @property
    def failures(self) -> list[str]:
        return self.details


def check_feedback_refinement(gc: GlobalController, samples: int = 500, seed: int = 0) -> FeedbackReport:
    """Sampled check that concrete successors are matched by abstract ones.

    For random steps ``k`` and states where the controller is defined, the
    successor ``x'`` under the global control and a random disturbance must
    lie in ``sigma^{k+1}`` and, for every subsystem, its symbol at ``k + 1``
    must belong to ``post_i`` of the current symbol under the same control.
    """
    rng = np.random.default_rng(seed)
    ks = np.sort(rng.integers(0, gc.r, size=samples))
    details = []
    posts: dict[tuple[int, int, SymbolId], set] = {}
    for k in np.unique(ks):
        k = int(k)
        x = sample_valid_states(gc, k, int(np.sum(ks == k)), rng)
        u = np.array([gc(row, k) for row in x])
        x1 = _step(gc, x, u, rng)
        nxt = gc.spec.cells[k + 1]
        for row, ui, row1 in zip(x, u, x1):
            try:
                inside = gc.spec.partition.locate_cell(row1) == nxt
            except OutOfDomain:
                inside = False
            if not inside:
                details.append(f"step {k}: successor {row1.round(6).tolist()} left the next cell")
                continue
            for i, a in enumerate(gc.abstractions):
                s = gc.symbol(i, row, k)
                key = (i, k, s)
                if key not in posts:
                    posts[key] = post_i(a, s, ui[list(a.spec.J)], k)
                s1 = gc.symbol(i, row1, k + 1)
                if s1 not in posts[key]:
                    details.append(f"step {k}: subsystem {a.spec.id} symbol {s1} not a successor of {s}")
    return FeedbackReport(samples, len(details), details)


@dataclass
class CheckReport:
    checked: int
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def __bool__(self):
        return self.ok


NonblockingReport = CheckReport


def check_nonblocking(gc: GlobalController, samples: int = 100, seed: int = 0) -> CheckReport:
    """Every controlled symbol has a successor that is itself valid at the next step.

    Exhaustive over the local controllers; the joint part takes sampled
    composed states and checks that one concrete successor is a common
    valid successor of all subsystems.
    """
    failures = []
    checked = 0
    for i, (a, c) in enumerate(zip(gc.abstractions, gc.controllers)):
        for (k, s), u in c.items():
            checked += 1
            if not post_i(a, s, u, k) & gc.valid(i, k + 1):
                failures.append(f"subsystem {a.spec.id} step {k} symbol {s}: no valid successor")
    if samples and not failures:
        rng = np.random.default_rng(seed)
        for k in range(gc.r):
            x = sample_valid_states(gc, k, samples, rng)
            u = np.array([gc(row, k) for row in x])
            x1 = _step(gc, x, u, rng)
            for row, ui, row1 in zip(x, u, x1):
                checked += 1
                for i, a in enumerate(gc.abstractions):
                    s1 = gc.symbol(i, row1, k + 1)
                    post = post_i(a, gc.symbol(i, row, k), ui[list(a.spec.J)], k)
                    if s1 not in post or s1 not in gc.valid(i, k + 1):
                        failures.append(f"step {k}: no common valid successor for subsystem {a.spec.id}")
                        break
    return CheckReport(checked, failures)


def check_controller(gc: GlobalController) -> CheckReport:
    """Exact re-check of every controller entry: its projected reach set lies in the next valid set."""
    failures = []
    checked = 0
    for i, (a, c) in enumerate(zip(gc.abstractions, gc.controllers)):
        for (k, s), u in c.items():
            checked += 1
            if s not in a.symbols(k):
                failures.append(f"subsystem {a.spec.id} step {k}: {s} is not a symbol of the step cell")
                continue
            reach = rs_ag2(a, s, u, k)
            if reach is EMPTY or not covered_by(project(reach, a.dims), gc.valid(i, k + 1), a.partitions[k + 1]):
                failures.append(f"subsystem {a.spec.id} step {k} symbol {s}: successors leave the valid set")
    return CheckReport(checked, failures)


def check_partitions(gc: GlobalController, rel_tol: float = 1e-9) -> CheckReport:
    """Partition laws at every step: each subsystem's leaves tile its projected cell, and so do pairwise caps."""
    failures = []
    checked = 0
    for k in range(gc.r + 1):
        tiles = []
        for a in gc.abstractions:
            boxes = [a.box(s, k) for s in a.symbols(k)]
            tiles.append((project(gc.spec.box(k), a.dims), boxes))
        for i in range(len(tiles)):
            for j in range(i, len(tiles)):
                checked += 1
                if i == j:
                    cell, boxes = tiles[i]
                else:
                    comp = cap(tiles[i][1], tiles[j][1])
                    cell, boxes = project(gc.spec.box(k), comp.dims), list(comp.cells)
                err = _tiling_error(cell, boxes, rel_tol)
                if err:
                    ids = f"{gc.abstractions[i].spec.id},{gc.abstractions[j].spec.id}"
                    failures.append(f"step {k} subsystems {ids}: {err}")
    return CheckReport(checked, failures)


def _tiling_error(cell: Box, boxes: list[Box], rel_tol: float) -> str | None:
    total = sum(b.volume for b in boxes)
    if not np.isclose(total, cell.volume, rtol=rel_tol, atol=0):
        return f"volume {total} differs from {cell.volume}"
    lo = np.array([b.lo for b in boxes])
    hi = np.array([b.hi for b in boxes])
    if np.any(lo < cell.lo - 1e-12) or np.any(hi > cell.hi + 1e-12):
        return "a cell leaves the domain"
    overlap = np.all(np.maximum(lo[:, None], lo[None]) < np.minimum(hi[:, None], hi[None]), axis=2)
    np.fill_diagonal(overlap, False)
    if overlap.any():
        return "cells overlap with positive volume"
    return None
