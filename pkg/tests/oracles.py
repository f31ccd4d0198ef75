"""Independent reference implementations used by the tests."""
from __future__ import annotations

import itertools

import numpy as np

from compref.geometry import Box, GridPartition, RefinedPartition


def random_refined(rng, dims, cells=2, splits=4, low=0.0, high=4.0) -> RefinedPartition:
    """Uniform grid on ``[low, high]^d`` with a few random dyadic splits."""
    grid = GridPartition.uniform(Box.uniform(dims, low, high), cells)
    p = RefinedPartition(grid, 2)
    for _ in range(splits):
        leaves = list(p.all_leaves())
        s = leaves[rng.integers(len(leaves))]
        if s.depth < 3:
            p.split(s)
    return p


def leaf_boxes(p: RefinedPartition) -> list[Box]:
    return [p.decode(s) for s in p.all_leaves()]


def cap_brute_force(ci: list[Box], cj: list[Box]) -> set[tuple]:
    """Maximal boxes whose projections sit inside one cell of each partition.

    Candidates are all boxes with corners on the union of the cell faces;
    the membership condition and the maximality filter are applied by
    direct enumeration.
    """
    di, dj = ci[0].dims, cj[0].dims
    dims = tuple(sorted(set(di) | set(dj)))
    faces = []
    for d in dims:
        vals = set()
        for c in ci + cj:
            if d in c.dims:
                vals.update(c.bounds(d))
        faces.append(sorted(vals))
    intervals = [[(a, b) for a, b in itertools.combinations(f, 2)] for f in faces]

    def inside(cand, cells, cdims):
        lo = [cand[dims.index(d)][0] for d in cdims]
        hi = [cand[dims.index(d)][1] for d in cdims]
        return any(all(c.low[k] <= lo[k] and hi[k] <= c.high[k] for k in range(len(cdims))) for c in cells)

    cands = [c for c in itertools.product(*intervals) if inside(c, ci, di) and inside(c, cj, dj)]
    lo = np.array([[iv[0] for iv in c] for c in cands])
    hi = np.array([[iv[1] for iv in c] for c in cands])
    contains = np.all(lo[None, :] <= lo[:, None], axis=2) & np.all(hi[:, None] <= hi[None, :], axis=2)
    strict = contains & ~np.eye(len(cands), dtype=bool)
    maximal = ~strict.any(axis=1)
    return {(tuple(lo[k]), tuple(hi[k])) for k in np.flatnonzero(maximal)}


def union_covers(boxes: list[Box], b: Box, rng, n=5000) -> bool:
    """Monte-Carlo membership of ``n`` uniform points of ``b`` in the union of ``boxes``."""
    x = rng.uniform(b.lo, b.hi, size=(n, b.ndim))
    if not boxes:
        return False
    lo = np.array([c.lo for c in boxes])
    hi = np.array([c.hi for c in boxes])
    hit = np.any(np.all((lo[None] <= x[:, None]) & (x[:, None] <= hi[None]), axis=2), axis=1)
    return bool(hit.all())


def toy1d_flow(x0, u, w, tau):
    """Closed-form flow of ``dx/dt = -x + u + w`` with constant inputs."""
    e = np.exp(-tau)
    return x0 * e + (u + w) * (1.0 - e)
