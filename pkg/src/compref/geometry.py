"""Boxes, grid partitions and hierarchically refined partitions.

Every set handled by the toolkit (partition cells, symbols, reachable-set
over-approximations) is an axis-aligned box over a labelled subset of the
global state dimensions.  Partition membership follows a half-open
convention ``[low, high)`` with the upper face closed only on the upper
boundary of the partition domain, so that ``locate`` is a function.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np


class GeometryError(ValueError):
    pass


class OutOfDomain(GeometryError):
    pass


class _Empty:
    """The empty set; returned by intersections instead of a degenerate box."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "EMPTY"

    def __bool__(self):
        return False

    def __reduce__(self):
        return (_Empty, ())


EMPTY = _Empty()


@dataclass(frozen=True)
class Box:
    """Closed interval product ``[low, high]`` over the dimensions ``dims``."""

    dims: tuple[int, ...]
    low: tuple[float, ...]
    high: tuple[float, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        low = tuple(float(v) for v in self.low)
        high = tuple(float(v) for v in self.high)
        if not (len(dims) == len(low) == len(high)):
            raise GeometryError("dims, low and high must have equal length")
        if any(b <= a for a, b in zip(dims, dims[1:])):
            raise GeometryError(f"dims must be strictly increasing, got {dims}")
        if any(not lo <= hi for lo, hi in zip(low, high)):
            raise GeometryError(f"low must not exceed high: {low} > {high}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)

    @classmethod
    def from_bounds(cls, bounds: Sequence[Sequence[float]], dims: Sequence[int] | None = None) -> "Box":
        bounds = [tuple(b) for b in bounds]
        if dims is None:
            dims = range(len(bounds))
        return cls(tuple(dims), tuple(b[0] for b in bounds), tuple(b[1] for b in bounds))

    @classmethod
    def uniform(cls, dims: Iterable[int], low: float, high: float) -> "Box":
        dims = tuple(dims)
        return cls(dims, (low,) * len(dims), (high,) * len(dims))

    @classmethod
    def point(cls, x: Sequence[float], dims: Sequence[int] | None = None) -> "Box":
        x = tuple(float(v) for v in x)
        return cls(tuple(range(len(x))) if dims is None else tuple(dims), x, x)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.low)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.high)

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def volume(self) -> float:
        return float(np.prod(self.width))

    def bounds(self, dim: int) -> tuple[float, float]:
        i = self.dims.index(dim)
        return self.low[i], self.high[i]

    def contains_point(self, x: Sequence[float]) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(self.lo <= x) and np.all(x <= self.hi))

    def issubset(self, other: "Box") -> bool:
        if self.dims != other.dims:
            raise GeometryError("boxes live on different dimensions")
        return bool(np.all(other.lo <= self.lo) and np.all(self.hi <= other.hi))

    def intersect(self, other: "Box") -> "Box | _Empty":
        if self.dims != other.dims:
            raise GeometryError("boxes live on different dimensions")
        lo = np.maximum(self.lo, other.lo)
        hi = np.minimum(self.hi, other.hi)
        if np.any(hi < lo):
            return EMPTY
        return Box(self.dims, tuple(lo), tuple(hi))

    def replace(self, other: "Box") -> "Box":
        """Overwrite the bounds of the dimensions of ``other`` (a sub-box)."""
        low, high = list(self.low), list(self.high)
        for d, lo, hi in zip(other.dims, other.low, other.high):
            i = self.dims.index(d)
            low[i], high[i] = lo, hi
        return Box(self.dims, tuple(low), tuple(high))

    def interior_overlap(self, other: "Box") -> bool:
        return bool(np.all(np.minimum(self.hi, other.hi) > np.maximum(self.lo, other.lo)))


def project(b: Box, dims: Iterable[int]) -> Box:
    """Projection of ``b`` onto the dimensions ``dims``."""
    dims = tuple(sorted(set(dims)))
    missing = set(dims) - set(b.dims)
    if missing:
        raise GeometryError(f"cannot project onto dims {sorted(missing)} not in {b.dims}")
    idx = [b.dims.index(d) for d in dims]
    return Box(dims, tuple(b.low[i] for i in idx), tuple(b.high[i] for i in idx))


def _interval_index(cuts: np.ndarray, lo: float, hi: float, v: float) -> int:
    if not lo <= v <= hi:
        raise OutOfDomain(f"{v} outside [{lo}, {hi}]")
    return int(np.searchsorted(cuts, v, side="right"))


@dataclass(frozen=True)
class GridPartition:
    """Cartesian product of one interval partition per dimension."""

    domain: Box
    cuts: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        cuts = tuple(tuple(float(c) for c in cs) for cs in self.cuts)
        if len(cuts) != self.domain.ndim:
            raise GeometryError("one cut list per domain dimension is required")
        for cs, lo, hi in zip(cuts, self.domain.low, self.domain.high):
            edges = (lo,) + cs + (hi,)
            if any(b <= a for a, b in zip(edges, edges[1:])):
                raise GeometryError(f"cuts {cs} must be strictly inside ({lo}, {hi}) and sorted")
        object.__setattr__(self, "cuts", cuts)

    @classmethod
    def uniform(cls, domain: Box, cells_per_dim: int | Sequence[int]) -> "GridPartition":
        if np.isscalar(cells_per_dim):
            cells_per_dim = [int(cells_per_dim)] * domain.ndim
        cuts = []
        for lo, hi, m in zip(domain.low, domain.high, cells_per_dim):
            cuts.append(tuple(np.linspace(lo, hi, m + 1)[1:-1]))
        return cls(domain, tuple(cuts))

    @property
    def dims(self) -> tuple[int, ...]:
        return self.domain.dims

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(cs) + 1 for cs in self.cuts)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape, dtype=object))

    def edges(self, axis: int) -> tuple[float, ...]:
        return (self.domain.low[axis],) + self.cuts[axis] + (self.domain.high[axis],)

    def cell_coords(self, cell: int) -> tuple[int, ...]:
        return tuple(int(c) for c in np.unravel_index(cell, self.shape))

    def cell_index(self, coords: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(coords), self.shape))

    def cell_box(self, cell: int) -> Box:
        coords = self.cell_coords(cell)
        low = tuple(self.edges(a)[c] for a, c in enumerate(coords))
        high = tuple(self.edges(a)[c + 1] for a, c in enumerate(coords))
        return Box(self.dims, low, high)

    def locate_cell(self, x: Sequence[float]) -> int:
        coords = [
            min(_interval_index(np.asarray(cs), lo, hi, v), len(cs))
            for cs, lo, hi, v in zip(self.cuts, self.domain.low, self.domain.high, x)
        ]
        return self.cell_index(coords)

    def project(self, dims: Iterable[int]) -> "GridPartition":
        dims = tuple(sorted(set(dims)))
        idx = [self.dims.index(d) for d in dims]
        return GridPartition(project(self.domain, dims), tuple(self.cuts[i] for i in idx))

    def project_cell(self, cell: int, dims: Iterable[int]) -> int:
        """Index of the cell of ``self.project(dims)`` underlying ``cell``."""
        dims = tuple(sorted(set(dims)))
        coords = self.cell_coords(cell)
        sub = [coords[self.dims.index(d)] for d in dims]
        return int(np.ravel_multi_index(tuple(sub), tuple(self.shape[self.dims.index(d)] for d in dims)))

    def cells_intersecting(self, b: Box) -> list[int]:
        """Cells whose closed box meets the closed box ``b`` (same dims)."""
        ranges = []
        for a in range(len(self.dims)):
            e = np.asarray(self.edges(a))
            lo, hi = b.low[a], b.high[a]
            if lo > e[-1] or hi < e[0]:
                return []
            first = max(int(np.searchsorted(e, lo, side="left")) - 1, 0)
            last = min(int(np.searchsorted(e, hi, side="right")) - 1, len(e) - 2)
            ranges.append(range(first, last + 1))
        return [self.cell_index(c) for c in itertools.product(*ranges)]


class SymbolId(NamedTuple):
    """A leaf of a refined partition: base cell plus the child indices taken."""

    cell: int
    path: tuple[int, ...] = ()

    @property
    def depth(self) -> int:
        return len(self.path)

    def child(self, index: int) -> "SymbolId":
        return SymbolId(self.cell, self.path + (index,))

    @property
    def parent(self) -> "SymbolId":
        return SymbolId(self.cell, self.path[:-1])

    def __str__(self):
        return f"{self.cell}:{'.'.join(map(str, self.path))}"


def _child_box(b: Box, index: int, arity: int) -> Box:
    low, high = [], []
    for lo, hi in zip(b.low, b.high):
        digit = index % arity
        index //= arity
        step = (hi - lo) / arity
        low.append(lo + digit * step)
        high.append(hi if digit == arity - 1 else lo + (digit + 1) * step)
    return Box(b.dims, tuple(low), tuple(high))


class RefinedPartition:
    """A grid partition whose cells can be split recursively into sub-boxes.

    Each base cell carries an ``arity**d``-ary split tree; the leaves of all
    trees are the symbols.  Only split nodes are stored, so an untouched
    partition costs nothing regardless of the number of base cells.
    """

    def __init__(self, base: GridPartition, arity: int = 2):
        if arity < 2:
            raise GeometryError("split arity must be at least 2")
        self.base = base
        self.arity = int(arity)
        self._split: set[SymbolId] = set()
        self._boxes: dict[SymbolId, Box] = {}

    @property
    def dims(self) -> tuple[int, ...]:
        return self.base.dims

    @property
    def domain(self) -> Box:
        return self.base.domain

    @property
    def n_children(self) -> int:
        return self.arity ** len(self.dims)

    def copy(self) -> "RefinedPartition":
        other = RefinedPartition(self.base, self.arity)
        other._split = set(self._split)
        return other

    def __eq__(self, other):
        if not isinstance(other, RefinedPartition):
            return NotImplemented
        return self.base == other.base and self.arity == other.arity and self._split == other._split

    def __getstate__(self):
        return {"base": self.base, "arity": self.arity, "_split": self._split}

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._boxes = {}

    def is_leaf(self, s: SymbolId) -> bool:
        if s in self._split or not 0 <= s.cell < self.base.n_cells:
            return False
        node = SymbolId(s.cell)
        for i in s.path:
            if node not in self._split or not 0 <= i < self.n_children:
                return False
            node = node.child(i)
        return True

    def decode(self, s: SymbolId) -> Box:
        b = self._boxes.get(s)
        if b is None:
            if s.path:
                b = _child_box(self.decode(s.parent), s.path[-1], self.arity)
            else:
                b = self.base.cell_box(s.cell)
            self._boxes[s] = b
        return b

    def leaves(self, cell: int) -> list[SymbolId]:
        """Leaves of the tree of ``cell`` in depth-first order."""
        out = []
        stack = [SymbolId(cell)]
        while stack:
            node = stack.pop()
            if node in self._split:
                stack.extend(node.child(i) for i in reversed(range(self.n_children)))
            else:
                out.append(node)
        return out

    def all_leaves(self) -> Iterator[SymbolId]:
        touched = sorted({s.cell for s in self._split})
        touched_set = set(touched)
        for cell in range(self.base.n_cells):
            if cell in touched_set:
                yield from self.leaves(cell)
            else:
                yield SymbolId(cell)

    def depth(self, cell: int) -> int:
        return max(s.depth for s in self.leaves(cell))

    def split(self, s: SymbolId) -> list[SymbolId]:
        if not self.is_leaf(s):
            raise GeometryError(f"{s} is not a leaf")
        self._split.add(s)
        return [s.child(i) for i in range(self.n_children)]

    def ensure_leaf(self, s: SymbolId) -> None:
        """Split ancestors of ``s`` as needed so that ``s`` becomes a leaf."""
        node = SymbolId(s.cell)
        for i in s.path:
            if node not in self._split:
                self.split(node)
            node = node.child(i)
        if not self.is_leaf(s):
            raise GeometryError(f"{s} is already split")

    def locate(self, x: Sequence[float]) -> SymbolId:
        """Unique leaf containing ``x`` (half-open, closed on the domain top)."""
        x = np.asarray(x, dtype=float)
        try:
            node = SymbolId(self.base.locate_cell(x))
        except OutOfDomain as exc:
            raise OutOfDomain(f"point {x.tolist()} outside {self.domain}") from exc
        while node in self._split:
            b = self.decode(node)
            index, scale = 0, 1
            for v, lo, hi in zip(x, b.low, b.high):
                step = (hi - lo) / self.arity
                digit = int((v - lo) // step) if step > 0 else 0
                digit = min(max(digit, 0), self.arity - 1)
                # floating point guard: keep the half-open rule exact at child faces
                edge = lo + digit * step
                if v < edge and digit > 0:
                    digit -= 1
                elif digit < self.arity - 1 and v >= lo + (digit + 1) * step:
                    digit += 1
                index += digit * scale
                scale *= self.arity
            node = node.child(index)
        return node

    def leaves_intersecting(self, b: Box) -> list[SymbolId]:
        """Leaves whose closed box meets the closed box ``b``."""
        if b.dims != self.dims:
            raise GeometryError(f"box dims {b.dims} differ from partition dims {self.dims}")
        out = []
        stack = [SymbolId(c) for c in reversed(self.base.cells_intersecting(b))]
        blo, bhi = b.lo, b.hi
        while stack:
            node = stack.pop()
            nb = self.decode(node)
            if np.any(nb.hi < blo) or np.any(bhi < nb.lo):
                continue
            if node in self._split:
                stack.extend(node.child(i) for i in reversed(range(self.n_children)))
            else:
                out.append(node)
        return out


def covered_by(b: Box, region: Iterable[SymbolId], p: RefinedPartition) -> bool:
    """Exact test of ``b`` being inside the union of the closed boxes of ``region``."""
    if b.dims != p.dims:
        raise GeometryError(f"box dims {b.dims} differ from partition dims {p.dims}")
    if not b.issubset(p.domain):
        return False
    region = region if isinstance(region, (set, frozenset)) else set(region)
    hits = p.leaves_intersecting(b)
    invalid = [s for s in hits if s not in region]
    if not invalid:
        return True
    blo, bhi = b.lo, b.hi
    if np.all(bhi > blo):
        # full-dimensional b: covered iff no excluded leaf overlaps it with positive volume
        for s in invalid:
            sb = p.decode(s)
            if np.all(np.minimum(sb.hi, bhi) > np.maximum(sb.lo, blo)):
                return False
        return True
    return _covered_by_enumeration(b, [p.decode(s) for s in hits if s in region], hits, p)


def _covered_by_enumeration(b: Box, valid: list[Box], hits: list[SymbolId], p: RefinedPartition) -> bool:
    # Degenerate b: test one representative per elementary cell of the
    # arrangement induced by all leaf faces crossing b.
    if not valid:
        return False
    vlo = np.array([v.low for v in valid])
    vhi = np.array([v.high for v in valid])
    axes = []
    for a in range(b.ndim):
        lo, hi = b.low[a], b.high[a]
        if hi == lo:
            axes.append(np.array([lo]))
            continue
        faces = {lo, hi}
        for s in hits:
            sb = p.decode(s)
            faces.update(v for v in (sb.low[a], sb.high[a]) if lo < v < hi)
        f = np.array(sorted(faces))
        axes.append(0.5 * (f[:-1] + f[1:]))
    for rep in itertools.product(*axes):
        rep = np.asarray(rep)
        if not np.any(np.all((vlo <= rep) & (rep <= vhi), axis=1)):
            return False
    return True
