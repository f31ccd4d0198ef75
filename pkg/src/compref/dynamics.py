"""Sampled dynamics and monotone reachable-set over-approximation.

Vector fields are plain callables ``f(x, u, w)`` broadcasting over leading
batch axes, so that corner trajectories and Monte-Carlo samples are
integrated in one vectorised RK4 sweep.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .geometry import Box

VectorField = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


class MonotonicityError(ValueError):
    pass


class DivergedTrajectory(RuntimeError):
    pass


def _signs(values, size, name):
    if values is None:
        return np.ones(size)
    s = np.asarray(values, dtype=float).reshape(-1)
    if s.shape != (size,) or not np.all(np.isin(s, (-1.0, 1.0))):
        raise ValueError(f"{name} must hold {size} entries in {{-1, +1}}")
    return s


@dataclass
class ControlSystem:
    """Continuous-time ``dx/dt = f(x, u, w)`` (or a discrete map when ``discrete``).

    The signs define the orthant order under which the system is monotone:
    ``state_signs[i] * state_signs[j] * df_i/dx_j >= 0`` off the diagonal
    (on the diagonal as well for discrete maps), and similarly for every
    control and disturbance coordinate.  They are checked by central finite
    differences at ``check_points`` random points when the system is built.
    """

    f: VectorField
    X: Box
    U: Box
    W: Box
    state_signs: Sequence[float] | None = None
    control_signs: Sequence[float] | None = None
    disturbance_signs: Sequence[float] | None = None
    discrete: bool = False
    name: str = ""
    check_points: int = 100
    seed: int = 0

    def __post_init__(self):
        self.state_signs = _signs(self.state_signs, self.n, "state_signs")
        self.control_signs = _signs(self.control_signs, self.p, "control_signs")
        self.disturbance_signs = _signs(self.disturbance_signs, self.q, "disturbance_signs")
        if self.check_points:
            check_monotone(self, self.check_points, np.random.default_rng(self.seed))

    @property
    def n(self) -> int:
        return self.X.ndim

    @property
    def p(self) -> int:
        return self.U.ndim

    @property
    def q(self) -> int:
        return self.W.ndim

    def __call__(self, x, u, w):
        return self.f(x, u, w)


def jacobians(system: ControlSystem, x, u, w, rel_step: float = 1e-6):
    """Central-difference Jacobians of ``f`` w.r.t. x, u and w at a batch of points."""
    out = []
    args = [np.asarray(x, float), np.asarray(u, float), np.asarray(w, float)]
    for pos, box in enumerate((system.X, system.U, system.W)):
        cols = []
        scale = np.maximum(box.width, 1.0)
        for j in range(box.ndim):
            h = rel_step * scale[j]
            plus = [a.copy() for a in args]
            minus = [a.copy() for a in args]
            plus[pos][..., j] += h
            minus[pos][..., j] -= h
            cols.append((system.f(*plus) - system.f(*minus)) / (2 * h))
        out.append(np.stack(cols, axis=-1))
    return tuple(out)


def check_monotone(system: ControlSystem, n_points: int = 100, rng=None) -> None:
    rng = np.random.default_rng(0) if rng is None else rng
    x = rng.uniform(system.X.lo, system.X.hi, size=(n_points, system.n))
    u = rng.uniform(system.U.lo, system.U.hi, size=(n_points, system.p))
    w = rng.uniform(system.W.lo, system.W.hi, size=(n_points, system.q))
    jx, ju, jw = jacobians(system, x, u, w)
    sx = system.state_signs
    scale = max(np.abs(jx).max(), np.abs(ju).max() if ju.size else 0.0, np.abs(jw).max() if jw.size else 0.0, 1e-300)
    tol = 1e-7 * scale
    checks = [("state", jx * np.outer(sx, sx), not system.discrete)]
    checks.append(("control", ju * np.outer(sx, system.control_signs), False))
    checks.append(("disturbance", jw * np.outer(sx, system.disturbance_signs), False))
    for name, signed, skip_diagonal in checks:
        if signed.size == 0:
            continue
        if skip_diagonal:
            signed = signed.copy()
            idx = np.arange(system.n)
            signed[:, idx, idx] = 0.0
        bad = signed < -tol
        if np.any(bad):
            k, i, j = np.argwhere(bad)[0]
            raise MonotonicityError(
                f"declared {name} sign violated: d f[{i}] / d {name}[{j}] has the wrong sign "
                f"({signed[k, i, j]:.3g}) at x={x[k].round(4).tolist()}"
            )


def integrate(system: ControlSystem, x0, u, w, tau: float, steps: int = 60, guard: Box | None = None) -> np.ndarray:
    """Fixed-step RK4 flow of ``system`` over ``[0, tau]`` under constant control ``u``.

    ``w`` is either an array broadcastable to the batch (constant disturbance)
    or a callable ``w(step_index)`` giving the disturbance held during each
    integration step.  For a discrete system one application of the map is
    returned and ``tau``/``steps`` are ignored.
    """
    x = np.asarray(x0, dtype=float)
    u = np.asarray(u, dtype=float)
    f = system.f
    if system.discrete:
        return _guarded(f(x, u, w(0) if callable(w) else np.asarray(w, dtype=float)), guard)
    h = tau / steps
    fused = getattr(f, "flow", None)
    if fused is not None:
        return _fused_flow(fused, system, x, u, w, h, steps, guard)
    wsig = w if callable(w) else (lambda _i, _w=np.asarray(w, dtype=float): _w)
    for i in range(steps):
        wi = wsig(i)
        k1 = f(x, u, wi)
        k2 = f(x + 0.5 * h * k1, u, wi)
        k3 = f(x + 0.5 * h * k2, u, wi)
        k4 = f(x + h * k3, u, wi)
        x = _guarded(x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), guard)
    return x


def _fused_flow(flow, system, x, u, w, h, steps, guard):
    # flow(x, u, w_steps, h, steps, guard_lo, guard_hi) -> (x_end, inside_guard)
    w_at = w if callable(w) else (lambda _i: np.asarray(w, dtype=float))
    shape = np.broadcast_shapes(x.shape[:-1], u.shape[:-1], np.shape(w_at(0))[:-1])
    flat = (-1,)
    xb = np.ascontiguousarray(np.broadcast_to(x, shape + (system.n,)).reshape(flat + (system.n,)))
    ub = np.ascontiguousarray(np.broadcast_to(u, shape + (system.p,)).reshape(flat + (system.p,)))
    n_w = steps if callable(w) else 1
    wb = np.stack([np.broadcast_to(w_at(i), shape + (system.q,)).reshape(flat + (system.q,)) for i in range(n_w)])
    if guard is None:
        lo, hi = np.full(system.n, -np.inf), np.full(system.n, np.inf)
    else:
        lo, hi = guard.lo, guard.hi
    out, ok = flow(xb, ub, np.ascontiguousarray(wb), h, steps, lo, hi)
    if not ok:
        raise DivergedTrajectory(f"trajectory left the guard box {guard}")
    return out.reshape(shape + (system.n,))


def _guarded(x, guard):
    if not np.all(np.isfinite(x)):
        raise DivergedTrajectory("non-finite state during integration")
    if guard is not None and (np.any(x < guard.lo) or np.any(x > guard.hi)):
        raise DivergedTrajectory(f"trajectory left the guard box {guard}")
    return x


def guard_box(X: Box, factor: float = 2.0) -> Box:
    """``X`` scaled by ``factor`` about its center."""
    half = 0.5 * factor * X.width
    return Box(X.dims, tuple(X.center - half), tuple(X.center + half))


@dataclass
class ReachEvaluator:
    """Over-approximation engine for one system and sampling period.

    ``count`` is the number of ``over_reach`` evaluations performed so far.
    """

    system: ControlSystem
    tau: float
    steps: int = 60
    guard_factor: float = 2.0
    count: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self):
        self.guard = guard_box(self.system.X, self.guard_factor)

    def __getstate__(self):
        state = dict(self.__dict__)
        state.pop("_lock", None)
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()

    def integrate(self, x0, u, w) -> np.ndarray:
        return integrate(self.system, x0, u, w, self.tau, self.steps, self.guard)

    def corners(self, X0: Box, Up: Box) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Lower/upper corners (in the monotone order) of initial states, controls and disturbances."""
        sys = self.system
        xs = np.stack([np.where(sys.state_signs > 0, X0.lo, X0.hi), np.where(sys.state_signs > 0, X0.hi, X0.lo)])
        sx_u = sys.control_signs
        us = np.stack([np.where(sx_u > 0, Up.lo, Up.hi), np.where(sx_u > 0, Up.hi, Up.lo)])
        sw = sys.disturbance_signs
        ws = np.stack([np.where(sw > 0, sys.W.lo, sys.W.hi), np.where(sw > 0, sys.W.hi, sys.W.lo)])
        return xs, us, ws

    def over_reach(self, X0: Box, Up: Box) -> Box:
        """Box containing every state reachable at ``tau`` from ``X0`` under constant ``u`` in ``Up``.

        Both extreme corners are integrated in one batch.  The
        result is exact up to the RK4 discretisation error; no rigorous
        enclosure of that error is attempted.
        """
        with self._lock:
            self.count += 1
        if X0.ndim != self.system.n or Up.ndim != self.system.p:
            raise ValueError("over_reach needs full-dimensional initial and control boxes")
        xs, us, ws = self.corners(X0, Up)
        end = self.integrate(xs, us, ws)
        return Box(X0.dims, tuple(end.min(axis=0)), tuple(end.max(axis=0)))

    def sample_reach(self, X0: Box, Up: Box, n: int, rng=None) -> np.ndarray:
        """``n`` flow endpoints from uniform initial states, controls and step-wise random disturbances."""
        if n < 1:
            raise ValueError("n must be at least 1")
        rng = np.random.default_rng() if rng is None else rng
        sys = self.system
        x0 = rng.uniform(X0.lo, X0.hi, size=(n, sys.n))
        u = rng.uniform(Up.lo, Up.hi, size=(n, sys.p))
        steps = 1 if sys.discrete else self.steps
        w = rng.uniform(sys.W.lo, sys.W.hi, size=(steps, n, sys.q))
        return self.integrate(x0, u, lambda i: w[i])


def linear_field(A, B, E, c=None) -> VectorField:
    """``f(x, u, w) = A x + B u + E w + c`` as a batched callable."""
    return LinearField(np.asarray(A, float), np.asarray(B, float), np.asarray(E, float),
                       None if c is None else np.asarray(c, float))


class LinearField:
    def __init__(self, A, B, E, c=None):
        self.A, self.B, self.E = A, B, E
        self.c = np.zeros(A.shape[0]) if c is None else c

    def __call__(self, x, u, w):
        return x @ self.A.T + u @ self.B.T + w @ self.E.T + self.c


def linear_signs(A, B, E, discrete=False):
    """Orthant signs making an affine system monotone, or ``None`` when none exists.

    Only the cooperative case (all signs positive) and the trivial sign
    flips of uncoupled coordinates are attempted.
    """
    A, B, E = (np.asarray(M, float) for M in (A, B, E))
    off = A.copy()
    if not discrete:
        np.fill_diagonal(off, 0.0)
    if np.any(off < 0):
        return None
    su = np.where(np.all(B >= 0, axis=0), 1.0, np.where(np.all(B <= 0, axis=0), -1.0, 0.0))
    sw = np.where(np.all(E >= 0, axis=0), 1.0, np.where(np.all(E <= 0, axis=0), -1.0, 0.0))
    if np.any(su == 0) or np.any(sw == 0):
        return None
    return np.ones(A.shape[0]), su, sw
