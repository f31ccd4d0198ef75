"""Eight-room underfloor air distribution (UFAD) temperature benchmark.

Rooms are laid out on a 2 x 4 grid, numbered 1..8 (state dimension
``room - 1``)::

    1 3 5 7
    2 4 6 8

Every room exchanges heat with its grid neighbours (through a wall, or an
open door when listed in ``doors``), with the underfloor, ceiling and
outside air, receives cooled air from the underfloor plenum at rate
``-u * b`` and radiation from a body at ``body_temp``.  Room 6 is ventilated
at 75% by ``u6`` and 25% by ``u8``.  All interfaces use degrees Celsius;
the radiation term is evaluated in Kelvin.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numba
import numpy as np

from .dynamics import ControlSystem
from .geometry import Box, GridPartition
from .specification import CellSequence
from .decomposition import SubsystemSpec
from .synthesis import Problem

KELVIN = 273.15

WALLS = ((1, 3), (3, 5), (5, 7), (2, 4), (4, 6), (6, 8), (1, 2), (3, 4), (5, 6), (7, 8))
DOORS = ((1, 3), (4, 6), (7, 8), (2, 4), (5, 6))


@dataclass(frozen=True)
class UfadParams:
    a_wall: float = 1e-5
    a_door: float = 3e-5
    b: float = 2e-4
    c: float = 1e-13
    body_temp: float = 37.0
    underfloor: tuple[float, float] = (15.0, 16.0)
    ceiling: tuple[float, float] = (26.0, 28.0)
    outside: tuple[float, float] = (28.0, 30.0)
    walls: tuple[tuple[int, int], ...] = WALLS
    doors: tuple[tuple[int, int], ...] = DOORS
    mix: tuple[float, float] = (0.75, 0.25)
    domain: tuple[float, float] = (20.0, 30.0)

    def __post_init__(self):
        if not np.isclose(sum(self.mix), 1.0):
            raise ValueError("room 6 ventilation mix must sum to 1")
        walls = {frozenset(w) for w in self.walls}
        for d in self.doors:
            if frozenset(d) not in walls:
                raise ValueError(f"door {d} is not on a wall between neighbouring rooms")

    def coupling(self) -> np.ndarray:
        """Symmetric room-to-room conduction matrix (zero diagonal)."""
        A = np.zeros((8, 8))
        doors = {frozenset(d) for d in self.doors}
        for i, j in self.walls:
            a = self.a_door if frozenset((i, j)) in doors else self.a_wall
            A[i - 1, j - 1] = A[j - 1, i - 1] = a
        return A

    def actuation(self) -> np.ndarray:
        M = np.eye(8)
        M[5, 5], M[5, 7] = self.mix
        return M


class UfadField:
    """Batched vector field ``f(T, u, w)`` with ``w = (T_underfloor, T_ceiling, T_outside)``.

    ``flow`` is a compiled RK4 kernel used by :func:`compref.dynamics.integrate`;
    ``__call__`` is the plain numpy reference of the same field.
    """

    def __init__(self, params: UfadParams, fused: bool = True):
        self.params = params
        self.A = params.coupling()
        self.degree = self.A.sum(axis=1)
        self.M = params.actuation()
        self.body4 = (params.body_temp + KELVIN) ** 4
        if not fused:
            self.flow = None

    def __call__(self, T, u, w):
        p = self.params
        Tu, Tc, To = w[..., 0:1], w[..., 1:2], w[..., 2:3]
        conduction = T @ self.A.T - self.degree * T + p.a_wall * ((Tu - T) + (Tc - T) + (To - T))
        ventilation = p.b * (u @ self.M.T) * (T - Tu)
        radiation = p.c * (self.body4 - (T + KELVIN) ** 4)
        return conduction + ventilation + radiation

    def flow(self, x, u, w, h, steps, lo, hi):
        p = self.params
        return _ufad_rk4(x, u, w, h, steps, lo, hi, self.A, self.degree, self.M,
                         p.a_wall, p.b, p.c, self.body4)


@numba.njit(cache=True)
def _ufad_rhs(T, v, w, A, degree, a_env, b, c, body4, out):
    n = T.shape[0]
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += A[i, j] * T[j]
        s -= degree[i] * T[i]
        s += a_env * ((w[0] - T[i]) + (w[1] - T[i]) + (w[2] - T[i]))
        s += b * v[i] * (T[i] - w[0])
        tk = T[i] + 273.15
        s += c * (body4 - tk * tk * tk * tk)
        out[i] = s


@numba.njit(cache=True)
def _ufad_rk4(x, u, w, h, steps, lo, hi, A, degree, M, a_env, b, c, body4):
    nb, n = x.shape
    out = np.empty_like(x)
    v = np.empty(n)
    T = np.empty(n)
    tmp = np.empty(n)
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    ok = True
    for r in range(nb):
        for i in range(n):
            s = 0.0
            for j in range(u.shape[1]):
                s += M[i, j] * u[r, j]
            v[i] = s
            T[i] = x[r, i]
        for step in range(steps):
            ws = w[step if w.shape[0] > 1 else 0, r]
            _ufad_rhs(T, v, ws, A, degree, a_env, b, c, body4, k1)
            for i in range(n):
                tmp[i] = T[i] + 0.5 * h * k1[i]
            _ufad_rhs(tmp, v, ws, A, degree, a_env, b, c, body4, k2)
            for i in range(n):
                tmp[i] = T[i] + 0.5 * h * k2[i]
            _ufad_rhs(tmp, v, ws, A, degree, a_env, b, c, body4, k3)
            for i in range(n):
                tmp[i] = T[i] + h * k3[i]
            _ufad_rhs(tmp, v, ws, A, degree, a_env, b, c, body4, k4)
            for i in range(n):
                T[i] = T[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                if not (lo[i] <= T[i] <= hi[i]):
                    ok = False
        for i in range(n):
            out[r, i] = T[i]
    return out, ok


def ufad_field(params: UfadParams | None = None, check_points: int = 100) -> ControlSystem:
    params = UfadParams() if params is None else params
    X = Box.uniform(range(8), *params.domain)
    U = Box.uniform(range(8), -1.0, 0.0)
    W = Box.from_bounds([params.underfloor, params.ceiling, params.outside])
    return ControlSystem(UfadField(params), X, U, W, name="ufad8", check_points=check_points)


# interval index per room (0: [20,22] ... 4: [28,30]) at each step
SCHEDULE = (
    (4, 4, 4, 4, 4, 4, 4, 4),
    (4, 4, 4, 4, 4, 4, 3, 3),
    (4, 4, 4, 4, 3, 3, 2, 2),
    (4, 4, 3, 3, 2, 2, 1, 1),
    (3, 3, 2, 2, 1, 1, 0, 0),
)

DECOMPOSITION = (
    SubsystemSpec(1, Ic=(0, 2), J=(0, 2)),
    SubsystemSpec(2, Ic=(3, 5), J=(3, 5)),
    SubsystemSpec(3, Ic=(6, 7), J=(6, 7)),
    SubsystemSpec(4, Ic=(1,), Io=(3,), J=(1,)),
    SubsystemSpec(5, Ic=(4,), Io=(5,), J=(4,)),
)

LEVELS = (-1.0, -0.75, -0.5, -0.25, 0.0)


def control_grid(levels, n_dims: int) -> np.ndarray:
    """All combinations of ``levels`` over ``n_dims`` inputs, last input varying fastest."""
    mesh = np.meshgrid(*[np.asarray(levels, float)] * n_dims, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def ufad_scenario(params: UfadParams | None = None, tau: float = 1800.0, steps: int = 60,
                  cells_per_dim: int = 5, levels=LEVELS, schedule=SCHEDULE) -> Problem:
    system = ufad_field(params)
    grid = GridPartition.uniform(system.X, cells_per_dim)
    spec = CellSequence.from_coords(grid, schedule)
    controls = [control_grid(levels, len(s.J)) for s in DECOMPOSITION]
    return Problem(system, grid, spec, list(DECOMPOSITION), controls, tau=tau, steps=steps, name="ufad8")


def with_overrides(params: UfadParams, overrides: dict) -> UfadParams:
    conv = {}
    for key, value in overrides.items():
        if key in ("walls", "doors"):
            value = tuple(tuple(int(v) for v in pair) for pair in value)
        elif isinstance(value, list):
            value = tuple(float(v) for v in value)
        conv[key] = value
    return replace(params, **conv)


def table1_report(problem: Problem, synthesis=None, finest_depth: int = 4) -> dict:
    """Reach-set evaluation counts of four abstraction methods.

    The measured entry is the number of ``over_reach`` calls made by the
    compositional refinement (one per ``rs_ag1`` evaluation).  The other
    three are counts of one evaluation per (symbol, control) pair, taken at
    the partition obtained by splitting every grid cell ``finest_depth``
    times (``2**finest_depth`` pieces per dimension):

    * compositional, no refinement: ``sum_i prod_{d in I_i} (m_d 2^D) * |U_i|``
    * centralized, no refinement: ``prod_d (m_d 2^D) * prod_i |U_i|``
    * centralized refinement: ``r * sum_{j=0..D} 2^(n j) * prod_i |U_i|``,
      i.e. every non-final step refines its cell through all depths up to
      ``D`` and re-evaluates all symbols with all controls at each depth.

    Here ``m_d`` is the number of grid cells along dimension ``d``, ``n`` the
    state dimension and ``r`` the number of transitions of the plan.
    """
    shape = problem.grid.shape
    n = len(shape)
    fine = [m * 2 ** finest_depth for m in shape]
    n_controls = [len(c) for c in problem.controls]
    comp = sum(int(np.prod([fine[d] for d in s.I], dtype=object)) * nu
               for s, nu in zip(problem.subsystems, n_controls))
    joint_u = int(np.prod(n_controls, dtype=object))
    central = int(np.prod(fine, dtype=object)) * joint_u
    central_ref = problem.spec.r * sum(2 ** (n * j) for j in range(finest_depth + 1)) * joint_u
    report = {
        "finest_depth": finest_depth,
        "compositional_no_refinement": {"count": comp, "kind": "analytic"},
        "centralized_no_refinement": {"count": central, "kind": "analytic"},
        "centralized_refinement": {"count": central_ref, "kind": "analytic"},
        "compositional_refinement": {"count": None, "kind": "measured"},
    }
    if synthesis is not None:
        report["compositional_refinement"]["count"] = synthesis.evaluations
        report["compositional_refinement"]["per_subsystem"] = {
            str(o.subsystem): o.evaluations for o in synthesis.outcomes
        }
    return report
