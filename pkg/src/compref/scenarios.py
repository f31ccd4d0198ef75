"""Named problems and TOML run configurations.

A configuration either names a built-in scenario (``ufad8``, ``toy1d``,
``toy2d``) and optionally overrides some of its parameters, or describes an
affine system ``x' = A x + B u + E w + c`` (continuous or discrete time)
together with its grid, decomposition, control values and plan.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .decomposition import SubsystemSpec
from .dynamics import ControlSystem, linear_field, linear_signs
from .geometry import Box, GeometryError, GridPartition
from .specification import CellSequence
from .synthesis import Problem
from .ufad import LEVELS, SCHEDULE, UfadParams, control_grid, ufad_scenario, with_overrides

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    pass


def toy1d(w_bound: float = 0.45) -> Problem:
    """``dx/dt = -x + u + w`` on [0, 4] driven from [3, 4] down to [1, 2]."""
    system = ControlSystem(linear_field([[-1.0]], [[1.0]], [[1.0]]), Box.from_bounds([(0, 4)]),
                           Box.from_bounds([(0, 4)]), Box.from_bounds([(-w_bound, w_bound)]), name="toy1d")
    grid = GridPartition.uniform(system.X, 4)
    spec = CellSequence.from_coords(grid, [(3,), (2,), (1,), (1,)])
    controls = [np.linspace(0, 4, 9)[:, None]]
    return Problem(system, grid, spec, [SubsystemSpec(1, Ic=(0,), J=(0,))], controls,
                   tau=1.0, steps=40, name="toy1d")


def toy2d(coupling: float = 0.1, w_bound: float = 0.2) -> Problem:
    """Cooperative linear pair; subsystem 1 also observes the state of subsystem 2."""
    A = [[-1.0, coupling], [coupling, -1.0]]
    system = ControlSystem(linear_field(A, np.eye(2), [[1.0], [1.0]]), Box.uniform(range(2), 0, 4),
                           Box.uniform(range(2), 0, 4), Box.from_bounds([(-w_bound, w_bound)]), name="toy2d")
    grid = GridPartition.uniform(system.X, 4)
    spec = CellSequence.from_coords(grid, [(3, 3), (2, 2), (1, 1), (1, 0)])
    levels = np.linspace(0, 4, 9)[:, None]
    subsystems = [SubsystemSpec(1, Ic=(0,), Io=(1,), J=(0,)), SubsystemSpec(2, Ic=(1,), J=(1,))]
    return Problem(system, grid, spec, subsystems, [levels, levels], tau=1.0, steps=40, name="toy2d")


@dataclass
class RunConfig:
    scenario: str = "ufad8"
    params: dict = field(default_factory=dict)
    system: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    subsystems: list = field(default_factory=list)
    plan: list = field(default_factory=list)
    tau: float | None = None
    steps: int | None = None
    arity: int = 2
    max_depth: int = 6
    seed: int = 0
    trials: int = 500
    samples: int = 500
    threads: int = 1
    out: str = "out"

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(data)

    @property
    def out_dir(self) -> Path:
        return Path(self.out)


def _box(bounds, name) -> Box:
    try:
        return Box.from_bounds([tuple(float(v) for v in b) for b in bounds])
    except (TypeError, ValueError, GeometryError) as exc:
        raise ConfigError(f"{name}: expected a list of [low, high] pairs ({exc})") from exc


def _affine_problem(cfg: RunConfig) -> Problem:
    s = cfg.system
    try:
        A, B, E = (np.atleast_2d(np.asarray(s[k], dtype=float)) for k in ("A", "B", "E"))
        X, U, W = _box(s["X"], "system.X"), _box(s["U"], "system.U"), _box(s["W"], "system.W")
    except KeyError as exc:
        raise ConfigError(f"system: missing key {exc}") from exc
    c = np.asarray(s.get("c", np.zeros(A.shape[0])), dtype=float)
    discrete = bool(s.get("discrete", False))
    if A.shape != (X.ndim, X.ndim) or B.shape != (X.ndim, U.ndim) or E.shape != (X.ndim, W.ndim) or c.shape != (X.ndim,):
        raise ConfigError("system: matrix shapes do not match the dimensions of X, U and W")
    signs = s.get("signs")
    if signs is None:
        signs = linear_signs(A, B, E, discrete)
        if signs is None:
            raise ConfigError("system: no orthant order makes this affine system monotone")
    system = ControlSystem(linear_field(A, B, E, c), X, U, W, *signs, discrete=discrete, name="affine")
    if "cuts" in cfg.grid:
        grid = GridPartition(X, tuple(tuple(float(v) for v in cut) for cut in cfg.grid["cuts"]))
    else:
        grid = GridPartition.uniform(X, cfg.grid.get("cells_per_dim", 4))
    if not cfg.subsystems:
        raise ConfigError("at least one [[subsystems]] table is required")
    subs, controls = [], []
    for i, entry in enumerate(cfg.subsystems):
        sub = SubsystemSpec(int(entry.get("id", i + 1)), tuple(entry["Ic"]), tuple(entry.get("Io", ())),
                            tuple(entry["J"]))
        subs.append(sub)
        if "controls" in entry:
            controls.append(np.asarray(entry["controls"], dtype=float).reshape(-1, len(sub.J)))
        else:
            controls.append(control_grid(entry["levels"], len(sub.J)))
    spec = CellSequence.from_coords(grid, cfg.plan)
    return Problem(system, grid, spec, subs, controls, tau=float(cfg.tau or 1.0), steps=int(cfg.steps or 60),
                   arity=cfg.arity, name="affine")


def _ufad(cfg: RunConfig) -> Problem:
    params = dict(cfg.params)
    levels = params.pop("levels", LEVELS)
    cells = params.pop("cells_per_dim", 5)
    schedule = cfg.plan or SCHEDULE
    try:
        up = with_overrides(UfadParams(), params)
    except TypeError as exc:
        raise ConfigError(f"params: {exc}") from exc
    pb = ufad_scenario(up, tau=float(cfg.tau or 1800.0), steps=int(cfg.steps or 60), cells_per_dim=cells,
                       levels=levels, schedule=schedule)
    pb.arity = cfg.arity
    return pb


def _toy(builder):
    def build(cfg: RunConfig) -> Problem:
        try:
            pb = builder(**cfg.params)
        except TypeError as exc:
            raise ConfigError(f"params: {exc}") from exc
        if cfg.tau is not None:
            pb.tau = float(cfg.tau)
        if cfg.steps is not None:
            pb.steps = int(cfg.steps)
        pb.arity = cfg.arity
        return pb
    return build


SCENARIOS = {"ufad8": _ufad, "toy1d": _toy(toy1d), "toy2d": _toy(toy2d), "affine": _affine_problem}


def build_problem(cfg: RunConfig) -> Problem:
    """Problem described by ``cfg``; every validation failure surfaces as :class:`ConfigError`."""
    if cfg.scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {cfg.scenario!r}; choose from {', '.join(sorted(SCENARIOS))}")
    if cfg.max_depth < 0 or cfg.arity < 2 or cfg.threads < 1:
        raise ConfigError("max_depth must be >= 0, arity >= 2 and threads >= 1")
    try:
        return SCENARIOS[cfg.scenario](cfg)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{type(exc).__name__}: {exc}") from exc
