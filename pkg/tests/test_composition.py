import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compref.composition import (ComposedPartition, DomainMismatch, Undefined, cap, cap_all,
                                 check_feedback_refinement, check_nonblocking, check_partitions,
                                 closed_loop_trials, decompose, partition_cells, sample_valid_states, simulate)
from compref.geometry import Box, GeometryError, GridPartition, OutOfDomain, RefinedPartition
from compref.specification import check_trace
from compref.synthesis import synthesize
from oracles import cap_brute_force, leaf_boxes, random_refined

DIM_PAIRS = [((0, 1), (1, 2)), ((0,), (0, 1)), ((0, 1), (0, 1)), ((0,), (1,)), ((0, 2), (1, 2))]


def _cells(c: ComposedPartition):
    return {(c_.low, c_.high) for c_ in c}


@pytest.mark.parametrize("seed", range(25))
@pytest.mark.parametrize("dims", DIM_PAIRS[:2])
def test_cap_matches_brute_force(seed, dims):
    rng = np.random.default_rng(seed)
    pi = random_refined(rng, dims[0], splits=3)
    pj = random_refined(rng, dims[1], splits=3)
    assert _cells(cap(pi, pj)) == cap_brute_force(leaf_boxes(pi), leaf_boxes(pj))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.sampled_from(DIM_PAIRS))
def test_cap_is_a_partition(seed, dims):
    rng = np.random.default_rng(seed)
    pi = random_refined(rng, dims[0], splits=5)
    pj = random_refined(rng, dims[1], splits=5)
    comp = cap(pi, pj)
    union_dims = tuple(sorted(set(dims[0]) | set(dims[1])))
    assert comp.dims == union_dims
    domain = Box.uniform(union_dims, 0, 4)
    assert sum(c.volume for c in comp) == pytest.approx(domain.volume, rel=1e-9)
    cells = list(comp)
    for i, a in enumerate(cells):
        assert not any(a.interior_overlap(b) for b in cells[i + 1:])
    # every composed cell refines one symbol of each side
    for c in cells:
        for p in (pi, pj):
            s = decompose(p, c)
            assert p.is_leaf(s)


def test_cap_of_disjoint_dims_is_a_product():
    a = [Box.from_bounds([(0, 1)], (0,)), Box.from_bounds([(1, 2)], (0,))]
    b = [Box.from_bounds([(0, 3)], (1,)), Box.from_bounds([(3, 4)], (1,))]
    assert len(cap(a, b)) == 4


def test_cap_rejects_mismatched_domains():
    a = [Box.from_bounds([(0, 1)])]
    b = [Box.from_bounds([(0, 2)])]
    with pytest.raises(DomainMismatch):
        cap(a, b)
    with pytest.raises(GeometryError):
        partition_cells([])


def test_cap_all_and_locate():
    g = GridPartition.uniform(Box.uniform((0, 1), 0, 2), 2)
    ps = [RefinedPartition(g.project(d)) for d in [(0,), (1,), (0, 1)]]
    comp = cap_all(ps)
    assert len(comp) == 4
    assert comp.locate([1.0, 0.5]) == Box.from_bounds([(1, 2), (0, 1)])
    assert comp.locate([2.0, 2.0]) == Box.from_bounds([(1, 2), (1, 2)])
    with pytest.raises(OutOfDomain):
        comp.locate([2.5, 0.0])
    assert comp.domain == Box.uniform((0, 1), 0, 2)


def test_decompose_rejects_cells_straddling_symbols():
    p = RefinedPartition(GridPartition.uniform(Box.from_bounds([(0, 2)]), 2))
    with pytest.raises(GeometryError):
        decompose(p, Box.from_bounds([(0.5, 1.5)]))


@pytest.fixture(scope="module")
def toy2d_controller(toy2d_problem):
    return synthesize(toy2d_problem).global_controller()


def test_closed_loop_toy2d_satisfies_the_plan(toy2d_controller):
    rep = closed_loop_trials(toy2d_controller, 300, seed=3)
    assert rep.ok and rep.rate == 1.0
    assert not rep.undefined
    assert all(check_trace(toy2d_controller.spec, t) for t in rep.trajectories)


def test_closed_loop_is_reproducible(toy2d_controller):
    a = closed_loop_trials(toy2d_controller, 50, seed=9)
    b = closed_loop_trials(toy2d_controller, 50, seed=9)
    np.testing.assert_array_equal(a.trajectories, b.trajectories)


def test_controller_undefined_outside_valid_symbols(toy2d_controller):
    gc = toy2d_controller
    with pytest.raises(Undefined):
        gc([0.5, 0.5], 0)
    assert gc.symbol(0, [9.0, 0.0], 0) is None
    traj, controls, undefined = simulate(gc, [[0.5, 0.5]], np.random.default_rng(0))
    assert undefined == [(0, 0)]
    assert np.isnan(traj[0, 1:]).all()


def test_sampled_initial_states_are_valid(toy2d_controller):
    x = sample_valid_states(toy2d_controller, 0, 100, np.random.default_rng(1))
    assert all(toy2d_controller.defined(row, 0) for row in x)
    assert all(toy2d_controller.spec.box(0).contains_point(row) for row in x)


def test_feedback_refinement_and_nonblocking_on_toy2d(toy2d_controller):
    fr = check_feedback_refinement(toy2d_controller, samples=500, seed=0)
    assert fr.ok, fr.details[:3]
    nb = check_nonblocking(toy2d_controller, samples=100)
    assert nb.ok and nb, nb.failures[:3]
    assert check_partitions(toy2d_controller).ok


def test_checks_catch_a_corrupted_controller(toy1d_problem):
    gc = synthesize(toy1d_problem).global_controller()
    c = gc.controllers[0]
    key = min(k for k in c.table if k[0] == 0)
    c.table[key] = (0.0,)
    assert not check_nonblocking(gc, samples=0).ok
    assert not check_feedback_refinement(gc, samples=200).ok


def test_tiling_error_detects_gaps_and_overlaps():
    from compref.composition import _tiling_error

    cell = Box.from_bounds([(0, 2), (0, 2)])
    halves = [Box.from_bounds([(0, 1), (0, 2)]), Box.from_bounds([(1, 2), (0, 2)])]
    assert _tiling_error(cell, halves, 1e-9) is None
    assert "volume" in _tiling_error(cell, halves[:1], 1e-9)
    # right total volume, but the pieces overlap and leave a gap
    shifted = [Box.from_bounds([(0, 1.5), (0, 2)]), Box.from_bounds([(1, 2), (0, 1)])]
    assert "overlap" in _tiling_error(cell, shifted, 1e-9)
