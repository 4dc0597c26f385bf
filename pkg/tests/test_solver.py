import math

import numpy as np
import pytest
from scipy.ndimage import convolve

from seglab.exceptions import BadAssignment, Blowup, NoConvergence
from seglab.grid import Grid2D, laplacian_values
from seglab.segregated import Reaction, ReactionSpec, SegregatedConfig
from seglab.solver import (
    _MOLLIFIER,
    BoundarySpec,
    CompetitionParams,
    CompetitionProblem,
    beta_continuation,
    class_s_check,
    harmonic_extension,
    make_prototype,
    prototype_sector,
    solve_gp,
    solve_lv,
)


@pytest.fixture(scope="module")
def g64():
    return Grid2D.square(0.0, 1.0, 64)


@pytest.fixture(scope="module")
def gp_ladder(g64):
    bc = BoundarySpec.edge_bumps(g64, ["left", "right"], 1.0)
    problem = CompetitionProblem("gp", ReactionSpec.zero(2), 10.0, bc, g64)
    return beta_continuation(problem, [10.0, 1e2, 1e3, 1e4], tol=1e-8)


def test_params_validation():
    with pytest.raises(ValueError):
        CompetitionParams((0.0,), (0.0, 1.0), 1.0)
    with pytest.raises(ValueError):
        CompetitionParams.symmetric(2, -1.0)
    with pytest.raises(ValueError):
        CompetitionParams((0, 0), (0, 0), 1.0, beta_ij=[[0, 1], [2, 0]])
    p = CompetitionParams.symmetric(3, 5.0, lam=1.0, omega=2.0)
    assert p.h == 3 and p.with_beta(7.0).beta == 7.0
    assert p.reaction()[0] == Reaction.cubic(2.0, 1.0)


def test_boundary_spec(g64):
    bc = BoundarySpec.edge_bumps(g64, ["left", "top"], 2.0)
    t = bc.boundary_values(2, g64.shape)
    assert t[0, 0].max() == pytest.approx(2.0, rel=1e-2) and t[0, 1:].max() == 0
    assert t[1, :, -1].max() > 0
    with pytest.raises(ValueError):
        BoundarySpec.edge_bumps(g64, ["middle"])
    overlapping = np.zeros((2,) + g64.shape)
    overlapping[:, 0, 5] = 1.0
    with pytest.raises(ValueError):
        BoundarySpec("trace", overlapping)
    with pytest.raises(ValueError):
        BoundarySpec("neumann")


def test_harmonic_extension_reproduces_linear(g64):
    X, Y = g64.mesh()
    f = 1.0 + 2.0 * X - 3.0 * Y
    b = f.copy()
    b[1:-1, 1:-1] = 0.0
    out = harmonic_extension(g64, b[None])[0]
    np.testing.assert_allclose(out, f, atol=1e-10)


def test_zero_data_trivial_problem_rejected(g64):
    with pytest.raises(ValueError):
        solve_gp(CompetitionParams.symmetric(2, 10.0), BoundarySpec.zero(), g64)


def test_lv_needs_traces(g64):
    with pytest.raises(ValueError):
        solve_lv(ReactionSpec.zero(2), 1.0, BoundarySpec.zero(), g64)


def test_decoupled_gp_is_harmonic(g64):
    bc = BoundarySpec.edge_bumps(g64, ["left", "right"])
    U, rep = solve_gp(CompetitionParams.symmetric(2, 0.0), bc, g64, tol=1e-10)
    ref = harmonic_extension(g64, bc.boundary_values(2, g64.shape))
    np.testing.assert_allclose(U.values, ref, atol=1e-8)
    assert rep.converged and rep.residual <= 1e-10


def test_relaxation_and_newton_agree(g64):
    bc = BoundarySpec.edge_bumps(g64, ["left", "right"])
    params = CompetitionParams.symmetric(2, 50.0)
    a, _ = solve_gp(params, bc, g64, tol=1e-9)
    b, rb = solve_gp(params, bc, g64, tol=1e-7, newton=False, max_iters=20000)
    assert rb.newton_steps == 0
    np.testing.assert_allclose(a.values, b.values, atol=1e-4)


def test_gp_energy_nonincreasing_during_relaxation(g64):
    bc = BoundarySpec.edge_bumps(g64, ["left", "right"])
    _, rep = solve_gp(CompetitionParams.symmetric(2, 100.0), bc, g64, tol=1e-8, init="random", seed=3)
    hist = np.array(rep.energy_history)
    assert np.all(np.diff(hist) <= 1e-8 * np.abs(hist[:-1]))


def test_continuation_segregates(gp_ladder):
    ov = gp_ladder.overlaps
    assert np.all(np.diff(ov) < 0)
    assert ov[-1] <= 5e-2 * ov[0]
    assert [r.beta for r in gp_ladder.reports] == [10.0, 1e2, 1e3, 1e4]
    U = gp_ladder.final
    assert U.values.min() >= 0
    assert gp_ladder.eps_seg == pytest.approx(U.segregation_ratio())


def test_continuation_ladder_must_increase(g64):
    bc = BoundarySpec.edge_bumps(g64, ["left", "right"])
    problem = CompetitionProblem("gp", ReactionSpec.zero(2), 1.0, bc, g64)
    with pytest.raises(ValueError):
        beta_continuation(problem, [10.0, 5.0])


def test_no_convergence_reports_beta(g64):
    bc = BoundarySpec.edge_bumps(g64, ["left", "right"])
    problem = CompetitionProblem("gp", ReactionSpec.zero(2), 1.0, bc, g64)
    with pytest.raises(NoConvergence) as e:
        beta_continuation(problem, [1e4], tol=1e-14, max_iters=2)
    assert e.value.beta == 1e4


def test_blowup_detected(g64):
    bc = BoundarySpec.edge_bumps(g64, ["left", "right"])
    reaction = ReactionSpec((Reaction.linear(500.0), Reaction.linear(500.0)))
    problem = CompetitionProblem("lv", reaction, 1.0, bc, g64)
    with pytest.raises((Blowup, NoConvergence)):
        beta_continuation(problem, [1.0], tol=1e-8, newton=False, max_iters=500)


def test_prototype_values(grid257):
    U = make_prototype(3, grid257)
    X, Y = grid257.mesh()
    r, th = np.hypot(X, Y), np.arctan2(Y, X)
    np.testing.assert_allclose(U.values.sum(axis=0), np.abs(r**1.5 * np.cos(1.5 * th)), atol=1e-14)
    assert U.h_components == 3


def test_prototype_assignment(grid257):
    U = make_prototype(4, grid257, assignment=[0, 1, 0, 1])
    assert U.h_components == 2
    with pytest.raises(BadAssignment):
        make_prototype(4, grid257, assignment=[0, 0, 1, 1])
    with pytest.raises(BadAssignment):
        make_prototype(3, grid257, assignment=[0, 1])
    with pytest.raises(BadAssignment):
        make_prototype(4, grid257, assignment=[0, 2, 0, 2])


def test_prototype_sector_centered():
    th = 2 * math.pi * np.arange(3) / 3
    np.testing.assert_array_equal(prototype_sector(th, 3), [0, 1, 2])


@pytest.mark.parametrize("m", [2, 4])
def test_polynomial_prototypes_are_class_s(grid257, m):
    rep = class_s_check(make_prototype(m, grid257))
    assert rep.passed
    if m == 2:
        assert rep.second == pytest.approx(0.0, abs=1e-9)


def test_three_sector_excess_is_confined_to_the_junction(grid257):
    # the 5-point stencil has an O(h^2 r^{-5/2}) truncation error at the r^{3/2} vertex;
    # away from it both inequalities hold to tau
    U = make_prototype(3, grid257)
    X, Y = grid257.mesh()
    rep = class_s_check(U)
    assert not rep.passed
    h = grid257.h
    mask = np.hypot(X, Y)[2:-2, 2:-2] > 0.15 + 3 * h
    for v in U.values:
        r1 = convolve(np.nan_to_num(-laplacian_values(v, h)), _MOLLIFIER, mode="constant")[2:-2, 2:-2]
        assert r1[mask].max() <= rep.tau


def test_class_s_detects_bump_inside_other_support(grid257):
    U = make_prototype(2, grid257)
    X, Y = grid257.mesh()
    bump = np.maximum(0.01 - (X + 0.5) ** 2 - Y**2, 0.0)
    vals = np.array(U.values)
    vals[0] += bump  # component 0 lives on x > 0; bump sits in x < 0
    bad = U.with_values(vals, eps_seg=1.0)
    rep = class_s_check(bad)
    assert rep.second > rep.tau


def test_class_s_detects_superharmonic_bump(grid257):
    X, Y = grid257.mesh()
    U = SegregatedConfig(grid257, np.maximum(0.25 - X**2 - Y**2, 0)[None])
    assert class_s_check(U).first > class_s_check(U).tau
