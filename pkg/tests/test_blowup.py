import math

import numpy as np
import pytest

from seglab import blowup
from seglab.almgren import average
from seglab.exceptions import BallOutOfDomain
from seglab.grid import Grid2D
from seglab.segregated import Reaction, ReactionSpec, SegregatedConfig
from seglab.solver import make_prototype


@pytest.mark.parametrize(
    "lengths, alpha",
    [([2 * math.pi], 0.5), ([math.pi, math.pi], 1.0), ([2 * math.pi / 3] * 3, 1.5), ([math.pi / 2] * 4, 2.0)],
)
def test_arc_table(lengths, alpha):
    cl = blowup.classify_lengths(lengths)
    np.testing.assert_allclose(cl.degrees, alpha, atol=1e-12)
    assert cl.consensus


def test_arc_flags():
    assert blowup.classify_lengths([2 * math.pi]).flags["excluded_single_arc"]
    assert blowup.classify_lengths([math.pi, math.pi]).flags["half_circles"]
    three = blowup.classify_lengths([2 * math.pi / 3] * 3)
    assert three.case == "many" and three.flags["min_degree_at_least_3_2"]
    uneven = blowup.classify_lengths([math.pi, math.pi / 2, math.pi / 2])
    assert not uneven.consensus and uneven.min_degree == pytest.approx(1.0)
    with pytest.raises(ValueError):
        blowup.classify_lengths([])
    with pytest.raises(ValueError):
        blowup.classify_lengths([1.0, -1.0])


def test_degree_from_eigenvalue_inverts():
    for a in (0.5, 1.0, 1.5, 3.0):
        assert blowup.degree_from_eigenvalue(a * a) == pytest.approx(a)
        assert blowup.degree_from_eigenvalue(a * (a + 1), dim=3) == pytest.approx(a)


@pytest.mark.parametrize("m", [2, 3, 4])
def test_prototype_frames(grid257, m):
    U = make_prototype(m, grid257)
    fr = blowup.make_frame(U, (0.0, 0.0), 0.25)
    assert fr.alpha == pytest.approx(m / 2, rel=2e-3)
    assert average(fr.config, (0.0, 0.0), 1.0) == pytest.approx(1.0, rel=1e-4)
    assert blowup.homogeneity_residual(fr) <= 0.01 * m
    cl = blowup.classify_trace(blowup.spherical_trace(fr))
    assert len(cl.lengths) == m
    np.testing.assert_allclose(cl.lengths, 2 * math.pi / m, atol=2e-3)
    assert fr.grid.nx >= blowup.MIN_FRAME_NODES


def test_frame_window_must_fit(grid257):
    U = make_prototype(2, grid257)
    with pytest.raises(BallOutOfDomain):
        blowup.make_frame(U, (0.5, 0.0), 0.3)
    with pytest.raises(ValueError):
        blowup.make_frame(U, (0.0, 0.0), 0.0)


def test_reaction_rescaling():
    spec = ReactionSpec((Reaction.cubic(2.0, 3.0), Reaction.logistic(4.0, 1.0), Reaction.linear(5.0)))
    t, rho = 0.5, 2.0
    out = blowup._rescale_reaction(spec, t, rho)
    s = np.linspace(0, 1, 7)
    for a, b in zip(spec.terms, out.terms):
        np.testing.assert_allclose(b(s), t * t * a(rho * s) / rho, atol=1e-12)


def test_scaling_identities_aligned():
    g = Grid2D.square(-2.0, 2.0, 513)
    U = make_prototype(3, g, center=(0.1, -0.2))
    res = blowup.scaling_identity_check(U, (0.0, 0.0), 0.5, (0.0, 0.0), 1.0)
    assert max(res) <= 1e-6


def test_scaling_identities_generic(grid257):
    U = make_prototype(3, grid257)
    res = blowup.scaling_identity_check(U, (0.03, -0.02), 0.3, (0.21, 0.37), 0.6)
    assert max(res) <= 1e-2


def test_wrong_normalization_breaks_E_and_H_but_not_N():
    g = Grid2D.square(-2.0, 2.0, 513)
    U = make_prototype(2, g)
    fr = blowup.make_frame(U, (0.0, 0.0), 0.5)
    e, h, n = blowup.scaling_identity_check(U, (0.0, 0.0), 0.5, (0.0, 0.0), 1.0, rho=2 * fr.rho_nominal)
    assert e == pytest.approx(0.75) and h == pytest.approx(0.75)
    assert n <= 1e-10


@pytest.mark.parametrize("n", [256, 257])
def test_frames_at_a_regular_point(n):
    U = make_prototype(2, Grid2D.square(-1.0, 1.0, n))
    seq = blowup.frame_sequence(U, (0.0, 0.4), (0.2, 0.1, 0.05))
    assert len(seq.frames) == 3 and len(seq.differences) == 2
    for fr in seq.frames:
        assert fr.alpha == pytest.approx(1.0, abs=0.05)
        assert fr.resolved
    assert np.all(seq.differences < 0.05)


def test_subcell_scales_are_flagged(grid257):
    U = make_prototype(2, grid257)
    assert not blowup.make_frame(U, (0.0, 0.4), 0.025).resolved


def test_mixed_degrees_are_not_homogeneous():
    g = Grid2D.square(-1.0, 1.0, 257)
    X, Y = g.mesh()
    w = X + X**2 - Y**2
    U = SegregatedConfig(g, np.stack([np.maximum(w, 0), np.maximum(-w, 0)]))
    fr = blowup.make_frame(U, (0.0, 0.0), 0.45)
    assert blowup.homogeneity_residual(fr) >= 0.2


def test_trace_of_single_phase_and_meta(grid257):
    X, Y = grid257.mesh()
    U = SegregatedConfig(grid257, (1.0 + X**2 + Y**2)[None])
    tr = blowup.spherical_trace(U, r=0.5)
    assert tr.arcs == [(0, 0.0, 2 * math.pi)]
    assert blowup.classify_trace(tr).degrees[0] == pytest.approx(0.5)
    fr = blowup.make_frame(make_prototype(2, grid257), (0.0, 0.0), 0.2)
    assert set(fr.meta()) == {"x0", "t", "rho", "alpha", "resolved"}
