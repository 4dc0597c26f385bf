import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seglab import almgren
from seglab.exceptions import BallOutOfDomain, DegenerateAverage, NonMonotone
from seglab.grid import Grid2D
from seglab.segregated import Reaction, ReactionSpec, SegregatedConfig
from seglab.solver import make_prototype


@pytest.mark.parametrize("m", [2, 3, 4])
@pytest.mark.parametrize("r", [0.1, 0.3, 0.6])
def test_prototype_E_H_match_oracle(oracles, grid256, m, r):
    o = oracles["prototype_EH"][str(m)]
    U = make_prototype(m, grid256)
    E = almgren.energy(U, (0.0, 0.0), r)
    H = almgren.average(U, (0.0, 0.0), r)
    assert E == pytest.approx(o["E_coef"] * r**m, rel=1e-5)
    assert H == pytest.approx(o["H_coef"] * r**m, rel=1e-5)
    assert E / H == pytest.approx(o["alpha"], rel=1e-5)


def test_volume_form_agrees_away_from_junction(proto3):
    r = 0.6
    assert almgren.energy(proto3, (0.0, 0.0), r, "volume") == pytest.approx(
        almgren.energy(proto3, (0.0, 0.0), r), rel=1e-3
    )
    with pytest.raises(ValueError):
        almgren.energy(proto3, (0.0, 0.0), r, "bogus")


@settings(max_examples=25, deadline=None)
@given(rho=st.floats(1e-3, 1e3), r=st.floats(0.05, 0.6))
def test_frequency_is_amplitude_invariant(proto3, rho, r):
    N = almgren.frequency(proto3, (0.0, 0.0), r)
    assert almgren.frequency(proto3.scaled(rho), (0.0, 0.0), r) == pytest.approx(N, rel=1e-10)


@settings(max_examples=20, deadline=None)
@given(cx=st.floats(-0.3, 0.3), cy=st.floats(-0.3, 0.3), r=st.floats(0.05, 0.4))
def test_H_is_positive_and_E_nonnegative_for_harmonic(proto2, cx, cy, r):
    # zero reaction: E is a Dirichlet energy
    assert almgren.average(proto2, (cx, cy), r) > 0
    assert almgren.energy(proto2, (cx, cy), r) >= -1e-12


def test_pohozaev_remainder_zero_without_reaction(proto2):
    assert almgren.pohozaev_remainder(proto2, (0.0, 0.0), 0.3) == 0.0


def test_pohozaev_remainder_matches_closed_form():
    # U = a constant c in one component with f(s) = c0 s: the radial term vanishes and
    # R = -r^{2-N} int_{dB_r} f(c) c = -2 pi r c0 c^2
    g = Grid2D.square(-1.0, 1.0, 129)
    vals = np.full((1,) + g.shape, 2.0)
    U = SegregatedConfig(g, vals, ReactionSpec((Reaction.linear(3.0),)))
    assert almgren.pohozaev_remainder(U, (0.0, 0.0), 0.4) == pytest.approx(-2 * math.pi * 0.4 * 3.0 * 4.0, rel=1e-9)


def test_profile_and_log_derivative_identity(proto3, grid256):
    h = grid256.h
    prof = almgren.frequency_profile(proto3, (0.0, 0.0), 6 * h, 0.3, 16)
    assert len(prof) == 16
    np.testing.assert_allclose(prof.N, 1.5, atol=1e-4)
    assert almgren.log_derivative_identity_check(prof) < 1e-4


def test_profile_argument_checks(proto2, grid256):
    h = grid256.h
    with pytest.raises(ValueError):
        almgren.frequency_profile(proto2, (0.0, 0.0), 2 * h, 0.3)
    with pytest.raises(ValueError):
        almgren.frequency_profile(proto2, (0.0, 0.0), 0.3, 0.2)
    with pytest.raises(BallOutOfDomain):
        almgren.frequency_profile(proto2, (0.9, 0.0), 4 * h, 0.3)


def test_degenerate_average():
    g = Grid2D.square(-1.0, 1.0, 65)
    X, _ = g.mesh()
    U = SegregatedConfig(g, np.maximum(X - 0.6, 0.0)[None])
    with pytest.raises(DegenerateAverage) as e:
        almgren.frequency(U, (-0.5, 0.0), 0.2)
    assert e.value.radius == pytest.approx(0.2)


def test_monotonicity_of_constant_profile_needs_no_correction(proto2, grid256):
    prof = almgren.frequency_profile(proto2, (0.0, 0.0), 6 * grid256.h, 0.3, 12)
    rep = almgren.monotonicity_check(prof)
    assert rep.C_tilde == 0.0 and rep.violation <= 1e-12 and rep.passed
    assert rep.N0 == pytest.approx(1.0, abs=1e-12)


def _synthetic(N):
    r = np.geomspace(0.01, 0.3, len(N))
    return almgren.FrequencyProfile((0.0, 0.0), r, np.asarray(N, float), np.ones(len(N)), np.asarray(N, float),
                                    np.zeros(len(N)))


def test_monotonicity_fits_smallest_constant():
    r = np.geomspace(0.01, 0.3, 16)
    N = 1.0 + 0.5 * np.exp(-20 * r)  # decreasing: needs C > 0
    rep = almgren.monotonicity_check(_synthetic(N))
    assert rep.C_tilde > 0 and rep.passed
    assert almgren.monotone_violation(r, N, rep.C_tilde - 1e-3) > rep.slack


def test_non_monotone_raises():
    N = np.array([1, 0, 1, 0, 1, 0, 1, 0, 1, 0], float) * 50
    with pytest.raises(NonMonotone):
        almgren.monotonicity_check(_synthetic(N), c_max=1.0)


def test_monotonicity_needs_enough_radii():
    with pytest.raises(ValueError):
        almgren.monotonicity_check(_synthetic(np.ones(5)))


def test_extrapolation_exact_for_linear():
    r = np.linspace(0.05, 0.3, 20)
    N0, window = almgren.extrapolate_N0(r, 1.5 + 2.0 * r)
    assert N0 == pytest.approx(1.5, abs=1e-12)
    assert window[0] == pytest.approx(0.05)


def test_doubling(proto2):
    d = almgren.doubling_check(proto2, (0.0, 0.0), 0.1, 0.2, 0.0)
    assert d.ratio == pytest.approx(4.0, rel=1e-6)
    assert d.passed
    with pytest.raises(ValueError):
        almgren.doubling_check(proto2, (0.0, 0.0), 0.2, 0.1, 0.0)
    assert almgren.doubling_check(proto2, (0.0, 0.0), 0.2, 0.2, 0.0).ratio == 1.0
