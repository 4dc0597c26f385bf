"""Almgren-type frequency quantities E, H, N, R and the checks built on them."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .exceptions import DegenerateAverage, NonMonotone
from .grid import ball_weights, circle_integral, radial_derivative, weighted_sum
from .segregated import SegregatedConfig

DIM = 2
TAU_H = 1e-30
C_MAX = 1e3
MONOTONE_SLACK = 1e-2


def energy(U: SegregatedConfig, x0, r: float, method: str = "flux") -> float:
    """E(x0, U, r) = r^(2-N) * int_{B_r(x0)} |grad U|^2 - <F(U), U>.

    Parameters
    ----------
    U : SegregatedConfig
    x0 : point
    r : float
    method : {"flux", "volume"}
        ``flux`` integrates 1/2 d_nu |U|^2 over the circle, which equals the
        ball integral by the divergence theorem because u_i mu_i = 0;
        ``volume`` integrates the discrete density
        :attr:`SegregatedConfig.energy_density` with exact cut-cell weights.
        Both agree to O(h^2) away from junctions; the flux form stays accurate
        at singular points where second differences of |U|^2 lose accuracy.

    Raises
    ------
    BallOutOfDomain
    """
    if method == "flux":
        _, dnu = radial_derivative(U.u2, x0, r)
        return r ** (2 - DIM) * 0.5 * (2.0 * math.pi * r ** (DIM - 1)) * float(np.mean(dnu))
    if method != "volume":
        raise ValueError(f"unknown energy method {method!r}")
    si, sj, w = ball_weights(U.grid, x0, r)
    return r ** (2 - DIM) * weighted_sum(U.energy_density.values[si, sj], w)


def average(U: SegregatedConfig, x0, r: float, n_samples: Optional[int] = None) -> float:
    """H(x0, U, r) = r^(1-N) * int_{dB_r(x0)} |U|^2."""
    return r ** (1 - DIM) * circle_integral(U.u2, x0, r, n_samples)


def frequency(U: SegregatedConfig, x0, r: float) -> float:
    """N(x0, U, r) = E / H.

    Raises
    ------
    DegenerateAverage
        If H does not exceed the underflow guard.
    """
    H = average(U, x0, r)
    if not H > TAU_H:
        raise DegenerateAverage(f"H({tuple(x0)}, r={r:.4g}) = {H:.3g} vanishes", radius=r)
    return energy(U, x0, r) / H


def pohozaev_remainder(U: SegregatedConfig, x0, r: float) -> float:
    """Remainder R(x0, U, r) of the derivative of E; exactly 0 for F = 0."""
    if U.reaction.is_zero:
        U.grid.check_ball(x0, r)
        return 0.0
    si, sj, w = ball_weights(U.grid, x0, r)
    X, Y = np.meshgrid(U.grid.x[si] - x0[0], U.grid.y[sj] - x0[1], indexing="ij")
    g = U.gradients[:, :, si, sj]
    f = U.reaction_values[:, si, sj]
    radial = (f * (g[:, 0] * X + g[:, 1] * Y)).sum(axis=0)
    vol = 2.0 / r ** (DIM - 1) * weighted_sum(radial, w)
    if DIM != 2:
        vol += (DIM - 2) / r ** (DIM - 1) * weighted_sum(U.fu.values[si, sj], w)
    surf = r ** (2 - DIM) * circle_integral(U.fu, x0, r)
    return vol - surf


@dataclass
class FrequencyProfile:
    """E, H, N, R sampled at increasing radii around one center."""

    center: Tuple[float, float]
    radii: np.ndarray
    E: np.ndarray
    H: np.ndarray
    N: np.ndarray
    R: np.ndarray
    h: float = float("nan")
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.radii = np.asarray(self.radii, float)
        for name in ("E", "H", "N", "R"):
            setattr(self, name, np.asarray(getattr(self, name), float))
        if np.any(np.diff(self.radii) <= 0):
            raise ValueError("profile radii must be increasing")
        if np.any(self.H <= 0):
            raise ValueError("H must be positive at every radius")

    def __len__(self):
        return len(self.radii)


def frequency_profile(
    U: SegregatedConfig, x0, r_min: Optional[float] = None, r_max: float = 0.3, n_radii: int = 24
) -> FrequencyProfile:
    """E, H, N and R at geometrically spaced radii in [r_min, r_max].

    Parameters
    ----------
    U : SegregatedConfig
    x0 : point
    r_min : float, optional
        Smallest radius, at least 4h (default 4h).
    r_max : float
    n_radii : int

    Returns
    -------
    FrequencyProfile

    Raises
    ------
    DegenerateAverage
        With the offending radius, when H vanishes numerically.
    BallOutOfDomain
        If the largest ball leaves the grid.
    """
    h = U.grid.h
    if r_min is None:
        r_min = 4.0 * h
    if r_min < 4.0 * h * (1 - 1e-9):
        raise ValueError(f"r_min={r_min:.4g} is below 4h={4 * h:.4g}")
    if not r_max > r_min:
        raise ValueError("r_max must exceed r_min")
    x0 = (float(x0[0]), float(x0[1]))
    U.grid.check_ball(x0, r_max)
    radii = np.geomspace(r_min, r_max, n_radii)
    E = np.empty(n_radii)
    H = np.empty(n_radii)
    R = np.empty(n_radii)
    for k, r in enumerate(radii):
        H[k] = average(U, x0, r)
        if not H[k] > TAU_H:
            raise DegenerateAverage(f"H vanishes at r={r:.4g} around {x0}", radius=float(r))
        E[k] = energy(U, x0, r)
        R[k] = pohozaev_remainder(U, x0, r)
    return FrequencyProfile(x0, radii, E, H, E / H, R, h=h)


@dataclass
class MonotonicityReport:
    """Outcome of fitting the constant C in the monotonicity of exp(C r)(N + 1)."""

    C_tilde: float
    violation: float
    N0: float
    window: Tuple[float, float]
    slack: float = MONOTONE_SLACK
    remainder_ratio: float = float("nan")
    d_bound: Optional[float] = None

    @property
    def passed(self) -> bool:
        return self.violation <= self.slack


def monotone_violation(radii, N, C: float) -> float:
    """Largest relative drop of g(r) = exp(C r)(N(r) + 1) below its running maximum."""
    g = np.exp(C * np.asarray(radii)) * (np.asarray(N) + 1.0)
    run = np.maximum.accumulate(g)
    return float(np.max((run - g) / np.abs(run)))


def extrapolate_N0(radii, N, r_hi: Optional[float] = None) -> Tuple[float, Tuple[float, float]]:
    """Linear-in-r fit of N over the smallest third of the radius window, evaluated at r=0."""
    radii = np.asarray(radii)
    N = np.asarray(N)
    if r_hi is None:
        r_hi = radii[0] + (radii[-1] - radii[0]) / 3.0
    sel = radii <= r_hi * (1 + 1e-12)
    if sel.sum() < 3:
        sel = np.zeros(len(radii), bool)
        sel[:3] = True
    slope, icpt = np.polyfit(radii[sel], N[sel], 1)
    return float(icpt), (float(radii[sel][0]), float(radii[sel][-1]))


def monotonicity_check(
    profile: FrequencyProfile,
    d_bound: Optional[float] = None,
    slack: float = MONOTONE_SLACK,
    c_max: float = C_MAX,
    tol: float = 1e-4,
) -> MonotonicityReport:
    """Smallest C >= 0 making exp(C r)(N(r)+1) nondecreasing up to a relative slack.

    Parameters
    ----------
    profile : FrequencyProfile
        Needs at least 8 radii.
    d_bound : float, optional
        Reaction constant; recorded, and used to report max |R|/(E+H).
    slack : float
        Allowed relative drop below the running maximum.
    c_max : float
    tol : float
        Bisection resolution for C.

    Raises
    ------
    NonMonotone
        If even ``c_max`` leaves a drop larger than ``slack``.
    """
    if len(profile) < 8:
        raise ValueError("monotonicity_check needs at least 8 radii")
    r, N = profile.radii, profile.N
    if monotone_violation(r, N, 0.0) <= slack:
        C = 0.0
    else:
        if monotone_violation(r, N, c_max) > slack:
            raise NonMonotone(f"exp(Cr)(N+1) not monotone for any C <= {c_max:g} at {profile.center}")
        lo, hi = 0.0, c_max
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if monotone_violation(r, N, mid) <= slack:
                hi = mid
            else:
                lo = mid
        C = hi
    N0, window = extrapolate_N0(r, N)
    ratio = float(np.max(np.abs(profile.R) / (profile.E + profile.H)))
    return MonotonicityReport(C, monotone_violation(r, N, C), N0, window, slack, ratio, d_bound)


@dataclass
class DoublingResult:
    ratio: float
    bound: float
    C_bar: float
    passed: bool


def doubling_check(U: SegregatedConfig, x0, r1: float, r2: float, C_tilde: float, N_ref: Optional[float] = None):
    """Compare H(r2)/H(r1) with (r2/r1)^(2 C_bar), C_bar = (C+1) exp(C_tilde r2) - 1.

    ``C`` is |N(x0, U, r2)| unless ``N_ref`` is given.
    """
    if r2 < r1:
        raise ValueError("need r1 <= r2")
    if r1 == r2:
        return DoublingResult(1.0, 1.0, float("nan"), True)
    C = abs(frequency(U, x0, r2)) if N_ref is None else abs(N_ref)
    C_bar = (C + 1.0) * math.exp(C_tilde * r2) - 1.0
    ratio = average(U, x0, r2) / average(U, x0, r1)
    bound = (r2 / r1) ** (2.0 * C_bar)
    return DoublingResult(ratio, bound, C_bar, bool(ratio <= bound * (1 + 1e-9)))


def log_derivative_identity_check(profile: FrequencyProfile) -> float:
    """Max relative residual of d log H / d log r = 2N at interior radii.

    Centered differences in log r; residuals are relative to max(2N, 1).
    """
    if len(profile) < 8:
        raise ValueError("log_derivative_identity_check needs at least 8 radii")
    lr = np.log(profile.radii)
    lh = np.log(profile.H)
    slope = (lh[2:] - lh[:-2]) / (lr[2:] - lr[:-2])
    target = 2.0 * profile.N[1:-1]
    return float(np.max(np.abs(slope - target) / np.maximum(np.abs(target), 1.0)))
