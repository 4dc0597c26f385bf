"""Rescaled normalized frames around a point and classification of their circle traces."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .almgren import TAU_H, average, energy, frequency
from .exceptions import BallOutOfDomain, DegenerateAverage
from .grid import Grid2D
from .segregated import Reaction, ReactionSpec, SegregatedConfig

WINDOW = 2.0
MIN_FRAME_NODES = 257
ALPHA_RADII = (0.1, 1.0)
HOMOGENEITY_RADII = (0.2, 1.5)
CONSENSUS_TOL = 0.05


@dataclass
class BlowupFrame:
    """U(x0 + t x) / rho on a window around the origin, with rho^2 = H(x0, U, t)."""

    x0: Tuple[float, float]
    t: float
    rho: float
    config: SegregatedConfig
    alpha: float
    rho_nominal: float = float("nan")
    resolved: bool = True

    @property
    def grid(self) -> Grid2D:
        return self.config.grid

    def meta(self) -> dict:
        return {"x0": list(self.x0), "t": self.t, "rho": self.rho, "alpha": self.alpha, "resolved": self.resolved}


def degree_from_eigenvalue(lam: float, dim: int = 2) -> float:
    """Positive root alpha of alpha (alpha + dim - 2) = lam."""
    b = dim - 2.0
    return 0.5 * (-b + math.sqrt(b * b + 4.0 * lam))


def _rescale_reaction(spec: ReactionSpec, t: float, rho: float) -> ReactionSpec:
    # V = U(x0 + t x)/rho solves -Lap V = t^2 f(rho V)/rho
    out = []
    for r in spec.terms:
        if r.kind == "zero":
            out.append(r)
        elif r.kind == "cubic":
            omega, lam = r.params
            out.append(Reaction.cubic(t * t * omega * rho * rho, t * t * lam))
        elif r.kind == "linear":
            out.append(Reaction.linear(t * t * r.params[0]))
        elif r.kind == "logistic":
            rate, cap = r.params
            out.append(Reaction.logistic(t * t * rate, cap / rho))
        else:
            raise ValueError(f"cannot rescale reaction kind {r.kind!r}")
    return ReactionSpec(tuple(out))


def _frame_grid(h: float, t: float) -> Tuple[Grid2D, int]:
    """Window grid with spacing h/(t k), k the smallest refinement giving enough nodes."""
    k = 1
    while True:
        hf = h / (t * k)
        half = int(math.ceil(WINDOW / hf - 1e-9))
        if 2 * half + 1 >= MIN_FRAME_NODES:
            break
        k += 1
    n = 2 * half + 1
    return Grid2D(n, n, hf, (-half * hf, -half * hf)), k


def homogeneity_degree(config: SegregatedConfig, radii: Sequence[float] = ALPHA_RADII, n: int = 10) -> float:
    """Half the slope of log H(0, ., r) against log r over ``radii``."""
    rs = np.geomspace(radii[0], radii[1], n)
    H = np.array([average(config, (0.0, 0.0), r) for r in rs])
    if np.any(H <= TAU_H):
        raise DegenerateAverage("H vanishes inside the frame", radius=float(rs[np.argmin(H)]))
    slope = np.polyfit(np.log(rs), np.log(H), 1)[0]
    return float(slope / 2.0)


def make_frame(U: SegregatedConfig, x0, t: float, rho: Optional[float] = None) -> BlowupFrame:
    """Blowup frame of ``U`` at ``x0`` and scale ``t``.

    Components are resampled by bicubic splines onto ``[-2, 2]^2`` (slightly
    enlarged to fit whole cells) at spacing ``h/(t k)``, clipped at zero and
    divided by rho = sqrt(H(x0, U, t)).

    Parameters
    ----------
    U : SegregatedConfig
    x0 : point
    t : float
        Scale, > 0.
    rho : float, optional
        Override of the normalization (used to test the scaling identities).

    The frame is flagged ``resolved`` when the smallest fit radius 0.1 t is at
    least half a source cell; smaller scales only probe the interpolant.

    Raises
    ------
    BallOutOfDomain
        If the scaled window leaves the source grid.
    DegenerateAverage
        If H(x0, U, t) vanishes.
    """
    if not t > 0:
        raise ValueError("scale t must be positive")
    x0 = (float(x0[0]), float(x0[1]))
    fgrid, _ = _frame_grid(U.grid.h, t)
    reach = -fgrid.origin[0] * t
    xmin, xmax, ymin, ymax = U.grid.bounds
    if x0[0] - reach < xmin - 1e-12 or x0[0] + reach > xmax + 1e-12 or x0[1] - reach < ymin - 1e-12 or x0[1] + reach > ymax + 1e-12:
        raise BallOutOfDomain(f"frame window of half-width {reach:.4g} at {x0} leaves the grid")
    H = average(U, x0, t)
    if not H > TAU_H:
        raise DegenerateAverage(f"H({x0}, r={t:.4g}) = {H:.3g} vanishes", radius=t)
    rho_nom = math.sqrt(H)
    rho_used = rho_nom if rho is None else float(rho)
    X, Y = fgrid.mesh()
    xs, ys = x0[0] + t * X, x0[1] + t * Y
    vals = np.stack([np.maximum(c.interpolate(xs, ys), 0.0) for c in U.components]) / rho_used
    probe = SegregatedConfig(fgrid, vals, eps_seg=1.0)
    eps = max(U.eps_seg, 1.01 * probe.segregation_ratio())
    config = SegregatedConfig(
        fgrid, vals, _rescale_reaction(U.reaction, t, rho_used), eps_seg=eps, phase_tol=U.phase_tol,
        meta={"x0": list(x0), "t": t, "rho": rho_used},
    )
    alpha = homogeneity_degree(config)
    config.meta["alpha"] = alpha
    # below half a source cell the fit only sees the interpolant, not U
    resolved = ALPHA_RADII[0] * t >= 0.5 * U.grid.h
    return BlowupFrame(x0, float(t), rho_used, config, alpha, rho_nom, bool(resolved))


def scaling_identity_check(U: SegregatedConfig, x0, t: float, y0, r: float, rho: Optional[float] = None):
    """Relative residuals of E, H, N between a frame and the source at the matching ball.

    E(y0, V, r) is compared with E(x0 + t y0, U, t r) / rho^2 using the nominal
    rho, and likewise H; N is compared directly. Passing ``rho`` builds the
    frame with that normalization instead.
    """
    frame = make_frame(U, x0, t, rho=rho)
    V = frame.config
    y0 = (float(y0[0]), float(y0[1]))
    xs = (frame.x0[0] + t * y0[0], frame.x0[1] + t * y0[1])
    r2 = frame.rho_nominal**2
    Eu, Hu = energy(U, xs, t * r) / r2, average(U, xs, t * r) / r2
    if not Hu > TAU_H:
        raise DegenerateAverage("H vanishes at the source ball", radius=t * r)
    Ev, Hv = energy(V, y0, r), average(V, y0, r)
    Nu, Nv = Eu / Hu, Ev / Hv

    def rel(a, b):
        return abs(a - b) / max(abs(b), 1e-300)

    return rel(Ev, Eu), rel(Hv, Hu), rel(Nv, Nu)


@dataclass
class SphericalTrace:
    """Component values on a circle and the arcs where each one dominates.

    ``arcs`` holds (component, start, end) with end > start (angles may exceed 2 pi).
    """

    angles: np.ndarray
    values: np.ndarray
    arcs: List[Tuple[int, float, float]]
    has_zero: bool = False

    @property
    def lengths(self) -> np.ndarray:
        return np.array([e - s for _, s, e in self.arcs])


def _crossing(t0, t1, f0, f1):
    if f0 == f1:
        return t1
    s = f0 / (f0 - f1)
    return t0 + min(max(s, 0.0), 1.0) * (t1 - t0)


def spherical_trace(frame, r: float = 1.0, n_angles: int = 720) -> SphericalTrace:
    """Sample a frame (or configuration) on the circle of radius ``r`` about the origin.

    Arcs are maximal runs of angles with the same dominant component; their
    endpoints come from linear interpolation of the dominance difference
    u_a - u_b, or of u_a alone next to samples where every component vanishes.
    """
    config = frame.config if isinstance(frame, BlowupFrame) else frame
    theta = 2.0 * math.pi * np.arange(n_angles) / n_angles
    xs, ys = r * np.cos(theta), r * np.sin(theta)
    vals = np.stack([np.maximum(c.interpolate(xs, ys), 0.0) for c in config.components])
    top = vals.max(axis=0)
    tiny = 1e-12 * max(float(top.max()), 1e-300)
    labels = np.where(top > tiny, np.argmax(vals, axis=0), -1)
    has_zero = bool((labels < 0).any())
    if (labels == labels[0]).all():
        if labels[0] < 0:
            return SphericalTrace(theta, vals, [], True)
        return SphericalTrace(theta, vals, [(int(labels[0]), 0.0, 2.0 * math.pi)], has_zero)
    # boundaries between consecutive samples k, k+1 (cyclic)
    events = []  # (angle, label_before, label_after)
    for k in range(n_angles):
        k1 = (k + 1) % n_angles
        a, b = labels[k], labels[k1]
        if a == b:
            continue
        t0 = theta[k]
        t1 = theta[k] + 2.0 * math.pi / n_angles
        if a >= 0 and b >= 0:
            ang = _crossing(t0, t1, vals[a, k] - vals[b, k], vals[a, k1] - vals[b, k1])
        elif a >= 0:
            ang = _crossing(t0, t1, vals[a, k], vals[a, k1])
        else:
            ang = t0  # arc of b starts at the last vanishing sample
        events.append((ang, int(a), int(b)))
    arcs = []
    m = len(events)
    for idx in range(m):
        ang, _, after = events[idx]
        if after < 0:
            continue
        end = events[(idx + 1) % m][0]
        if end <= ang:
            end += 2.0 * math.pi
        arcs.append((after, float(ang), float(end)))
    arcs.sort(key=lambda a: a[1] % (2.0 * math.pi))
    return SphericalTrace(theta, vals, arcs, has_zero)


@dataclass
class SphericalClassification:
    lengths: np.ndarray
    eigenvalues: np.ndarray
    degrees: np.ndarray
    consensus: bool
    case: str
    flags: dict = field(default_factory=dict)

    @property
    def min_degree(self) -> float:
        return float(self.degrees.min())

    def to_dict(self) -> dict:
        return {
            "lengths": self.lengths.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "degrees": self.degrees.tolist(),
            "consensus": self.consensus,
            "case": self.case,
            "flags": dict(self.flags),
        }


def classify_lengths(lengths: Sequence[float], dim: int = 2, tol: float = CONSENSUS_TOL) -> SphericalClassification:
    """Arc eigenvalues (pi/l)^2 and degrees; the case is 'one', 'two' or 'many' arcs."""
    ell = np.asarray(lengths, float)
    if ell.size == 0:
        raise ValueError("need at least one arc")
    if np.any(ell <= 0):
        raise ValueError("arc lengths must be positive")
    lam = (math.pi / ell) ** 2
    alpha = np.array([degree_from_eigenvalue(l, dim) for l in lam])
    consensus = bool(np.all(np.abs(lam - lam.mean()) <= tol * lam.mean()))
    n = len(ell)
    case = "one" if n == 1 else ("two" if n == 2 else "many")
    flags = {
        "excluded_single_arc": n == 1,
        "half_circles": n == 2 and consensus and bool(np.all(np.abs(ell - math.pi) <= tol * math.pi)),
        "min_degree_at_least_3_2": n >= 3 and float(alpha.min()) >= 1.5 * (1 - tol),
    }
    return SphericalClassification(ell, lam, alpha, consensus, case, flags)


def classify_trace(trace: SphericalTrace, dim: int = 2) -> SphericalClassification:
    """Classify the homogeneity degree from the arc lengths of a trace."""
    if not trace.arcs:
        raise ValueError("trace has no arcs")
    return classify_lengths(trace.lengths, dim)


def homogeneity_residual(frame: BlowupFrame, n_radii: int = 12) -> float:
    """max over r in [0.2, 1.5] of |N(0, frame, r) - alpha|."""
    rs = np.geomspace(HOMOGENEITY_RADII[0], HOMOGENEITY_RADII[1], n_radii)
    return float(max(abs(frequency(frame.config, (0.0, 0.0), r) - frame.alpha) for r in rs))


@dataclass
class FrameSequence:
    frames: List[BlowupFrame]
    differences: np.ndarray

    @property
    def decreasing(self) -> bool:
        return bool(np.all(np.diff(self.differences) <= 0))


def _unit_ball_points(n: int = 64):
    r = np.sqrt((np.arange(n) + 0.5) / n)
    th = 2.0 * math.pi * np.arange(2 * n) / (2 * n)
    R, T = np.meshgrid(r, th, indexing="ij")
    return (R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()


def frame_difference(a: BlowupFrame, b: BlowupFrame) -> float:
    """Max-norm distance of two frames sampled on the unit disk."""
    xs, ys = _unit_ball_points()
    va = np.stack([np.maximum(c.interpolate(xs, ys), 0) for c in a.config.components])
    vb = np.stack([np.maximum(c.interpolate(xs, ys), 0) for c in b.config.components])
    return float(np.abs(va - vb).max())


def frame_sequence(U: SegregatedConfig, x0, ts: Sequence[float] = (0.2, 0.1, 0.05)) -> FrameSequence:
    """Frames along a decreasing scale schedule and the distances between consecutive ones."""
    frames = [make_frame(U, x0, t) for t in ts]
    diffs = np.array([frame_difference(frames[k], frames[k + 1]) for k in range(len(frames) - 1)])
    return FrameSequence(frames, diffs)
