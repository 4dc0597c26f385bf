"""Nodal set extraction, regular/singular classification, reflection law, equal angles
and flatness."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from . import almgren
from .exceptions import DegenerateAverage, EmptyNodalSet, NonMonotone, NotTwoComponents, TooCloseToSingular
from .grid import Grid2D, ScalarField
from .segregated import SegregatedConfig

N_STAR = 1.25
KAPPA = 2.0
BRANCH_RADIUS_CELLS = 10.0
DEFAULT_THRESHOLD = 0.05

# marching squares: for each case (bit k set when corner k is positive, corners
# counter-clockwise from (i, j)), the pairs of cell edges joined by a segment.
# Edges: 0 bottom (c0-c1), 1 right (c1-c2), 2 top (c3-c2), 3 left (c0-c3).
_CASES = {
    0: (),
    1: ((3, 0),),
    2: ((0, 1),),
    3: ((3, 1),),
    4: ((1, 2),),
    6: ((0, 2),),
    7: ((3, 2),),
    8: ((2, 3),),
    9: ((0, 2),),
    11: ((1, 2),),
    12: ((1, 3),),
    13: ((0, 1),),
    14: ((3, 0),),
    15: (),
}
_EDGE_CORNERS = ((0, 1), (1, 2), (3, 2), (0, 3))
_CORNER_OFFSETS = ((0, 0), (1, 0), (1, 1), (0, 1))


@dataclass
class NodalSet:
    """Interface polylines of a configuration and its junction candidates.

    ``polylines`` are (n, 2) vertex arrays; ``pairs[k]`` names the two components
    separated by polyline ``k``. ``segments`` keeps the raw marching-squares
    output, shape (m, 2, 2).
    """

    polylines: List[np.ndarray]
    pairs: List[Tuple[int, int]]
    singular_candidates: np.ndarray
    threshold: float
    segments: np.ndarray
    h: float

    def vertices(self) -> np.ndarray:
        if not self.polylines:
            return np.zeros((0, 2))
        return np.concatenate(self.polylines)

    def length(self) -> float:
        return float(sum(np.linalg.norm(np.diff(p, axis=0), axis=1).sum() for p in self.polylines))

    def sample(self, spacing: float = 0.05) -> np.ndarray:
        """Points every ``spacing`` of arc length along each polyline."""
        pts = []
        for p in self.polylines:
            seg = np.linalg.norm(np.diff(p, axis=0), axis=1)
            s = np.concatenate([[0.0], np.cumsum(seg)])
            if s[-1] == 0:
                continue
            targets = np.arange(0.5 * (s[-1] % spacing), s[-1] + 1e-12, spacing)
            pts.append(np.column_stack([np.interp(targets, s, p[:, 0]), np.interp(targets, s, p[:, 1])]))
        return np.concatenate(pts) if pts else np.zeros((0, 2))

    def distance_to_singular(self, x) -> float:
        if len(self.singular_candidates) == 0:
            return math.inf
        return float(np.min(np.hypot(*(self.singular_candidates - np.asarray(x)).T)))

    def to_geojson(self) -> dict:
        feats = [
            {
                "type": "Feature",
                "geometry": {"type": "LineString", "coordinates": p.tolist()},
                "properties": {"components": list(pair)},
            }
            for p, pair in zip(self.polylines, self.pairs)
        ]
        feats += [
            {"type": "Feature", "geometry": {"type": "Point", "coordinates": c.tolist()}, "properties": {"singular_candidate": True}}
            for c in self.singular_candidates
        ]
        return {"type": "FeatureCollection", "features": feats, "properties": {"threshold": self.threshold}}


def _top_two(cellmax: np.ndarray):
    """Indices of the two largest entries along axis 0 (ties to the lower index)."""
    order = np.argsort(-cellmax, axis=0, kind="stable")
    return order[0], order[1]


def _corner_values(values: np.ndarray, idx: np.ndarray, k: int) -> np.ndarray:
    di, dj = _CORNER_OFFSETS[k]
    nx, ny = values.shape[1:]
    block = values[:, di : nx - 1 + di, dj : ny - 1 + dj]
    return np.take_along_axis(block, idx[None], axis=0)[0]


def _link(segments: np.ndarray, pairs: np.ndarray, tol: float):
    """Chain segments sharing endpoints into polylines (per component pair)."""
    keys = {}
    ends = np.round(segments / tol).astype(np.int64)
    adj = [[] for _ in range(len(segments))]
    for s in range(len(segments)):
        for e in range(2):
            key = (int(pairs[s, 0]), int(pairs[s, 1]), int(ends[s, e, 0]), int(ends[s, e, 1]))
            keys.setdefault(key, []).append((s, e))
    for lst in keys.values():
        for a in range(len(lst)):
            for b in range(a + 1, len(lst)):
                (s1, e1), (s2, e2) = lst[a], lst[b]
                adj[s1].append((e1, s2, e2))
                adj[s2].append((e2, s1, e1))
    used = np.zeros(len(segments), bool)
    lines, lpairs = [], []

    def walk(s, e_out):
        # extend from segment s through its end e_out
        out = []
        while True:
            nxt = [(s2, e2) for (e, s2, e2) in adj[s] if e == e_out and not used[s2]]
            if not nxt:
                return out
            s, e_in = nxt[0]
            used[s] = True
            e_out = 1 - e_in
            out.append(segments[s, e_out])

    # start from open ends first so chains are maximal
    degree = [len(a) for a in adj]
    order = sorted(range(len(segments)), key=lambda s: degree[s])
    for s0 in order:
        if used[s0]:
            continue
        used[s0] = True
        fwd = walk(s0, 1)
        bwd = walk(s0, 0)
        pts = [p for p in reversed(bwd)] + [segments[s0, 0], segments[s0, 1]] + fwd
        lines.append(np.array(pts))
        lpairs.append((int(pairs[s0, 0]), int(pairs[s0, 1])))
    return lines, lpairs


def _stray_vacuum_cells(V: np.ndarray) -> np.ndarray:
    """Cells with a corner where every component vanishes but at most one phase is adjacent.

    Such nodes (a vanishing trace, the outside of a domain mask) are not interface
    points, so their zero dominance must not produce contours.
    """
    vac = V.max(axis=0) <= 0
    lab = np.argmax(V, axis=0)
    phases = np.zeros(vac.shape, dtype=int)
    for k in range(V.shape[0]):
        phases += ndimage.maximum_filter((lab == k) & ~vac, size=3, mode="constant")
    stray = vac & (phases < 2)
    return stray[:-1, :-1] | stray[1:, :-1] | stray[1:, 1:] | stray[:-1, 1:]


def extract_nodal_set(U: SegregatedConfig, dominance_threshold: float = DEFAULT_THRESHOLD) -> NodalSet:
    """Zero set of the dominance field by marching squares.

    In each cell the two components with the largest corner values (ties to the
    lower index) define ``w = u_a - u_b``; its zero level is contoured with
    linear interpolation along cell edges. Cells where at least three
    components reach ``dominance_threshold`` times the local maximum are
    junction cells; each connected cluster of them yields one singular candidate.

    Raises
    ------
    EmptyNodalSet
        If no cell contains a sign change.
    """
    grid = U.grid
    V = U.values
    nx, ny = grid.shape
    blocks = [V[:, di : nx - 1 + di, dj : ny - 1 + dj] for di, dj in _CORNER_OFFSETS]
    cellmax = np.max(np.stack(blocks), axis=0)  # (h, nx-1, ny-1)
    if U.h_components < 2:
        raise EmptyNodalSet("a single component has no dominance sign changes")
    a, b = _top_two(cellmax)
    second = np.take_along_axis(cellmax, b[None], axis=0)[0]
    # an interface lying exactly on a row of vacuum nodes leaves one phase per cell:
    # take the pair from the surrounding ring and orient w by component index so
    # that only the cell on the lower-index side emits the contour
    ring = ndimage.maximum_filter(cellmax, size=(1, 3, 3), mode="nearest")
    ra, rb = _top_two(ring)
    lone = (second <= 0) & (np.take_along_axis(ring, rb[None], axis=0)[0] > 0)
    a = np.where(lone, np.minimum(ra, rb), a)
    b = np.where(lone, np.maximum(ra, rb), b)
    second = np.where(lone, np.take_along_axis(ring, b[None], axis=0)[0], second)
    w = np.stack([_corner_values(V, a, k) - _corner_values(V, b, k) for k in range(4)])  # (4, nx-1, ny-1)
    pos = w > 0
    case = pos[0] * 1 + pos[1] * 2 + pos[2] * 4 + pos[3] * 8
    live = (second > 0) & (case != 0) & (case != 15) & ~_stray_vacuum_cells(V)
    ci, cj = np.nonzero(live)
    h = grid.h
    segs, spairs = [], []
    for i, j in zip(ci, cj):
        c = int(case[i, j])
        wc = w[:, i, j]
        if c in (5, 10):
            centre_pos = wc.mean() > 0
            if c == 5:
                edges = ((3, 2), (0, 1)) if centre_pos else ((3, 0), (1, 2))
            else:
                edges = ((0, 3), (1, 2)) if centre_pos else ((0, 1), (2, 3))
        else:
            edges = _CASES[c]
        for e1, e2 in edges:
            pts = []
            for e in (e1, e2):
                k0, k1 = _EDGE_CORNERS[e]
                t = wc[k0] / (wc[k0] - wc[k1])
                p0 = _CORNER_OFFSETS[k0]
                p1 = _CORNER_OFFSETS[k1]
                pts.append(
                    (
                        grid.origin[0] + (i + p0[0] + t * (p1[0] - p0[0])) * h,
                        grid.origin[1] + (j + p0[1] + t * (p1[1] - p0[1])) * h,
                    )
                )
            segs.append(pts)
            pa, pb = int(a[i, j]), int(b[i, j])
            spairs.append((min(pa, pb), max(pa, pb)))
    if not segs:
        raise EmptyNodalSet("the dominance field has no sign change")
    segments = np.array(segs, float)
    pairs = np.array(spairs, int)
    # round-off specks at vacuum corners give zero-length segments
    keep = np.hypot(*(segments[:, 1] - segments[:, 0]).T) > 1e-6 * h
    if not keep.any():
        raise EmptyNodalSet("the dominance field has no sign change")
    segments, pairs = segments[keep], pairs[keep]
    lines, lpairs = _link(segments, pairs, 1e-7 * h)

    # junctions on 5x5 node blocks, so a junction on a node or between vacuum nodes is still seen
    nodemax = ndimage.maximum_filter(V, size=(1, 5, 5), mode="nearest")
    present = (nodemax > 0) & (nodemax >= dominance_threshold * nodemax.max(axis=0)[None])
    junction = present.sum(axis=0) >= 3
    cands = []
    if junction.any():
        lab, n = ndimage.label(junction, structure=np.ones((3, 3)))
        for k in range(1, n + 1):
            ii, jj = np.nonzero(lab == k)
            cands.append((grid.origin[0] + ii.mean() * h, grid.origin[1] + jj.mean() * h))
    cands = np.array([_refine_junction(segments, np.array(c), h) for c in cands], float).reshape(-1, 2)
    return NodalSet(lines, lpairs, cands, float(dominance_threshold), segments, h)


def _refine_junction(segments: np.ndarray, c: np.ndarray, h: float, r_in: float = 2.0, r_out: float = 8.0) -> np.ndarray:
    """Least-squares meeting point of straight lines fitted to the branches leaving ``c``.

    Segment midpoints in the annulus [r_in h, r_out h] are grouped by angle gaps;
    the estimate is kept only if it moves by less than 3h.
    """
    mid = segments.mean(axis=1)
    d = mid - c
    rr = np.hypot(d[:, 0], d[:, 1])
    sel = (rr >= r_in * h) & (rr <= r_out * h)
    if sel.sum() < 6:
        return c
    theta = np.mod(np.arctan2(d[sel, 1], d[sel, 0]), 2 * np.pi)
    order = np.argsort(theta)
    th, pts = theta[order], mid[sel][order]
    gaps = np.diff(np.concatenate([th, [th[0] + 2 * np.pi]]))
    if (gaps > 0.35).sum() < 2:
        return c
    label = np.concatenate([[0], np.cumsum(gaps[:-1] > 0.35)])
    if gaps[-1] <= 0.35:
        label[label == label[-1]] = 0  # the run wraps around angle 0
    branches = [np.nonzero(label == k)[0] for k in np.unique(label)]
    A = np.zeros((2, 2))
    rhs = np.zeros(2)
    used = 0
    for br in branches:
        if len(br) < 2:
            continue
        q = pts[br]
        m = q.mean(axis=0)
        _, _, vt = np.linalg.svd(q - m)
        t = vt[0]
        P = np.eye(2) - np.outer(t, t)
        A += P
        rhs += P @ m
        used += 1
    if used < 2 or abs(np.linalg.det(A)) < 1e-12:
        return c
    x = np.linalg.solve(A, rhs)
    return x if np.hypot(*(x - c)) < 3.0 * h else c


def bilinear(values: np.ndarray, grid: Grid2D, pts: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of stacked node arrays (..., nx, ny) at points (n, 2)."""
    pts = np.atleast_2d(pts)
    fx = (pts[:, 0] - grid.origin[0]) / grid.h
    fy = (pts[:, 1] - grid.origin[1]) / grid.h
    i = np.clip(np.floor(fx).astype(int), 0, grid.nx - 2)
    j = np.clip(np.floor(fy).astype(int), 0, grid.ny - 2)
    tx, ty = fx - i, fy - j
    return (
        values[..., i, j] * (1 - tx) * (1 - ty)
        + values[..., i + 1, j] * tx * (1 - ty)
        + values[..., i + 1, j + 1] * tx * ty
        + values[..., i, j + 1] * (1 - tx) * ty
    )


def vertex_deviation(U: SegregatedConfig, nodal: NodalSet) -> float:
    """max_i u_i at polyline vertices divided by h Lip(U); at most KAPPA for valid extractions."""
    v = nodal.vertices()
    if len(v) == 0:
        return 0.0
    vals = bilinear(U.values, U.grid, v).max(axis=0)
    return float(vals.max() / (U.grid.h * U.lipschitz()))


# ---------------------------------------------------------------------------
# classification


@dataclass
class SingularPointReport:
    """Frequency-based classification of one point of the nodal set."""

    location: Tuple[float, float]
    N0: float
    classification: str
    branch_count: int
    branch_angles: List[float]
    C_tilde: float = float("nan")
    violation: float = float("nan")
    window: Tuple[float, float] = (float("nan"), float("nan"))

    @property
    def singular(self) -> bool:
        return self.classification == "singular"

    def to_dict(self) -> dict:
        return {
            "location": list(self.location),
            "N0": self.N0,
            "class": self.classification,
            "branch_count": self.branch_count,
            "branch_angles": list(self.branch_angles),
            "C_tilde": self.C_tilde,
            "violation": self.violation,
            "window": list(self.window),
        }


def branch_angles(nodal: NodalSet, x0, radius: float) -> np.ndarray:
    """Sorted angles in [0, 2pi) where the interface segments cross the circle |x - x0| = radius."""
    S = nodal.segments
    if len(S) == 0:
        return np.zeros(0)
    p = S[:, 0] - np.asarray(x0)
    d = S[:, 1] - S[:, 0]
    A = (d * d).sum(axis=1)
    B = 2 * (p * d).sum(axis=1)
    C = (p * p).sum(axis=1) - radius * radius
    disc = B * B - 4 * A * C
    ok = (disc >= 0) & (A > 0)
    out = []
    sq = np.sqrt(np.where(ok, disc, 0.0))
    for sign in (-1.0, 1.0):
        t = np.where(ok, (-B + sign * sq) / (2 * np.where(A > 0, A, 1.0)), -1.0)
        hit = ok & (t >= 0) & (t < 1)
        q = p[hit] + t[hit, None] * d[hit]
        out.append(np.mod(np.arctan2(q[:, 1], q[:, 0]), 2 * np.pi))
    ang = np.sort(np.concatenate(out))
    if len(ang) > 1:
        # a crossing exactly at a shared segment end is found twice
        keep = np.concatenate([[True], np.diff(ang) > 1e-9])
        ang = ang[keep]
        if len(ang) > 1 and (ang[0] + 2 * np.pi - ang[-1]) <= 1e-9:
            ang = ang[:-1]
    return ang


def default_r_max(U: SegregatedConfig, x0, nodal: Optional[NodalSet], r_cap: float = 0.3) -> float:
    """Largest admissible radius: inside the grid and at most half-way to another junction."""
    h = U.grid.h
    r = min(r_cap, U.grid.distance_to_boundary(x0) - 2.0 * h - 1e-9)
    if nodal is not None and len(nodal.singular_candidates):
        d = np.hypot(*(nodal.singular_candidates - np.asarray(x0)).T)
        d = d[d > 3.0 * h]
        if len(d):
            r = min(r, 0.5 * float(d.min()))
    return r


def classify_points(
    U: SegregatedConfig,
    points,
    nodal: Optional[NodalSet] = None,
    r_min: Optional[float] = None,
    r_max: Optional[float] = None,
    n_radii: int = 16,
) -> List[SingularPointReport]:
    """Classify points of the nodal set by the extrapolated frequency N(0+).

    Parameters
    ----------
    U : SegregatedConfig
    points : array_like, shape (n, 2)
        Each at distance at least 8h from the grid boundary.
    nodal : NodalSet, optional
        Extracted on demand; used for branch counting and the default radius window.
    r_min, r_max : float, optional
        Radius window of the frequency profile (defaults 4h and
        :func:`default_r_max`).
    n_radii : int

    Returns
    -------
    list of SingularPointReport
        ``singular`` when N(0+) >= 1.25, the midpoint of the gap (1, 3/2).

    Raises
    ------
    DegenerateAverage
    """
    h = U.grid.h
    if nodal is None:
        nodal = extract_nodal_set(U)
    pts = np.atleast_2d(np.asarray(points, float))
    reports = []
    for x0 in pts:
        x0 = (float(x0[0]), float(x0[1]))
        if U.grid.distance_to_boundary(x0) < 8.0 * h - 1e-12:
            raise ValueError(f"point {x0} is closer than 8h to the grid boundary")
        rlo = 4.0 * h if r_min is None else r_min
        rhi = default_r_max(U, x0, nodal) if r_max is None else r_max
        if rhi <= 2.0 * rlo:
            raise DegenerateAverage(f"no usable radius window at {x0}", radius=rhi)
        prof = almgren.frequency_profile(U, x0, rlo, rhi, n_radii)
        try:
            mono = almgren.monotonicity_check(prof)
            N0, C, viol, window = mono.N0, mono.C_tilde, mono.violation, mono.window
        except NonMonotone:
            N0, window = almgren.extrapolate_N0(prof.radii, prof.N)
            C, viol = float("nan"), float("nan")
        ang = branch_angles(nodal, x0, BRANCH_RADIUS_CELLS * h)
        cls = "singular" if N0 >= N_STAR else "regular"
        reports.append(SingularPointReport(x0, N0, cls, int(len(ang)), [float(a) for a in ang], C, viol, window))
    return reports


# ---------------------------------------------------------------------------
# reflection law and equal angles


@dataclass
class ReflectionResult:
    mismatch: float
    g_plus: float
    g_minus: float
    normal: Tuple[float, float]
    base: Tuple[float, float]
    nondegenerate: bool


def _local_normal(nodal: NodalSet, x0, radius: float):
    v = nodal.vertices()
    d = np.hypot(*(v - np.asarray(x0)).T)
    near = v[d <= radius]
    if len(near) < 2:
        near = v[np.argsort(d)[:4]]
    c = near.mean(axis=0)
    _, _, vt = np.linalg.svd(near - c)
    t = vt[0]
    return np.array([-t[1], t[0]]), c


def one_sided_gradient(U: SegregatedConfig, p, comp: int, radius: float) -> float:
    """|grad u_comp| at ``p`` from a least-squares fit over nearby nodes where ``comp`` dominates."""
    g = U.grid
    h = g.h
    i0, j0 = g.nearest_index(p)
    k = int(math.ceil(radius / h)) + 1
    si = slice(max(i0 - k, 0), min(i0 + k + 1, g.nx))
    sj = slice(max(j0 - k, 0), min(j0 + k + 1, g.ny))
    X, Y = np.meshgrid(g.x[si] - p[0], g.y[sj] - p[1], indexing="ij")
    vals = U.values[:, si, sj]
    lab = np.argmax(vals, axis=0)
    sel = (np.hypot(X, Y) <= radius) & (lab == comp) & (vals[comp] > 0)
    x, y, z = X[sel] / h, Y[sel] / h, vals[comp][sel]
    if len(z) >= 8:
        A = np.column_stack([np.ones_like(x), x, y, x * x, x * y, y * y])
    elif len(z) >= 3:
        A = np.column_stack([np.ones_like(x), x, y])
    else:
        f = U.component(comp)
        return float(np.hypot(f.interpolate(p[0], p[1], dx=1), f.interpolate(p[0], p[1], dy=1)))
    coef, *_ = np.linalg.lstsq(A, z, rcond=None)
    return float(math.hypot(coef[1], coef[2]) / h)


def reflection_check(
    U: SegregatedConfig, x0, s: Optional[float] = None, nodal: Optional[NodalSet] = None, tau_grad: Optional[float] = None
) -> ReflectionResult:
    """Relative mismatch of the one-sided gradient norms across the interface at ``x0``.

    Gradients are sampled at distances ``s`` and ``2s`` on each side of the local
    normal and extrapolated linearly to the interface.

    Raises
    ------
    TooCloseToSingular
        If a junction candidate lies within 10h of ``x0``.
    """
    h = U.grid.h
    if s is None:
        s = 2.0 * h
    if not (2.0 * h * (1 - 1e-9) <= s <= 6.0 * h * (1 + 1e-9)):
        raise ValueError("probe distance must lie in [2h, 6h]")
    if nodal is None:
        nodal = extract_nodal_set(U)
    if nodal.distance_to_singular(x0) < BRANCH_RADIUS_CELLS * h:
        raise TooCloseToSingular(f"{tuple(x0)} is within 10h of a junction")
    nu, c = _local_normal(nodal, x0, 3.0 * h)
    x0 = np.asarray(x0, float)
    base = x0 - np.dot(x0 - c, nu) * nu
    sides = []
    for sign in (1.0, -1.0):
        gs = []
        for dist in (s, 2.0 * s):
            p = base + sign * dist * nu
            comp = int(np.argmax(bilinear(U.values, U.grid, p[None])[:, 0]))
            gs.append(one_sided_gradient(U, p, comp, 2.5 * h))
        sides.append(2.0 * gs[0] - gs[1])
    gp, gm = sides
    if tau_grad is None:
        tau_grad = 1e-2 * U.lipschitz()
    top = max(abs(gp), abs(gm))
    mismatch = abs(gp - gm) / top if top > 0 else 0.0
    return ReflectionResult(float(mismatch), float(gp), float(gm), (float(nu[0]), float(nu[1])), (float(base[0]), float(base[1])), bool(min(gp, gm) >= tau_grad))


def equal_angle_check(report) -> float:
    """Max |gap - 2pi/k| over consecutive branch angles (cyclic); accepts a report or angles."""
    ang = np.sort(np.asarray(report.branch_angles if hasattr(report, "branch_angles") else report, float))
    k = len(ang)
    if k < 3:
        raise ValueError("equal-angle check needs at least three branches")
    gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]]))
    return float(np.max(np.abs(gaps - 2 * np.pi / k)))


# ---------------------------------------------------------------------------
# flatness


@dataclass
class FlatnessReport:
    center: Tuple[float, float]
    radius: float
    angle: float
    delta: float


def _clip_segments(S: np.ndarray, x0, r: float) -> np.ndarray:
    """Parts of segments inside the closed disk B_r(x0)."""
    p = S[:, 0] - x0
    d = S[:, 1] - S[:, 0]
    A = (d * d).sum(axis=1)
    B = 2 * (p * d).sum(axis=1)
    C = (p * p).sum(axis=1) - r * r
    disc = B * B - 4 * A * C
    ok = (disc > 0) & (A > 0)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    Asafe = np.where(A > 0, A, 1.0)
    t0 = np.clip((-B - sq) / (2 * Asafe), 0.0, 1.0)
    t1 = np.clip((-B + sq) / (2 * Asafe), 0.0, 1.0)
    keep = ok & (t1 > t0)
    a = p[keep] + t0[keep, None] * d[keep]
    b = p[keep] + t1[keep, None] * d[keep]
    return np.stack([a, b], axis=1)


def _point_segment_distance(Q: np.ndarray, S: np.ndarray) -> np.ndarray:
    a = S[None, :, 0]
    d = S[None, :, 1] - a
    q = Q[:, None]
    dd = np.maximum((d * d).sum(-1), 1e-300)
    t = np.clip(((q - a) * d).sum(-1) / dd, 0.0, 1.0)
    diff = q - a - t[..., None] * d
    return np.sqrt((diff * diff).sum(-1)).min(axis=1)


def flatness_scan(U: SegregatedConfig, x0, radii: Sequence[float], nodal: Optional[NodalSet] = None) -> List[FlatnessReport]:
    """Normalized Hausdorff distance between the nodal set and the best line through ``x0``.

    For each radius the line angle minimizes the largest distance of nodal points
    in B_r(x0) to the line; the reported ``delta`` is the symmetric Hausdorff
    distance of the two sets inside the ball divided by r, capped at 1.
    """
    if nodal is None:
        nodal = extract_nodal_set(U)
    x0 = np.asarray(x0, float)
    h = U.grid.h
    out = []
    for r in radii:
        U.grid.check_ball(tuple(x0), r)
        S = _clip_segments(nodal.segments, x0, r)
        if len(S) == 0:
            out.append(FlatnessReport((float(x0[0]), float(x0[1])), float(r), float("nan"), 1.0))
            continue
        pts = np.concatenate([S[:, 0], S[:, 1], 0.5 * (S[:, 0] + S[:, 1])])

        def width(phi):
            n = np.array([-math.sin(phi), math.cos(phi)])
            return float(np.abs(pts @ n).max())

        grid_phi = np.linspace(0.0, math.pi, 361)[:-1]
        wv = np.array([width(p) for p in grid_phi])
        k = int(np.argmin(wv))
        lo, hi = grid_phi[k] - math.pi / 360, grid_phi[k] + math.pi / 360
        for _ in range(40):
            m1, m2 = lo + (hi - lo) / 3, hi - (hi - lo) / 3
            if width(m1) <= width(m2):
                hi = m2
            else:
                lo = m1
        phi = 0.5 * (lo + hi)
        t = np.array([math.cos(phi), math.sin(phi)])
        along = np.clip(pts @ t, -r, r)
        d1 = float(np.hypot(*(pts - along[:, None] * t).T).max())
        ls = np.linspace(-r, r, max(int(math.ceil(4 * r / h)), 8) + 1)
        d2 = float(_point_segment_distance(ls[:, None] * t, S).max())
        delta = min(max(d1, d2) / r, 1.0)
        out.append(FlatnessReport((float(x0[0]), float(x0[1])), float(r), float(np.mod(phi, math.pi)), float(delta)))
    return out


# ---------------------------------------------------------------------------
# splitting


def split_component(U: SegregatedConfig, i: int, center, radius: float, threshold: float = 0.0):
    """Split u_i inside B_radius(center) into its two connected pieces.

    Labels the connected components of {u_i > threshold} in the ball
    (4-connectivity) and returns each piece as a field, zero elsewhere.

    Raises
    ------
    NotTwoComponents
    """
    X, Y = U.grid.mesh()
    ball = np.hypot(X - center[0], Y - center[1]) <= radius
    u = U.values[i]
    lab, n = ndimage.label(ball & (u > threshold))
    if n != 2:
        raise NotTwoComponents(f"component {i} has {n} connected pieces in the region, expected 2")
    return tuple(ScalarField(U.grid, np.where(lab == k, u, 0.0)) for k in (1, 2))
