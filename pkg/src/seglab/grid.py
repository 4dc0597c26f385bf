"""Uniform 2D grids, discrete fields, finite differences and ball/circle quadrature.

Array layout is ``values[i, j]`` with ``i`` along x and ``j`` along y, so the node
``(i, j)`` sits at ``origin + (i*h, j*h)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .exceptions import BallOutOfDomain

Point = Tuple[float, float]

MIN_NODES = 16


@dataclass(frozen=True)
class Grid2D:
    """Uniform square-cell grid on a rectangle."""

    nx: int
    ny: int
    h: float
    origin: Point = (0.0, 0.0)

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ValueError("node counts must be integers")
        if self.nx < MIN_NODES or self.ny < MIN_NODES:
            raise ValueError(f"need at least {MIN_NODES} nodes per axis, got {self.nx}x{self.ny}")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ValueError(f"spacing must be positive, got {self.h}")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @classmethod
    def square(cls, lo: float, hi: float, n: int) -> "Grid2D":
        """``n`` x ``n`` nodes covering ``[lo, hi]^2`` including both ends."""
        return cls(n, n, (hi - lo) / (n - 1), (lo, lo))

    @property
    def extent(self) -> Point:
        return ((self.nx - 1) * self.h, (self.ny - 1) * self.h)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def bounds(self) -> Tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax)."""
        x0, y0 = self.origin
        ex, ey = self.extent
        return (x0, x0 + ex, y0, y0 + ey)

    @cached_property
    def x(self) -> np.ndarray:
        return self.origin[0] + self.h * np.arange(self.nx)

    @cached_property
    def y(self) -> np.ndarray:
        return self.origin[1] + self.h * np.arange(self.ny)

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    def distance_to_boundary(self, p: Point) -> float:
        xmin, xmax, ymin, ymax = self.bounds
        return min(p[0] - xmin, xmax - p[0], p[1] - ymin, ymax - p[1])

    def check_ball(self, center: Point, r: float, margin: Optional[float] = None) -> None:
        """Raise :class:`BallOutOfDomain` unless B_r(center) keeps ``margin`` (default 2h) to the edge."""
        if margin is None:
            margin = 2.0 * self.h
        if not r > 0:
            raise BallOutOfDomain(f"radius must be positive, got {r}")
        d = self.distance_to_boundary(center)
        if d < r + margin - 1e-12 * max(1.0, r):
            raise BallOutOfDomain(
                f"ball of radius {r:.4g} at {tuple(center)} needs margin {margin:.3g}, "
                f"distance to boundary is {d:.4g}"
            )

    def nearest_index(self, p: Point) -> Tuple[int, int]:
        i = int(round((p[0] - self.origin[0]) / self.h))
        j = int(round((p[1] - self.origin[1]) / self.h))
        return (min(max(i, 0), self.nx - 1), min(max(j, 0), self.ny - 1))

    def to_header(self) -> dict:
        return {"nx": self.nx, "ny": self.ny, "h": self.h, "origin": list(self.origin)}

    @classmethod
    def from_header(cls, header: dict) -> "Grid2D":
        return cls(int(header["nx"]), int(header["ny"]), float(header["h"]), tuple(header["origin"]))


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real values on every node of a grid.

    ``valid`` marks nodes where the values are meaningful (``None`` means all of
    them); invalid nodes hold NaN, as produced e.g. by :func:`laplacian` on the
    boundary ring.
    """

    grid: Grid2D
    values: np.ndarray
    valid: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} does not match grid {self.grid.shape}")
        if self.valid is not None:
            valid = np.array(self.valid, dtype=bool)
            if valid.shape != vals.shape:
                raise ValueError("valid mask shape mismatch")
            valid.setflags(write=False)
            object.__setattr__(self, "valid", valid)
            check = vals[valid]
        else:
            check = vals
        if not np.all(np.isfinite(check)):
            raise ValueError("field values must be finite at every valid node")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid: Grid2D, func: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "ScalarField":
        X, Y = grid.mesh()
        return cls(grid, np.broadcast_to(func(X, Y), grid.shape))

    @cached_property
    def _spline(self) -> RectBivariateSpline:
        if self.valid is not None and not self.valid.all():
            raise ValueError("cannot interpolate a field with invalid nodes")
        return RectBivariateSpline(self.grid.x, self.grid.y, self.values, kx=3, ky=3, s=0)

    def interpolate(self, xs, ys, dx: int = 0, dy: int = 0) -> np.ndarray:
        """Bicubic spline interpolation (or its derivatives) at scattered points."""
        return self._spline.ev(np.asarray(xs, float), np.asarray(ys, float), dx=dx, dy=dy)

    def __mul__(self, c):
        return ScalarField(self.grid, self.values * float(c), self.valid)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class VectorField:
    """x- and y-derivative samples on every node, stored as ``values[0]``, ``values[1]``."""

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (2,) + self.grid.shape:
            raise ValueError(f"vector field shape {vals.shape} does not match grid")
        if not np.all(np.isfinite(vals)):
            raise ValueError("vector field values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def x(self) -> np.ndarray:
        return self.values[0]

    @property
    def y(self) -> np.ndarray:
        return self.values[1]

    def norm_squared(self) -> ScalarField:
        return ScalarField(self.grid, self.values[0] ** 2 + self.values[1] ** 2)


def gradient(f: ScalarField) -> VectorField:
    """Central differences inside, second-order one-sided differences on the boundary ring."""
    gx, gy = np.gradient(f.values, f.grid.h, edge_order=2)
    return VectorField(f.grid, np.stack([gx, gy]))


def laplacian_values(values: np.ndarray, h: float) -> np.ndarray:
    """5-point Laplacian of a raw array; boundary ring set to NaN."""
    out = np.full(values.shape, np.nan)
    out[1:-1, 1:-1] = (
        values[2:, 1:-1] + values[:-2, 1:-1] + values[1:-1, 2:] + values[1:-1, :-2] - 4.0 * values[1:-1, 1:-1]
    ) / (h * h)
    return out


def interior_mask(grid: Grid2D) -> np.ndarray:
    mask = np.zeros(grid.shape, dtype=bool)
    mask[1:-1, 1:-1] = True
    return mask


def laplacian(f: ScalarField) -> ScalarField:
    """5-point Laplacian at interior nodes; boundary nodes are flagged invalid (NaN)."""
    return ScalarField(f.grid, laplacian_values(f.values, f.grid.h), interior_mask(f.grid))


# ---------------------------------------------------------------------------
# quadrature


def _disk_quadrant_area(X, Y, r):
    """Area of the disk of radius r (at the origin) intersected with {x <= X, y <= Y}."""
    Xc = np.clip(X, -r, r)
    Yc = np.clip(Y, -r, r)
    c = np.sqrt(np.maximum(r * r - Yc * Yc, 0.0))

    def S(t):
        # antiderivative of sqrt(r^2 - t^2)
        t = np.clip(t, -r, r)
        return 0.5 * (t * np.sqrt(np.maximum(r * r - t * t, 0.0)) + r * r * np.arcsin(t / r))

    # inner strip |x| < c where the chord is cut by y = Y: length Y + s(x)
    a = -c
    b = np.minimum(c, Xc)
    inner = np.where(b > a, Yc * (b - a) + S(b) - S(a), 0.0)
    # outer strips |x| > c: full chord 2s(x) when Y >= 0, empty when Y < 0
    left = 2.0 * (S(np.minimum(-c, Xc)) - S(-r))
    right = np.where(Xc > c, 2.0 * (S(Xc) - S(c)), 0.0)
    outer = np.where(Yc >= 0.0, left + right, 0.0)
    return inner + outer


def rect_disk_area(x1, x2, y1, y2, r):
    """Exact area of [x1,x2]x[y1,y2] intersected with the disk of radius r centred at 0."""
    g = _disk_quadrant_area
    return g(x2, y2, r) - g(x1, y2, r) - g(x2, y1, r) + g(x1, y1, r)


def ball_weights(grid: Grid2D, center: Point, r: float):
    """Node weights for integrating over B_r(center).

    Each node owns the dual cell of side h around it; its weight is the exact
    area of that cell inside the disk. Returns ``(islice, jslice, weights)``
    covering the bounding box of the disk.
    """
    grid.check_ball(center, r)
    h = grid.h
    cx, cy = center
    i0 = max(int(math.floor((cx - r - grid.origin[0]) / h)) - 1, 0)
    i1 = min(int(math.ceil((cx + r - grid.origin[0]) / h)) + 2, grid.nx)
    j0 = max(int(math.floor((cy - r - grid.origin[1]) / h)) - 1, 0)
    j1 = min(int(math.ceil((cy + r - grid.origin[1]) / h)) + 2, grid.ny)
    xs = grid.x[i0:i1] - cx
    ys = grid.y[j0:j1] - cy
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    # nearest and farthest points of each dual cell decide inside / outside / cut
    ax, ay = np.abs(X), np.abs(Y)
    near = np.hypot(np.maximum(ax - 0.5 * h, 0.0), np.maximum(ay - 0.5 * h, 0.0))
    far = np.hypot(ax + 0.5 * h, ay + 0.5 * h)
    w = np.where(far <= r, h * h, 0.0)
    cut = (near < r) & (far > r)
    w[cut] = rect_disk_area(X[cut] - 0.5 * h, X[cut] + 0.5 * h, Y[cut] - 0.5 * h, Y[cut] + 0.5 * h, r)
    return slice(i0, i1), slice(j0, j1), w


def ball_integral(f: ScalarField, center: Point, r: float) -> float:
    """Integral of ``f`` over the disk B_r(center) with exact cut-cell areas.

    Raises
    ------
    BallOutOfDomain
        If the disk does not keep a 2h margin to the grid boundary.
    """
    si, sj, w = ball_weights(f.grid, center, r)
    return weighted_sum(f.values[si, sj], w)


def weighted_sum(values: np.ndarray, w: np.ndarray) -> float:
    """Sum of ``values * w`` that ignores values (even NaN) where the weight is zero."""
    return float(np.sum(np.where(w > 0.0, values, 0.0) * w))


def min_circle_samples(r: float, h: float) -> int:
    return max(64, int(math.ceil(8.0 * math.pi * r / h)))


def circle_points(center: Point, r: float, n: int):
    theta = 2.0 * math.pi * np.arange(n) / n
    return theta, center[0] + r * np.cos(theta), center[1] + r * np.sin(theta)


def _resolve_samples(grid: Grid2D, r: float, n_samples: Optional[int]) -> int:
    nmin = min_circle_samples(r, grid.h)
    if n_samples is None:
        return nmin
    if n_samples < nmin:
        raise ValueError(f"n_samples={n_samples} below the minimum {nmin} for r={r}, h={grid.h}")
    return int(n_samples)


def circle_integral(f: ScalarField, center: Point, r: float, n_samples: Optional[int] = None) -> float:
    """Line integral of ``f`` over the circle of radius r, trapezoid rule in angle.

    Values on the circle come from bicubic spline interpolation.
    """
    f.grid.check_ball(center, r)
    n = _resolve_samples(f.grid, r, n_samples)
    _, xs, ys = circle_points(center, r, n)
    return float(2.0 * math.pi * r * np.mean(f.interpolate(xs, ys)))


def radial_derivative(f: ScalarField, center: Point, r: float, n_samples: Optional[int] = None):
    """Outward normal derivative of ``f`` on the circle, from the differentiated spline.

    Returns
    -------
    theta, dnu : ndarray
        Sample angles and the matching values of <grad f, nu>.
    """
    f.grid.check_ball(center, r)
    n = _resolve_samples(f.grid, r, n_samples)
    theta, xs, ys = circle_points(center, r, n)
    gx = f.interpolate(xs, ys, dx=1)
    gy = f.interpolate(xs, ys, dy=1)
    return theta, gx * np.cos(theta) + gy * np.sin(theta)
