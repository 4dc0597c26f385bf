"""Input validation helpers shared by the estimators and the CLI."""
from __future__ import annotations

import numpy as np

from .exceptions import InvalidConfiguration
from .grid import Grid2D
from .segregated import SegregatedConfig


def check_grid(grid) -> Grid2D:
    if not isinstance(grid, Grid2D):
        raise TypeError(f"expected Grid2D, got {type(grid).__name__}")
    return grid


def check_config(U, h: int | None = None) -> SegregatedConfig:
    """Return ``U`` if it is a SegregatedConfig (with ``h`` components when given)."""
    if not isinstance(U, SegregatedConfig):
        raise TypeError(f"expected SegregatedConfig, got {type(U).__name__}")
    if h is not None and U.h_components != h:
        raise InvalidConfiguration(f"expected {h} components, got {U.h_components}")
    return U


def check_points(grid: Grid2D, points, margin: float = 0.0) -> np.ndarray:
    """Points as an (n, 2) float array, each at least ``margin`` inside the grid."""
    pts = np.atleast_2d(np.asarray(points, float))
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"points must have shape (n, 2), got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    for p in pts:
        if grid.distance_to_boundary(p) < margin:
            raise ValueError(f"point {tuple(p)} is closer than {margin:.3g} to the grid boundary")
    return pts
