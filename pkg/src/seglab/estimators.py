"""scikit-learn style wrappers around the functional API.

Constructors only store hyper-parameters; ``fit`` does the work and sets
trailing-underscore attributes.
"""
from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator

from . import nodal as _nodal
from .almgren import frequency_profile, monotonicity_check
from .partition import optimize_partition, partition_to_config
from .segregated import ReactionSpec
from .solver import BoundarySpec, CompetitionProblem, beta_continuation
from .validation import check_config, check_grid, check_points


class CompetitionSolver(BaseEstimator):
    """beta-continuation for the GP or LV competition system with edge-bump traces.

    Parameters
    ----------
    kind : {"gp", "lv"}
    n_components : int
    beta_ladder : sequence of float
    amplitude : float
        Trace amplitude of the edge bumps.
    edges : sequence of str
        One edge per component, e.g. ``("left", "right")``.
    reaction : ReactionSpec, optional
        Defaults to zero (GP) and must be given for LV.
    tol : float, optional
        Steady-state tolerance; default ``1e-6 * amplitude``.
    max_iters : int
    """

    def __init__(self, kind="gp", n_components=2, beta_ladder=(10.0, 1e2, 1e3, 1e4), amplitude=1.0,
                 edges=("left", "right"), reaction=None, tol=None, max_iters=100):
        self.kind = kind
        self.n_components = n_components
        self.beta_ladder = beta_ladder
        self.amplitude = amplitude
        self.edges = edges
        self.reaction = reaction
        self.tol = tol
        self.max_iters = max_iters

    def fit(self, grid, y=None):
        grid = check_grid(grid)
        if len(self.edges) != self.n_components:
            raise ValueError("need one edge per component")
        bc = BoundarySpec.edge_bumps(grid, list(self.edges), self.amplitude)
        reaction = self.reaction if self.reaction is not None else ReactionSpec.zero(self.n_components)
        problem = CompetitionProblem(self.kind, reaction, float(self.beta_ladder[0]), bc, grid)
        tol = 1e-6 * self.amplitude if self.tol is None else self.tol
        self.result_ = beta_continuation(problem, self.beta_ladder, tol=tol, max_iters=self.max_iters)
        self.config_ = self.result_.final
        self.overlaps_ = self.result_.overlaps
        self.reports_ = self.result_.reports
        return self


class FrequencyAnalyzer(BaseEstimator):
    """Frequency profiles, monotonicity fits and regular/singular labels at given centers."""

    def __init__(self, r_min=None, r_max=None, n_radii=16):
        self.r_min = r_min
        self.r_max = r_max
        self.n_radii = n_radii

    def fit(self, U, centers):
        U = check_config(U)
        pts = check_points(U.grid, centers, margin=8.0 * U.grid.h)
        self.nodal_ = _nodal.extract_nodal_set(U)
        self.reports_ = _nodal.classify_points(U, pts, self.nodal_, self.r_min, self.r_max, self.n_radii)
        self.N0_ = np.array([r.N0 for r in self.reports_])
        self.labels_ = np.array([r.classification for r in self.reports_])
        return self

    def predict(self, U, centers):
        """Class labels ('regular' or 'singular') at ``centers``."""
        return self.fit(U, centers).labels_


class PartitionOptimizer(BaseEstimator):
    """Penalized optimal partition search; ``p='inf'`` selects the max objective."""

    def __init__(self, n_parts=2, p=math.inf, beta_ladder=(1e3, 1e4, 1e5, 1e6), n_starts=5, seed=0):
        self.n_parts = n_parts
        self.p = p
        self.beta_ladder = beta_ladder
        self.n_starts = n_starts
        self.seed = seed

    def fit(self, grid, domain=None):
        grid = check_grid(grid)
        p = math.inf if self.p in ("inf", math.inf) else float(self.p)
        self.partition_ = optimize_partition(self.n_parts, p, grid, self.beta_ladder, self.seed, domain, self.n_starts)
        self.labels_ = self.partition_.labels
        self.eigenvalues_ = self.partition_.eigenvalues
        self.objective_ = self.partition_.objective
        return self

    def to_config(self):
        return partition_to_config(self.partition_)


__all__ = ["CompetitionSolver", "FrequencyAnalyzer", "PartitionOptimizer", "frequency_profile", "monotonicity_check"]
