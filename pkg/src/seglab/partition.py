"""Optimal partitions for first Dirichlet eigenvalues by penalized inverse-power relaxation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .exceptions import DegenerateSeed, EmptyRegion, NoConvergence
from .grid import Grid2D, ScalarField, interior_mask
from .segregated import Reaction, ReactionSpec, SegregatedConfig
from .sweeps import rb_solve

MIN_REGION_NODES = 9
# inner solves of the inverse-power steps; each iterate is renormalized right after
INNER_TOL = 1e-6


def _masked_laplacian(mask: np.ndarray, h: float):
    """Negative 5-point Laplacian on the nodes of ``mask`` with zero Dirichlet data elsewhere."""
    idx = -np.ones(mask.shape, dtype=np.int64)
    ii, jj = np.nonzero(mask)
    n = len(ii)
    idx[ii, jj] = np.arange(n)
    rows = [np.arange(n)]
    cols = [np.arange(n)]
    vals = [np.full(n, 4.0)]
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        ni, nj = ii + di, jj + dj
        ok = (ni >= 0) & (ni < mask.shape[0]) & (nj >= 0) & (nj < mask.shape[1])
        nb = np.full(n, -1)
        nb[ok] = idx[ni[ok], nj[ok]]
        sel = nb >= 0
        rows.append(np.arange(n)[sel])
        cols.append(nb[sel])
        vals.append(-np.ones(sel.sum()))
    A = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return A / (h * h), (ii, jj)


def lambda1(mask: np.ndarray, grid: Grid2D, tol: float = 1e-8, max_iter: int = 2000):
    """First Dirichlet eigenvalue of the 5-point Laplacian on a node set.

    Inverse-power iteration with a sparse LU factorization; the iteration stops
    when the Rayleigh quotient changes by less than ``tol`` relative.

    Parameters
    ----------
    mask : ndarray of bool, shape (nx, ny)
        Nodes of the region; the grid boundary ring is always excluded.
    grid : Grid2D

    Returns
    -------
    lam : float
    phi : ScalarField
        Positive eigenfunction with unit discrete L2 norm (sum phi^2 h^2 = 1).

    Raises
    ------
    EmptyRegion
        With fewer than 9 interior nodes.
    NoConvergence
    """
    m = np.asarray(mask, bool) & interior_mask(grid)
    if m.sum() < MIN_REGION_NODES:
        raise EmptyRegion(f"region has {int(m.sum())} interior nodes, need {MIN_REGION_NODES}")
    A, (ii, jj) = _masked_laplacian(m, grid.h)
    lu = splu(A)
    x = np.ones(A.shape[0])
    lam_old = math.inf
    for it in range(max_iter):
        y = lu.solve(x)
        lam = float(x @ y) / float(y @ y)  # Rayleigh quotient of y since A y = x
        x = y / np.linalg.norm(y)
        if abs(lam - lam_old) <= tol * lam:
            break
        lam_old = lam
    else:
        raise NoConvergence(f"inverse power iteration did not converge in {max_iter} steps", iterations=max_iter)
    x = np.abs(x) if x.sum() >= 0 else np.abs(-x)
    phi = np.zeros(grid.shape)
    phi[ii, jj] = x / (np.linalg.norm(x) * grid.h)
    return lam, ScalarField(grid, phi)


@dataclass
class PartitionObjective:
    value: float
    p: float


def objective(partition_or_eigs, p: Optional[float] = None) -> PartitionObjective:
    """(1/h sum lambda_i^p)^(1/p), or max lambda_i for p = inf."""
    if isinstance(partition_or_eigs, Partition):
        eigs = partition_or_eigs.eigenvalues
        p = partition_or_eigs.p if p is None else p
    else:
        eigs = np.asarray(partition_or_eigs, float)
    if p is None:
        raise ValueError("p is required")
    eigs = np.asarray(eigs, float)
    if math.isinf(p):
        return PartitionObjective(float(eigs.max()), p)
    if p < 1:
        raise ValueError("p must be in [1, inf]")
    top = eigs.max()
    return PartitionObjective(float(top * np.mean((eigs / top) ** p) ** (1.0 / p)), p)


@dataclass
class Partition:
    """Hard partition with per-part eigenpairs.

    ``labels`` holds 1..h on assigned nodes and 0 elsewhere.
    """

    grid: Grid2D
    labels: np.ndarray
    eigenvalues: np.ndarray
    eigenfunctions: List[ScalarField]
    p: float
    objective: float
    relaxed_eigenvalues: np.ndarray
    relaxed_objective: float
    history: List[dict] = field(default_factory=list)
    seed: Optional[int] = None
    restarts: List[dict] = field(default_factory=list)
    domain: Optional[np.ndarray] = None

    @property
    def h_parts(self) -> int:
        return len(self.eigenvalues)

    def masses(self) -> np.ndarray:
        return np.array([float((self.labels == k + 1).sum()) * self.grid.h**2 for k in range(self.h_parts)])


def _relaxed_eigs(U: np.ndarray, beta: float, h: float, active: np.ndarray) -> np.ndarray:
    """<u_i, (-Lap + beta sum_{j != i} u_j^2) u_i> for unit-norm u_i."""
    S = (U**2).sum(axis=0)
    out = np.empty(len(U))
    for i, u in enumerate(U):
        grad = np.sum(np.diff(u, axis=0) ** 2) + np.sum(np.diff(u, axis=1) ** 2)
        out[i] = grad + beta * h * h * float(np.sum(u * u * (S - u * u))) if active is not None else grad
    return out


def _weights(lam: np.ndarray, p: float, w_prev: Optional[np.ndarray], gain: float = 1.0) -> np.ndarray:
    if math.isinf(p):
        # minimax optima equalize the eigenvalues: push weight toward the parts that are too high
        logw = np.zeros(len(lam)) if w_prev is None else np.log(w_prev)
        logw = logw + gain * (lam - lam.mean()) / lam.mean()
        w = np.exp(logw - logw.max())
    else:
        w = (lam / lam.max()) ** (p - 1.0)
    return np.maximum(w / w.max(), 1e-3)


def _initial_guess(grid: Grid2D, domain: np.ndarray, h_parts: int, rng) -> np.ndarray:
    X, Y = grid.mesh()
    ii, jj = np.nonzero(domain)
    pick = rng.choice(len(ii), size=h_parts, replace=False)
    centers = np.column_stack([X[ii[pick], jj[pick]], Y[ii[pick], jj[pick]]])
    d = np.stack([np.hypot(X - c[0], Y - c[1]) for c in centers])
    lab = np.argmin(d, axis=0)
    U = np.stack([((lab == k) & domain).astype(float) for k in range(h_parts)])
    U *= 1.0 + 0.1 * rng.random(U.shape)
    return U


def _normalize(U: np.ndarray, h: float) -> np.ndarray:
    n = np.sqrt((U**2).sum(axis=(1, 2))) * h
    if np.any(n <= 0):
        raise DegenerateSeed("a relaxed component collapsed to zero mass")
    return U / n[:, None, None]


def _relax(
    grid: Grid2D,
    domain: np.ndarray,
    h_parts: int,
    p: float,
    beta_ladder: Sequence[float],
    rng,
    max_iter: int,
    tol: float,
):
    h = grid.h
    active = domain & interior_mask(grid)
    U = _normalize(_initial_guess(grid, active, h_parts, rng), h)
    history = []
    diag0 = np.where(active, 4.0, 1.0)
    w = None
    for beta in beta_ladder:
        lam = _relaxed_eigs(U, beta, h, active)
        prev = objective(lam, p).value
        for it in range(max_iter):
            w = _weights(lam, p, w)
            for i in range(h_parts):
                S = (U**2).sum(axis=0) - U[i] ** 2
                diag = diag0 + h * h * (beta / w[i]) * S
                v = U[i].copy()
                rb_solve(v, h * h * U[i], diag, 1.0, active, tol=INNER_TOL)
                v = np.maximum(v, 0.0)
                nv = math.sqrt(float((v**2).sum())) * h
                if nv <= 0:
                    raise DegenerateSeed(f"component {i} collapsed at beta={beta:g}")
                U[i] = v / nv
            lam = _relaxed_eigs(U, beta, h, active)
            val = objective(lam, p).value
            spread = float((lam.max() - lam.min()) / lam.mean())
            history.append({"beta": float(beta), "iteration": it, "objective": val, "spread": spread})
            if abs(val - prev) <= tol * val and (not math.isinf(p) or spread <= 1e-3):
                break
            prev = val
    return U, lam, history


def optimize_partition(
    h_parts: int,
    p: float,
    grid: Grid2D,
    beta_ladder: Sequence[float] = (1e3, 1e4, 1e5, 1e6),
    seed: int = 0,
    domain: Optional[np.ndarray] = None,
    n_starts: int = 5,
    max_iter: int = 400,
    tol: float = 1e-6,
) -> Partition:
    """Minimize the p-mean (or for p = inf the max) of first eigenvalues over h-partitions.

    Each start relaxes the problem along ``beta_ladder``: one inverse-power step
    per component for -Lap + (beta/w_i) sum_{j != i} u_j^2 with p-dependent
    weights w_i, then L2 renormalization. The result is hardened by argmax
    labeling and the eigenvalues are recomputed on the hard parts. The best of
    ``n_starts`` seeded starts is kept.

    Parameters
    ----------
    h_parts : int
    p : float
        In [1, inf].
    grid : Grid2D
    beta_ladder : sequence of float
    seed : int
        Starts use seeds ``seed, seed + 1, ...``.
    domain : ndarray of bool, optional
        Node mask of the domain (default: the whole grid).
    n_starts : int
    max_iter : int
        Iteration cap per beta stage.
    tol : float
        Relative stopping tolerance on the relaxed objective.

    Raises
    ------
    DegenerateSeed
        If every start collapses.
    """
    if h_parts < 1:
        raise ValueError("need at least one part")
    if not (p >= 1):
        raise ValueError("p must be in [1, inf]")
    dom = np.ones(grid.shape, bool) if domain is None else np.asarray(domain, bool)
    active = dom & interior_mask(grid)
    if h_parts == 1:
        lam, phi = lambda1(active, grid)
        labels = active.astype(int)
        return Partition(grid, labels, np.array([lam]), [phi], p, lam, np.array([lam]), lam, seed=seed, domain=dom)
    best = None
    restarts = []
    for k in range(n_starts):
        s = seed + k
        rng = np.random.default_rng(s)
        try:
            U, lam_rel, hist = _relax(grid, dom, h_parts, p, beta_ladder, rng, max_iter, tol)
            part = _harden(grid, dom, U, p, lam_rel, hist, s)
        except DegenerateSeed as e:
            restarts.append({"seed": s, "reason": str(e)})
            continue
        if best is None or part.objective < best.objective:
            best = part
    if best is None:
        raise DegenerateSeed(f"all {n_starts} starts collapsed")
    best.restarts = restarts
    return best


def _harden(grid, dom, U, p, lam_rel, hist, seed) -> Partition:
    active = dom & interior_mask(grid)
    top = U.max(axis=0)
    labels = np.where(active & (top > 0), np.argmax(U, axis=0) + 1, 0)
    eigs, funcs = [], []
    for k in range(len(U)):
        try:
            lam, phi = lambda1(labels == k + 1, grid)
        except EmptyRegion as e:
            raise DegenerateSeed(f"part {k + 1} is empty after hardening: {e}") from e
        eigs.append(lam)
        funcs.append(phi)
    eigs = np.array(eigs)
    return Partition(
        grid,
        labels,
        eigs,
        funcs,
        p,
        objective(eigs, p).value,
        np.asarray(lam_rel),
        objective(lam_rel, p).value,
        hist,
        seed,
        domain=dom,
    )


def interface_pairs(labels: np.ndarray):
    """Adjacent node pairs (p in part a, q in part b, a < b) along both grid axes."""
    out = []
    for axis in (0, 1):
        a = labels[:-1, :] if axis == 0 else labels[:, :-1]
        b = labels[1:, :] if axis == 0 else labels[:, 1:]
        ii, jj = np.nonzero((a > 0) & (b > 0) & (a != b))
        for i, j in zip(ii, jj):
            p = (i, j)
            q = (i + 1, j) if axis == 0 else (i, j + 1)
            out.append((p, q))
    return out


def balance_scales(partition: Partition) -> np.ndarray:
    """Scale factors a_i matching one-sided normal derivatives across shared interfaces.

    For each adjacent node pair (p, q) in different parts the derivatives are
    phi_a(p)/h and phi_b(q)/h; log a_i solves the least-squares problem
    log a_a + log phi_a(p) = log a_b + log phi_b(q) with mean(log a) = 0.
    """
    hp = partition.h_parts
    rows, rhs = [], []
    L = partition.labels
    phis = [f.values for f in partition.eigenfunctions]
    for p, q in interface_pairs(L):
        a, b = L[p] - 1, L[q] - 1
        ga, gb = phis[a][p], phis[b][q]
        if ga <= 0 or gb <= 0:
            continue
        row = np.zeros(hp)
        row[a], row[b] = 1.0, -1.0
        rows.append(row)
        rhs.append(math.log(gb) - math.log(ga))
    rows.append(np.ones(hp))
    rhs.append(0.0)
    sol, *_ = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)
    return np.exp(sol)


def partition_to_config(partition: Partition) -> SegregatedConfig:
    """Scaled eigenfunctions a_i phi_i as a configuration with reactions f_i(s) = lambda_i s."""
    a = balance_scales(partition)
    vals = np.stack([ai * f.values for ai, f in zip(a, partition.eigenfunctions)])
    reaction = ReactionSpec(tuple(Reaction.linear(l) for l in partition.eigenvalues))
    return SegregatedConfig(partition.grid, vals, reaction, meta={"a": a.tolist(), "p": partition.p})


def disk_mask(grid: Grid2D, center=(0.0, 0.0), radius: float = 1.0) -> np.ndarray:
    X, Y = grid.mesh()
    return np.hypot(X - center[0], Y - center[1]) < radius
