"""Red-black relaxation for the screened 5-point operator.

Solves, at every active node p,

    diag[p] * u[p] - alpha * sum_{q ~ p} u[q] = rhs[p]

with inactive nodes acting as fixed Dirichlet values. Red nodes ((i + j) even)
are updated first, then black nodes, so a sweep gives identical results for any
number of worker threads.
"""
from __future__ import annotations

import math
import warnings

import numpy as np

warnings.filterwarnings("ignore", message="The TBB threading layer")
from numba import njit, prange  # noqa: E402

from .exceptions import NoConvergence


@njit(cache=True, parallel=True)
def _half_sweep(u, rhs, diag, alpha, active, omega, color):
    nx, ny = u.shape
    for i in prange(1, nx - 1):
        start = 1 + ((i + 1 + color) % 2)
        for j in range(start, ny - 1, 2):
            if active[i, j]:
                s = u[i + 1, j] + u[i - 1, j] + u[i, j + 1] + u[i, j - 1]
                gs = (rhs[i, j] + alpha * s) / diag[i, j]
                u[i, j] += omega * (gs - u[i, j])


@njit(cache=True, parallel=True)
def _residual_max(u, rhs, diag, alpha, active):
    nx, ny = u.shape
    rows = np.zeros(nx)
    for i in prange(1, nx - 1):
        m = 0.0
        for j in range(1, ny - 1):
            if active[i, j]:
                s = u[i + 1, j] + u[i - 1, j] + u[i, j + 1] + u[i, j - 1]
                r = abs(rhs[i, j] - diag[i, j] * u[i, j] + alpha * s)
                if r > m:
                    m = r
        rows[i] = m
    return rows.max()


def optimal_omega(alpha: float, diag_min: float, n: int) -> float:
    """SOR factor from the Jacobi spectral radius bound of the screened Laplacian."""
    rho = 4.0 * alpha * math.cos(math.pi / n) / diag_min
    rho = min(rho, 1.0 - 1e-12)
    return 2.0 / (1.0 + math.sqrt(1.0 - rho * rho))


def rb_solve(u, rhs, diag, alpha, active, tol=1e-10, max_sweeps=200000, omega=None, check_every=10):
    """Red-black SOR solve, in place on ``u``; returns the sweep count.

    Convergence is declared when the max-norm residual drops below
    ``tol * max(|rhs|, alpha*|u|)``. The boundary ring must be inactive.
    """
    if active[0, :].any() or active[-1, :].any() or active[:, 0].any() or active[:, -1].any():
        raise ValueError("boundary ring must be inactive (Dirichlet)")
    if not active.any():
        return 0
    active = np.ascontiguousarray(active)
    diag = np.ascontiguousarray(diag, dtype=float)
    rhs = np.ascontiguousarray(rhs, dtype=float)
    if omega is None:
        omega = optimal_omega(alpha, float(diag[active].min()), max(u.shape))
    scale = max(float(np.abs(rhs[active]).max()), alpha * float(np.abs(u).max()), 1e-300)
    sweeps = 0
    while sweeps < max_sweeps:
        for _ in range(check_every):
            _half_sweep(u, rhs, diag, alpha, active, omega, 0)
            _half_sweep(u, rhs, diag, alpha, active, omega, 1)
        sweeps += check_every
        if _residual_max(u, rhs, diag, alpha, active) <= tol * scale:
            return sweeps
    raise NoConvergence(f"red-black relaxation did not reach tol={tol} in {max_sweeps} sweeps", iterations=sweeps)
