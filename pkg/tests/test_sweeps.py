import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from seglab.exceptions import NoConvergence
from seglab.sweeps import optimal_omega, rb_solve


def _direct(rhs, diag, alpha, active, u):
    n = active.sum()
    idx = -np.ones(active.shape, int)
    idx[active] = np.arange(n)
    A = sp.lil_matrix((n, n))
    b = rhs[active].copy()
    for k, (i, j) in enumerate(zip(*np.nonzero(active))):
        A[k, k] = diag[i, j]
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            q = (i + di, j + dj)
            if active[q]:
                A[k, idx[q]] = -alpha
            else:
                b[k] += alpha * u[q]
    x = u.copy()
    x[active] = spsolve(A.tocsr(), b)
    return x


@pytest.mark.parametrize("screen", [0.0, 0.5, 5.0])
def test_matches_direct_solve(screen):
    rng = np.random.default_rng(1)
    n = 24
    active = np.zeros((n, n), bool)
    active[1:-1, 1:-1] = True
    active[8:12, 5:9] = False  # an interior hole with fixed values
    u0 = rng.random((n, n))
    u0[active] = 0.0
    diag = 4.0 + screen * rng.random((n, n))
    rhs = rng.standard_normal((n, n))
    ref = _direct(rhs, diag, 1.0, active, u0)
    u = u0.copy()
    rb_solve(u, rhs, diag, 1.0, active, tol=1e-12)
    np.testing.assert_allclose(u, ref, atol=1e-9)
    # inactive nodes are untouched
    np.testing.assert_array_equal(u[~active], u0[~active])


def test_gauss_seidel_and_sor_agree():
    n = 20
    active = np.zeros((n, n), bool)
    active[1:-1, 1:-1] = True
    rhs = np.ones((n, n))
    diag = np.full((n, n), 4.5)
    a, b = np.zeros((n, n)), np.zeros((n, n))
    rb_solve(a, rhs, diag, 1.0, active, tol=1e-12, omega=1.0)
    rb_solve(b, rhs, diag, 1.0, active, tol=1e-12)
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_boundary_ring_must_be_inactive():
    active = np.ones((8, 8), bool)
    with pytest.raises(ValueError):
        rb_solve(np.zeros((8, 8)), np.zeros((8, 8)), np.full((8, 8), 4.0), 1.0, active)


def test_no_convergence():
    n = 64
    active = np.zeros((n, n), bool)
    active[1:-1, 1:-1] = True
    with pytest.raises(NoConvergence):
        rb_solve(np.zeros((n, n)), np.ones((n, n)), np.full((n, n), 4.0), 1.0, active, tol=1e-14, max_sweeps=10,
                 omega=1.0)


def test_optimal_omega_range():
    w = optimal_omega(1.0, 4.0, 129)
    assert 1.0 < w < 2.0
