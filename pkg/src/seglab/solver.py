"""Competition systems (Gross-Pitaevskii and Lotka-Volterra type), beta-continuation,
analytic prototypes and the class-S inequality check."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.ndimage import convolve
from scipy.sparse.linalg import splu, spsolve

from .exceptions import BadAssignment, Blowup, NoConvergence
from .grid import Grid2D, interior_mask, laplacian_values
from .segregated import DEFAULT_EPS_SEG, Reaction, ReactionSpec, SegregatedConfig
from .sweeps import rb_solve

GP = "gp"
LV = "lv"


@dataclass(frozen=True)
class CompetitionParams:
    """Coefficients of -Lap u_i + lam_i u_i = omega_i u_i^3 - beta u_i sum_j beta_ij u_j^2."""

    lam: tuple
    omega: tuple
    beta: float
    beta_ij: Optional[np.ndarray] = None

    def __post_init__(self):
        lam = tuple(float(v) for v in self.lam)
        omega = tuple(float(v) for v in self.omega)
        if len(lam) != len(omega) or not lam:
            raise ValueError("lam and omega need one entry per component")
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise ValueError("beta must be a nonnegative number")
        h = len(lam)
        B = np.ones((h, h)) - np.eye(h) if self.beta_ij is None else np.array(self.beta_ij, float)
        if B.shape != (h, h) or not np.allclose(B, B.T, rtol=0, atol=0):
            raise ValueError("beta_ij must be a symmetric h x h matrix")
        if np.any(np.diag(B) != 0) or np.any(B[~np.eye(h, dtype=bool)] <= 0):
            raise ValueError("beta_ij needs a zero diagonal and positive off-diagonal entries")
        B.setflags(write=False)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "beta_ij", B)

    @property
    def h(self) -> int:
        return len(self.lam)

    @classmethod
    def symmetric(cls, h: int, beta: float, lam: float = 0.0, omega: float = 0.0) -> "CompetitionParams":
        return cls((lam,) * h, (omega,) * h, beta)

    def with_beta(self, beta: float) -> "CompetitionParams":
        return CompetitionParams(self.lam, self.omega, beta, self.beta_ij)

    def reaction(self) -> ReactionSpec:
        return ReactionSpec.cubic(self.omega, self.lam)


@dataclass(frozen=True, eq=False)
class BoundarySpec:
    """Dirichlet data: ``zero`` or per-component ``trace`` values on the boundary ring.

    ``traces`` has shape (h, nx, ny); only boundary-ring entries are used.
    """

    mode: str
    traces: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.mode not in ("zero", "trace"):
            raise ValueError("boundary mode must be 'zero' or 'trace'")
        if self.mode == "trace":
            if self.traces is None:
                raise ValueError("trace mode needs trace values")
            t = np.array(self.traces, float)
            if t.ndim != 3:
                raise ValueError("traces must have shape (h, nx, ny)")
            t[:, 1:-1, 1:-1] = 0.0
            if t.min() < 0:
                raise ValueError("traces must be nonnegative")
            for i in range(len(t)):
                for j in range(i + 1, len(t)):
                    if np.any((t[i] > 0) & (t[j] > 0)):
                        raise ValueError(f"traces {i} and {j} have overlapping supports")
            t.setflags(write=False)
            object.__setattr__(self, "traces", t)

    def boundary_values(self, h: int, shape) -> np.ndarray:
        if self.mode == "zero":
            return np.zeros((h,) + tuple(shape))
        if self.traces.shape != (h,) + tuple(shape):
            raise ValueError(f"traces shape {self.traces.shape} does not match {(h,) + tuple(shape)}")
        return self.traces.copy()

    @classmethod
    def zero(cls) -> "BoundarySpec":
        return cls("zero")

    @classmethod
    def edge_bumps(cls, grid: Grid2D, edges: Sequence[str], amplitude: float = 1.0, support=(0.1, 0.9)):
        """One smooth bump per component on the named edges (left, right, bottom, top).

        The bump is ``amplitude * sin^2(pi (s - a)/(b - a))`` on ``a < s < b`` where
        ``s`` is the relative position along the edge.
        """
        a, b = support
        t = np.zeros((len(edges), grid.nx, grid.ny))
        sx = (grid.x - grid.x[0]) / (grid.x[-1] - grid.x[0])
        sy = (grid.y - grid.y[0]) / (grid.y[-1] - grid.y[0])

        def bump(s):
            return np.where((s > a) & (s < b), amplitude * np.sin(np.pi * (s - a) / (b - a)) ** 2, 0.0)

        for k, e in enumerate(edges):
            if e == "left":
                t[k, 0, :] = bump(sy)
            elif e == "right":
                t[k, -1, :] = bump(sy)
            elif e == "bottom":
                t[k, :, 0] = bump(sx)
            elif e == "top":
                t[k, :, -1] = bump(sx)
            else:
                raise ValueError(f"unknown edge {e!r}")
        return cls("trace", t)


@dataclass
class SolveReport:
    """Diagnostics of one steady-state solve.

    ``overlap`` is the penalty int beta sum_{i<j} beta_ij u_i^2 u_j^2; ``overlap_raw``
    drops the beta weights and ``overlap_linear`` is int sum_{i<j} u_i u_j.
    """

    beta: float
    residual: float
    iterations: int
    relax_steps: int
    newton_steps: int
    overlap: float
    overlap_raw: float
    overlap_linear: float
    energy: float
    eps_seg: float
    converged: bool
    dt: float
    clipped_mass: float = 0.0
    energy_history: List[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


# ---------------------------------------------------------------------------
# problem definition


@dataclass(frozen=True, eq=False)
class CompetitionProblem:
    """-Lap u_i = f_i(u_i) - beta u_i sum_j beta_ij u_j^p with Dirichlet data.

    ``kind='gp'`` uses p = 2 (variational), ``kind='lv'`` uses p = 1.
    """

    kind: str
    reaction: ReactionSpec
    beta: float
    bc: BoundarySpec
    grid: Grid2D
    beta_ij: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in (GP, LV):
            raise ValueError(f"unknown problem kind {self.kind!r}")
        h = len(self.reaction)
        B = np.ones((h, h)) - np.eye(h) if self.beta_ij is None else np.array(self.beta_ij, float)
        object.__setattr__(self, "beta_ij", B)
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")

    @property
    def h(self) -> int:
        return len(self.reaction)

    @property
    def power(self) -> int:
        return 2 if self.kind == GP else 1

    def with_beta(self, beta: float) -> "CompetitionProblem":
        return CompetitionProblem(self.kind, self.reaction, beta, self.bc, self.grid, self.beta_ij)

    def interaction(self, U: np.ndarray) -> np.ndarray:
        """beta * sum_j beta_ij u_j^p for each i, shape (h, nx, ny)."""
        P = U**self.power
        return self.beta * np.einsum("ij,jxy->ixy", self.beta_ij, P)

    def defect(self, U: np.ndarray) -> np.ndarray:
        """-Lap_h u_i - f_i(u_i) + u_i * interaction_i on interior nodes, 0 on the ring."""
        lap = np.stack([laplacian_values(u, self.grid.h) for u in U])
        D = -lap - self.reaction.apply(U) + U * self.interaction(U)
        D[:, 0, :] = D[:, -1, :] = D[:, :, 0] = D[:, :, -1] = 0.0
        return D

    def energy(self, U: np.ndarray) -> float:
        """Discrete J_beta (gp only); NaN for the non-variational lv system."""
        if self.kind != GP:
            return float("nan")
        h = self.grid.h
        grad = 0.5 * sum(np.sum(np.diff(u, axis=0) ** 2) + np.sum(np.diff(u, axis=1) ** 2) for u in U)
        inner = (slice(None), slice(1, -1), slice(1, -1))
        Ui = U[inner]
        pot = -sum(np.sum(t.antiderivative(u)) for t, u in zip(self.reaction.terms, Ui))
        U2 = Ui**2
        pen = 0.25 * self.beta * np.einsum("ij,ixy,jxy->", self.beta_ij, U2, U2)
        return float(grad + h * h * (pot + pen))

    def overlaps(self, U: np.ndarray):
        h2 = self.grid.h ** 2
        U2 = U**2
        iu = np.triu_indices(self.h, 1)
        raw = sum(float(np.sum(U2[i] * U2[j])) for i, j in zip(*iu)) * h2
        pen = self.beta * sum(self.beta_ij[i, j] * float(np.sum(U2[i] * U2[j])) for i, j in zip(*iu)) * h2
        lin = sum(float(np.sum(U[i] * U[j])) for i, j in zip(*iu)) * h2
        return pen, raw, lin


def harmonic_extension(grid: Grid2D, boundary: np.ndarray) -> np.ndarray:
    """Discrete harmonic extension of each boundary-ring array in ``boundary`` (h, nx, ny)."""
    nx, ny = grid.shape
    L = _interior_laplacian(nx, ny, 1.0)
    lu = splu((-L).tocsc())
    out = np.array(boundary, float)
    for k, b in enumerate(out):
        rhs = np.zeros((nx - 2, ny - 2))
        rhs[0, :] += b[0, 1:-1]
        rhs[-1, :] += b[-1, 1:-1]
        rhs[:, 0] += b[1:-1, 0]
        rhs[:, -1] += b[1:-1, -1]
        out[k, 1:-1, 1:-1] = lu.solve(rhs.ravel()).reshape(nx - 2, ny - 2)
    return out


def _interior_laplacian(nx: int, ny: int, h: float) -> sp.csr_matrix:
    def d2(n):
        return sp.diags([np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1])

    mx, my = nx - 2, ny - 2
    return (sp.kron(d2(mx), sp.identity(my)) + sp.kron(sp.identity(mx), d2(my))).tocsr() / (h * h)


# ---------------------------------------------------------------------------
# the solver


def _initial_values(problem: CompetitionProblem, init, seed) -> np.ndarray:
    grid = problem.grid
    bvals = problem.bc.boundary_values(problem.h, grid.shape)
    if isinstance(init, SegregatedConfig):
        U = np.array(init.values)
    elif isinstance(init, np.ndarray):
        U = np.array(init, float)
    elif init is None or init == "random":
        rng = np.random.default_rng(seed)
        if problem.bc.mode == "trace":
            U = harmonic_extension(grid, bvals)
            if init == "random":
                U = U * (0.5 + rng.random(U.shape))
        else:
            X, Y = grid.mesh()
            xmin, xmax, ymin, ymax = grid.bounds
            bubble = np.sin(np.pi * (X - xmin) / (xmax - xmin)) * np.sin(np.pi * (Y - ymin) / (ymax - ymin))
            U = rng.random((problem.h,) + grid.shape) * bubble
    else:
        raise ValueError(f"unsupported init {init!r}")
    if U.shape != (problem.h,) + grid.shape:
        raise ValueError(f"init shape {U.shape} does not match problem")
    U = np.maximum(U, 0.0)
    ring = ~interior_mask(grid)
    U[:, ring] = bvals[:, ring]
    return U


def _relax_step(problem: CompetitionProblem, U: np.ndarray, dt: float) -> np.ndarray:
    """One semi-implicit step: implicit diffusion, losses and competition; explicit gains."""
    h = problem.grid.h
    active = interior_mask(problem.grid)
    inter = problem.interaction(U)
    out = np.empty_like(U)
    alpha = dt / (h * h)
    for i, term in enumerate(problem.reaction.terms):
        c, g = term.split(U[i])
        diag = 1.0 + dt * (4.0 / (h * h) + c + inter[i])
        rhs = U[i] + dt * g
        v = U[i].copy()
        rb_solve(v, rhs, diag, alpha, active)
        out[i] = v
    return out


def _newton_matrix(problem: CompetitionProblem, U: np.ndarray, L: sp.csr_matrix) -> sp.csr_matrix:
    hh = problem.h
    inner = (slice(1, -1), slice(1, -1))
    p = problem.power
    inter = problem.interaction(U)
    blocks = [[None] * hh for _ in range(hh)]
    for i, term in enumerate(problem.reaction.terms):
        ui = U[i][inner].ravel()
        d = -term.derivative(ui) + inter[i][inner].ravel()
        blocks[i][i] = -L + sp.diags(d)
        for j in range(hh):
            if j != i and problem.beta_ij[i, j] != 0 and problem.beta != 0:
                uj = U[j][inner].ravel()
                dj = problem.beta * problem.beta_ij[i, j] * ui * p * uj ** (p - 1)
                blocks[i][j] = sp.diags(dj)
    return sp.bmat(blocks, format="csc")


def _solve_steady(
    problem: CompetitionProblem,
    init=None,
    tol: float = 1e-6,
    max_iters: int = 200,
    seed: Optional[int] = None,
    relax_steps: int = 10,
    newton: bool = True,
    dt0: float = 1e-3,
    dt_max: float = 1.0,
):
    grid = problem.grid
    U = _initial_values(problem, init, seed)
    sup0 = max(float(U.max()), 1e-300)
    inner = (slice(None), slice(1, -1), slice(1, -1))
    L = _interior_laplacian(grid.nx, grid.ny, grid.h) if newton else None

    def check_blowup(V):
        if V.max() > 10.0 * sup0:
            raise Blowup(f"component sup {V.max():.3g} exceeds 10x initial sup {sup0:.3g} at beta={problem.beta:g}")

    def norm(V):
        return float(np.abs(problem.defect(V)).max())

    res = norm(U)
    J = problem.energy(U)
    history = [J]
    dt = dt0
    it = n_relax = n_newton = 0
    clipped = 0.0
    variational = problem.kind == GP
    while res > tol:
        if it >= max_iters:
            raise NoConvergence(
                f"defect {res:.3g} > tol {tol:.3g} after {it} iterations at beta={problem.beta:g}",
                iterations=it,
                beta=problem.beta,
            )
        it += 1
        use_newton = newton and n_relax >= relax_steps
        if use_newton:
            D = problem.defect(U)[inner].reshape(problem.h, -1).ravel()
            A = _newton_matrix(problem, U, L)
            step = spsolve(A, -D).reshape(problem.h, grid.nx - 2, grid.ny - 2)
            f0 = float(np.linalg.norm(D))
            s = 1.0
            accepted = False
            for _ in range(40):
                V = U.copy()
                V[inner] = np.maximum(U[inner] + s * step, 0.0)
                f1 = float(np.linalg.norm(problem.defect(V)[inner]))
                if f1 < (1.0 - 1e-4 * s) * f0:
                    accepted = True
                    break
                s *= 0.5
            if not accepted:
                # fall back to a few more relaxation sweeps before retrying
                relax_steps = n_relax + 5
                continue
            clipped += float(np.sum(np.maximum(-(U[inner] + s * step), 0.0))) * grid.h**2
            U = V
            n_newton += 1
            J = problem.energy(U)
        else:
            while True:
                raw = _relax_step(problem, U, dt)
                V = np.maximum(raw, 0.0)
                Jn = problem.energy(V)
                if not variational or Jn <= J + 1e-8 * abs(J):
                    break
                dt *= 0.5
                if dt < 1e-14:
                    raise NoConvergence(f"time step underflow at beta={problem.beta:g}", iterations=it, beta=problem.beta)
            clipped += float(np.sum(np.maximum(-raw, 0.0))) * grid.h**2
            U, J = V, Jn
            history.append(J)
            n_relax += 1
            dt = min(2.0 * dt, dt_max)
        check_blowup(U)
        res = norm(U)
    pen, raw_ov, lin = problem.overlaps(U)
    cfg = _to_config(problem, U)
    report = SolveReport(
        beta=problem.beta,
        residual=res,
        iterations=it,
        relax_steps=n_relax,
        newton_steps=n_newton,
        overlap=pen,
        overlap_raw=raw_ov,
        overlap_linear=lin,
        energy=J,
        eps_seg=cfg.segregation_ratio(),
        converged=True,
        dt=dt,
        clipped_mass=clipped,
        energy_history=history,
    )
    return cfg, report


def _to_config(problem: CompetitionProblem, U: np.ndarray) -> SegregatedConfig:
    tmp_ratio = 0.0
    total = float(np.sum(U**2))
    if total > 0:
        for i in range(problem.h):
            for j in range(i + 1, problem.h):
                tmp_ratio = max(tmp_ratio, float(np.sum(U[i] * U[j])) / total)
    eps = max(DEFAULT_EPS_SEG, tmp_ratio * (1 + 1e-9))
    return SegregatedConfig(
        problem.grid, U, problem.reaction, eps_seg=eps, meta={"kind": problem.kind, "beta": problem.beta}
    )


def solve_gp(
    params: CompetitionParams,
    bc: BoundarySpec,
    grid: Grid2D,
    init=None,
    tol: float = 1e-6,
    max_iters: int = 200,
    seed: Optional[int] = None,
    **kw,
):
    """Steady state of the Gross-Pitaevskii competition system.

    Semi-implicit relaxation steps (with time-step halving whenever the energy
    would increase) followed by damped Newton iterations on the steady system;
    pass ``newton=False`` for pure relaxation.

    Parameters
    ----------
    params : CompetitionParams
    bc : BoundarySpec
    grid : Grid2D
    init : SegregatedConfig, ndarray, "random" or None
        ``None`` starts from the harmonic extension of the traces.
    tol : float
        Absolute max-norm tolerance on the steady-state defect.
    max_iters : int
    seed : int, optional
        Used by ``init="random"``.

    Returns
    -------
    SegregatedConfig, SolveReport

    Raises
    ------
    NoConvergence, Blowup
    """
    if bc.mode == "zero" and all(o <= 0 for o in params.omega) and all(l >= 0 for l in params.lam):
        raise ValueError("zero Dirichlet data with omega <= 0 and lambda >= 0 only admits the trivial solution")
    problem = CompetitionProblem(GP, params.reaction(), params.beta, bc, grid, params.beta_ij)
    return _solve_steady(problem, init, tol, max_iters, seed, **kw)


def solve_lv(
    f_spec: ReactionSpec,
    beta: float,
    bc: BoundarySpec,
    grid: Grid2D,
    init=None,
    tol: float = 1e-6,
    max_iters: int = 200,
    seed: Optional[int] = None,
    **kw,
):
    """Steady state of -Lap u_i = f_i(u_i) - beta u_i sum_{j != i} u_j with trace data."""
    if bc.mode != "trace":
        raise ValueError("the Lotka-Volterra system is posed with trace Dirichlet data")
    problem = CompetitionProblem(LV, f_spec, beta, bc, grid)
    return _solve_steady(problem, init, tol, max_iters, seed, **kw)


@dataclass
class ContinuationResult:
    steps: list

    @property
    def configs(self):
        return [c for c, _ in self.steps]

    @property
    def reports(self):
        return [r for _, r in self.steps]

    @property
    def final(self) -> SegregatedConfig:
        return self.steps[-1][0]

    @property
    def overlaps(self) -> np.ndarray:
        return np.array([r.overlap_raw for r in self.reports])

    @property
    def eps_seg(self) -> float:
        return self.reports[-1].eps_seg


def beta_continuation(problem: CompetitionProblem, beta_ladder, tol: float = 1e-6, init=None, **kw):
    """Solve along an increasing beta ladder, warm-starting each step from the previous one.

    Raises
    ------
    NoConvergence, Blowup
        With ``beta`` set to the failing ladder value.
    """
    ladder = [float(b) for b in beta_ladder]
    if not ladder or any(b2 <= b1 for b1, b2 in zip(ladder, ladder[1:])):
        raise ValueError("beta ladder must be a nonempty increasing sequence")
    steps = []
    current = init
    for b in ladder:
        try:
            cfg, rep = _solve_steady(problem.with_beta(b), current, tol, **kw)
        except NoConvergence as e:
            e.beta = b
            raise
        steps.append((cfg, rep))
        current = cfg
    return ContinuationResult(steps)


# ---------------------------------------------------------------------------
# prototypes and class S


def prototype_sector(theta, m: int, rotation: float = 0.0):
    """Index of the sector of r^{m/2} cos(m theta/2) containing each angle.

    Sector k is centred at angle ``rotation + 2 pi k / m``.
    """
    width = 2.0 * np.pi / m
    t = np.mod(np.asarray(theta) - rotation + 0.5 * width, 2.0 * np.pi)
    return np.minimum((t // width).astype(int), m - 1)


def make_prototype(
    m: int, grid: Grid2D, assignment: Optional[Sequence[int]] = None, center=(0.0, 0.0), rotation: float = 0.0
) -> SegregatedConfig:
    """Homogeneous harmonic configuration |r^{m/2} cos(m theta/2)| split by sectors.

    Parameters
    ----------
    m : int
        Number of sectors (and twice the homogeneity degree), at least 2.
    grid : Grid2D
    assignment : sequence of int, optional
        Component index of each sector; defaults to one component per sector.
    center : point
    rotation : float
        Angle of the axis of sector 0.

    Raises
    ------
    BadAssignment
        If two adjacent sectors share a component.
    """
    if m < 2:
        raise ValueError("m must be at least 2")
    if assignment is None:
        assignment = list(range(m))
    assignment = [int(a) for a in assignment]
    if len(assignment) != m or min(assignment) < 0:
        raise BadAssignment(f"assignment must give a component index for each of the {m} sectors")
    for k in range(m):
        if assignment[k] == assignment[(k + 1) % m]:
            raise BadAssignment(f"adjacent sectors {k} and {(k + 1) % m} share component {assignment[k]}")
    h = max(assignment) + 1
    if set(assignment) != set(range(h)):
        raise BadAssignment("component indices must be 0..h-1 without gaps")
    X, Y = grid.mesh()
    dx, dy = X - center[0], Y - center[1]
    r = np.hypot(dx, dy)
    th = np.arctan2(dy, dx)
    w = np.abs(r ** (0.5 * m) * np.cos(0.5 * m * (th - rotation)))
    sec = prototype_sector(th, m, rotation)
    comp = np.asarray(assignment)[sec]
    vals = np.zeros((h,) + grid.shape)
    for i in range(h):
        vals[i] = np.where(comp == i, w, 0.0)
    return SegregatedConfig(grid, vals, meta={"prototype": m, "center": list(center), "rotation": rotation})


_MOLLIFIER = np.outer([1.0, 2.0, 1.0], [1.0, 2.0, 1.0]) / 16.0


@dataclass
class ClassSReport:
    first: float
    second: float
    tau: float

    @property
    def passed(self) -> bool:
        return self.first <= self.tau and self.second <= self.tau


def class_s_check(U: SegregatedConfig, tau: Optional[float] = None) -> ClassSReport:
    """Most positive violations of -Lap u_i <= f_i(u_i) and of
    -Lap(u_i - sum_{j != i} u_j) >= f_i(u_i) - sum_{j != i} f_j(u_j).

    Both discrete residuals are mollified by a 3x3 nonnegative kernel first.
    ``tau`` defaults to 10 h^2 sup|U|.
    """
    h = U.grid.h
    if tau is None:
        tau = 10.0 * h * h * U.sup
    F = U.reaction_values
    lap = np.stack([laplacian_values(v, h) for v in U.values])
    inner = (slice(2, -2), slice(2, -2))

    def moll(a):
        return convolve(np.nan_to_num(a), _MOLLIFIER, mode="constant")[inner]

    first = -np.inf
    second = -np.inf
    lap_tot = lap.sum(axis=0)
    F_tot = F.sum(axis=0)
    for i in range(U.h_components):
        r1 = -lap[i] - F[i]
        first = max(first, float(moll(r1).max()))
        lap_w = 2.0 * lap[i] - lap_tot
        rhs = 2.0 * F[i] - F_tot
        r2 = -lap_w - rhs
        second = max(second, float((-moll(r2)).max()))
    return ClassSReport(max(first, 0.0), max(second, 0.0), float(tau))
