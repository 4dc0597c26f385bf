"""Segregated configurations U = (u_1, ..., u_h), their reactions and residual measures."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import maximum_filter

from .grid import Grid2D, ScalarField, interior_mask, laplacian_values

EPS_NEG = 1e-10
DEFAULT_EPS_SEG = 1e-3

_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class Reaction:
    """Closed-form reaction term f(s) of one component.

    ``kind`` is one of ``zero``, ``cubic`` (f = omega s^3 - lam s),
    ``logistic`` (f = rate s (1 - s/capacity)) or ``linear`` (f = c s).
    """

    kind: str = "zero"
    params: tuple = ()

    def __post_init__(self):
        arity = {"zero": 0, "cubic": 2, "logistic": 2, "linear": 1}
        if self.kind not in arity:
            raise ValueError(f"unknown reaction kind {self.kind!r}")
        if len(self.params) != arity[self.kind]:
            raise ValueError(f"{self.kind} reaction takes {arity[self.kind]} parameters")
        if self.kind == "logistic" and not self.params[1] > 0:
            raise ValueError("logistic capacity must be positive")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))

    @classmethod
    def zero(cls) -> "Reaction":
        return cls("zero")

    @classmethod
    def cubic(cls, omega: float, lam: float) -> "Reaction":
        return cls("cubic", (omega, lam))

    @classmethod
    def logistic(cls, rate: float, capacity: float) -> "Reaction":
        return cls("logistic", (rate, capacity))

    @classmethod
    def linear(cls, c: float) -> "Reaction":
        return cls("linear", (c,))

    @property
    def is_zero(self) -> bool:
        if self.kind == "zero":
            return True
        return self.params[0] == 0.0 and (self.kind != "cubic" or self.params[1] == 0.0)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(s)
        if self.kind == "cubic":
            om, lam = self.params
            return om * s**3 - lam * s
        if self.kind == "logistic":
            a, K = self.params
            return a * s * (1.0 - s / K)
        return self.params[0] * s

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(s)
        if self.kind == "cubic":
            om, lam = self.params
            return 3.0 * om * s**2 - lam
        if self.kind == "logistic":
            a, K = self.params
            return a * (1.0 - 2.0 * s / K)
        return np.full_like(s, self.params[0])

    def antiderivative(self, s):
        """F(s) = int_0^s f."""
        s = np.asarray(s, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(s)
        if self.kind == "cubic":
            om, lam = self.params
            return 0.25 * om * s**4 - 0.5 * lam * s**2
        if self.kind == "logistic":
            a, K = self.params
            return a * (0.5 * s**2 - s**3 / (3.0 * K))
        return 0.5 * self.params[0] * s**2

    def split(self, s):
        """Write f(s) = g(s) - c(s) * s with c >= 0; returns ``(c, g)``.

        The loss coefficient ``c`` is treated implicitly by the relaxation and
        the gain ``g`` explicitly.
        """
        s = np.asarray(s, dtype=float)
        z = np.zeros_like(s)
        if self.kind == "zero":
            return z, z
        if self.kind == "cubic":
            om, lam = self.params
            c = max(lam, 0.0) + max(-om, 0.0) * s**2
            g = max(om, 0.0) * s**3 - min(lam, 0.0) * s
            return z + c, g
        if self.kind == "logistic":
            a, K = self.params
            if a >= 0:
                return a * s / K, a * s
            return z - a, -a * s**2 / K
        c0 = self.params[0]
        return (z + max(-c0, 0.0), max(c0, 0.0) * s)

    def ratio_bound(self, smax: float) -> float:
        """sup |f(s)/s| over 0 < s <= smax (f(s)/s is a polynomial of degree <= 2)."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "cubic":
            om, lam = self.params
            return max(abs(lam), abs(om * smax * smax - lam))
        if self.kind == "logistic":
            a, K = self.params
            return max(abs(a), abs(a * (1.0 - smax / K)))
        return abs(self.params[0])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "Reaction":
        return cls(d["kind"], tuple(d.get("params", ())))


@dataclass(frozen=True)
class ReactionSpec:
    """One :class:`Reaction` per component."""

    terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms or not all(isinstance(t, Reaction) for t in self.terms):
            raise ValueError("ReactionSpec needs a nonempty sequence of Reaction terms")

    @classmethod
    def zero(cls, h: int) -> "ReactionSpec":
        return cls((Reaction.zero(),) * h)

    @classmethod
    def cubic(cls, omega: Sequence[float], lam: Sequence[float]) -> "ReactionSpec":
        return cls(tuple(Reaction.cubic(o, l) for o, l in zip(omega, lam)))

    def __len__(self):
        return len(self.terms)

    def __getitem__(self, i) -> Reaction:
        return self.terms[i]

    @property
    def is_zero(self) -> bool:
        return all(t.is_zero for t in self.terms)

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Stacked f_i(u_i) for stacked component values of shape (h, nx, ny)."""
        return np.stack([t(v) for t, v in zip(self.terms, values)])

    def d_bound(self, smax: float) -> float:
        """The constant d = max_i sup |f_i(s)/s| over the value range [0, smax]."""
        return max(t.ratio_bound(smax) for t in self.terms)

    def to_list(self) -> list:
        return [t.to_dict() for t in self.terms]

    @classmethod
    def from_list(cls, items) -> "ReactionSpec":
        return cls(tuple(Reaction.from_dict(d) for d in items))


@dataclass(frozen=True, eq=False)
class SegregatedConfig:
    """Nonnegative components with (numerically) disjoint supports.

    Parameters
    ----------
    grid : Grid2D
    values : ndarray, shape (h, nx, ny)
        Component samples; tiny negative round-off above ``-1e-10`` is clipped.
    reaction : ReactionSpec, optional
        Defaults to the zero reaction.
    eps_seg : float
        Tolerance of the pairwise overlap test
        ``sum u_i u_j <= eps_seg * sum |U|^2``.
    phase_tol : float
        Relative level below which a component counts as absent when deciding
        which stencils see a single phase (used by the energy density).
    """

    grid: Grid2D
    values: np.ndarray
    reaction: Optional[ReactionSpec] = None
    eps_seg: float = DEFAULT_EPS_SEG
    phase_tol: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 2:
            vals = vals[None]
        if vals.ndim != 3 or vals.shape[1:] != self.grid.shape or vals.shape[0] < 1:
            raise ValueError(f"component array shape {vals.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("component values must be finite")
        if vals.min() < -EPS_NEG:
            raise ValueError(f"components must be nonnegative (min {vals.min():.3g})")
        vals = np.maximum(vals, 0.0)
        if not vals.any():
            raise ValueError("configuration is identically zero")
        total = float(np.sum(vals**2))
        h = vals.shape[0]
        for i in range(h):
            for j in range(i + 1, h):
                ov = float(np.sum(vals[i] * vals[j]))
                if ov > self.eps_seg * total:
                    raise ValueError(
                        f"components {i} and {j} overlap: {ov:.3g} > eps_seg*|U|^2 = {self.eps_seg * total:.3g}"
                    )
        reaction = self.reaction if self.reaction is not None else ReactionSpec.zero(h)
        if len(reaction) != h:
            raise ValueError(f"reaction has {len(reaction)} terms for {h} components")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "reaction", reaction)

    # basic views -----------------------------------------------------------
    @property
    def h_components(self) -> int:
        return self.values.shape[0]

    @property
    def components(self):
        return [ScalarField(self.grid, v) for v in self.values]

    def component(self, i: int) -> ScalarField:
        return ScalarField(self.grid, self.values[i])

    @property
    def sup(self) -> float:
        return float(self.values.max())

    def with_values(self, values, **kw) -> "SegregatedConfig":
        args = dict(reaction=self.reaction, eps_seg=self.eps_seg, phase_tol=self.phase_tol, meta=dict(self.meta))
        args.update(kw)
        return SegregatedConfig(self.grid, values, **args)

    def scaled(self, rho: float) -> "SegregatedConfig":
        return self.with_values(self.values * float(rho))

    def overlap(self) -> float:
        """Raw pairwise overlap sum_{i<j} int u_i^2 u_j^2."""
        v2 = self.values**2
        s = v2.sum(axis=0)
        return float(0.5 * np.sum(s * s - (v2 * v2).sum(axis=0)) * self.grid.h**2)

    def segregation_ratio(self) -> float:
        """max_{i<j} int u_i u_j / int |U|^2, the quantity bounded by ``eps_seg``."""
        h = self.h_components
        if h < 2:
            return 0.0
        total = float(np.sum(self.values**2))
        return max(
            float(np.sum(self.values[i] * self.values[j])) / total for i in range(h) for j in range(i + 1, h)
        )

    def lipschitz(self) -> float:
        """Max over components of the largest central-difference gradient norm."""
        g = self.gradients
        return float(np.sqrt((g**2).sum(axis=1)).max())

    # cached derived fields -------------------------------------------------
    @cached_property
    def u2(self) -> ScalarField:
        return ScalarField(self.grid, (self.values**2).sum(axis=0))

    @cached_property
    def reaction_values(self) -> np.ndarray:
        return self.reaction.apply(self.values)

    @cached_property
    def fu(self) -> ScalarField:
        """<F(U), U> = sum_i f_i(u_i) u_i."""
        return ScalarField(self.grid, (self.reaction_values * self.values).sum(axis=0))

    @cached_property
    def gradients(self) -> np.ndarray:
        """Central-difference gradients, shape (h, 2, nx, ny)."""
        h = self.grid.h
        return np.stack([np.stack(np.gradient(v, h, edge_order=2)) for v in self.values])

    @cached_property
    def residual(self) -> "ResidualMeasure":
        return ResidualMeasure.of(self)

    @cached_property
    def single_phase(self) -> np.ndarray:
        """Boolean (h, nx, ny): no other component is present on the 5-point stencil."""
        h = self.h_components
        if h == 1:
            return np.ones(self.values.shape, dtype=bool)
        level = self.phase_tol * self.sup
        present = self.values > level
        out = np.empty(self.values.shape, dtype=bool)
        for i in range(h):
            others = np.zeros(self.grid.shape, dtype=bool)
            for j in range(h):
                if j != i:
                    others |= present[j]
            near = maximum_filter(others, footprint=_CROSS, mode="nearest")
            out[i] = ~near
        return out

    @cached_property
    def energy_density(self) -> ScalarField:
        """Pointwise density of |grad U|^2 - <F(U),U> used by the frequency quantities.

        Computed as 1/2 Lap_h(|U|^2) - sum_i u_i (Lap_h u_i + f_i(u_i)) where the
        pairing with the residual is kept only on single-phase stencils; at
        interface stencils the residual is the measure mu_i, which is orthogonal
        to u_i. NaN on the boundary ring.
        """
        h = self.grid.h
        dens = 0.5 * laplacian_values(self.u2.values, h)
        rho = self.residual.values
        corr = np.where(self.single_phase, self.values * rho, 0.0).sum(axis=0)
        dens = dens - corr
        return ScalarField(self.grid, dens, interior_mask(self.grid))


@dataclass(frozen=True, eq=False)
class ResidualMeasure:
    """Discrete residual f_i(u_i) + Lap_h u_i per component (the measures mu_i)."""

    grid: Grid2D
    values: np.ndarray  # (h, nx, ny), NaN on the boundary ring

    @classmethod
    def of(cls, U: SegregatedConfig) -> "ResidualMeasure":
        lap = np.stack([laplacian_values(v, U.grid.h) for v in U.values])
        return cls(U.grid, lap + U.reaction_values)

    def component(self, i: int) -> ScalarField:
        return ScalarField(self.grid, self.values[i], interior_mask(self.grid))

    def min(self) -> float:
        return float(np.nanmin(self.values))

    def mass_fraction_far(self, near_mask: np.ndarray) -> float:
        """Share of total |residual| mass at interior nodes outside ``near_mask``."""
        a = np.abs(np.nan_to_num(self.values)).sum(axis=0)
        tot = a.sum()
        if tot == 0:
            return 0.0
        return float(a[~near_mask].sum() / tot)


def dominance_labels(values: np.ndarray, level: float = 0.0) -> np.ndarray:
    """Index of the largest component at each node, -1 where every component is <= level."""
    lab = np.argmax(values, axis=0)
    return np.where(values.max(axis=0) > level, lab, -1)
