"""Discrete energy ``I_p(v) = 1/2 int |grad v|^2 - 1/p int |f(v)|^p`` and its derivatives.

The discretization is described by a symmetric positive definite stiffness
matrix ``K`` (``v @ K @ w`` approximates ``int grad v . grad w``) and lumped
mass weights ``m`` (``sum(m * g)`` approximates ``int g``). On a
``DomainGrid`` these are ``h^N`` times the stencil Laplacian and ``h^N``;
the radial bump solver uses a 1-D finite-volume pair instead.

Derivatives come in two flavours:

* ``residual(v)`` is the dual vector ``K v - m g(v)``, i.e. ``dI(v)[w] = residual @ w``;
* ``gradient(v)`` is the nodal gradient ``residual / m``, which on a grid is
  ``laplacian_apply(v) - |f(v)|^{p-2} f(v) f'(v)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .domain import DomainGrid, grad_norm_sq
from .kernel import transform


@dataclass(frozen=True)
class ExponentParams:
    """Exponent ``p`` together with ``2* = 2N/(N-2)`` and ``crit = 2 * 2*``.

    For ``dim == 2`` there is no Sobolev exponent; ``cap`` plays the role of
    ``crit`` and results are flagged as outside the theory's hypotheses.
    """

    p: float
    dim: int = 3
    cap: float | None = None

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dimension must be at least 2")
        if self.dim == 2 and self.cap is None:
            raise ValueError("dim = 2 needs an explicit exponent cap")
        if not 4.0 < self.p <= self.crit:
            raise ValueError(f"p = {self.p} outside (4, {self.crit}]")

    @property
    def two_star(self) -> float:
        return 2.0 * self.dim / (self.dim - 2) if self.dim > 2 else float("inf")

    @property
    def crit(self) -> float:
        if self.dim > 2:
            return 4.0 * self.dim / (self.dim - 2)
        return float(self.cap)

    @property
    def outside_hypotheses(self) -> bool:
        return self.dim < 3

    @property
    def is_critical(self) -> bool:
        return self.p >= self.crit

    def at(self, p: float) -> "ExponentParams":
        return ExponentParams(p, self.dim, self.cap)

    def critical(self) -> "ExponentParams":
        return self.at(self.crit)

    @classmethod
    def from_fraction(cls, fraction: float, dim: int = 3, cap: float | None = None) -> "ExponentParams":
        crit = 4.0 * dim / (dim - 2) if dim > 2 else cap
        if crit is None:
            raise ValueError("dim = 2 needs an explicit exponent cap")
        return cls(fraction * crit, dim, cap)


def nonlinearity(v: np.ndarray, p: float, positive: bool = False):
    """Pointwise ``(|f|^p, |f|^{p-2} f f', d/dv of the middle term)``.

    With ``positive`` the argument is replaced by ``max(v, 0)``.
    """
    arg = np.maximum(v, 0.0) if positive else v
    f, fp, fpp = transform(arg)
    af = np.abs(f)
    pow_m2 = af ** (p - 2.0)  # p > 4, so 0 ** (p - 2) = 0 is exact
    big_f = pow_m2 * af**2
    g = pow_m2 * f * fp
    dg = (p - 1.0) * pow_m2 * fp**2 + pow_m2 * f * fpp
    if positive:
        dg = np.where(v > 0.0, dg, 0.0)
    return big_f, g, dg


class Functional:
    """Energy, derivatives and Nehari quantities for one exponent."""

    def __init__(self, stiffness, mass, params: ExponentParams, positive: bool = False, grid: DomainGrid | None = None):
        self.K = sp.csr_matrix(stiffness)
        self.m = np.asarray(mass, dtype=float)
        self.params = params
        self.p = float(params.p)
        self.positive = positive
        self.grid = grid

    @classmethod
    def on_grid(cls, grid: DomainGrid, params: ExponentParams, positive: bool = False) -> "Functional":
        if params.dim != grid.dim:
            raise ValueError("exponent parameters and grid disagree on the dimension")
        return cls(grid.stiffness, grid.mass, params, positive, grid)

    def with_params(self, params: ExponentParams) -> "Functional":
        out = Functional(self.K, self.m, params, self.positive, self.grid)
        if "_solve" in self.__dict__:
            out.__dict__["_solve"] = self._solve
        return out

    @property
    def n(self) -> int:
        return self.m.size

    @cached_property
    def _solve(self):
        return spla.factorized(sp.csc_matrix(self.K))

    def riesz(self, r: np.ndarray) -> np.ndarray:
        """H^1_0 representative ``K^{-1} r`` of a dual vector."""
        return self._solve(r)

    def norm_sq(self, v: np.ndarray) -> float:
        """``||v||^2 = int |grad v|^2``."""
        return float(v @ (self.K @ v))

    def dual_norm(self, r: np.ndarray) -> float:
        return float(np.sqrt(max(r @ self.riesz(r), 0.0)))

    def potential(self, v: np.ndarray) -> float:
        """``int |f(v)|^p`` (of ``v+`` for the positive-part functional)."""
        big_f, _, _ = nonlinearity(v, self.p, self.positive)
        return float(self.m @ big_f)

    def energy(self, v: np.ndarray) -> float:
        big_f, _, _ = nonlinearity(v, self.p, self.positive)
        return 0.5 * self.norm_sq(v) - float(self.m @ big_f) / self.p

    def residual(self, v: np.ndarray) -> np.ndarray:
        _, g, _ = nonlinearity(v, self.p, self.positive)
        return self.K @ v - self.m * g

    def gradient(self, v: np.ndarray) -> np.ndarray:
        return self.residual(v) / self.m

    def nehari_residual(self, v: np.ndarray) -> float:
        """``G_p(v) = I_p'(v)[v] = ||v||^2 - int g(v) v``."""
        _, g, _ = nonlinearity(v, self.p, self.positive)
        return self.norm_sq(v) - float(self.m @ (g * v))

    def potential_curvature(self, v: np.ndarray) -> np.ndarray:
        """Nodal coefficient of the compact part: ``(p-1)|f|^{p-2} f'^2 + |f|^{p-2} f f''``."""
        return nonlinearity(v, self.p, self.positive)[2]

    def hessian_matrix(self, v: np.ndarray) -> sp.csr_matrix:
        """Dual form of the second variation, ``K - diag(m * c(v))``."""
        c = self.potential_curvature(v)
        return (self.K - sp.diags(self.m * c)).tocsr()

    def compact_matrix(self, v: np.ndarray) -> sp.csr_matrix:
        return sp.diags(self.m * self.potential_curvature(v)).tocsr()

    def hessian_apply(self, v: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Nodal second variation: ``(K w)/m - c(v) w``."""
        return (self.K @ w) / self.m - self.potential_curvature(v) * w


# ---------------------------------------------------------------------------
# grid-level convenience API
# ---------------------------------------------------------------------------

def energy(grid: DomainGrid, v: np.ndarray, params: ExponentParams) -> float:
    return Functional.on_grid(grid, params).energy(v)


def gradient(grid: DomainGrid, v: np.ndarray, params: ExponentParams) -> np.ndarray:
    return Functional.on_grid(grid, params).gradient(v)


def energy_positive_part(grid: DomainGrid, v: np.ndarray, params: ExponentParams) -> float:
    return Functional.on_grid(grid, params, positive=True).energy(v)


def gradient_positive_part(grid: DomainGrid, v: np.ndarray, params: ExponentParams) -> np.ndarray:
    return Functional.on_grid(grid, params, positive=True).gradient(v)


def nehari_residual(grid: DomainGrid, v: np.ndarray, params: ExponentParams) -> float:
    return Functional.on_grid(grid, params).nehari_residual(v)


def hessian_apply(grid: DomainGrid, v: np.ndarray, w: np.ndarray, params: ExponentParams) -> np.ndarray:
    return Functional.on_grid(grid, params).hessian_apply(v, w)


@dataclass(frozen=True)
class PohozaevTerms:
    boundary_flux: float
    gradient_term: float
    potential_term: float

    @property
    def residual(self) -> float:
        return self.boundary_flux + self.gradient_term - self.potential_term

    @property
    def relative(self) -> float:
        scale = max(abs(self.boundary_flux), abs(self.gradient_term), abs(self.potential_term), 1e-300)
        return self.residual / scale


def _staircase_weight(grid: DomainGrid, x: np.ndarray) -> np.ndarray:
    # A lattice face with normal e_k only sees d_k v = (d_nu v) nu_k and covers
    # |nu_k| of the true surface, so face sums pick up sum_k nu_k^4 per unit
    # area. Dividing by it makes the staircase sum consistent on curved walls.
    if grid.shape_tag != "ball":
        return np.ones(x.shape[:-1])
    r = np.linalg.norm(x, axis=-1)
    nu = x / np.maximum(r, 1e-300)[..., None]
    return 1.0 / np.maximum(np.sum(nu**4, axis=-1), 1e-300)


def pohozaev_terms(grid: DomainGrid, v: np.ndarray, params: ExponentParams) -> PohozaevTerms:
    """Pieces of the Pohozaev identity about the grid center.

    ``1/2 int_{dOmega} |grad v|^2 (x.nu) + (N-2)/2 ||v||^2 = N/p int |f(v)|^p``
    holds for exact solutions on star-shaped domains. The boundary integral
    is taken over the staircase of mask faces: across a face between an
    interior node ``a`` and a ghost, the normal derivative at the ghost is the
    one-sided ``(4 v_a - v_b) / 2h`` and the face normal is the lattice
    direction of the edge. On a ball the face sums are
    reweighted by the true normal (see ``_staircase_weight``).
    """
    if not grid.star_shaped:
        raise ValueError(f"Pohozaev residual needs a star-shaped domain, got {grid.shape_tag!r}")
    n_dim = grid.dim
    h = grid.spacing
    full = grid.embed(v)
    mask = grid.mask
    coords = grid.full_coords - grid.center
    flux = 0.0
    for k in range(n_dim):
        for step in (1, -1):
            # ghost g, first interior node a = g - step e_k, second b = g - 2 step e_k
            a = np.roll(full, step, axis=k)
            b = np.roll(full, 2 * step, axis=k)
            ga = np.roll(mask, step, axis=k)
            edge = [slice(None)] * n_dim
            edge[k] = slice(0, 2) if step == 1 else slice(-2, None)
            ga[tuple(edge)] = False
            ghost = ~mask & ga
            # one-sided second order normal derivative with v_g = 0
            dv = (4.0 * a - b) / (2.0 * h)
            xk = step * coords[..., k]
            wt = _staircase_weight(grid, coords)
            flux += np.sum((dv[ghost]) ** 2 * xk[ghost] * wt[ghost])
    flux *= 0.5 * h ** (n_dim - 1)
    grad_term = 0.5 * (n_dim - 2) * grad_norm_sq(grid, v)
    big_f, _, _ = nonlinearity(v, params.p)
    pot = n_dim / params.p * grid.weight * float(big_f.sum())
    return PohozaevTerms(float(flux), float(grad_term), float(pot))


def pohozaev_residual(grid: DomainGrid, v: np.ndarray, params: ExponentParams) -> float:
    return pohozaev_terms(grid, v, params).residual
