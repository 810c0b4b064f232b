"""Morse indices and the compact-part diagnostic of the second variation.

At a field ``v`` the second variation splits as ``I''(v) = R - K_p(v)`` where
``R`` is the H^1_0 inner product (the stiffness matrix) and ``K_p(v)`` the
diagonal potential-curvature term, which is positive semidefinite. Eigenvalues
are computed for the pencil ``(K - C, K)``, i.e. the H^1_0-preconditioned
Hessian ``1 - K^{-1} C``. This keeps the count independent of ``h``.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .domain import DomainGrid
from .functional import ExponentParams, Functional

log = logging.getLogger(__name__)

DENSE_LIMIT = 2500
DEGENERACY_TOL = 1e-7
RESIDUAL_TOL = 1e-8


class EigenError(RuntimeError):
    pass


@dataclass
class MorseReport:
    index: int
    eigenvalues: list[float]
    k: int
    gap: float
    method: str
    residuals: list[float] = field(default_factory=list)
    near_degenerate: list[float] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def start_vector(n: int) -> np.ndarray:
    """Fixed Lanczos start; ARPACK otherwise draws a random one and results vary run to run."""
    return np.random.default_rng(12345).uniform(0.5, 1.5, n)


def fix_signs(w: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of each column positive."""
    idx = np.argmax(np.abs(w), axis=0)
    s = np.sign(w[idx, np.arange(w.shape[1])])
    s[s == 0] = 1.0
    return w * s


def pencil_eigs(fn: Functional, c: np.ndarray, k: int, dense: bool):
    """Largest ``k`` eigenpairs of ``C w = lam K w`` with ``C = diag(m c)``, ``w`` K-orthonormal."""
    n = fn.n
    weights = fn.m * c
    if dense:
        A = fn.K.toarray()
        lam, w = sla.eigh(np.diag(weights), A, subset_by_index=[n - k, n - 1])
        return lam[::-1], fix_signs(w[:, ::-1]), "dense"
    minv = spla.LinearOperator((n, n), matvec=fn.riesz, dtype=float)
    lam, w = spla.eigsh(sp.diags(weights), k=k, M=fn.K, Minv=minv, which="LA", tol=1e-12, v0=start_vector(n))
    order = np.argsort(lam)[::-1]
    return lam[order], fix_signs(w[:, order]), "lanczos"


def morse_index(
    grid: DomainGrid,
    v: np.ndarray,
    params: ExponentParams,
    k: int = 6,
    method: str = "auto",
    degeneracy_tol: float = DEGENERACY_TOL,
    grad_tol: float | None = None,
) -> MorseReport:
    """Count negative eigenvalues of ``H w = mu K w`` among the ``k`` smallest.

    ``method`` is ``"dense"``, ``"lanczos"`` or ``"auto"`` (dense below
    ``DENSE_LIMIT`` interior nodes). ``grad_tol`` tags the report when ``v``
    is not a critical point to that relative accuracy.
    """
    if k < 3:
        raise ValueError("k must be at least 3")
    fn = Functional.on_grid(grid, params)
    v = np.asarray(v, float)
    k = min(k, fn.n - 1)
    flags: list[str] = []
    if grad_tol is not None:
        scale = max(np.sqrt(fn.norm_sq(v)), 1e-300)
        if fn.dual_norm(fn.residual(v)) > grad_tol * scale:
            flags.append("not-critical: gradient above tolerance")
            log.warning("Morse index requested at a non-critical field")
    c = fn.potential_curvature(v)
    if not np.any(c):
        mu = np.ones(k)
        return MorseReport(0, mu.tolist(), k, 1.0, "trivial", [0.0] * k, [], flags)
    if method == "auto":
        method = "dense" if fn.n <= DENSE_LIMIT else "lanczos"
    if method not in ("dense", "lanczos"):
        raise ValueError(f"unknown method {method!r}")
    try:
        lam, w, used = pencil_eigs(fn, c, k, method == "dense")
    except (spla.ArpackError, sla.LinAlgError) as exc:
        raise EigenError(f"eigen-iteration failed: {exc}") from exc
    mu = 1.0 - lam
    order = np.argsort(mu)
    mu, w = mu[order], w[:, order]
    H = fn.hessian_matrix(v)
    residuals = []
    for j in range(mu.size):
        wj = w[:, j] / np.sqrt(fn.norm_sq(w[:, j]))
        residuals.append(fn.dual_norm(H @ wj - mu[j] * (fn.K @ wj)))
    if max(residuals) > RESIDUAL_TOL:
        raise EigenError(f"eigenpair residual {max(residuals):.3e} above {RESIDUAL_TOL:g}")
    tol = degeneracy_tol * max(1.0, float(np.max(np.abs(mu))))
    near = [float(x) for x in mu if abs(x) < tol]
    if near:
        flags.append("near-degenerate")
    index = int(np.sum(mu < -tol))
    if index == mu.size:
        flags.append("index may exceed k")
    return MorseReport(index, mu.tolist(), k, float(np.min(np.abs(mu))), used, residuals, near, flags)


@dataclass
class CompactnessProfile:
    """``ratios[j] = ||K_p(v) w||_{H^-1} / ||w||_{H^1_0}`` for Laplace modes ``w``.

    Within a cluster of equal Laplace eigenvalues the numbers are the
    singular values of ``K_p(v)`` restricted to the eigenspace, so the profile
    does not depend on the basis chosen there.
    """

    laplace_eigenvalues: list[float]
    ratios: list[float]

    def decay(self, j: int) -> float:
        return self.ratios[0] / max(self.ratios[j], 1e-300)

    def to_dict(self) -> dict:
        return asdict(self)


def laplace_modes(grid: DomainGrid, n_modes: int):
    """Lowest ``n_modes`` eigenpairs of the stencil Laplacian (shift-invert Lanczos)."""
    if not 1 <= n_modes < grid.n:
        raise ValueError("n_modes must be between 1 and the number of interior nodes - 1")
    lam, w = spla.eigsh(grid.laplacian.tocsc(), k=n_modes, sigma=0.0, which="LM", v0=start_vector(grid.n))
    order = np.argsort(lam)
    return lam[order], fix_signs(w[:, order])


def compactness_probe(grid: DomainGrid, v: np.ndarray, params: ExponentParams, n_modes: int = 50,
                      cluster_tol: float = 1e-8) -> CompactnessProfile:
    fn = Functional.on_grid(grid, params)
    lam, w = laplace_modes(grid, n_modes)
    dual = (fn.m * fn.potential_curvature(np.asarray(v, float)))[:, None] * w
    # K-orthonormalize: Laplace modes are already K-orthogonal
    scale = np.sqrt(np.einsum("ij,ij->j", w, fn.K @ w))
    dual = dual / scale
    ratios = np.zeros(n_modes)
    j = 0
    while j < n_modes:
        jj = j + 1
        while jj < n_modes and abs(lam[jj] - lam[j]) <= cluster_tol * lam[j]:
            jj += 1
        block = dual[:, j:jj]
        gram = block.T @ np.column_stack([fn.riesz(block[:, i]) for i in range(jj - j)])
        sv = np.sqrt(np.clip(np.linalg.eigvalsh(0.5 * (gram + gram.T)), 0.0, None))[::-1]
        ratios[j:jj] = sv
        j = jj
    return CompactnessProfile(lam.tolist(), ratios.tolist())


__all__ = ["MorseReport", "pencil_eigs", "morse_index", "CompactnessProfile", "compactness_probe", "laplace_modes", "EigenError"]
