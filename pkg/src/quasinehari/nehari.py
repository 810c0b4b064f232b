"""Nehari projection, ground states and multistart search for further critical points.

Every nonzero ``v`` has a unique ``t > 0`` with ``t v`` on the Nehari set
``{G_p = 0}``; ``t`` maximizes ``s -> I_p(s v)``. Minimizing the reduced
energy ``E(v) = I_p(t(v) v)`` over directions therefore minimizes ``I_p`` on
the Nehari set without Lagrange multipliers. The descent below takes
H^1_0-preconditioned gradient steps and retracts each trial point back onto
the manifold with the projection.
"""
from __future__ import annotations

import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq
from scipy.special import gamma

from .domain import DomainGrid, Field, ball_fits, barycenter
from .functional import ExponentParams, Functional, nonlinearity
from .spectra import pencil_eigs

log = logging.getLogger(__name__)


class ProjectionError(RuntimeError):
    pass


@dataclass(frozen=True)
class NehariProjection:
    t: float
    iterations: int
    bracket: tuple[float, float]
    residual: float
    #: (t, int g(tv) v / t) pairs visited while bracketing; the second entry must increase with t
    samples: tuple[tuple[float, float], ...] = ()


def _fiber_terms(fn: Functional, v: np.ndarray):
    mv = fn.m * v

    def rhs(t: float) -> float:
        _, g, _ = nonlinearity(t * v, fn.p, fn.positive)
        return float(mv @ g) / t

    return fn.norm_sq(v), rhs


def project(fn: Functional, v: np.ndarray, rtol: float = 1e-13, max_doublings: int = 200) -> NehariProjection:
    """Solve ``||v||^2 = (1/t) int |f(tv)|^{p-2} f(tv) f'(tv) v`` for ``t > 0``.

    The right side is increasing in ``t`` so the root is unique: bracket by
    doubling or halving from ``t = 1``, then Brent's method.
    """
    a, rhs = _fiber_terms(fn, v)
    if not math.sqrt(max(a, 0.0)) > 1e-14:
        raise ProjectionError("cannot project the zero field onto the Nehari manifold")

    samples = []

    def phi(t):
        r = rhs(t)
        samples.append((t, r))
        return a - r

    lo = hi = 1.0
    val = phi(1.0)
    steps = 0
    if val > 0:
        while val > 0:
            lo = hi
            hi *= 2.0
            steps += 1
            if steps > max_doublings:
                raise ProjectionError("no Nehari point along the ray (is the positive part zero?)")
            val = phi(hi)
    else:
        while val <= 0:
            hi = lo
            lo *= 0.5
            steps += 1
            if steps > max_doublings:
                raise ProjectionError("Nehari bracket collapsed towards t = 0")
            val = phi(lo)
    n_bracket = len(samples)
    if lo == hi:
        t = lo
        iters = 0
    else:
        t, info = brentq(phi, lo, hi, xtol=1e-300, rtol=rtol * 4, full_output=True)
        iters = info.iterations
    res = fn.nehari_residual(t * v)
    return NehariProjection(float(t), steps + iters, (lo, hi), float(res), tuple(sorted(samples[:n_bracket])))


def reduced_energy(fn: Functional, v: np.ndarray) -> float:
    """``E(v) = max_t I_p(t v)``; invariant under positive rescaling of ``v``."""
    t = project(fn, v).t
    return fn.energy(t * v)


# ---------------------------------------------------------------------------
# minimization on the Nehari manifold
# ---------------------------------------------------------------------------

@dataclass
class SolverOptions:
    gtol: float = 1e-8          # relative to the initial dual gradient norm
    max_iter: int = 3000
    armijo: float = 1e-4
    step_init: float = 1.0
    step_max: float = 4.0
    step_grow: float = 1.5
    newton: bool = True
    newton_switch: float = 1e-3  # start Newton polishing below this relative gradient
    newton_max: int = 20
    positive: bool = True
    escape_saddles: bool = True  # ground_state only: leave critical points of Nehari index > 0
    escape_max: int = 10
    escape_tol: float = 1e-7
    escape_steps: tuple = (0.05, -0.05, 0.2, -0.2)


@dataclass
class MinimizeResult:
    u: np.ndarray
    energy: float
    grad_norm: float
    grad_norm0: float
    nehari_residual: float
    converged: bool
    iterations: int
    history: list[float] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)


def _newton_polish(fn: Functional, u: np.ndarray, gn: float, steps: int):
    for _ in range(steps):
        r = fn.residual(u)
        try:
            delta = spla.spsolve(sp.csc_matrix(fn.hessian_matrix(u)), -r)
        except RuntimeError:
            return u, gn, False
        if not np.all(np.isfinite(delta)):
            return u, gn, False
        trial = u + delta
        try:
            proj = project(fn, trial)
        except ProjectionError:
            return u, gn, False
        trial = proj.t * trial
        new_gn = fn.dual_norm(fn.residual(trial))
        if not new_gn < gn:
            return u, gn, False
        u, gn = trial, new_gn
        if gn <= 1e-14 * math.sqrt(fn.norm_sq(u)):
            break
    return u, gn, True


def minimize_nehari(
    fn: Functional,
    v0: np.ndarray,
    options: SolverOptions | None = None,
    deflate: Sequence[np.ndarray] = (),
    rho: float = 0.0,
) -> MinimizeResult:
    """Preconditioned descent of the reduced energy with Nehari retraction.

    With ``deflate`` the objective becomes ``E(u) * prod_k (1 + rho/||u - v_k||^2)``;
    this is only used to push iterates away from known solutions, and the
    returned ``grad_norm`` is always that of the undeflated functional.
    """
    opt = options or SolverOptions()
    deflate = [np.asarray(d) for d in deflate]
    proj = project(fn, v0)
    u = proj.t * np.asarray(v0, float)

    def objective(x):
        e = fn.energy(x)
        if not deflate:
            return e, 1.0
        mult = 1.0
        for d in deflate:
            mult *= 1.0 + rho / max(fn.norm_sq(x - d), 1e-300)
        return e * mult, mult

    def direction(x, e, mult):
        r = fn.residual(x)
        z = fn.riesz(r)
        if deflate:
            extra = np.zeros_like(x)
            for d in deflate:
                diff = x - d
                dist2 = max(fn.norm_sq(diff), 1e-300)
                extra -= 2.0 * rho * diff / (dist2 * (dist2 + rho))
            z = mult * (z + e * extra)
        return r, z

    e = fn.energy(u)
    obj, mult = objective(u)
    r, z = direction(u, e, mult)
    slope = float(np.dot(z, fn.K @ z))
    gn0 = fn.dual_norm(r)
    gn = gn0
    alpha = opt.step_init
    history = [e]
    flags: list[str] = []
    floor = 1e-13 * math.sqrt(fn.norm_sq(u))
    it = 0
    converged = False
    for it in range(1, opt.max_iter + 1):
        if gn <= max(opt.gtol * gn0, floor):
            converged = True
            break
        if opt.newton and not deflate and gn <= opt.newton_switch * gn0:
            u_new, gn_new, ok = _newton_polish(fn, u, gn, opt.newton_max)
            if gn_new < gn:
                u, gn = u_new, gn_new
                e = fn.energy(u)
                obj, mult = objective(u)
                r, z = direction(u, e, mult)
                slope = float(np.dot(z, fn.K @ z))
                history.append(e)
                if gn <= max(opt.gtol * gn0, floor):
                    converged = True
                    break
        accepted = False
        while alpha > 1e-12:
            trial = u - alpha * z
            try:
                tp = project(fn, trial).t
            except ProjectionError:
                alpha *= 0.5
                continue
            cand = tp * trial
            cand_obj, cand_mult = objective(cand)
            if cand_obj <= obj - opt.armijo * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            flags.append("line-search-stalled")
            break
        u = cand
        e = fn.energy(u)
        obj, mult = cand_obj, cand_mult
        r, z = direction(u, e, mult)
        slope = float(np.dot(z, fn.K @ z))
        gn = fn.dual_norm(r)
        history.append(e)
        alpha = min(alpha * opt.step_grow, opt.step_max)
    else:
        converged = gn <= max(opt.gtol * gn0, floor)
    if not converged:
        flags.append("not-converged")
    return MinimizeResult(
        u=u, energy=fn.energy(u), grad_norm=gn, grad_norm0=gn0,
        nehari_residual=fn.nehari_residual(u), converged=converged,
        iterations=it, history=history, flags=flags,
    )


# ---------------------------------------------------------------------------
# reports and grid-level drivers
# ---------------------------------------------------------------------------

@dataclass
class CriticalPointReport:
    field: Field
    p: float
    energy: float
    grad_norm: float
    nehari_residual: float
    barycenter: np.ndarray
    positive: bool
    converged: bool
    iterations: int = 0
    grad_norm0: float = float("nan")
    morse_index: int | None = None
    morse: dict | None = None
    deflation_distances: list[float] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    seed_index: int | None = None

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    def to_dict(self) -> dict:
        v = self.values
        return {
            "p": self.p,
            "energy": self.energy,
            "grad_norm": self.grad_norm,
            "grad_norm0": self.grad_norm0,
            "nehari_residual": self.nehari_residual,
            "barycenter": [float(x) for x in self.barycenter],
            "positive": self.positive,
            "converged": self.converged,
            "iterations": self.iterations,
            "morse_index": self.morse_index,
            "morse": self.morse,
            "deflation_distances": [float(d) for d in self.deflation_distances],
            "flags": list(self.flags),
            "seed_index": self.seed_index,
            "sup_norm": float(np.max(np.abs(v))),
            "h1_norm": float(math.sqrt(max(float(v @ (self.field.grid.stiffness @ v)), 0.0))),
        }


def is_positive(v: np.ndarray) -> bool:
    vmax = float(np.max(v))
    return vmax > 0 and float(np.min(v)) >= -1e-12 * vmax


def principal_direction(grid: DomainGrid, iterations: int = 30) -> np.ndarray:
    """Positive, symmetry-respecting start: inverse iteration for the first Laplace mode."""
    solve = spla.factorized(sp.csc_matrix(grid.laplacian))
    w = np.ones(grid.n)
    for _ in range(iterations):
        w = solve(w)
        w /= np.max(np.abs(w))
    return w


def bump_direction(grid: DomainGrid, center, radius: float) -> np.ndarray:
    d = np.linalg.norm(grid.coords - np.asarray(center, float), axis=1)
    return np.where(d < radius, np.cos(0.5 * np.pi * d / radius) ** 2, 0.0)


def _initial(grid: DomainGrid, init) -> np.ndarray:
    if init is None or (isinstance(init, str) and init == "principal"):
        return principal_direction(grid)
    if isinstance(init, str):
        raise ValueError(f"unknown initial preset {init!r}")
    if isinstance(init, Field):
        return init.values.copy()
    return np.asarray(init, dtype=float).copy()


def escape_saddles(fn: Functional, res: MinimizeResult, options: SolverOptions | None = None) -> MinimizeResult:
    """Second-order check at a converged point of the Nehari descent.

    At a Nehari minimizer the preconditioned Hessian has exactly one negative
    eigenvalue (the ray direction). While a second one is present the point
    is perturbed along its eigenvector with the trial amplitudes
    ``escape_steps`` (relative to the sup norm), the descent is rerun and the
    lowest converged energy is kept. Symmetric starts otherwise stay on
    symmetric saddles.
    """
    opt = options or SolverOptions()
    best = res
    escapes = 0
    for _ in range(opt.escape_max):
        u = best.u
        lam, w, _ = pencil_eigs(fn, fn.potential_curvature(u), 2, dense=fn.n <= 200)
        if 1.0 - lam[1] >= -opt.escape_tol:
            break
        d = w[:, 1] / np.max(np.abs(w[:, 1]))
        scale = float(np.max(np.abs(u)))
        improved = None
        for s in opt.escape_steps:
            trial = u + s * scale * d
            if opt.positive:
                trial = np.maximum(trial, 0.0)
            if not np.any(trial):
                continue
            try:
                cand = minimize_nehari(fn, trial, opt)
            except ProjectionError:
                continue
            ref = improved if improved is not None else best
            if cand.converged and cand.energy < ref.energy - 1e-12 * abs(ref.energy):
                improved = cand
        if improved is None:
            best.flags.append("saddle-escape-failed")
            break
        improved.iterations += best.iterations
        improved.grad_norm0 = res.grad_norm0
        best = improved
        escapes += 1
    if escapes:
        best.flags.append(f"saddle-escapes={escapes}")
    return best


def build_report(fn: Functional, res: MinimizeResult, grid: DomainGrid) -> CriticalPointReport:
    flags = list(res.flags)
    if fn.params.is_critical:
        flags.append("critical-exponent: infimum not attained, best approximate minimizer")
    if fn.params.outside_hypotheses:
        flags.append("outside-hypotheses: N = 2 with user exponent cap")
    return CriticalPointReport(
        field=Field(grid, res.u), p=fn.p, energy=res.energy, grad_norm=res.grad_norm,
        nehari_residual=res.nehari_residual, barycenter=barycenter(grid, res.u),
        positive=is_positive(res.u), converged=res.converged, iterations=res.iterations,
        grad_norm0=res.grad_norm0, flags=flags,
    )


def ground_state(
    grid: DomainGrid,
    params: ExponentParams,
    init=None,
    options: SolverOptions | None = None,
) -> CriticalPointReport:
    """Minimize ``I_p`` over the discrete Nehari set starting from ``init``.

    ``init`` is an interior array, a ``Field``, ``None`` or ``"principal"``.
    The positive-part functional is used unless ``options.positive`` is off.
    With ``options.escape_saddles`` the result is checked to be a local
    minimizer on the Nehari set (see ``escape_saddles``).
    """
    opt = options or SolverOptions()
    v0 = _initial(grid, init)
    if not np.any(v0):
        raise ValueError("initial field is zero")
    fn = Functional.on_grid(grid, params, positive=opt.positive)
    res = minimize_nehari(fn, v0, opt)
    if opt.escape_saddles and res.converged:
        res = escape_saddles(fn, res, opt)
    return build_report(fn, res, grid)


# ---------------------------------------------------------------------------
# radial ball ground state and bump seeds
# ---------------------------------------------------------------------------

def radial_operators(radius: float, dim: int, n: int = 400):
    """Finite-volume stiffness/mass for radial functions on ``B_radius`` (Dirichlet at ``radius``)."""
    dr = radius / n
    nodes = dr * np.arange(n)
    sphere = 2.0 * math.pi ** (dim / 2) / gamma(dim / 2)
    a = np.maximum(nodes - 0.5 * dr, 0.0)
    b = nodes + 0.5 * dr
    mass = sphere * (b**dim - a**dim) / dim
    mid = nodes + 0.5 * dr
    cond = sphere * mid ** (dim - 1) / dr  # edge i -- i+1; the last edge hits the Dirichlet ghost
    diag = cond.copy()
    diag[1:] += cond[:-1]
    off = -cond[:-1]
    K = sp.diags([off, diag, off], [-1, 0, 1], format="csr")
    return nodes, K, mass


@dataclass(frozen=True)
class RadialProfile:
    radius: float
    nodes: np.ndarray
    values: np.ndarray
    energy: float
    converged: bool

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        xp = np.append(self.nodes, self.radius)
        fp = np.append(self.values, 0.0)
        return np.where(rho < self.radius, np.interp(rho, xp, fp), 0.0)


_PROFILE_CACHE: dict = {}
_PROFILE_LOCK = threading.Lock()


def radial_ground_state(params: ExponentParams, radius: float, n: int = 400,
                        options: SolverOptions | None = None) -> RadialProfile:
    """Radial ground state on ``B_radius``; cached per ``(p, dim, radius, n)``."""
    key = (float(params.p), params.dim, params.cap, float(radius), int(n))
    with _PROFILE_LOCK:
        hit = _PROFILE_CACHE.get(key)
        if hit is not None:
            return hit
        nodes, K, mass = radial_operators(radius, params.dim, n)
        fn = Functional(K, mass, params, positive=True)
        v0 = np.cos(0.5 * np.pi * nodes / radius)
        res = minimize_nehari(fn, v0, options or SolverOptions())
        prof = RadialProfile(float(radius), nodes, res.u, res.energy, res.converged)
        _PROFILE_CACHE[key] = prof
        return prof


def make_bump_seed(grid: DomainGrid, params: ExponentParams, center, r: float, n_radial: int = 400) -> np.ndarray:
    """Radial ball ground state translated to ``center`` and extended by zero."""
    center = np.asarray(center, float)
    if not ball_fits(grid, center, r):
        raise ValueError("bump B_r(center) is not contained in the domain")
    prof = radial_ground_state(params, r, n_radial)
    d = np.linalg.norm(grid.coords - center, axis=1)
    return prof(d)


# ---------------------------------------------------------------------------
# multistart with deduplication and deflation
# ---------------------------------------------------------------------------

def relative_distance(grid: DomainGrid, a: np.ndarray, b: np.ndarray) -> float:
    K = grid.stiffness
    na = math.sqrt(max(float(a @ (K @ a)), 0.0))
    nb = math.sqrt(max(float(b @ (K @ b)), 0.0))
    d = a - b
    return math.sqrt(max(float(d @ (K @ d)), 0.0)) / max(na, nb, 1e-300)


def cluster(grid: DomainGrid, reports: Sequence[CriticalPointReport], radius: float) -> list[list[int]]:
    """Greedy clustering in input order by relative H^1_0 distance."""
    groups: list[list[int]] = []
    for i, rep in enumerate(reports):
        for g in groups:
            if relative_distance(grid, reports[g[0]].values, rep.values) < radius:
                g.append(i)
                break
        else:
            groups.append([i])
    return groups


def multistart_deflate(
    grid: DomainGrid,
    params: ExponentParams,
    seeds: Sequence[np.ndarray],
    dedupe_radius: float = 0.05,
    options: SolverOptions | None = None,
    deflation: bool = False,
    rho: float = 1.0,
    escape_iter: int = 60,
    threads: int = 1,
) -> list[CriticalPointReport]:
    """Run ``ground_state`` from every seed and keep distinct converged solutions.

    With ``deflation`` every seed is additionally pushed away from the
    solutions already found (energy multiplied by ``prod (1 + rho E/||u - v_k||^2)``,
    ``E`` the lowest level found) and the escaped point is polished with Newton
    steps on the undeflated functional, which also reaches saddle points.
    Results are sorted by energy.
    """
    if len(seeds) == 0:
        raise ValueError("multistart needs at least one seed")
    if dedupe_radius <= 0:
        raise ValueError("dedupe_radius must be positive")
    opt = options or SolverOptions()

    def run(i_seed):
        i, s = i_seed
        rep = ground_state(grid, params, s, opt)
        rep.seed_index = i
        return rep

    items = list(enumerate(seeds))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(run, items))
    else:
        reports = [run(it) for it in items]

    good = [r for r in reports if r.converged]
    groups = cluster(grid, good, dedupe_radius)
    reps = [min((good[i] for i in g), key=lambda r: (r.energy, r.seed_index)) for g in groups]

    if deflation and reps:
        fn = Functional.on_grid(grid, params, positive=opt.positive)
        scale = min(r.energy for r in reps)
        esc_opt = replace(opt, max_iter=escape_iter, newton=False)
        for i, s in items:
            known = [r.values for r in reps]
            esc = minimize_nehari(fn, s, esc_opt, deflate=known, rho=rho * scale)
            polish = minimize_nehari(fn, esc.u, replace(opt, newton_switch=1.0))
            rep = build_report(fn, polish, grid)
            rep.seed_index = i
            rep.flags.append("deflated")
            if rep.converged and all(relative_distance(grid, rep.values, k) >= dedupe_radius for k in known):
                reps.append(rep)

    reps.sort(key=lambda r: (r.energy, r.seed_index if r.seed_index is not None else -1))
    for r in reps:
        r.deflation_distances = [relative_distance(grid, r.values, o.values) for o in reps if o is not r]
    return reps


def deflation_distance_matrix(grid: DomainGrid, reports: Sequence[CriticalPointReport]) -> np.ndarray:
    n = len(reports)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = relative_distance(grid, reports[i].values, reports[j].values)
    return out


__all__ = [
    "NehariProjection", "ProjectionError", "project", "reduced_energy", "SolverOptions",
    "MinimizeResult", "minimize_nehari", "escape_saddles", "CriticalPointReport", "ground_state",
    "make_bump_seed", "radial_ground_state", "multistart_deflate", "cluster",
    "relative_distance", "principal_direction", "bump_direction",
]
