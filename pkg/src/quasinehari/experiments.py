"""Numerical studies built on the solver: level sweeps, localization and multiplicity.

All routines return plain dataclasses with ``to_dict`` for JSON output and,
where a table makes sense, ``rows()`` for CSV output. Nothing here asserts
absolute values of the limiting level ``m_*``; trends are reported as booleans
next to the raw numbers.
"""
from __future__ import annotations

import hashlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .domain import DomainGrid, barycenter, distance_to_domain, lattice_symmetries, width
from .functional import ExponentParams, Functional, pohozaev_terms
from .nehari import (
    CriticalPointReport, SolverOptions, ground_state, make_bump_seed, multistart_deflate,
    principal_direction, project, relative_distance,
)
from .spectra import morse_index

log = logging.getLogger(__name__)


def _map(fn, items, threads: int):
    items = list(items)
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def strictly_increasing(xs) -> bool:
    return all(b > a for a, b in zip(xs, xs[1:]))


def strictly_decreasing(xs) -> bool:
    return all(b < a for a, b in zip(xs, xs[1:]))


# ---------------------------------------------------------------------------
# level sweep
# ---------------------------------------------------------------------------

@dataclass
class SweepRecord:
    p: float
    m_p: float
    t_star: float
    star_level: float   # I_*(t_* g_p)
    barycenter: list[float]
    width: float
    sup_norm: float
    h1_norm: float
    grad_norm: float
    converged: bool
    iterations: int

    @property
    def level_gap(self) -> float:
        return abs(self.m_p - self.star_level)


@dataclass
class SweepResult:
    records: list[SweepRecord]
    m_star_projected: float
    m_star_extrapolated: float | None
    m_star_disc: float
    trends: dict
    reports: list[CriticalPointReport] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        recs = []
        for r in self.records:
            d = asdict(r)
            d["level_gap"] = r.level_gap
            recs.append(d)
        return {
            "records": recs,
            "m_star_projected": self.m_star_projected,
            "m_star_extrapolated": self.m_star_extrapolated,
            "m_star_disc": self.m_star_disc,
            "trends": self.trends,
        }

    def rows(self) -> list[dict]:
        out = []
        for r in self.records:
            row = {k: v for k, v in asdict(r).items() if k != "barycenter"}
            for i, b in enumerate(r.barycenter):
                row[f"beta_{i}"] = b
            row["level_gap"] = r.level_gap
            out.append(row)
        return out


def sweep_trends(records: Sequence[SweepRecord], t_final_tol: float = 0.05) -> dict:
    m = [r.m_p for r in records]
    tgap = [abs(r.t_star - 1.0) for r in records]
    norms = [r.h1_norm for r in records]
    gaps = [r.level_gap for r in records]
    return {
        "all_converged": all(r.converged for r in records),
        "m_p_increasing": strictly_increasing(m),
        "m_p_decreasing": strictly_decreasing(m),
        "t_star_gap_decreasing": strictly_decreasing(tgap),
        "t_star_final_gap": tgap[-1] if tgap else None,
        "t_star_final_ok": bool(tgap) and tgap[-1] <= t_final_tol,
        "norm_bounded": bool(norms) and max(norms) <= 2.0 * float(np.median(norms)),
        "level_gap_decreasing": strictly_decreasing(gaps),
    }


def _extrapolate(ps: np.ndarray, ms: np.ndarray, crit: float) -> float | None:
    if ps.size < 2:
        return None
    deg = min(2, ps.size - 1)
    coef = np.polyfit(ps - crit, ms, deg)
    return float(coef[-1])


def level_sweep(
    grid: DomainGrid,
    p_list: Sequence[float],
    options: SolverOptions | None = None,
    threads: int = 1,
    cap: float | None = None,
) -> SweepResult:
    """Ground states along ``p_list`` with their projections onto the critical Nehari set.

    ``m_*`` is estimated twice: by polynomial extrapolation of ``m_p`` to
    ``p = crit`` and as ``I_*(t_* g_p)`` for the last ``p``. ``m_star_disc``
    is the smallest ``I_*`` value met on any projected field.
    """
    ps = [float(p) for p in p_list]
    if not ps:
        raise ValueError("empty exponent list")
    if any(b <= a for a, b in zip(ps, ps[1:])):
        raise ValueError("p_list must be strictly increasing")
    params = [ExponentParams(p, grid.dim, cap) for p in ps]
    opt = options or SolverOptions()
    reports = _map(lambda pr: ground_state(grid, pr, None, opt), params, threads)
    crit_fn = Functional.on_grid(grid, params[0].critical())
    records = []
    star_levels = []
    for pr, rep in zip(params, reports):
        v = rep.values
        t_star = project(crit_fn, v).t
        star = crit_fn.energy(t_star * v)
        star_levels.append(star)
        d = rep.to_dict()
        records.append(SweepRecord(
            p=pr.p, m_p=rep.energy, t_star=t_star, star_level=star,
            barycenter=[float(x) for x in rep.barycenter], width=width(grid, v),
            sup_norm=d["sup_norm"], h1_norm=d["h1_norm"], grad_norm=rep.grad_norm,
            converged=rep.converged, iterations=rep.iterations,
        ))
    trends = sweep_trends(records)
    if not trends["all_converged"]:
        for k in list(trends):
            if k != "all_converged" and isinstance(trends[k], bool):
                trends[k] = False
        trends["aborted"] = "non-converged ground state in sweep"
    extrap = _extrapolate(np.array(ps), np.array([r.m_p for r in records]), params[0].crit)
    return SweepResult(records, star_levels[-1], extrap, min(star_levels), trends, list(reports))


# ---------------------------------------------------------------------------
# discrete Sobolev constant
# ---------------------------------------------------------------------------

_SOBOLEV_CACHE: dict = {}


def _grid_key(grid: DomainGrid) -> str:
    h = hashlib.sha256(np.packbits(grid.mask).tobytes())
    h.update(repr((grid.shape, grid.spacing)).encode())
    return h.hexdigest()


def discrete_sobolev_constant(grid: DomainGrid, iterations: int = 500, tol: float = 1e-12) -> float | None:
    """``S_disc = min ||v||^2 / ||v||_{2*}^2`` by nonlinear inverse iteration (cached per grid).

    The iteration ``v <- K^{-1}(m |v|^{2*-2} v)`` increases the quotient
    ``||v||_{2*}^2 / ||v||^2`` monotonically from a positive start.
    Returns ``None`` in two dimensions.
    """
    if grid.dim < 3:
        return None
    key = _grid_key(grid)
    if key in _SOBOLEV_CACHE:
        return _SOBOLEV_CACHE[key]
    q = 2.0 * grid.dim / (grid.dim - 2)
    K, m = grid.stiffness, grid.mass
    fn = Functional(K, m, ExponentParams(4.0 * grid.dim / (grid.dim - 2), grid.dim))
    v = np.ones(grid.n)
    quotient = 0.0
    for _ in range(iterations):
        v = fn.riesz(m * np.abs(v) ** (q - 2) * v)
        v /= np.max(np.abs(v))
        lq = float(m @ np.abs(v) ** q) ** (2.0 / q)
        new = lq / float(v @ (K @ v))
        if abs(new - quotient) <= tol * new:
            quotient = new
            break
        quotient = new
    s = 1.0 / quotient
    _SOBOLEV_CACHE[key] = s
    return s


def ps_threshold(s: float | None, dim: int) -> float | None:
    """Compactness threshold ``(1/N) (S/2)^{N/2}``."""
    if s is None:
        return None
    return (s / 2.0) ** (dim / 2.0) / dim


# ---------------------------------------------------------------------------
# concentration probe
# ---------------------------------------------------------------------------

@dataclass
class ConcentrationRecord:
    p: float
    m_p: float
    width: float
    sup_norm: float
    pohozaev_residual: float
    pohozaev_relative: float
    barycenter_offset: float
    under_resolved: bool
    converged: bool


@dataclass
class ConcentrationReport:
    records: list[ConcentrationRecord]
    spacing: float
    s_disc: float | None
    ps_threshold: float | None
    m_star_estimate: float
    trends: dict
    flags: list[str] = field(default_factory=list)
    reports: list[CriticalPointReport] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "records": [asdict(r) for r in self.records],
            "spacing": self.spacing,
            "s_disc": self.s_disc,
            "ps_threshold": self.ps_threshold,
            "m_star_estimate": self.m_star_estimate,
            "trends": self.trends,
            "flags": self.flags,
        }

    def rows(self) -> list[dict]:
        return [asdict(r) for r in self.records]


def concentration_probe(
    grid: DomainGrid,
    p_list: Sequence[float],
    options: SolverOptions | None = None,
    threads: int = 1,
    floor_nodes: float = 3.0,
) -> ConcentrationReport:
    """Width, sup norm and Pohozaev imbalance of ground states as ``p`` grows.

    Trends are judged only over the resolved prefix of the list: once the
    width drops below ``floor_nodes * h`` the remaining points are flagged.
    """
    if not grid.star_shaped:
        raise ValueError(f"concentration probe needs a star-shaped domain, got {grid.shape_tag!r}")
    sweep = level_sweep(grid, p_list, options, threads)
    h = grid.spacing
    recs = []
    for r, rep in zip(sweep.records, sweep.reports):
        pz = pohozaev_terms(grid, rep.values, ExponentParams(r.p, grid.dim))
        recs.append(ConcentrationRecord(
            p=r.p, m_p=r.m_p, width=r.width, sup_norm=r.sup_norm,
            pohozaev_residual=pz.residual, pohozaev_relative=pz.relative,
            barycenter_offset=float(np.linalg.norm(np.asarray(r.barycenter) - grid.center)),
            under_resolved=r.width < floor_nodes * h, converged=r.converged,
        ))
    flags = []
    resolved = []
    for rec in recs:
        if rec.under_resolved:
            break
        resolved.append(rec)
    if recs and recs[0].under_resolved:
        flags.append("under-resolved at first p")
    elif len(resolved) < len(recs):
        flags.append(f"resolution floor reached at p = {recs[len(resolved)].p:g}")
    trends = {
        "all_converged": all(r.converged for r in recs),
        "resolved_points": len(resolved),
        "width_decreasing": len(resolved) >= 2 and strictly_decreasing([r.width for r in resolved]),
        "sup_increasing": len(resolved) >= 2 and strictly_increasing([r.sup_norm for r in resolved]),
        "max_barycenter_offset": max(r.barycenter_offset for r in recs),
    }
    s = discrete_sobolev_constant(grid)
    return ConcentrationReport(recs, h, s, ps_threshold(s, grid.dim), sweep.m_star_projected,
                               trends, flags, sweep.reports)


# ---------------------------------------------------------------------------
# seeds and lattice symmetries
# ---------------------------------------------------------------------------

def default_bump_radius(grid: DomainGrid) -> float:
    p = grid.params
    if grid.shape_tag == "annulus":
        return 0.4 * (p["r_outer"] - p["r_inner"])
    if grid.shape_tag == "ball":
        return 0.3 * p["radius"]
    extent = np.asarray(grid.shape) - 1
    half = 0.5 * grid.spacing * float(extent.min())
    if grid.shape_tag == "rectangle_with_hole":
        return 0.4 * (half - p["hole_radius"])
    return 0.3 * half


def seed_centers(grid: DomainGrid, layout: str, n_seeds: int, bump_radius: float) -> list[np.ndarray]:
    """Bump centers: a ring in the first coordinate plane, or the center plus axis offsets."""
    c = np.asarray(grid.center, float)
    if layout == "ring":
        if grid.shape_tag == "annulus":
            rho = 0.5 * (grid.params["r_inner"] + grid.params["r_outer"])
        elif grid.shape_tag == "rectangle_with_hole":
            half = 0.5 * grid.spacing * float(min(grid.shape) - 1)
            rho = 0.5 * (grid.params["hole_radius"] + half)
        else:
            rho = 2.0 * bump_radius
        out = []
        for k in range(n_seeds):
            th = 2.0 * math.pi * k / n_seeds
            y = c.copy()
            y[0] += rho * math.cos(th)
            y[1] += rho * math.sin(th)
            out.append(y)
        return out
    if layout == "center_offsets":
        out = [c.copy()]
        offset = bump_radius
        for axis in range(grid.dim):
            for sign in (1.0, -1.0):
                y = c.copy()
                y[axis] += sign * offset
                out.append(y)
        return out[: max(n_seeds, 1)]
    raise ValueError(f"unknown seed layout {layout!r}")


def default_layout(grid: DomainGrid) -> str:
    return "ring" if grid.shape_tag in ("annulus", "rectangle_with_hole") else "center_offsets"


def orbit_count(grid: DomainGrid, fields: Sequence[np.ndarray], radius: float) -> list[list[int]]:
    """Group fields whose lattice-symmetry images lie within relative distance ``radius``."""
    syms = lattice_symmetries(grid)
    groups: list[list[int]] = []
    for i, v in enumerate(fields):
        for g in groups:
            ref = fields[g[0]]
            if min(relative_distance(grid, ref[s], v) for s in syms) < radius:
                g.append(i)
                break
        else:
            groups.append([i])
    return groups


# ---------------------------------------------------------------------------
# barycenter census
# ---------------------------------------------------------------------------

@dataclass
class BarycenterPoint:
    source: str
    energy: float
    barycenter: list[float]
    distance_to_domain: float
    inside: bool
    passed_filter: bool


@dataclass
class BarycenterCensus:
    p: float
    m_p: float
    epsilon: float
    r: float
    points: list[BarycenterPoint]
    flags: list[str] = field(default_factory=list)

    @property
    def n_passed(self) -> int:
        return sum(pt.passed_filter for pt in self.points)

    @property
    def fraction_inside(self) -> float | None:
        passed = [pt for pt in self.points if pt.passed_filter]
        if not passed:
            return None
        return sum(pt.inside for pt in passed) / len(passed)

    @property
    def inconclusive(self) -> bool:
        return self.n_passed == 0

    def to_dict(self) -> dict:
        return {
            "p": self.p, "m_p": self.m_p, "epsilon": self.epsilon, "r": self.r,
            "n_generated": len(self.points), "n_passed": self.n_passed,
            "fraction_inside": self.fraction_inside, "inconclusive": self.inconclusive,
            "points": [asdict(pt) for pt in self.points], "flags": self.flags,
        }

    def rows(self) -> list[dict]:
        out = []
        for pt in self.points:
            row = {k: v for k, v in asdict(pt).items() if k != "barycenter"}
            for i, b in enumerate(pt.barycenter):
                row[f"beta_{i}"] = b
            out.append(row)
        return out


def smooth_noise(grid: DomainGrid, rng: np.random.Generator, fn: Functional) -> np.ndarray:
    """Random field smoothed by one inverse Laplacian solve, scaled to unit sup norm."""
    z = fn.riesz(grid.mass * rng.standard_normal(grid.n))
    return z / max(float(np.max(np.abs(z))), 1e-300)


def barycenter_census(
    grid: DomainGrid,
    params: ExponentParams,
    n_starts: int = 48,
    epsilon: float | None = None,
    r: float | None = None,
    seed: int = 0,
    noise: float = 0.3,
    options: SolverOptions | None = None,
    ground: CriticalPointReport | None = None,
    energy_filter: bool = True,
    epsilon_fraction: float = 0.1,
) -> BarycenterCensus:
    """Barycenters of low-energy Nehari points.

    Points are lattice-symmetry images of the ground state multiplied by
    ``1 + s * noise`` with ``s`` uniform in ``[0, noise]`` and a smooth random
    ``noise`` field, then projected onto the Nehari set. Points with
    ``I_p < m_p + epsilon`` (default ``epsilon = epsilon_fraction * m_p``) pass the filter;
    a barycenter is inside when its distance to the domain is at most ``r``.
    """
    if n_starts < 1:
        raise ValueError("n_starts must be positive")
    opt = options or SolverOptions()
    gs = ground if ground is not None else ground_state(grid, params, None, opt)
    m_p = gs.energy
    eps = epsilon_fraction * m_p if epsilon is None else float(epsilon)
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    rr = default_bump_radius(grid) if r is None else float(r)
    fn = Functional.on_grid(grid, params, positive=opt.positive)
    syms = lattice_symmetries(grid)
    rng = np.random.default_rng(seed)
    points = []
    for k in range(n_starts):
        sigma = syms[k % len(syms)]
        base = gs.values[sigma]
        s = noise * rng.random()
        v = base * (1.0 + s * smooth_noise(grid, rng, fn))
        t = project(fn, v).t
        u = t * v
        e = fn.energy(u)
        beta = barycenter(grid, u)
        dist = distance_to_domain(grid, beta)
        points.append(BarycenterPoint(
            source=f"sym{k % len(syms)}+noise{s:.3f}", energy=e, barycenter=[float(x) for x in beta],
            distance_to_domain=dist, inside=dist <= rr,
            passed_filter=(e < m_p + eps) or not energy_filter,
        ))
    flags = [] if any(pt.passed_filter for pt in points) else ["inconclusive: no point below m_p + epsilon"]
    if params.outside_hypotheses:
        flags.append("outside-hypotheses: N = 2 with user exponent cap")
    return BarycenterCensus(params.p, m_p, eps, rr, points, flags)


# ---------------------------------------------------------------------------
# multiplicity census
# ---------------------------------------------------------------------------

@dataclass
class CensusReport:
    shape_tag: str
    p: float
    layout: str
    n_seeds: int
    expected_cat: int
    expected_morse: int
    solutions: list[dict]
    orbits: list[list[int]] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    reports: list[CriticalPointReport] = field(default_factory=list, repr=False)

    @property
    def n_distinct(self) -> int:
        return len(self.solutions)

    @property
    def n_orbits(self) -> int:
        """Distinct solutions up to the lattice symmetries of the grid."""
        return len(self.orbits)

    @property
    def n_positive(self) -> int:
        return sum(s["positive"] for s in self.solutions)

    @property
    def meets_cat(self) -> bool:
        return self.n_positive >= self.expected_cat

    def to_dict(self) -> dict:
        return {
            "shape_tag": self.shape_tag, "p": self.p, "layout": self.layout, "n_seeds": self.n_seeds,
            "expected_cat": self.expected_cat, "expected_morse": self.expected_morse,
            "n_distinct": self.n_distinct, "n_orbits": self.n_orbits, "orbits": self.orbits,
            "n_positive": self.n_positive, "meets_cat": self.meets_cat,
            "solutions": self.solutions, "flags": self.flags,
        }

    def rows(self) -> list[dict]:
        out = []
        for i, s in enumerate(self.solutions):
            row = {"rank": i, "energy": s["energy"], "morse_index": s["morse_index"],
                   "positive": s["positive"], "seed_index": s["seed_index"]}
            for j, b in enumerate(s["barycenter"]):
                row[f"beta_{j}"] = b
            out.append(row)
        return out


def multiplicity_census(
    grid: DomainGrid,
    params: ExponentParams,
    layout: str | None = None,
    n_seeds: int = 8,
    bump_radius: float | None = None,
    dedupe_radius: float = 0.05,
    options: SolverOptions | None = None,
    deflation: bool = False,
    rho: float = 1.0,
    morse_k: int = 6,
    include_principal: bool = True,
    threads: int = 1,
) -> CensusReport:
    """Multistart from bump seeds, deduplicated, with a Morse index per solution.

    ``include_principal`` adds the positive first Laplace mode as an extra seed.
    Solutions are counted both as distinct fields and as orbits under the
    lattice symmetries of the grid.
    """
    layout = layout or default_layout(grid)
    rb = default_bump_radius(grid) if bump_radius is None else float(bump_radius)
    centers = seed_centers(grid, layout, n_seeds, rb)
    seeds = [make_bump_seed(grid, params, y, rb) for y in centers]
    if include_principal:
        seeds.append(principal_direction(grid))
    reps = multistart_deflate(grid, params, seeds, dedupe_radius, options, deflation, rho, threads=threads)
    topo = grid.topology
    solutions = []
    for rep in reps:
        mr = morse_index(grid, rep.values, params, morse_k)
        rep.morse_index = mr.index
        rep.morse = mr.to_dict()
        d = rep.to_dict()
        solutions.append({k: d[k] for k in ("energy", "grad_norm", "nehari_residual", "barycenter", "positive",
                                            "morse_index", "seed_index", "sup_norm", "h1_norm", "flags",
                                            "deflation_distances")})
    flags = []
    if sum(s["positive"] for s in solutions) < topo["cat"]:
        flags.append(f"shortfall: found fewer than cat = {topo['cat']} positive solutions")
    if params.outside_hypotheses:
        flags.append("outside-hypotheses: N = 2 with user exponent cap")
    orbits = orbit_count(grid, [r.values for r in reps], dedupe_radius)
    return CensusReport(grid.shape_tag, params.p, layout, len(seeds), topo["cat"], 2 * topo["P1"] - 1,
                        solutions, orbits, flags, reps)


__all__ = [
    "SweepRecord", "SweepResult", "level_sweep", "sweep_trends",
    "discrete_sobolev_constant", "ps_threshold",
    "ConcentrationRecord", "ConcentrationReport", "concentration_probe",
    "BarycenterPoint", "BarycenterCensus", "barycenter_census",
    "CensusReport", "multiplicity_census",
    "seed_centers", "default_bump_radius", "orbit_count",
]
