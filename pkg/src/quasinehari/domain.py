"""Masked uniform Cartesian grids, the 2N+1 point Laplacian and quadrature.

A ``DomainGrid`` stores a boolean mask over a bounding box of nodes. Nodes
with ``mask == True`` are the unknowns; every other node is a Dirichlet
ghost carrying the value 0. Interior fields are 1-D arrays in C order of the
masked nodes.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Mapping

import numpy as np
import scipy.sparse as sp
from scipy import ndimage

SHAPES = ("rectangle", "ball", "annulus", "rectangle_with_hole")

#: Ljusternik-Schnirelmann category and Poincare polynomial at t = 1
TOPOLOGY = {
    "rectangle": {"cat": 1, "P1": 1},
    "ball": {"cat": 1, "P1": 1},
    "annulus": {"cat": 2, "P1": 2},
    "rectangle_with_hole": {"cat": 2, "P1": 2},
}


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DomainGrid:
    dim: int
    shape: tuple[int, ...]
    spacing: float
    mask: np.ndarray
    shape_tag: str
    params: Mapping[str, Any] = field(default_factory=dict)
    bounding_origin: np.ndarray = None
    center: np.ndarray = None

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != tuple(self.shape):
            raise ValueError("mask shape does not match grid shape")
        if mask.ndim != self.dim or self.dim not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        if self.spacing <= 0:
            raise ValueError("spacing must be positive")
        # outer layer must be ghost so that every stencil neighbor exists
        edge = np.ones_like(mask)
        edge[tuple(slice(1, -1) for _ in range(self.dim))] = False
        if np.any(mask & edge):
            raise ValueError("mask touches the bounding box; a ghost layer is required")
        if mask.sum() < 8:
            raise ValueError("grid has fewer than 8 interior nodes")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        origin = np.zeros(self.dim) if self.bounding_origin is None else np.asarray(self.bounding_origin, float)
        object.__setattr__(self, "bounding_origin", origin)
        if self.center is None:
            c = origin + 0.5 * self.spacing * (np.asarray(self.shape) - 1)
            object.__setattr__(self, "center", c)

    # -- geometry -----------------------------------------------------------

    @property
    def n(self) -> int:
        return int(self.index.size)

    @property
    def weight(self) -> float:
        """Quadrature weight h^N of one node."""
        return self.spacing**self.dim

    @cached_property
    def index(self) -> np.ndarray:
        return np.flatnonzero(self.mask.ravel())

    @cached_property
    def axes(self) -> list[np.ndarray]:
        return [self.bounding_origin[k] + self.spacing * np.arange(self.shape[k]) for k in range(self.dim)]

    @cached_property
    def full_coords(self) -> np.ndarray:
        """Coordinates of every node, shape ``shape + (dim,)``."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    @cached_property
    def coords(self) -> np.ndarray:
        """Coordinates of the interior nodes, shape ``(n, dim)``."""
        return self.full_coords.reshape(-1, self.dim)[self.index]

    def embed(self, values: np.ndarray) -> np.ndarray:
        """Scatter interior values into a full bounding-box array (ghosts 0)."""
        out = np.zeros(int(np.prod(self.shape)))
        out[self.index] = values
        return out.reshape(self.shape)

    def restrict(self, full: np.ndarray) -> np.ndarray:
        return np.asarray(full).reshape(-1)[self.index]

    def sample(self, fn) -> np.ndarray:
        """Evaluate ``fn(coords)`` on interior nodes (coords has shape (n, dim))."""
        return np.asarray(fn(self.coords), dtype=float)

    def with_mask(self, mask: np.ndarray, shape_tag: str | None = None, **params) -> "DomainGrid":
        """Same lattice, different (usually smaller) mask."""
        return DomainGrid(
            self.dim, self.shape, self.spacing, mask, shape_tag or self.shape_tag,
            dict(params) or dict(self.params), self.bounding_origin, self.center,
        )

    @property
    def topology(self) -> dict:
        return TOPOLOGY[self.shape_tag]

    @property
    def star_shaped(self) -> bool:
        return self.shape_tag in ("rectangle", "ball")

    def reflect(self, values: np.ndarray, axis: int) -> np.ndarray:
        """Reflect an interior field through the grid center along ``axis``."""
        return self.restrict(np.flip(self.embed(values), axis=axis))

    # -- operators ----------------------------------------------------------

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        """Matrix of -Delta on interior nodes (SPD, M-matrix)."""
        n = self.n
        h2 = self.spacing**2
        number = -np.ones(self.shape, dtype=np.int64)
        number.reshape(-1)[self.index] = np.arange(n)
        rows, cols = [], []
        for k in range(self.dim):
            a = np.moveaxis(number, k, 0)
            lo, hi = a[:-1].ravel(), a[1:].ravel()
            both = (lo >= 0) & (hi >= 0)
            rows += [lo[both], hi[both]]
            cols += [hi[both], lo[both]]
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        off = sp.coo_matrix((-np.ones(r.size) / h2, (r, c)), shape=(n, n))
        diag = sp.identity(n, format="csr") * (2 * self.dim / h2)
        return (diag + off).tocsr()

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """Matrix of the Dirichlet form, ``v @ K @ w = int grad v . grad w``."""
        return (self.weight * self.laplacian).tocsr()

    @cached_property
    def mass(self) -> np.ndarray:
        return np.full(self.n, self.weight)

    def box_poincare_constant(self) -> float:
        """Smallest stencil eigenvalue on the full bounding box (lower bound for the mask)."""
        return float(sum(4.0 / self.spacing**2 * np.sin(np.pi / (2 * (m - 1))) ** 2 for m in self.shape))

    def to_header(self) -> dict:
        return {
            "dim": self.dim,
            "shape": list(self.shape),
            "spacing": self.spacing,
            "shape_tag": self.shape_tag,
            "params": dict(self.params),
            "bounding_origin": self.bounding_origin.tolist(),
            "center": self.center.tolist(),
            "mask_rle": mask_to_rle(self.mask),
        }

    @classmethod
    def from_header(cls, header: Mapping[str, Any]) -> "DomainGrid":
        shape = tuple(header["shape"])
        return cls(
            int(header["dim"]), shape, float(header["spacing"]), rle_to_mask(header["mask_rle"], shape),
            header["shape_tag"], dict(header.get("params", {})),
            np.asarray(header["bounding_origin"], float), np.asarray(header["center"], float),
        )


# ---------------------------------------------------------------------------
# quadrature on interior fields
# ---------------------------------------------------------------------------

def _check(grid: DomainGrid, *arrays: np.ndarray) -> None:
    for a in arrays:
        if np.shape(a) != (grid.n,):
            raise GridMismatchError(f"field of shape {np.shape(a)} does not live on a grid with {grid.n} nodes")


def laplacian_apply(grid: DomainGrid, v: np.ndarray) -> np.ndarray:
    """``-Delta v`` with zero Dirichlet ghosts."""
    _check(grid, v)
    return grid.laplacian @ v


def inner(a: np.ndarray, b: np.ndarray) -> float:
    """Plain nodal inner product (no quadrature weight)."""
    return float(np.dot(a, b))


def integrate(grid: DomainGrid, g: np.ndarray) -> float:
    _check(grid, g)
    return grid.weight * float(np.sum(g))


def moment(grid: DomainGrid, g: np.ndarray) -> np.ndarray:
    _check(grid, g)
    return grid.weight * (grid.coords.T @ g)


def grad_norm_sq(grid: DomainGrid, v: np.ndarray) -> float:
    """Sum of squared forward differences over all lattice edges, times h^N."""
    _check(grid, v)
    full = grid.embed(v)
    total = sum(float(np.sum(np.diff(full, axis=k) ** 2)) for k in range(grid.dim))
    return total * grid.spacing ** (grid.dim - 2)


def energy_density(grid: DomainGrid, v: np.ndarray) -> np.ndarray:
    """Nodal |grad v|^2 on the full box: each edge shares its squared slope between its ends."""
    _check(grid, v)
    full = grid.embed(v)
    dens = np.zeros_like(full)
    for k in range(grid.dim):
        e = 0.5 * (np.diff(full, axis=k) / grid.spacing) ** 2
        lo = [slice(None)] * grid.dim
        hi = [slice(None)] * grid.dim
        lo[k] = slice(0, -1)
        hi[k] = slice(1, None)
        dens[tuple(lo)] += e
        dens[tuple(hi)] += e
    return dens


def barycenter(grid: DomainGrid, v: np.ndarray) -> np.ndarray:
    """Gradient-energy weighted center of mass, ``int x |grad v|^2 / int |grad v|^2``."""
    dens = energy_density(grid, v)
    total = dens.sum()
    if total <= 0:
        raise ValueError("barycenter of the zero field is undefined")
    return np.tensordot(dens, grid.full_coords, axes=grid.dim) / total


def width(grid: DomainGrid, v: np.ndarray, center: np.ndarray | None = None) -> float:
    """Root mean square distance from the barycenter under the |grad v|^2 weight."""
    dens = energy_density(grid, v)
    c = barycenter(grid, v) if center is None else np.asarray(center)
    d2 = np.sum((grid.full_coords - c) ** 2, axis=-1)
    return float(np.sqrt(np.sum(dens * d2) / dens.sum()))


def distance_to_domain(grid: DomainGrid, point: np.ndarray) -> float:
    """Distance from ``point`` to the nearest interior node (0 inside the mask hull)."""
    d = np.sqrt(np.min(np.sum((grid.coords - np.asarray(point)) ** 2, axis=1)))
    return float(d)


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def build_domain(spec: Mapping[str, Any], resolution: int | None = None) -> DomainGrid:
    """Build a grid from a shape description.

    ``spec`` keys: ``shape`` (one of SHAPES), ``dim`` (default 3) and

    * rectangle: ``lower``, ``upper`` (per-axis bounds; default unit box)
    * ball: ``radius``, ``center`` (default origin)
    * annulus: ``r_inner``, ``r_outer``, ``center``
    * rectangle_with_hole: ``lower``, ``upper``, ``hole_radius`` (ball removed at box center)

    ``resolution`` counts nodes per axis across the bounding box, including
    the ghost layer on each side.
    """
    spec = dict(spec)
    res = int(resolution if resolution is not None else spec.get("resolution", 0))
    if res < 8:
        raise ValueError("resolution must be at least 8 nodes per axis")
    dim = int(spec.get("dim", 3))
    if dim not in (2, 3):
        raise ValueError("dim must be 2 or 3")
    tag = spec.get("shape")
    if tag not in SHAPES:
        raise ValueError(f"unknown shape {tag!r}; expected one of {SHAPES}")

    if tag in ("rectangle", "rectangle_with_hole"):
        lower = np.broadcast_to(np.asarray(spec.get("lower", 0.0), float), (dim,)).copy()
        upper = np.broadcast_to(np.asarray(spec.get("upper", 1.0), float), (dim,)).copy()
        if np.any(upper <= lower):
            raise ValueError("rectangle bounds must satisfy lower < upper")
        extent = upper - lower
        h = float(extent.min() / (res - 1))
        counts = np.rint(extent / h).astype(int) + 1
        if not np.allclose((counts - 1) * h, extent):
            raise ValueError("rectangle side lengths must be integer multiples of the spacing")
        origin = lower
        center = 0.5 * (lower + upper)
        shape = tuple(int(c) for c in counts)
        mask = np.zeros(shape, bool)
        mask[tuple(slice(1, -1) for _ in range(dim))] = True
        params = {"lower": lower.tolist(), "upper": upper.tolist()}
        if tag == "rectangle_with_hole":
            hr = float(spec.get("hole_radius", 0.0))
            if not 0 < hr < 0.5 * extent.min():
                raise ValueError("hole_radius must be positive and fit inside the rectangle")
            coords = np.stack(np.meshgrid(*[origin[k] + h * np.arange(shape[k]) for k in range(dim)],
                                          indexing="ij"), axis=-1)
            mask &= np.linalg.norm(coords - center, axis=-1) > hr
            params["hole_radius"] = hr
    else:
        center = np.broadcast_to(np.asarray(spec.get("center", 0.0), float), (dim,)).copy()
        if tag == "ball":
            r_out = float(spec.get("radius", 0.0))
            r_in = 0.0
            if r_out <= 0:
                raise ValueError("ball radius must be positive")
            params = {"radius": r_out, "center": center.tolist()}
        else:
            r_in = float(spec.get("r_inner", 0.0))
            r_out = float(spec.get("r_outer", 0.0))
            if not 0 < r_in < r_out:
                raise ValueError("annulus radii must satisfy 0 < r_inner < r_outer")
            params = {"r_inner": r_in, "r_outer": r_out, "center": center.tolist()}
        h = 2.0 * r_out / (res - 1)
        shape = (res,) * dim
        origin = center - r_out
        # symmetric node offsets from the center: (i - (res-1)/2) h
        offs = (np.arange(res) - 0.5 * (res - 1)) * h
        grids = np.meshgrid(*([offs] * dim), indexing="ij")
        rad = np.sqrt(sum(g**2 for g in grids))
        mask = rad < r_out * (1 - 1e-12)
        if r_in > 0:
            mask &= rad > r_in * (1 + 1e-12)
        edge = np.ones_like(mask)
        edge[tuple(slice(1, -1) for _ in range(dim))] = False
        mask &= ~edge
    if tag == "annulus" or tag == "rectangle_with_hole":
        labels, count = ndimage.label(mask)
        if count != 1:
            raise ValueError("resolution too coarse: the mask is not connected")
    return DomainGrid(dim, shape, h, mask, tag, params, origin, center)


def lattice_symmetries(grid: DomainGrid) -> list[np.ndarray]:
    """Node permutations from axis reflections and axis swaps that preserve the mask."""
    idx_full = -np.ones(grid.shape, dtype=int)
    idx_full[grid.mask] = np.arange(grid.n)
    cube = len(set(grid.shape)) == 1
    perms = list(itertools.permutations(range(grid.dim))) if cube else [tuple(range(grid.dim))]
    out = []
    seen = set()
    for perm in perms:
        for flips in itertools.product((False, True), repeat=grid.dim):
            a = np.transpose(idx_full, perm)
            for ax, fl in enumerate(flips):
                if fl:
                    a = np.flip(a, axis=ax)
            if not np.array_equal(a >= 0, grid.mask):
                continue
            sigma = a[grid.mask]
            key = sigma.tobytes()
            if key not in seen:
                seen.add(key)
                out.append(sigma)
    return out


def euler_characteristic_2d(mask: np.ndarray) -> int:
    """Components minus holes of a 2-D mask (4-connected foreground, 8-connected background)."""
    if mask.ndim != 2:
        raise ValueError("2-D masks only")
    _, n_fg = ndimage.label(mask)
    padded = np.pad(~mask, 1, constant_values=True)
    _, n_bg = ndimage.label(padded, structure=np.ones((3, 3)))
    return n_fg - (n_bg - 1)


def ball_fits(grid: DomainGrid, center: np.ndarray, radius: float) -> bool:
    """True if every lattice node within ``radius`` of ``center`` is interior."""
    d = np.linalg.norm(grid.full_coords - np.asarray(center), axis=-1)
    inside = d < radius
    return bool(np.all(grid.mask[inside])) and bool(inside.any())


# ---------------------------------------------------------------------------
# field container and dump format
# ---------------------------------------------------------------------------

def mask_to_rle(mask: np.ndarray) -> list[int]:
    """Run lengths of the C-order flattened mask, starting with a False run."""
    flat = np.asarray(mask, bool).ravel().astype(np.int8)
    change = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat.size and flat[0]:
        runs = [0] + runs
    return [int(r) for r in runs]


def rle_to_mask(runs: list[int], shape: tuple[int, ...]) -> np.ndarray:
    flat = np.zeros(int(np.prod(shape)), bool)
    pos, val = 0, False
    for r in runs:
        flat[pos:pos + r] = val
        pos += r
        val = not val
    if pos != flat.size:
        raise ValueError("run-length encoding does not cover the grid")
    return flat.reshape(shape)


@dataclass
class Field:
    """Nodal values of a function on the interior of a grid."""

    grid: DomainGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        _check(self.grid, self.values)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    def full(self) -> np.ndarray:
        return self.grid.embed(self.values)

    def dump(self, path, meta: Mapping[str, Any] | None = None) -> None:
        """First line: JSON header. Then one value per line, in interior C order."""
        header = {"format": "quasinehari-field/1", "grid": self.grid.to_header(), "n": self.grid.n}
        if meta:
            header["meta"] = dict(meta)
        with open(path, "w") as fh:
            fh.write(json.dumps(header) + "\n")
            np.savetxt(fh, self.values, fmt="%.17g")

    @classmethod
    def load(cls, path) -> "Field":
        with open(path) as fh:
            header = json.loads(fh.readline())
            values = np.loadtxt(fh, ndmin=1)
        grid = DomainGrid.from_header(header["grid"])
        return cls(grid, values)
