"""Run configuration: a YAML tree validated against a fixed schema.

Unknown keys are errors, and every problem found is reported in one
``ConfigError`` with dotted paths, e.g. ``solver.gtol: expected a number``.
See ``docs/config.md`` for the full schema.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import yaml

from .domain import SHAPES
from .functional import ExponentParams
from .nehari import SolverOptions

DEFAULTS: dict[str, Any] = {
    "domain": {
        "shape": "ball", "dim": 3, "resolution": 16,
        "radius": 0.5, "center": 0.5,
        "r_inner": None, "r_outer": None,
        "lower": 0.0, "upper": 1.0, "hole_radius": None,
    },
    "exponent": {"p": None, "p_list": None, "fractions": None, "cap": None},
    "solver": {
        "gtol": 1e-8, "max_iter": 3000, "positive": True, "newton": True,
        "escape_saddles": True, "dedupe_radius": 0.05, "deflation": False, "rho": 1.0,
    },
    "sweep": {"kind": "level"},
    "census": {
        "layout": None, "n_seeds": 8, "bump_radius": None, "include_principal": True,
        "barycenter": True, "n_starts": 48, "epsilon_fraction": 0.1, "r": None, "noise": 0.3,
    },
    "spectra": {"k": 6, "n_modes": 50},
    "kernel": {
        "n_t": 10000, "t_min": 1e-8, "t_max": 1e8, "lambda_max": 10.0,
        "p_values": [4.5, 6.0, 9.0, 11.5], "bias": 0.0,
    },
    "output": "out",
    "seed": 0,
    "threads": 1,
}

_NUM = (int, float)


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid configuration:\n  " + "\n  ".join(problems))


def _is_num(x) -> bool:
    return isinstance(x, _NUM) and not isinstance(x, bool)


def _merge(base: dict, over: Mapping, path: str, problems: list[str]) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        where = f"{path}.{key}" if path else str(key)
        if key not in base:
            problems.append(f"{where}: unknown key")
            continue
        if isinstance(base[key], dict):
            if not isinstance(val, Mapping):
                problems.append(f"{where}: expected a mapping")
                continue
            out[key] = _merge(base[key], val, where, problems)
        else:
            out[key] = val
    return out


def _check_number(tree, path, problems, *, positive=False, integer=False, minimum=None, optional=False):
    sect, key = path.split(".") if "." in path else (None, path)
    val = tree[sect][key] if sect else tree[key]
    if val is None and optional:
        return
    if integer:
        ok = isinstance(val, int) and not isinstance(val, bool)
    else:
        ok = _is_num(val)
    if not ok:
        problems.append(f"{path}: expected {'an integer' if integer else 'a number'}, got {val!r}")
        return
    if positive and not val > 0:
        problems.append(f"{path}: must be positive, got {val!r}")
    if minimum is not None and val < minimum:
        problems.append(f"{path}: must be at least {minimum}, got {val!r}")


def _check_bool(tree, path, problems):
    sect, key = path.split(".")
    if not isinstance(tree[sect][key], bool):
        problems.append(f"{path}: expected true/false, got {tree[sect][key]!r}")


def _check_vector(tree, path, problems, dim, optional=False):
    sect, key = path.split(".")
    val = tree[sect][key]
    if val is None and optional:
        return
    if _is_num(val):
        return
    if isinstance(val, list) and len(val) == dim and all(_is_num(x) for x in val):
        return
    problems.append(f"{path}: expected a number or a list of {dim} numbers, got {val!r}")


def _check_list(tree, path, problems, allow_empty=False):
    sect, key = path.split(".")
    val = tree[sect][key]
    if val is None:
        return
    if not isinstance(val, list) or not all(_is_num(x) for x in val):
        problems.append(f"{path}: expected a list of numbers, got {val!r}")
    elif not val and not allow_empty:
        problems.append(f"{path}: list is empty")


def validate(tree: dict) -> list[str]:
    problems: list[str] = []
    d = tree["domain"]
    if d["shape"] not in SHAPES:
        problems.append(f"domain.shape: expected one of {list(SHAPES)}, got {d['shape']!r}")
    if d["dim"] not in (2, 3):
        problems.append(f"domain.dim: expected 2 or 3, got {d['dim']!r}")
    dim = d["dim"] if d["dim"] in (2, 3) else 3
    _check_number(tree, "domain.resolution", problems, integer=True, minimum=8)
    _check_vector(tree, "domain.center", problems, dim)
    _check_vector(tree, "domain.lower", problems, dim)
    _check_vector(tree, "domain.upper", problems, dim)
    if d["shape"] == "ball":
        _check_number(tree, "domain.radius", problems, positive=True)
    if d["shape"] == "annulus":
        _check_number(tree, "domain.r_inner", problems, positive=True)
        _check_number(tree, "domain.r_outer", problems, positive=True)
        if _is_num(d["r_inner"]) and _is_num(d["r_outer"]) and not d["r_inner"] < d["r_outer"]:
            problems.append("domain.r_inner: must be smaller than domain.r_outer")
    if d["shape"] == "rectangle_with_hole":
        _check_number(tree, "domain.hole_radius", problems, positive=True)

    e = tree["exponent"]
    given = [k for k in ("p", "p_list", "fractions") if e[k] is not None]
    if len(given) > 1:
        problems.append(f"exponent: give only one of p, p_list, fractions (got {', '.join(given)})")
    _check_number(tree, "exponent.p", problems, optional=True)
    _check_list(tree, "exponent.p_list", problems)
    _check_list(tree, "exponent.fractions", problems)
    _check_number(tree, "exponent.cap", problems, positive=True, optional=True)
    if dim == 2 and e["cap"] is None:
        problems.append("exponent.cap: required when domain.dim is 2")
    if not problems:
        try:
            exponents(tree)
        except ValueError as exc:
            problems.append(f"exponent: {exc}")

    _check_number(tree, "solver.gtol", problems, positive=True)
    _check_number(tree, "solver.max_iter", problems, integer=True, minimum=1)
    _check_number(tree, "solver.dedupe_radius", problems, positive=True)
    _check_number(tree, "solver.rho", problems, positive=True)
    for key in ("positive", "newton", "escape_saddles", "deflation"):
        _check_bool(tree, f"solver.{key}", problems)

    if tree["sweep"]["kind"] not in ("level", "concentration"):
        problems.append(f"sweep.kind: expected 'level' or 'concentration', got {tree['sweep']['kind']!r}")

    c = tree["census"]
    if c["layout"] not in (None, "ring", "center_offsets"):
        problems.append(f"census.layout: expected null, 'ring' or 'center_offsets', got {c['layout']!r}")
    _check_number(tree, "census.n_seeds", problems, integer=True, minimum=1)
    _check_number(tree, "census.bump_radius", problems, positive=True, optional=True)
    _check_number(tree, "census.n_starts", problems, integer=True, minimum=1)
    _check_number(tree, "census.epsilon_fraction", problems, positive=True)
    _check_number(tree, "census.r", problems, positive=True, optional=True)
    _check_number(tree, "census.noise", problems, minimum=0.0)
    _check_bool(tree, "census.include_principal", problems)
    _check_bool(tree, "census.barycenter", problems)

    _check_number(tree, "spectra.k", problems, integer=True, minimum=3)
    _check_number(tree, "spectra.n_modes", problems, integer=True, minimum=1)

    _check_number(tree, "kernel.n_t", problems, integer=True, minimum=2)
    _check_number(tree, "kernel.t_min", problems, positive=True)
    _check_number(tree, "kernel.t_max", problems, positive=True)
    _check_number(tree, "kernel.lambda_max", problems, positive=True)
    _check_number(tree, "kernel.bias", problems)
    _check_list(tree, "kernel.p_values", problems, allow_empty=True)

    if not isinstance(tree["output"], str) or not tree["output"]:
        problems.append(f"output: expected a directory path, got {tree['output']!r}")
    _check_number(tree, "seed", problems, integer=True, minimum=0)
    _check_number(tree, "threads", problems, integer=True, minimum=1)
    return problems


def exponents(tree: Mapping) -> list[ExponentParams]:
    """Exponent list described by the ``exponent`` and ``domain`` sections (may be empty)."""
    e, dim = tree["exponent"], tree["domain"]["dim"]
    cap = e["cap"]
    if e["p"] is not None:
        return [ExponentParams(float(e["p"]), dim, cap)]
    if e["p_list"] is not None:
        return [ExponentParams(float(p), dim, cap) for p in e["p_list"]]
    if e["fractions"] is not None:
        return [ExponentParams.from_fraction(float(f), dim, cap) for f in e["fractions"]]
    return []


@dataclass
class RunConfig:
    tree: dict

    @classmethod
    def from_mapping(cls, data: Mapping | None) -> "RunConfig":
        problems: list[str] = []
        if data is None:
            data = {}
        if not isinstance(data, Mapping):
            raise ConfigError(["<root>: expected a mapping"])
        tree = _merge(DEFAULTS, data, "", problems)
        problems += validate(tree)
        if problems:
            raise ConfigError(problems)
        return cls(tree)

    @classmethod
    def load(cls, path: str | Path | None) -> "RunConfig":
        if path is None:
            return cls.from_mapping({})
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError([f"<file>: cannot read {path}: {exc.strerror}"]) from exc
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError([f"<file>: YAML syntax error: {exc}"]) from exc
        return cls.from_mapping(data)

    def override(self, **top: Any) -> "RunConfig":
        """New config with top-level keys replaced (``None`` values are ignored)."""
        data = copy.deepcopy(self.tree)
        data.update({k: v for k, v in top.items() if v is not None})
        return RunConfig.from_mapping(data)

    def __getitem__(self, key):
        return self.tree[key]

    @property
    def domain_spec(self) -> dict:
        d = self.tree["domain"]
        keep = {"shape": d["shape"], "dim": d["dim"], "resolution": d["resolution"]}
        if d["shape"] == "ball":
            keep.update(radius=d["radius"], center=d["center"])
        elif d["shape"] == "annulus":
            keep.update(r_inner=d["r_inner"], r_outer=d["r_outer"], center=d["center"])
        else:
            keep.update(lower=d["lower"], upper=d["upper"])
            if d["shape"] == "rectangle_with_hole":
                keep["hole_radius"] = d["hole_radius"]
        return keep

    @property
    def exponents(self) -> list[ExponentParams]:
        return exponents(self.tree)

    @property
    def solver_options(self) -> SolverOptions:
        s = self.tree["solver"]
        return SolverOptions(gtol=float(s["gtol"]), max_iter=int(s["max_iter"]), positive=s["positive"],
                             newton=s["newton"], escape_saddles=s["escape_saddles"])

    def canonical_json(self) -> str:
        """Sorted compact JSON of everything except the output directory."""
        body = {k: v for k, v in self.tree.items() if k != "output"}
        return json.dumps(body, sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.tree, sort_keys=False)
