"""Command line front end.

Subcommands ``kernel-check``, ``solve``, ``sweep``, ``census`` and ``spectra``
read a YAML config (``--config``), write artifacts plus ``manifest.json``
under ``--out`` and return

* 0 on success,
* 1 when the kernel certificate fails,
* 2 on usage or configuration errors (including an unwritable output directory),
* 3 when results were written but some solve did not converge.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time

import numpy as np

from . import kernel
from .config import ConfigError, RunConfig
from .domain import build_domain
from .experiments import barycenter_census, concentration_probe, level_sweep, multiplicity_census
from .functional import ExponentParams
from .nehari import ground_state
from .outputs import ArtifactWriter, gnuplot_script
from .spectra import compactness_probe, morse_index

log = logging.getLogger("quasinehari")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NONCONVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


def _first_exponent(cfg: RunConfig, default_fraction: float | None = None, default_p: float | None = None):
    ps = cfg.exponents
    if ps:
        return ps[0]
    dim, cap = cfg["domain"]["dim"], cfg["exponent"]["cap"]
    if default_p is not None:
        return ExponentParams(default_p, dim, cap)
    return ExponentParams.from_fraction(default_fraction, dim, cap)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_kernel_check(cfg: RunConfig, out: ArtifactWriter, args) -> int:
    k = cfg["kernel"]
    if not k["p_values"]:
        raise UsageError("kernel.p_values is empty; the certificate needs at least one exponent")
    pos = np.logspace(np.log10(k["t_min"]), np.log10(k["t_max"]), k["n_t"] // 2)
    t = np.concatenate([-pos[::-1], pos])
    lam = np.unique(np.concatenate([np.linspace(0.0, min(1.0, k["lambda_max"]), 51),
                                    np.linspace(min(1.0, k["lambda_max"]), k["lambda_max"], 51)]))
    bias = args.bias if args.bias is not None else k["bias"]
    fn = kernel.biased_transform(bias) if bias else kernel.transform
    try:
        with out.timer("certificate"):
            rep = kernel.certify_inequalities(t, lam, k["p_values"], transform_fn=fn)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out.text("certificate.json", rep.to_json(records=not args.no_records))
    worst = rep.worst()
    _say(args, f"kernel certificate: {len(rep.checks)} checks, {rep.n_samples} samples, "
               f"{'PASS' if rep.passed else 'FAIL'}")
    if not rep.passed:
        print(f"worst offender: {worst.id} margin {worst.worst_margin:.3e} at {worst.worst_sample()}",
              file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_solve(cfg: RunConfig, out: ArtifactWriter, args) -> int:
    grid = build_domain(cfg.domain_spec)
    params = _first_exponent(cfg, default_p=6.0)
    with out.timer("ground_state"):
        rep = ground_state(grid, params, None, cfg.solver_options)
    with out.timer("morse_index"):
        mr = morse_index(grid, rep.values, params, cfg["spectra"]["k"])
    rep.morse_index = mr.index
    rep.morse = mr.to_dict()
    out.json("report.json", {"grid": grid.to_header(), "report": rep.to_dict()})
    out.field("ground_state.field", rep.field, {"p": params.p, "energy": rep.energy})
    _say(args, f"p = {params.p:g}: energy {rep.energy:.10g}, grad {rep.grad_norm:.2e}, "
               f"Morse index {mr.index}, positive {rep.positive}, converged {rep.converged}")
    return EXIT_OK if rep.converged else EXIT_NONCONVERGED


def cmd_sweep(cfg: RunConfig, out: ArtifactWriter, args) -> int:
    grid = build_domain(cfg.domain_spec)
    params = cfg.exponents
    if not params:
        params = [ExponentParams.from_fraction(f, grid.dim, cfg["exponent"]["cap"]) for f in (0.90, 0.95, 0.98, 0.99)]
    ps = [pr.p for pr in params]
    kind = cfg["sweep"]["kind"]
    with out.timer(kind):
        if kind == "concentration":
            res = concentration_probe(grid, ps, cfg.solver_options, cfg["threads"])
            panels = [("p", "width", "width"), ("p", "sup_norm", "sup norm"), ("p", "pohozaev_relative", "Pohozaev")]
        else:
            res = level_sweep(grid, ps, cfg.solver_options, cfg["threads"], cfg["exponent"]["cap"])
            panels = [("p", "m_p", "m_p"), ("p", "width", "width"), ("beta_0", "beta_1", "barycenter")]
    doc = {"kind": kind, "grid": grid.to_header(), **res.to_dict()}
    out.json("sweep.json", doc)
    out.csv("sweep.csv", res.rows())
    out.text("sweep.gp", gnuplot_script(f"{kind} sweep", "sweep.csv", panels))
    for i, rep in enumerate(res.reports):
        out.field(f"fields/ground_state_{i:02d}.field", rep.field, {"p": rep.p, "energy": rep.energy})
    converged = all(r.converged for r in res.reports)
    _say(args, f"{kind} sweep over {len(ps)} exponents: trends {res.trends}")
    return EXIT_OK if converged else EXIT_NONCONVERGED


def cmd_census(cfg: RunConfig, out: ArtifactWriter, args) -> int:
    grid = build_domain(cfg.domain_spec)
    params = _first_exponent(cfg, default_fraction=0.98)
    c, s = cfg["census"], cfg["solver"]
    with out.timer("multiplicity"):
        cen = multiplicity_census(
            grid, params, c["layout"], c["n_seeds"], c["bump_radius"], s["dedupe_radius"],
            cfg.solver_options, s["deflation"], s["rho"], cfg["spectra"]["k"], c["include_principal"],
            cfg["threads"],
        )
    doc = {"grid": grid.to_header(), "multiplicity": cen.to_dict()}
    out.csv("census.csv", cen.rows())
    for i, rep in enumerate(cen.reports):
        out.field(f"fields/solution_{i:02d}.field", rep.field, {"p": rep.p, "energy": rep.energy})
    converged = all(r.converged for r in cen.reports)
    if c["barycenter"] and grid.shape_tag in ("annulus", "rectangle_with_hole") and cen.reports:
        with out.timer("barycenter"):
            bc = barycenter_census(grid, params, c["n_starts"], None, c["r"], cfg["seed"], c["noise"],
                                   cfg.solver_options, ground=cen.reports[0],
                                   epsilon_fraction=c["epsilon_fraction"])
        doc["barycenter"] = bc.to_dict()
        out.csv("barycenter.csv", bc.rows())
        out.text("census.gp", gnuplot_script("barycenters", "barycenter.csv", [("beta_0", "beta_1", "barycenter")]))
        _say(args, f"barycenter census: {bc.n_passed} low-energy points, fraction inside {bc.fraction_inside}")
    out.json("census.json", doc)
    _say(args, f"census on {grid.shape_tag}: {cen.n_distinct} distinct solutions ({cen.n_orbits} up to symmetry), "
               f"cat = {cen.expected_cat}")
    return EXIT_OK if converged else EXIT_NONCONVERGED


def cmd_spectra(cfg: RunConfig, out: ArtifactWriter, args) -> int:
    grid = build_domain(cfg.domain_spec)
    params = _first_exponent(cfg, default_p=6.0)
    with out.timer("ground_state"):
        rep = ground_state(grid, params, None, cfg.solver_options)
    sp = cfg["spectra"]
    with out.timer("spectra"):
        mr = morse_index(grid, rep.values, params, sp["k"])
        n_modes = min(sp["n_modes"], grid.n - 1)
        prof = compactness_probe(grid, rep.values, params, n_modes)
    out.json("spectra.json", {"grid": grid.to_header(), "p": params.p, "energy": rep.energy,
                              "converged": rep.converged, "morse": mr.to_dict(), "compactness": prof.to_dict()})
    out.csv("compactness.csv", [{"mode": i + 1, "laplace_eigenvalue": lam, "ratio": r}
                                for i, (lam, r) in enumerate(zip(prof.laplace_eigenvalues, prof.ratios))])
    out.text("compactness.gp", gnuplot_script("compact part on Laplace modes", "compactness.csv",
                                              [("mode", "ratio", "ratio")]))
    _say(args, f"Morse index {mr.index}, eigenvalues {np.round(mr.eigenvalues, 6).tolist()}")
    return EXIT_OK if rep.converged else EXIT_NONCONVERGED


COMMANDS = {
    "kernel-check": cmd_kernel_check,
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "census": cmd_census,
    "spectra": cmd_spectra,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--seed", type=int, help="RNG seed (overrides the config)")
    common.add_argument("--threads", type=int, help="worker threads (overrides the config)")
    common.add_argument("--quiet", action="store_true", help="only print errors")
    parser = argparse.ArgumentParser(prog="quasinehari", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "kernel-check":
            p.add_argument("--bias", type=float, help="testing hook: add this constant to f")
            p.add_argument("--no-records", action="store_true", help="omit per-sample records from the JSON")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config).override(output=args.out, seed=args.seed, threads=args.threads)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        out = ArtifactWriter(cfg["output"])
    except OSError as exc:
        print(f"cannot write to output directory {cfg['output']!r}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    t0 = time.perf_counter()
    try:
        code = COMMANDS[args.command](cfg, out, args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out.timings["total"] = time.perf_counter() - t0
    out.manifest(cfg, args.command, code, cfg["seed"], cfg["threads"])
    return code


if __name__ == "__main__":
    sys.exit(main())
