"""
Ground state on a ball
======================

Minimize ``I_p(v) = 1/2 ||v||^2 - 1/p int |f(v)|^p`` over the discrete
Nehari set of a 16^3 ball and check the result: positive, symmetric,
centered and of Morse index one.
"""
import numpy as np

from quasinehari.domain import build_domain, width
from quasinehari.functional import ExponentParams, pohozaev_terms
from quasinehari.nehari import ground_state
from quasinehari.spectra import compactness_probe, morse_index

grid = build_domain({"shape": "ball", "radius": 0.5, "center": 0.5}, 16)
params = ExponentParams(6.0)
print(f"{grid.n} interior nodes, h = {grid.spacing:.4f}, critical exponent {params.crit:g}")

rep = ground_state(grid, params)
v = rep.values
print(f"level m_p = {rep.energy:.6f} after {rep.iterations} iterations "
      f"(gradient {rep.grad_norm:.1e}, started at {rep.grad_norm0:.1e})")
print(f"positive: {rep.positive}, sup norm {v.max():.4f}, width {width(grid, v):.4f}")
print("reflection asymmetry:", max(np.abs(grid.reflect(v, ax) - v).max() for ax in range(3)) / v.max())
print("barycenter:", np.round(rep.barycenter, 6))

mr = morse_index(grid, v, params)
print(f"Morse index {mr.index}; smallest eigenvalues of the preconditioned Hessian:",
      np.round(mr.eigenvalues, 5))

# the compact part of the Hessian acting on ever higher Laplace modes
prof = compactness_probe(grid, v, params, 50)
print("compact-part ratios on modes 1, 10, 25, 50:",
      [round(prof.ratios[j], 4) for j in (0, 9, 24, 49)], f"decay {prof.decay(49):.1f}x")

pz = pohozaev_terms(grid, v, params)
print(f"Pohozaev imbalance {pz.relative:+.3f} (relative to its largest term)")
