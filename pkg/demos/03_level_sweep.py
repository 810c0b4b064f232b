"""
Levels approaching the critical exponent
========================================

Ground states for ``p`` at 90, 95, 98 and 99 percent of the critical
exponent, each projected onto the critical Nehari set. The projection
multiplier ``t_*`` tends to one and ``I_*(t_* g_p)`` approaches ``m_p``.

Near the critical exponent the lowest discrete states are spikes a couple
of lattice spacings wide, so the levels here are lattice quantities.
"""
import numpy as np

from quasinehari.domain import build_domain
from quasinehari.experiments import discrete_sobolev_constant, level_sweep, ps_threshold
from quasinehari.functional import ExponentParams

grid = build_domain({"shape": "ball", "radius": 0.5, "center": 0.5}, 16)
crit = ExponentParams(6.0).crit
res = level_sweep(grid, [f * crit for f in (0.90, 0.95, 0.98, 0.99)])

print(f"{'p':>7} {'m_p':>9} {'t_*':>7} {'I_*(t_* g_p)':>13} {'width/h':>8} {'sup':>7}")
for r in res.records:
    print(f"{r.p:7.3f} {r.m_p:9.4f} {r.t_star:7.4f} {r.star_level:13.4f} "
          f"{r.width / grid.spacing:8.3f} {r.sup_norm:7.3f}")
print(f"m_* estimates: projected {res.m_star_projected:.4f}, extrapolated {res.m_star_extrapolated:.4f}")
for k, v in res.trends.items():
    print(f"  {k}: {v}")

s = discrete_sobolev_constant(grid)
print(f"discrete Sobolev constant {s:.4f}; compactness threshold (1/N)(S/2)^(N/2) = {ps_threshold(s, 3):.4f}")
