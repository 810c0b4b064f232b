"""
The change of variable f
========================

``f`` is the odd solution of ``f' = 1 / sqrt(1 + 2 f^2)``, ``f(0) = 0``.
Its inverse has a closed form, so ``f`` itself is evaluated by a monotone
Newton iteration on ``inv_f``. Near zero ``f(t) ~ t``; for large ``t``
``f(t) ~ 2^(1/4) sqrt(t)``.
"""
import numpy as np

from quasinehari.kernel import ASYMPTOTIC_CONSTANT, certify_inequalities, default_samples, inv_f, transform

t = np.array([1e-6, 1e-2, 1.0, 1e2, 1e4, 1e8])
f, fp, fpp = transform(t)
print(f"{'t':>10} {'f(t)':>14} {'f(t)/t':>10} {'f(t)/sqrt(t)':>13} {'round trip':>11}")
for ti, fi in zip(t, f):
    print(f"{ti:10.0e} {fi:14.8g} {fi / ti:10.6f} {fi / np.sqrt(ti):13.8f} {abs(inv_f(fi) - ti) / max(1, ti):11.1e}")
print(f"limit of f(t)/sqrt(t): {ASYMPTOTIC_CONSTANT:.10f}")

# the derivative identities hold to rounding
print("max |f' - (1+2f^2)^(-1/2)|:", np.max(np.abs(fp - 1 / np.sqrt(1 + 2 * f**2))))

# every scalar inequality used downstream, checked on a log grid of t
t_s, lam, p = default_samples()
rep = certify_inequalities(t_s, lam, p)
print(f"certificate: {len(rep.checks)} checks on {rep.n_samples} samples, passed = {rep.passed}")
for line in rep.summary()[:5]:
    print("  ", line)
