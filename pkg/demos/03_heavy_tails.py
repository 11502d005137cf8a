"""Offsets without a first moment.

The single map ``x -> x/2 + offset(omega)`` contracts by exactly 1/2, but
the offset may be heavy tailed.  With ``offset = 1/omega`` the tail is
``P(offset >= t) = 1/t``, so the mean is infinite yet ``t P(. >= t)``
stays bounded.  With ``offset = exp(1/omega)`` the tail is ``1/ln t`` and
even that product grows without bound.  Iteration still converges in both
cases: the step between iterates shrinks geometrically tree by tree.
"""

import numpy as np

from fractalaw import HeavyTailExample, dirac
from fractalaw.diagnostics import moment_log_terms
from fractalaw.iteration import trajectories
from fractalaw.probmetric import dkw_epsilon, ecdf

m = 100_000
for kind in ("reciprocal", "expinv"):
    spec = HeavyTailExample(kind)
    logs = moment_log_terms(spec, 0, m, 1.0)
    F = ecdf(np.exp(np.minimum(logs, 700.0)))
    print(f"\n{kind}: empirical tail against the exact one (DKW half-width {dkw_epsilon(m):.4f})")
    for t in (2.0, 10.0, 100.0, 1e4):
        emp = 1.0 - F(t)
        print(f"  t={t:>8g}  P_hat={emp:.4f}  exact={float(spec.tail(t)):.4f}  t*P_hat={t * emp:9.2f}")
    for n in (10**3, 10**4, 10**5):
        top = logs[:n].max()
        log10_mean = (top + np.log(np.exp(logs[:n] - top).mean())) / np.log(10)
        print(f"  running mean after {n:>6}: 10^{log10_mean:.2f}")

spec = HeavyTailExample("reciprocal")
trs = trajectories(seed=5, indices=range(200), spec=spec, mu0=dirac(0.0), n_max=20, q=1.0)
ratios = np.array([np.median(tr.steps[1:] / tr.steps[:-1]) for tr in trs])
print(f"\nreciprocal law: median step ratio over 200 trees {np.median(ratios):.4f}")
