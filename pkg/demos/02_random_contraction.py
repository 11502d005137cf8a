"""A random scaling law and the rate at which its iterates settle.

Each node of the construction tree draws two ratios independently from
[0.3, 0.45]; the essential supremum of ``sum p_i r_i`` is therefore 0.45,
while its mean is 0.375.  The fitted per-tree step ratio tracks the mean,
and the worst case stays under the essential supremum.
"""

import numpy as np

from fractalaw import dirac, generate_ensemble, lambda_q_esssup, lambda_q_expected, lq_star_star, random_ratio_spec
from fractalaw.iteration import trajectories

spec = random_ratio_spec()
lam_sup = lambda_q_esssup(spec, 1)
lam_mean = lambda_q_expected(spec, 1, m=50_000, seed=0)
print(f"lambda_1: ess sup {lam_sup:.3f}, mean {lam_mean.value:.4f} +- {lam_mean.stderr:.4f}")

trs = trajectories(seed=3, indices=range(24), spec=spec, mu0=dirac(0.0), n_max=11, q=1.0)
ratios = []
for tr in trs:
    k = np.arange(1, len(tr.steps))
    slope = np.polyfit(k, np.log(tr.steps[1:]), 1)[0]
    ratios.append(np.exp(slope))
ratios = np.array(ratios)
print(f"fitted step ratio over 24 trees: median {np.median(ratios):.4f}, max {ratios.max():.4f}")

# two ensembles drawn from different start measures end up close in l_1**
a = generate_ensemble(1, spec, dirac(0.0), 10, 32)
b = generate_ensemble(2, spec, dirac(1.0), 10, 32)
c = generate_ensemble(3, spec, dirac(0.0), 10, 32)
print(f"l_1** between ensembles: same start {lq_star_star(a.measures, c.measures, 1):.4f}, "
      f"different start {lq_star_star(a.measures, b.measures, 1):.4f}")
