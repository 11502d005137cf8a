"""Distances as distribution functions on a finite sample space.

A random variable here is a table of values indexed by three outcomes with
probabilities 1/2, 1/4, 1/4.  The distance between two of them is the
step function ``t -> P(|x - y| < t)``.  Pointwise contractions are Sehgal
contractions, they have a unique fixed point, and the union of two
ratio-1/2 maps has an invariant set reached in Hausdorff sense.
"""

import numpy as np

from fractalaw import AffineContraction, EContraction, FiniteRandomVariable, espace_distance, prob_hausdorff
from fractalaw import fixed_point_iterate, invariant_set_iterate
from fractalaw.probmetric import sehgal_check

probs = [0.5, 0.25, 0.25]
x = FiniteRandomVariable(probs, [0.0, 0.0, 0.0])
y = FiniteRandomVariable(probs, [0.0, 1.0, 3.0])
ts = [0.5, 1.0, 1.5, 3.0, 4.0]
print("F_xy(t) =", espace_distance(x, y)(ts).tolist())
print("Hausdorff {x} vs {x, y}:", prob_hausdorff([x], [x, y], ts).tolist())
print("Hausdorff {x} vs {y}   :", prob_hausdorff([x], [y], ts).tolist(), "(T_m(F, F))")

f = EContraction([AffineContraction(0.5, c) for c in (1.0, -2.0, 0.5)])
grid = np.linspace(0.1, 10, 100)
print("\nSehgal check at r=1/2:", "ok" if not sehgal_check(f, x, y, 0.5, grid) else "violated")
print("Sehgal check at r=0.4:", "ok" if not sehgal_check(f, x, y, 0.4, grid) else "violated")

z, rep = fixed_point_iterate(f, FiniteRandomVariable(probs, [9.0, 9.0, 9.0]), 40)
print("fixed point values:", np.round(z.values[:, 0], 10).tolist(), " max step ratio", rep["max_ratio"])

maps = [EContraction([AffineContraction(0.5, 0.0)] * 3), EContraction([AffineContraction(0.5, 0.5)] * 3)]
sets, vals = invariant_set_iterate(maps, x, 8, grid=[0.1])
for j, (K, v) in enumerate(zip(sets[1:], vals[:, 0]), start=1):
    print(f"  step {j}: |K| = {len(K):>3}, F_(K_j-1, K_j)(0.1) = {v}")
