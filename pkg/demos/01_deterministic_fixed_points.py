"""Iterating a deterministic scaling law towards its self-similar measure.

Two laws on the line: the pair ``x/2, x/2 + 1/2`` whose fixed point is the
uniform distribution on [0, 1], and the Cantor pair ``x/3, x/3 + 2/3``.
Starting from a point mass, each application of the operator doubles the
number of atoms and the l_1 step between successive iterates halves (or
shrinks by 1/3 for the Cantor law).
"""

import numpy as np

from fractalaw import (
    DiscreteMeasure,
    FiniteMixture,
    cantor_law,
    dirac,
    error_bound,
    iterate_measure,
    lq_1d,
    q_moment,
    uniform_law,
)

uniform = FiniteMixture([uniform_law()])
prev = dirac(0.0)
print("uniform law: step size and a-priori distance to the limit")
print(f"{'k':>3} {'atoms':>7} {'l_1(mu_k, mu_k+1)':>18} {'bound':>12}")
first = None
for k in range(1, 15):
    mu = iterate_measure(0, 0, uniform, dirac(0.0), k)
    step = lq_1d(prev, mu, 1)
    first = first or step
    print(f"{k - 1:>3} {prev.size:>7} {step:>18.3e} {error_bound(0.5, 1, k - 1, first):>12.3e}")
    prev = mu

# compare with a fine midpoint discretization of Unif[0, 1]
k = 2**16
grid = DiscreteMeasure(((np.arange(k) + 0.5) / k).reshape(-1, 1), np.full(k, 1.0 / k))
print(f"\nl_1(mu_14, Unif) = {lq_1d(prev, grid, 1):.3e}  (2^-14 / 2 = {2.0**-15:.3e})")

cantor = FiniteMixture([cantor_law()])
mu = iterate_measure(0, 0, cantor, dirac(0.0), 18)
mean = q_moment(mu, 0.0, 1)
var = q_moment(mu, mean, 2)
print(f"\nCantor law after 18 steps: {mu.size} atoms, mean {mean:.9f}, variance {var:.9f}")
print("the self-similar limit has mean 1/2 and variance 1/8")
