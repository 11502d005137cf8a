"""Reference computations that share no code with the package under test.

Each oracle is deliberately slow and literal: enumerate every permutation,
hand a dense LP to HiGHS, integrate CDF differences, or evaluate a
definition by nested loops.
"""

import itertools
import math

import numpy as np
from scipy.optimize import linprog


def _dist(x, y):
    return float(np.linalg.norm(np.atleast_1d(x) - np.atleast_1d(y)))


def brute_force_lq(xs, ys, q):
    """``l_q`` between uniform measures on ``xs`` and ``ys`` (same count) by
    enumerating all permutation couplings (Birkhoff: they are the vertices)."""
    n = len(xs)
    assert len(ys) == n
    best = math.inf
    for perm in itertools.permutations(range(n)):
        c = sum(_dist(xs[i], ys[perm[i]]) ** q for i in range(n)) / n
        best = min(best, c)
    return best ** min(1.0 / q, 1.0)


def brute_force_assignment(C):
    C = np.asarray(C, dtype=float)
    n = C.shape[0]
    best, arg = math.inf, None
    for perm in itertools.permutations(range(n)):
        c = sum(C[i, perm[i]] for i in range(n))
        if c < best:
            best, arg = c, perm
    return np.array(arg), best


def lp_cost(xs, a, ys, b, q):
    """Optimal ``sum gamma_ij d_ij^q`` via a dense HiGHS LP."""
    xs = np.asarray(xs, dtype=float).reshape(len(a), -1)
    ys = np.asarray(ys, dtype=float).reshape(len(b), -1)
    n, m = len(a), len(b)
    C = np.array([[_dist(x, y) ** q for y in ys] for x in xs])
    A_eq = np.zeros((n + m, n * m))
    for i in range(n):
        A_eq[i, i * m : (i + 1) * m] = 1
    for j in range(m):
        A_eq[n + j, j::m] = 1
    res = linprog(C.ravel(), A_eq=A_eq, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    assert res.status == 0
    return float(res.fun)


def lp_lq(xs, a, ys, b, q):
    return lp_cost(xs, a, ys, b, q) ** min(1.0 / q, 1.0)


def cdf_l1(xs, a, ys, b):
    """``int |F_mu - F_nu| dx`` on the line, the 1-D ``l_1`` identity."""
    pts = np.unique(np.concatenate([xs, ys]))
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        Fm = sum(w for x, w in zip(xs, a) if x <= lo)
        Fn = sum(w for y, w in zip(ys, b) if y <= lo)
        total += abs(Fm - Fn) * (hi - lo)
    return total


def affine_law_moments(p, r, b, n, m0=0.0, v0=0.0):
    """Mean and variance of ``mu_n`` for the 1-D law ``x -> r_i x + b_i``.

    If ``X ~ mu_n`` then ``X' = r_I X + b_I`` with ``I ~ p`` independent of
    ``X``, so the first two moments follow a closed recursion.
    """
    p, r, b = (np.asarray(v, dtype=float) for v in (p, r, b))
    m1, m2 = m0, v0 + m0**2
    for _ in range(n):
        m1, m2 = float(np.sum(p * (r * m1 + b))), float(np.sum(p * (r**2 * m2 + 2 * r * b * m1 + b**2)))
    return m1, m2 - m1**2


def affine_law_fixed_moments(p, r, b):
    """Mean and variance of the self-similar limit (fixed point of the recursion)."""
    p, r, b = (np.asarray(v, dtype=float) for v in (p, r, b))
    m1 = float(np.sum(p * b) / (1 - np.sum(p * r)))
    m2 = float((np.sum(p * b**2) + 2 * np.sum(p * r * b) * m1) / (1 - np.sum(p * r**2)))
    return m1, m2 - m1**2


def F_pair(probs, xv, yv, t):
    """``P(|x - y| < t)`` on a finite sample space by a direct loop."""
    return sum(pj for pj, x, y in zip(probs, xv, yv) if _dist(x, y) < t)


def hausdorff_literal(probs, A, B, t, s_grid):
    """Set-level distribution function from the definition.

    ``G(t) = sup_{s<t} T_m(inf_{a in A} sup_{b in B} F_ab(s), inf_{b in B} sup_{a in A} F_ab(s))``,
    with the sup over ``s < t`` taken over a caller-supplied fine grid.
    """
    best = 0.0
    for s in s_grid:
        if s >= t:
            continue
        left = min(max(F_pair(probs, a, b, s) for b in B) for a in A)
        right = min(max(F_pair(probs, a, b, s) for a in A) for b in B)
        best = max(best, max(left + right - 1.0, 0.0))
    return best
