"""Probabilistic metric spaces over finite sample spaces.

Random variables here live on a finite ``Omega = {omega_1..omega_k}`` with
explicit probabilities, so every distribution function
``F_{x,y}(t) = P(d(x, y) < t)`` is an exact step function.  With dyadic
probabilities and integer coordinates all comparisons below are exact in
floating point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .measures import distance
from .scaling import AffineContraction, lipschitz_ratio

PROB_TOL = 1e-12


class DistributionFunction:
    """Left-continuous step function ``t -> sum of weights of values < t``.

    Built from nonnegative jump locations ``values`` and jump sizes
    ``weights`` (which sum to one).
    """

    def __init__(self, values, weights=None):
        values = np.asarray(values, dtype=float).reshape(-1)
        if values.size == 0:
            raise ValueError("a distribution function needs at least one sample")
        if np.any(values < 0) or np.any(np.isnan(values)):
            raise ValueError("distances must be nonnegative")
        order = np.argsort(values, kind="stable")
        self.values = values[order]
        if weights is None:
            self._m = values.size
            self.cum = None
        else:
            w = np.asarray(weights, dtype=float).reshape(-1)[order]
            if np.any(w < 0):
                raise ValueError("weights must be nonnegative")
            self.cum = np.concatenate([[0.0], np.cumsum(w)])

    @classmethod
    def heaviside(cls, at: float = 0.0) -> "DistributionFunction":
        return cls([at], [1.0])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.values, t, side="left")
        if self.cum is None:
            out = k / self._m
        else:
            out = self.cum[k]
        return out if out.ndim else float(out)

    def left_limit(self, t):
        # left-continuous: the left limit is the value itself
        return self(t)

    @property
    def jumps(self) -> np.ndarray:
        return np.unique(self.values)

    def is_heaviside(self) -> bool:
        total = 1.0 if self.cum is None else self.cum[-1]
        return bool(self.values[-1] == 0.0 and abs(total - 1.0) <= PROB_TOL)

    def __repr__(self):
        return f"DistributionFunction(jumps={self.jumps[:6].tolist()}{'...' if self.jumps.size > 6 else ''})"


def ecdf(samples) -> DistributionFunction:
    """Empirical ``t -> #{samples < t} / m``."""
    return DistributionFunction(samples)


def dkw_epsilon(m: int, delta: float = 1e-3) -> float:
    """Half-width of the Dvoretzky-Kiefer-Wolfowitz band: ``sqrt(ln(2/delta) / 2m)``."""
    return float(np.sqrt(np.log(2.0 / delta) / (2.0 * m)))


def tmin(a, b):
    """The t-norm ``T_m(a, b) = max(a + b - 1, 0)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any((a < 0) | (a > 1) | (b < 0) | (b > 1)):
        raise ValueError("t-norm arguments must lie in [0, 1]")
    out = np.maximum(a + b - 1.0, 0.0)
    return out if out.ndim else float(out)


def tmin_min(a, b):
    """The minimum t-norm, kept as a comparison baseline."""
    out = np.minimum(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    return out if out.ndim else float(out)


# -- E-spaces -----------------------------------------------------------------------


class FiniteRandomVariable:
    """A map ``omega_j -> values[j]`` in R^d on a finite probability space."""

    def __init__(self, probs, values):
        probs = np.asarray(probs, dtype=float).reshape(-1)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.shape[0] != probs.shape[0]:
            raise ValueError("one value per sample point required")
        if np.any(probs <= 0) or abs(probs.sum() - 1.0) > PROB_TOL:
            raise ValueError("sample-point probabilities must be positive and sum to 1")
        self.probs = probs
        self.values = values

    @classmethod
    def constant(cls, probs, a) -> "FiniteRandomVariable":
        probs = np.asarray(probs, dtype=float)
        return cls(probs, np.tile(np.atleast_1d(np.asarray(a, dtype=float)), (len(probs), 1)))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def same_space(self, other) -> bool:
        return self.probs.shape == other.probs.shape and bool(np.array_equal(self.probs, other.probs))

    def __eq__(self, other):
        return self.same_space(other) and bool(np.array_equal(self.values, other.values))

    __hash__ = None

    def __repr__(self):
        return f"FiniteRandomVariable(k={len(self.probs)}, d={self.dim})"


def espace_distance(x: FiniteRandomVariable, y: FiniteRandomVariable, metric="euclidean") -> DistributionFunction:
    """Exact ``F_{x,y}(t) = P(d(x(omega), y(omega)) < t)``."""
    if not x.same_space(y):
        raise ValueError("random variables live on different sample spaces")
    return DistributionFunction(distance(x.values, y.values, metric), x.probs)


def sup_distance(x: FiniteRandomVariable, y: FiniteRandomVariable, metric="euclidean") -> float:
    return float(np.max(distance(x.values, y.values, metric)))


@dataclass(frozen=True)
class Violation:
    s: float
    t: float
    lhs: float
    rhs: float

    def to_json(self):
        return {"s": self.s, "t": self.t, "lhs": self.lhs, "rhs": self.rhs}


def menger_check_functions(Fxy: Callable, Fxz: Callable, Fzy: Callable, grid, T=tmin) -> list[Violation]:
    """Check ``F_xy(s + t) >= T(F_xz(s), F_zy(t))`` at every ``(s, t)`` of the grid."""
    out = []
    for s, t in grid:
        lhs = float(Fxy(s + t))
        rhs = float(T(np.clip(Fxz(s), 0, 1), np.clip(Fzy(t), 0, 1)))
        if lhs < rhs:
            out.append(Violation(float(s), float(t), lhs, rhs))
    return out


def menger_check(x, y, z, grid, T=tmin, metric="euclidean") -> list[Violation]:
    """Menger's triangle inequality for three random variables; empty list means it holds."""
    return menger_check_functions(
        espace_distance(x, y, metric), espace_distance(x, z, metric), espace_distance(z, y, metric), grid, T
    )


class EContraction:
    """Acts on random variables atom by atom: ``f(x)(omega_j) = g_j(x(omega_j))``."""

    def __init__(self, maps: Sequence[AffineContraction], metric="euclidean"):
        self.maps = list(maps)
        self.metric = metric
        self.ratio = max(lipschitz_ratio(g, metric) for g in self.maps)

    @classmethod
    def uniform(cls, g: AffineContraction, k: int, metric="euclidean") -> "EContraction":
        return cls([g] * k, metric)

    def __call__(self, x: FiniteRandomVariable) -> FiniteRandomVariable:
        if len(self.maps) != len(x.probs):
            raise ValueError(f"map has {len(self.maps)} atoms, variable has {len(x.probs)}")
        vals = np.stack([g(v[None, :])[0] for g, v in zip(self.maps, x.values)])
        return FiniteRandomVariable(x.probs, vals)


def sehgal_check(f: EContraction, x, y, r: float, grid, metric="euclidean") -> list[Violation]:
    """Check ``F_{f(x),f(y)}(r t) >= F_{x,y}(t)`` on a grid of ``t``; empty list means it holds."""
    if not 0 < r < 1:
        raise ValueError("contraction ratio must lie in (0, 1)")
    F = espace_distance(x, y, metric)
    Ff = espace_distance(f(x), f(y), metric)
    out = []
    for t in grid:
        lhs, rhs = float(Ff(r * t)), float(F(t))
        if lhs < rhs:
            out.append(Violation(float(r * t), float(t), lhs, rhs))
    return out


def _hausdorff_inner(A, B, s, metric, T=tmin):
    """``T(inf_x sup_y F_xy(s), inf_y sup_x F_xy(s))`` for an array of ``s``."""
    s = np.asarray(s, dtype=float)
    if not all(x.same_space(A[0]) for x in list(A) + list(B)):
        raise ValueError("random variables live on different sample spaces")
    probs = A[0].probs
    VA = np.stack([x.values for x in A])  # |A| x k x d
    VB = np.stack([y.values for y in B])
    D = distance(VA[:, None], VB[None, :], metric)  # |A| x |B| x k
    left = np.empty(s.shape)
    right = np.empty(s.shape)
    for i, si in enumerate(s):
        F = ((D < si) * probs).sum(axis=-1)
        left[i] = F.max(axis=1).min()
        right[i] = F.max(axis=0).min()
    return T(left, right)


def prob_hausdorff(
    A: Sequence[FiniteRandomVariable], B: Sequence[FiniteRandomVariable], grid, metric="euclidean", T=tmin
) -> np.ndarray:
    """Probabilistic Hausdorff-Pompeiu distance ``F_{A,B}`` on a grid of ``t``.

    ``F_{A,B}(t) = sup_{s<t} T(inf_x sup_y F_xy(s), inf_y sup_x F_xy(s))`` with
    ``T = T_m`` by default.  For singletons ``{x}``, ``{y}`` this is
    ``T(F_xy, F_xy)``, which equals ``F_xy`` only under the minimum t-norm.
    The inner function ``G`` is a nondecreasing step function whose steps sit
    just right of the jump points ``d(x(omega), y(omega))``; on the interval
    between the last jump point below ``t`` and ``t`` itself it is constant
    and equal to ``G(t)`` (every ``F_xy`` is left-continuous).  So the
    supremum equals ``G(t)``, and is ``0`` for ``t <= 0``.
    """
    A, B = list(A), list(B)
    if not A or not B:
        raise ValueError("Hausdorff distance needs nonempty sets")
    grid = np.asarray(grid, dtype=float)
    out = np.zeros(grid.shape)
    pos = grid > 0
    if not pos.any():
        return out
    out[pos] = _hausdorff_inner(A, B, grid[pos], metric, T)
    return out


# -- iteration on E-spaces -------------------------------------------------------------


def fixed_point_iterate(f: EContraction, z: FiniteRandomVariable, steps: int, metric="euclidean"):
    """Picard iteration ``x_{j+1} = f(x_j)``; returns the last iterate and a report.

    The report lists ``sup_omega d(x_j, x_{j+1})`` per step and the ratios of
    successive step sizes.
    """
    if f.ratio >= 1:
        raise ValueError(f"map ratio {f.ratio} is not a contraction")
    x = z
    dists = []
    for _ in range(steps):
        nxt = f(x)
        dists.append(sup_distance(x, nxt, metric))
        x = nxt
    dists = np.array(dists)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(dists[:-1] > 0, dists[1:] / dists[:-1], 0.0) if len(dists) > 1 else np.zeros(0)
    report = {
        "step_distances": dists.tolist(),
        "ratios": ratios.tolist(),
        "max_ratio": float(ratios.max()) if ratios.size else 0.0,
        "declared_ratio": f.ratio,
    }
    return x, report


def _epsilon_net(points: list[FiniteRandomVariable], eps: float, metric):
    """Greedy net in the sup-over-Omega distance, scanning in value-vector order."""
    if not points:
        return points
    keyed = sorted(points, key=lambda p: tuple(p.values.ravel()))
    vals = np.stack([p.values for p in keyed])  # n x k x d
    kept: list[int] = []
    for i in range(len(keyed)):
        if kept:
            dmax = distance(vals[kept], vals[i][None], metric).max(axis=1)
            if np.min(dmax) <= eps:
                continue
        kept.append(i)
    return [keyed[i] for i in kept]


def invariant_set_iterate(
    maps: Sequence[EContraction],
    z: FiniteRandomVariable,
    steps: int,
    eps: float = 0.0,
    grid=None,
    cap: int = 4096,
    metric="euclidean",
):
    """Iterate ``K_{j+1} = f_1(K_j) u ... u f_N(K_j)`` from ``K_0 = {z}``.

    Each set is reduced to an ``eps``-net (``eps = 0`` only removes exact
    duplicates).  Returns the set sequence and, for each step, the
    Hausdorff values ``F_{K_j, K_{j+1}}`` on ``grid``.
    """
    if any(f.ratio >= 1 for f in maps):
        raise ValueError("every map must be a contraction")
    grid = np.asarray(grid if grid is not None else [0.1], dtype=float)
    sets = [[z]]
    values = []
    for _ in range(steps):
        nxt = [f(x) for f in maps for x in sets[-1]]
        nxt = _epsilon_net(nxt, eps, metric)
        if len(nxt) > cap:
            raise ValueError(f"invariant-set iterate has {len(nxt)} elements (> cap {cap})")
        values.append(prob_hausdorff(sets[-1], nxt, grid, metric))
        sets.append(nxt)
    return sets, np.array(values).reshape(steps, len(grid))
