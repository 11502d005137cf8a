"""Affine maps, scaling laws with weights, and random scaling laws.

Random scaling laws are sampled in batches from uniform variates so that the
tree iteration can draw the laws of a whole level at once.  Every spec exposes
``n_uniforms`` (variates consumed per law) and ``law_arrays(u)`` which turns a
``(K, n_uniforms)`` block of variates into arrays::

    p : (K, N)        branch weights
    A : (K, N, d, d)  linear parts
    b : (K, N, d)     offsets

``sample_law`` is the single-law view of the same mapping.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .measures import DiscreteMeasure, MeasureError, mix, pushforward

WEIGHT_TOL = 1e-12


class Estimate(NamedTuple):
    value: float
    stderr: float = 0.0


def operator_norm(A: np.ndarray, metric: str = "euclidean") -> float:
    """Operator norm of ``A`` induced by the given vector norm."""
    A = np.asarray(A, dtype=float)
    if A.shape == (1, 1):
        return abs(float(A[0, 0]))
    if metric == "euclidean":
        return float(np.linalg.norm(A, 2))
    if metric == "manhattan":
        return float(np.max(np.sum(np.abs(A), axis=0)))
    if metric == "chebyshev":
        return float(np.max(np.sum(np.abs(A), axis=1)))
    raise ValueError(f"unknown metric {metric!r}")


@dataclass(frozen=True)
class AffineContraction:
    """``x -> A x + b`` on R^d.

    Nothing forces ``Lip < 1`` here; only the law-level contraction factor is
    constrained.
    """

    A: np.ndarray
    b: np.ndarray
    ratio: float = field(init=False)

    def __init__(self, A, b=0.0):
        A = np.asarray(A, dtype=float)
        if A.ndim == 0:
            A = A.reshape(1, 1)
        b = np.atleast_1d(np.asarray(b, dtype=float))
        d = A.shape[0]
        if A.shape != (d, d) or b.shape not in ((d,), (1,)):
            raise MeasureError(f"incompatible affine parts A{A.shape}, b{b.shape}")
        if b.shape != (d,):
            b = np.full(d, b[0])
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "ratio", operator_norm(A))

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1 and self.dim > 1:
            return self.A @ x + self.b
        if x.ndim <= 1:
            return self.A[0, 0] * x + self.b[0]
        return x @ self.A.T + self.b

    def compose(self, other: "AffineContraction") -> "AffineContraction":
        """``self o other``."""
        return AffineContraction(self.A @ other.A, self.A @ other.b + self.b)

    def fixed_point(self) -> np.ndarray:
        return np.linalg.solve(np.eye(self.dim) - self.A, self.b)

    def to_json(self):
        if self.dim == 1:
            return {"A": float(self.A[0, 0]), "b": float(self.b[0])}
        return {"A": self.A.tolist(), "b": self.b.tolist()}

    @classmethod
    def from_json(cls, obj) -> "AffineContraction":
        return cls(obj["A"], obj.get("b", 0.0))


def lipschitz_ratio(S: AffineContraction, metric: str = "euclidean") -> float:
    if metric == "euclidean":
        return S.ratio
    return operator_norm(S.A, metric)


@dataclass(frozen=True)
class ScalingLaw:
    """Weights ``p_1..p_N`` (summing to one) paired with affine maps ``S_1..S_N``."""

    p: tuple[float, ...]
    maps: tuple[AffineContraction, ...]

    def __init__(self, p: Sequence[float], maps: Sequence[AffineContraction]):
        p = tuple(float(x) for x in p)
        maps = tuple(maps)
        if len(p) != len(maps) or not p:
            raise MeasureError("a scaling law needs matching nonempty weights and maps")
        if any(x <= 0 for x in p):
            raise MeasureError("scaling-law weights must be positive")
        if abs(math.fsum(p) - 1.0) > WEIGHT_TOL:
            raise MeasureError(f"scaling-law weights sum to {math.fsum(p)!r}, not 1")
        if len({m.dim for m in maps}) != 1:
            raise MeasureError("all maps of a law must act on the same space")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "maps", maps)

    @property
    def N(self) -> int:
        return len(self.p)

    @property
    def dim(self) -> int:
        return self.maps[0].dim

    @property
    def ratios(self) -> tuple[float, ...]:
        return tuple(m.ratio for m in self.maps)

    def contraction_sum(self, q: float) -> float:
        """``sum_i p_i r_i^q``."""
        return math.fsum(p * r**q for p, r in zip(self.p, self.ratios))

    def arrays(self):
        p = np.array(self.p)
        A = np.stack([m.A for m in self.maps])
        b = np.stack([m.b for m in self.maps])
        return p, A, b

    @classmethod
    def from_arrays(cls, p, A, b) -> "ScalingLaw":
        return cls(list(p), [AffineContraction(A[i], b[i]) for i in range(len(p))])

    def __call__(self, mu: DiscreteMeasure) -> DiscreteMeasure:
        return apply_law(self, [mu] * self.N)

    def to_json(self):
        return {"branches": [dict(p=p, **m.to_json()) for p, m in zip(self.p, self.maps)]}

    @classmethod
    def from_json(cls, obj) -> "ScalingLaw":
        br = obj["branches"]
        return cls([x["p"] for x in br], [AffineContraction.from_json(x) for x in br])


def apply_law(law: ScalingLaw, inputs: Sequence[DiscreteMeasure]) -> DiscreteMeasure:
    """``sum_i p_i S_i mu_i`` with one input measure per branch."""
    if len(inputs) != law.N:
        raise MeasureError(f"law has {law.N} branches but got {len(inputs)} measures")
    return mix(law.p, [pushforward(S, mu) for S, mu in zip(law.maps, inputs)])


# -- random scaling laws -------------------------------------------------------


class RandomScalingLawSpec:
    """Base class for distributions over scaling laws."""

    N: int
    dim: int
    n_uniforms: int
    deterministic: bool = False

    def law_arrays(self, u: np.ndarray):
        raise NotImplementedError

    def representative(self) -> ScalingLaw:
        """A fixed law standing in for the family (used for default starts)."""
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError

    def spec_hash(self) -> str:
        text = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


class FiniteMixture(RandomScalingLawSpec):
    """Draw one of finitely many fixed laws with the given probabilities."""

    def __init__(self, laws: Sequence[ScalingLaw], probs: Sequence[float] | None = None):
        laws = list(laws)
        if not laws:
            raise MeasureError("mixture needs at least one law")
        if probs is None:
            probs = [1.0 / len(laws)] * len(laws)
        probs = [float(x) for x in probs]
        if len(probs) != len(laws) or any(x <= 0 for x in probs):
            raise MeasureError("mixture probabilities must be positive, one per law")
        if abs(math.fsum(probs) - 1.0) > WEIGHT_TOL:
            raise MeasureError("mixture probabilities must sum to 1")
        if len({(law.N, law.dim) for law in laws}) != 1:
            raise MeasureError("mixture components must share N and dimension")
        self.laws = laws
        self.probs = probs
        self.N = laws[0].N
        self.dim = laws[0].dim
        self.n_uniforms = 1
        self.deterministic = len(laws) == 1
        self._cum = np.cumsum(probs)
        arrs = [law.arrays() for law in laws]
        self._p = np.stack([a[0] for a in arrs])
        self._A = np.stack([a[1] for a in arrs])
        self._b = np.stack([a[2] for a in arrs])

    def component_index(self, u: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self._cum, u, side="right")
        return np.minimum(idx, len(self.laws) - 1)

    def law_arrays(self, u):
        k = self.component_index(np.asarray(u)[:, 0])
        return self._p[k], self._A[k], self._b[k]

    def representative(self):
        return self.laws[0]

    def to_json(self):
        return {"type": "mixture", "laws": [law.to_json() for law in self.laws], "probs": self.probs}


@dataclass(frozen=True)
class BranchSampler:
    """Branch map ``x -> r (x - c) + c + jitter`` with ``r ~ U[ratio]``, ``jitter ~ U[box]``."""

    ratio: tuple[float, float]
    fixed_point: tuple[float, ...] = (0.0,)
    jitter: tuple[float, float] = (0.0, 0.0)


class ParametricAffine(RandomScalingLawSpec):
    """Fixed weights, independent uniform ratios and offsets per branch.

    The maps are similarities ``r I``, so ``Lip S_i = r_i`` exactly and the
    essential supremum of ``sum_i p_i r_i^q`` is ``sum_i p_i hi_i^q`` where
    ``hi_i`` is the top of the declared ratio range.  Passing
    ``sup_lambda=None`` withholds that declaration.
    """

    def __init__(
        self,
        weights: Sequence[float],
        branches: Sequence[BranchSampler],
        sup_lambda: Callable[[float], float] | str | None = "range",
    ):
        weights = [float(x) for x in weights]
        if len(weights) != len(branches) or any(x <= 0 for x in weights):
            raise MeasureError("one positive weight per branch required")
        if abs(math.fsum(weights) - 1.0) > WEIGHT_TOL:
            raise MeasureError("branch weights must sum to 1")
        for br in branches:
            lo, hi = br.ratio
            if not 0 <= lo <= hi:
                raise MeasureError(f"bad ratio range {br.ratio}")
        dims = {len(br.fixed_point) for br in branches}
        if len(dims) != 1:
            raise MeasureError("branches disagree on dimension")
        self.weights = weights
        self.branches = list(branches)
        self.N = len(weights)
        self.dim = dims.pop()
        self.n_uniforms = 2 * self.N
        self.deterministic = all(
            br.ratio[0] == br.ratio[1] and br.jitter[0] == br.jitter[1] for br in branches
        )
        self.sup_lambda = sup_lambda
        self._lo = np.array([br.ratio[0] for br in branches])
        self._hi = np.array([br.ratio[1] for br in branches])
        self._c = np.array([br.fixed_point for br in branches], dtype=float)
        self._jlo = np.array([br.jitter[0] for br in branches])
        self._jhi = np.array([br.jitter[1] for br in branches])

    def law_arrays(self, u):
        u = np.asarray(u)
        K = u.shape[0]
        r = self._lo + (self._hi - self._lo) * u[:, : self.N]
        jit = self._jlo + (self._jhi - self._jlo) * u[:, self.N :]
        eye = np.eye(self.dim)
        A = r[:, :, None, None] * eye
        b = self._c[None] * (1.0 - r)[:, :, None] + jit[:, :, None]
        p = np.broadcast_to(np.array(self.weights), (K, self.N)).copy()
        return p, A, b

    def representative(self):
        return ScalingLaw.from_arrays(*[a[0] for a in self.law_arrays(np.full((1, self.n_uniforms), 0.5))])

    def to_json(self):
        return {
            "type": "parametric",
            "weights": self.weights,
            "branches": [
                {"ratio": list(br.ratio), "fixed_point": list(br.fixed_point), "jitter": list(br.jitter)}
                for br in self.branches
            ],
            "sup": "range" if self.sup_lambda == "range" else (None if self.sup_lambda is None else "callable"),
        }


class HeavyTailExample(RandomScalingLawSpec):
    """One-branch law on [0, inf) with ``omega`` uniform on (0, 1].

    ``expinv``:     ``S(x) = x/2 + exp(1/omega)``
    ``reciprocal``: ``S(x) = x/2 + 1/omega``

    Offsets of ``expinv`` overflow to ``inf`` once ``omega < 1/709.78``.
    """

    VARIANTS = ("expinv", "reciprocal")

    def __init__(self, variant: str = "reciprocal"):
        if variant not in self.VARIANTS:
            raise MeasureError(f"unknown heavy-tail variant {variant!r}")
        self.variant = variant
        self.N = 1
        self.dim = 1
        self.n_uniforms = 1

    @staticmethod
    def omega(u: np.ndarray) -> np.ndarray:
        # u in [0, 1) -> omega in (0, 1]
        return 1.0 - np.asarray(u)

    def offset(self, omega):
        omega = np.asarray(omega, dtype=float)
        if self.variant == "reciprocal":
            return 1.0 / omega
        with np.errstate(over="ignore"):
            return np.exp(1.0 / omega)

    def log_offset(self, omega):
        """``log`` of the offset, finite even where ``expinv`` overflows."""
        omega = np.asarray(omega, dtype=float)
        return -np.log(omega) if self.variant == "reciprocal" else 1.0 / omega

    def tail(self, s):
        """Exact ``P(offset >= s)`` under uniform ``omega``."""
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.variant == "reciprocal":
                out = np.where(s > 1, 1.0 / s, 1.0)
            else:
                out = np.where(s > np.e, 1.0 / np.log(np.maximum(s, np.e)), 1.0)
        return out if out.ndim else float(out)

    def law_arrays(self, u):
        u = np.asarray(u)
        K = u.shape[0]
        b = self.offset(self.omega(u[:, 0])).reshape(K, 1, 1)
        return np.ones((K, 1)), np.full((K, 1, 1, 1), 0.5), b

    def law_at(self, omega: float) -> ScalingLaw:
        return ScalingLaw([1.0], [AffineContraction(0.5, float(self.offset(omega)))])

    def representative(self):
        return self.law_at(1.0)

    def to_json(self):
        return {"type": "heavy_tail", "variant": self.variant}


# -- contraction factors ---------------------------------------------------------


def lambda_q_expected(spec: RandomScalingLawSpec, q: float, m: int = 100_000, seed: int = 0) -> Estimate:
    """Mean of ``sum_i p_i r_i^q`` under the law distribution.

    Exact for mixtures and for the heavy-tail family; Monte Carlo with
    ``m`` draws (mean and standard error) for parametric families.
    """
    if q <= 0:
        raise ValueError("q must be positive")
    if isinstance(spec, FiniteMixture):
        return Estimate(math.fsum(pr * law.contraction_sum(q) for pr, law in zip(spec.probs, spec.laws)))
    if isinstance(spec, HeavyTailExample):
        return Estimate(0.5**q)
    if m < 1:
        raise ValueError("m must be at least 1")
    from .streams import derive_stream

    u = derive_stream(seed, 0, ()).random((m, spec.n_uniforms))
    vals = _contraction_sums(spec, u, q)
    se = float(np.std(vals, ddof=1) / math.sqrt(m)) if m > 1 else float("inf")
    return Estimate(float(np.mean(vals)), se)


def _contraction_sums(spec, u, q):
    p, A, _ = spec.law_arrays(u)
    K, N, d, _ = A.shape
    if d == 1:
        r = np.abs(A[:, :, 0, 0])
    else:
        r = np.linalg.norm(A.reshape(K * N, d, d), 2, axis=(1, 2)).reshape(K, N)
    return np.sum(p * r**q, axis=1)


def lambda_q_esssup(spec: RandomScalingLawSpec, q: float) -> float:
    """Essential supremum of ``sum_i p_i r_i^q``."""
    if q <= 0:
        raise ValueError("q must be positive")
    if isinstance(spec, FiniteMixture):
        return max(law.contraction_sum(q) for law in spec.laws)
    if isinstance(spec, HeavyTailExample):
        return 0.5**q
    if isinstance(spec, ParametricAffine):
        if spec.sup_lambda is None:
            raise ValueError("parametric spec declares no essential supremum; refusing to estimate it")
        if spec.sup_lambda == "range":
            return math.fsum(w * hi**q for w, hi in zip(spec.weights, spec._hi))
        return float(spec.sup_lambda(q))
    raise TypeError(f"unsupported spec {type(spec).__name__}")


def sample_law(spec: RandomScalingLawSpec, stream) -> ScalingLaw:
    """Draw one law, consuming ``spec.n_uniforms`` variates from ``stream``."""
    u = stream.random(spec.n_uniforms).reshape(1, -1)
    p, A, b = spec.law_arrays(u)
    return ScalingLaw.from_arrays(p[0], A[0], b[0])


# -- presets and JSON --------------------------------------------------------------


def uniform_law() -> ScalingLaw:
    """``x/2`` and ``x/2 + 1/2`` with equal weights; fixed point is Lebesgue on [0, 1]."""
    return ScalingLaw([0.5, 0.5], [AffineContraction(0.5, 0.0), AffineContraction(0.5, 0.5)])


def cantor_law() -> ScalingLaw:
    return ScalingLaw([0.5, 0.5], [AffineContraction(1 / 3, 0.0), AffineContraction(1 / 3, 2 / 3)])


def random_ratio_spec(lo: float = 0.3, hi: float = 0.45) -> ParametricAffine:
    """Two branches with ratios ``U[lo, hi]`` anchored at 0 and 1, weights 1/2."""
    return ParametricAffine(
        [0.5, 0.5],
        [BranchSampler((lo, hi), (0.0,)), BranchSampler((lo, hi), (1.0,))],
    )


PRESETS = {
    "uniform": lambda: FiniteMixture([uniform_law()]),
    "cantor": lambda: FiniteMixture([cantor_law()]),
    "random_ratio": random_ratio_spec,
    "reciprocal": lambda: HeavyTailExample("reciprocal"),
    "expinv": lambda: HeavyTailExample("expinv"),
}


def spec_from_json(obj) -> RandomScalingLawSpec:
    if isinstance(obj, str):
        if obj not in PRESETS:
            raise ValueError(f"unknown preset {obj!r}; known: {sorted(PRESETS)}")
        return PRESETS[obj]()
    kind = obj.get("type")
    if kind == "preset":
        return spec_from_json(obj["name"])
    if kind == "mixture":
        return FiniteMixture([ScalingLaw.from_json(x) for x in obj["laws"]], obj.get("probs"))
    if kind == "law":
        return FiniteMixture([ScalingLaw.from_json(obj)])
    if kind == "parametric":
        branches = [
            BranchSampler(
                tuple(b["ratio"]),
                tuple(np.atleast_1d(b.get("fixed_point", 0.0)).tolist()),
                tuple(b.get("jitter", (0.0, 0.0))),
            )
            for b in obj["branches"]
        ]
        sup = obj.get("sup", "range")
        return ParametricAffine(obj["weights"], branches, sup_lambda="range" if sup == "range" else None)
    if kind == "heavy_tail":
        return HeavyTailExample(obj.get("variant", "reciprocal"))
    raise ValueError(f"unknown spec type {kind!r}")
