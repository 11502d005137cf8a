"""Finitely supported measures on R^d (d <= 3).

A :class:`DiscreteMeasure` is an immutable pair of arrays: ``points`` with shape
``(k, d)`` and strictly positive ``weights`` with shape ``(k,)``.  Atoms are
kept in lexicographic order of their coordinates and identical points are
always merged, so two measures built from the same atoms compare equal
bit for bit.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

MAX_DIM = 3
MASS_RTOL = 1e-12

METRICS = ("euclidean", "manhattan", "chebyshev")


class MeasureError(ValueError):
    pass


def _as_points(points, d=None) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        # a flat list is a list of 1-D points unless d says otherwise
        pts = pts.reshape(-1, 1) if (d is None or d == 1) else pts.reshape(1, -1)
    if pts.ndim != 2:
        raise MeasureError(f"points must be 2-D (k, d), got shape {pts.shape}")
    if not 1 <= pts.shape[1] <= MAX_DIM:
        raise MeasureError(f"dimension must be in 1..{MAX_DIM}, got {pts.shape[1]}")
    if not np.all(np.isfinite(pts)):
        raise MeasureError("atom coordinates must be finite")
    return pts


def distance(x, y, metric: str = "euclidean") -> np.ndarray:
    """Row-wise distance between point arrays broadcast against each other."""
    diff = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    if diff.ndim == 0:
        return diff
    if diff.shape[-1] == 1:
        return diff[..., 0]
    if metric == "euclidean":
        return np.sqrt(np.sum(diff * diff, axis=-1))
    if metric == "manhattan":
        return np.sum(diff, axis=-1)
    if metric == "chebyshev":
        return np.max(diff, axis=-1)
    raise MeasureError(f"unknown metric {metric!r}; expected one of {METRICS}")


def pairwise_distance(x: np.ndarray, y: np.ndarray, metric: str = "euclidean") -> np.ndarray:
    """Distance matrix between the rows of ``x`` (k, d) and ``y`` (l, d)."""
    return distance(x[:, None, :], y[None, :, :], metric)


def _canonical(points: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sort atoms lexicographically and merge bit-identical points."""
    k, d = points.shape
    if k == 0:
        return points, weights
    # +0.0 turns -0.0 into 0.0 so the two zeros merge
    points = points + 0.0
    order = np.lexsort(points.T[::-1])
    points = points[order]
    weights = weights[order]
    if k == 1:
        return points, weights
    new = np.empty(k, dtype=bool)
    new[0] = True
    new[1:] = np.any(points[1:] != points[:-1], axis=1)
    if new.all():
        return points, weights
    starts = np.flatnonzero(new)
    return points[starts], np.add.reduceat(weights, starts)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    @classmethod
    def from_arrays(cls, points, weights, *, canonical: bool = True) -> "DiscreteMeasure":
        pts = _as_points(points)
        w = np.asarray(weights, dtype=float).reshape(-1)
        if pts.shape[0] != w.shape[0]:
            raise MeasureError(f"{pts.shape[0]} points but {w.shape[0]} weights")
        if w.shape[0] == 0:
            raise MeasureError("a measure needs at least one atom")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise MeasureError("weights must be finite and strictly positive")
        if canonical:
            pts, w = _canonical(pts, w)
        else:
            pts, w = pts.copy(), w.copy()
        return cls(pts, w)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))

    def is_unit(self, tol: float = MASS_RTOL) -> bool:
        return abs(self.mass - 1.0) <= tol

    def scaled(self, alpha: float) -> "DiscreteMeasure":
        """The measure ``alpha * mu``."""
        if alpha <= 0:
            raise MeasureError("scale factor must be positive")
        return DiscreteMeasure(self.points.copy(), self.weights * alpha)

    def __eq__(self, other):
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return (
            self.points.shape == other.points.shape
            and bool(np.array_equal(self.points, other.points))
            and bool(np.array_equal(self.weights, other.weights))
        )

    __hash__ = None

    def __repr__(self):
        if self.size <= 6:
            atoms = ", ".join(
                f"{w:.6g}@{tuple(float(c) for c in p) if self.dim > 1 else float(p[0])}"
                for p, w in zip(self.points, self.weights)
            )
            return f"DiscreteMeasure({atoms})"
        return f"DiscreteMeasure(d={self.dim}, atoms={self.size}, mass={self.mass:.15g})"

    # -- serialization ---------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"x{i + 1}" for i in range(self.dim)] + ["weight"])
        for p, w in zip(self.points, self.weights):
            writer.writerow([repr(float(c)) for c in p] + [repr(float(w))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DiscreteMeasure":
        rows = list(csv.reader(io.StringIO(text)))
        header = rows[0]
        d = len(header) - 1
        if header != [f"x{i + 1}" for i in range(d)] + ["weight"]:
            raise MeasureError(f"bad measure CSV header {header}")
        data = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=float)
        return cls.from_arrays(data[:, :d], data[:, d])

    def to_json(self) -> dict:
        return {
            "dimension": self.dim,
            "atoms": [[[float(c) for c in p], float(w)] for p, w in zip(self.points, self.weights)],
        }

    @classmethod
    def from_json(cls, obj) -> "DiscreteMeasure":
        if isinstance(obj, str):
            obj = json.loads(obj)
        d = int(obj["dimension"])
        pts = np.array([a[0] for a in obj["atoms"]], dtype=float).reshape(-1, d)
        w = [a[1] for a in obj["atoms"]]
        return cls.from_arrays(pts, w)


def make_measure(atoms: Iterable[tuple[Sequence[float] | float, float]]) -> DiscreteMeasure:
    """Build a measure from ``(point, weight)`` pairs, merging repeated points.

    >>> make_measure([(0.0, 0.5), (0.0, 0.5)])
    DiscreteMeasure(1@0.0)
    """
    atoms = list(atoms)
    if not atoms:
        raise MeasureError("a measure needs at least one atom")
    pts = [np.atleast_1d(np.asarray(p, dtype=float)) for p, _ in atoms]
    dims = {p.shape for p in pts}
    if len(dims) != 1:
        raise MeasureError(f"atoms have mixed dimensions {sorted(dims)}")
    return DiscreteMeasure.from_arrays(np.stack(pts), [w for _, w in atoms])


def dirac(a, mass: float = 1.0) -> DiscreteMeasure:
    return DiscreteMeasure.from_arrays(np.atleast_1d(np.asarray(a, dtype=float))[None, :], [mass])


def pushforward(S, mu: DiscreteMeasure) -> DiscreteMeasure:
    """Image measure ``S mu`` under an affine map; weights are carried unchanged."""
    if S.dim != mu.dim:
        raise MeasureError(f"map acts on R^{S.dim}, measure lives on R^{mu.dim}")
    return DiscreteMeasure.from_arrays(S(mu.points), mu.weights.copy())


def mix(weights: Sequence[float], measures: Sequence[DiscreteMeasure]) -> DiscreteMeasure:
    """Weighted sum ``sum_i weights[i] * measures[i]``.

    Zero weights drop their component entirely.
    """
    weights = [float(w) for w in weights]
    if len(weights) != len(measures):
        raise MeasureError(f"{len(weights)} weights for {len(measures)} measures")
    if not measures:
        raise MeasureError("empty mixture")
    if any(w < 0 for w in weights):
        raise MeasureError("mixture weights must be nonnegative")
    dims = {m.dim for m in measures}
    if len(dims) != 1:
        raise MeasureError(f"mixture of measures with dimensions {sorted(dims)}")
    keep = [(w, m) for w, m in zip(weights, measures) if w > 0]
    if not keep:
        raise MeasureError("mixture with all-zero weights is the zero measure")
    pts = np.concatenate([m.points for _, m in keep])
    w = np.concatenate([w * m.weights for w, m in keep])
    return DiscreteMeasure.from_arrays(pts, w)


def q_moment(mu: DiscreteMeasure, a, q: float, metric: str = "euclidean") -> float:
    """``sum_i w_i d(x_i, a)^q``."""
    if q <= 0:
        raise MeasureError("q must be positive")
    a = np.atleast_1d(np.asarray(a, dtype=float))
    d = distance(mu.points, a[None, :], metric)
    return float(np.sum(mu.weights * d**q))


def coalesce(
    mu: DiscreteMeasure,
    eps: float,
    cap: int | None = None,
    *,
    return_shift: bool = False,
):
    """Snap atoms to the grid ``eps * Z^d``, merge, then enforce an atom cap.

    Every atom moves by at most ``eps * sqrt(d) / 2`` during snapping, so the
    result is within ``eps`` of ``mu`` in ``l_q`` for every ``q >= 1``.  When
    more than ``cap`` atoms survive, the lightest ones are folded into their
    nearest surviving neighbour; that step can move mass further.

    With ``return_shift=True`` also returns the largest distance any unit of
    mass travelled, which bounds the ``l_q`` perturbation for ``q >= 1`` (and
    its ``q``-th power does so for ``q < 1``).
    """
    if eps < 0:
        raise MeasureError("eps must be nonnegative")
    if cap is not None and cap < 1:
        raise MeasureError("cap must be at least 1")
    shift = 0.0
    out = mu
    if eps > 0:
        snapped = np.round(mu.points / eps) * eps
        shift = float(np.max(distance(snapped, mu.points)))
        out = DiscreteMeasure.from_arrays(snapped, mu.weights)
    if cap is not None and out.size > cap:
        out, extra = _enforce_cap(out, cap)
        shift = max(shift, 0.0) + extra
    return (out, shift) if return_shift else out


def _enforce_cap(mu: DiscreteMeasure, cap: int) -> tuple[DiscreteMeasure, float]:
    # stable sort so equal weights resolve by coordinate order
    order = np.argsort(-mu.weights, kind="stable")
    keep, drop = np.sort(order[:cap]), order[cap:]
    kept_pts = mu.points[keep]
    w = mu.weights[keep].copy()
    if mu.dim == 1:
        xs = kept_pts[:, 0]
        y = mu.points[drop, 0]
        pos = np.searchsorted(xs, y)
        left = np.clip(pos - 1, 0, len(xs) - 1)
        right = np.clip(pos, 0, len(xs) - 1)
        use_right = np.abs(xs[right] - y) < np.abs(y - xs[left])
        target = np.where(use_right, right, left)
    else:
        target = np.argmin(pairwise_distance(mu.points[drop], kept_pts), axis=1)
    np.add.at(w, target, mu.weights[drop])
    moved = float(np.max(distance(mu.points[drop], kept_pts[target])))
    return DiscreteMeasure.from_arrays(kept_pts, w), moved
