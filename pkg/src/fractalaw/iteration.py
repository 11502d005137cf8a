"""Construction-tree iteration ``mu_{n+1} = sum_i p_i S_i mu_n^(i)``.

A construction tree assigns an independent scaling law to every address
``sigma`` in ``{1..N}*``; the law at ``sigma`` is drawn from the stream keyed
by ``(seed, tree index, sigma)``.  The depth-``n`` measure of a tree puts
``mu_0`` at every address of length ``n`` and folds the levels back up to the
root.  Because laws are tied to addresses rather than to draw order, the
depth-``k`` and depth-``k+1`` measures of one tree share all their shallower
laws, which is what makes trajectory distances meaningful.

The evaluation is vectorised level by level over all nodes of a batch of
trees.  Results are bit-identical whatever the batching.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import streams
from .measures import DiscreteMeasure, MeasureError, dirac, distance
from .scaling import RandomScalingLawSpec, lambda_q_esssup
from .transport import DEFAULT_CAP, lq

DEFAULT_MAX_ATOMS = 1 << 22
AUTO_EXACT_ATOMS = 1 << 20


class ResourceLimitExceeded(MeasureError):
    pass


@dataclass(frozen=True)
class Prune:
    """Per-level support control: snap to an ``eps`` grid, then cap atoms per node."""

    eps: float = 0.0
    cap: int | None = None
    max_atoms: int = DEFAULT_MAX_ATOMS

    @classmethod
    def auto(cls, n: int, N: int, k0: int, diameter: float) -> "Prune":
        """Exact while the leaf level has at most 2^20 atoms, else ``eps = diameter 2^-n``."""
        if k0 * N**n <= AUTO_EXACT_ATOMS:
            return cls()
        return cls(eps=diameter * 2.0**-n)

    def to_json(self):
        return {"eps": self.eps, "cap": self.cap, "max_atoms": self.max_atoms}


NO_PRUNE = Prune()


def default_mu0(spec: RandomScalingLawSpec) -> DiscreteMeasure:
    """Dirac mass at the fixed point of the first branch map of the spec's representative law.

    Falls back to the origin when that map has no unique fixed point, so that
    non-contracting specs still reach the hypothesis check.
    """
    S = spec.representative().maps[0]
    try:
        return dirac(S.fixed_point())
    except np.linalg.LinAlgError:
        return dirac(np.zeros(S.dim))


def _level_laws(spec, keys, T):
    """Law arrays for the nodes of one level (``keys`` may be None for deterministic specs)."""
    if spec.deterministic:
        p, A, b = spec.law_arrays(np.zeros((1, spec.n_uniforms)))
        return p, A, b, True
    return (*spec.law_arrays(streams.uniforms(keys, spec.n_uniforms)), False)


def _take(arr, shared, parent, branch):
    return arr[0, branch] if shared else arr[parent, branch]


def _iterate_batch(seed, indices, spec, mu0, n, prune):
    """Depth-``n`` measures of the trees ``indices``; returns ``(measures, slacks)``."""
    indices = np.asarray(indices, dtype=np.int64).reshape(-1)
    T = len(indices)
    N, d = spec.N, spec.dim
    if mu0.dim != d:
        raise MeasureError(f"start measure lives on R^{mu0.dim}, laws act on R^{d}")
    if not mu0.is_unit():
        raise MeasureError("start measure must have unit mass")
    k0 = mu0.size
    if k0 * N**n > prune.max_atoms:
        raise ResourceLimitExceeded(
            f"depth {n} with N={N} and {k0} start atoms needs {k0 * N**n} leaf atoms (> {prune.max_atoms})"
        )

    # laws for every level, top down
    laws = []
    keys = None if spec.deterministic else streams.root_keys(seed, indices)
    for level in range(n):
        laws.append(_level_laws(spec, keys, T))
        if keys is not None and level + 1 < n:
            keys = streams.child_keys(keys, N)

    pruning = prune.eps > 0 or prune.cap is not None
    lip = None
    if pruning:
        # Lipschitz constant of the composed path from the root to each node
        lip = [np.ones(T)]
        for level in range(n - 1):
            p, A, b, shared = laws[level]
            r = _ratios(A)
            r = np.broadcast_to(r, (T * N**level, N)) if shared else r
            lip.append((lip[-1][:, None] * r).reshape(-1))

    # leaves: mu0 at each of the T * N^n addresses
    nodes_at_leaf = T * N**n
    X = np.tile(mu0.points, (nodes_at_leaf, 1))
    W = np.tile(mu0.weights, nodes_at_leaf)
    node = np.repeat(np.arange(nodes_at_leaf), k0)
    slack = np.zeros(T)
    for level in range(n - 1, -1, -1):
        p, A, b, shared = laws[level]
        parent, branch = np.divmod(node, N)
        Ab = _take(A, shared, parent, branch)
        bb = _take(b, shared, parent, branch)
        if d == 1:
            X = Ab[..., 0, 0][:, None] * X + bb
        else:
            X = np.einsum("kij,kj->ki", Ab, X) + bb
        W = W * _take(p, shared, parent, branch)
        node = parent
        if pruning:
            X, W, node, shift = _prune_level(X, W, node, prune)
            nodes_per_tree = N**level
            moved = np.zeros(T)
            np.maximum.at(moved, node // nodes_per_tree, shift * lip[level][node])
            slack += moved
    return _split_trees(X, W, node, T), slack


def _ratios(A):
    K, N, d, _ = A.shape
    if d == 1:
        return np.abs(A[:, :, 0, 0])
    return np.linalg.norm(A.reshape(K * N, d, d), 2, axis=(1, 2)).reshape(K, N)


def _prune_level(X, W, node, prune):
    """Coalesce every node's atoms; returns arrays plus per-atom displacement."""
    shift = np.zeros(len(W))
    if prune.eps > 0:
        cell = np.round(X / prune.eps)
        snapped = cell * prune.eps
        shift = distance(snapped, X)
        order = np.lexsort(tuple(cell.T[::-1]) + (node,))
        cell, snapped, W, node, shift = cell[order], snapped[order], W[order], node[order], shift[order]
        new = np.ones(len(W), dtype=bool)
        new[1:] = (node[1:] != node[:-1]) | np.any(cell[1:] != cell[:-1], axis=1)
        starts = np.flatnonzero(new)
        X = snapped[starts]
        W = np.add.reduceat(W, starts)
        shift = np.maximum.reduceat(shift, starts)
        node = node[starts]
    if prune.cap is not None:
        X, W, node, shift = _cap_nodes(X, W, node, shift, prune.cap)
    return X, W, node, shift


def _cap_nodes(X, W, node, shift, cap):
    from .measures import _enforce_cap

    order = np.argsort(node, kind="stable")
    X, W, node, shift = X[order], W[order], node[order], shift[order]
    ids, starts, counts = np.unique(node, return_index=True, return_counts=True)
    if counts.max() <= cap:
        return X, W, node, shift
    parts = []
    for nid, s, c in zip(ids, starts, counts):
        sl = slice(s, s + c)
        if c <= cap:
            parts.append((X[sl], W[sl], node[sl], shift[sl]))
            continue
        mu = DiscreteMeasure.from_arrays(X[sl], W[sl])
        capped, moved = _enforce_cap(mu, cap)
        k = capped.size
        parts.append((capped.points, capped.weights, np.full(k, nid), np.full(k, shift[sl].max() + moved)))
    return tuple(np.concatenate(z) for z in zip(*parts))


def _split_trees(X, W, node, T):
    """Canonical (sorted, merged) measure per tree from the root-level atom arrays."""
    tree = node
    order = np.lexsort(tuple(X.T[::-1] + 0.0) + (tree,))
    X, W, tree = X[order] + 0.0, W[order], tree[order]
    new = np.ones(len(W), dtype=bool)
    new[1:] = (tree[1:] != tree[:-1]) | np.any(X[1:] != X[:-1], axis=1)
    starts = np.flatnonzero(new)
    X, W, tree = X[starts], np.add.reduceat(W, starts), tree[starts]
    if not np.all(np.isfinite(X)):
        raise MeasureError("iteration produced non-finite atoms (offset overflow)")
    bounds = np.searchsorted(tree, np.arange(T + 1))
    return [DiscreteMeasure(X[bounds[t] : bounds[t + 1]].copy(), W[bounds[t] : bounds[t + 1]].copy()) for t in range(T)]


def iterate_measure(seed, index, spec, mu0, n, prune: Prune = NO_PRUNE) -> DiscreteMeasure:
    """Depth-``n`` measure of tree ``index``."""
    return iterate_measure_with_slack(seed, index, spec, mu0, n, prune)[0]


def iterate_measure_with_slack(seed, index, spec, mu0, n, prune: Prune = NO_PRUNE):
    if n < 0:
        raise ValueError("depth must be nonnegative")
    measures, slack = _iterate_batch(seed, [index], spec, mu0, n, prune)
    return measures[0], float(slack[0])


def iterate_batch(seed, indices, spec, mu0, n, prune: Prune = NO_PRUNE, threads: int = 1, chunk_atoms: int = 1 << 20):
    """Depth-``n`` measures of many trees; returns ``(measures, slacks)``.

    Trees are processed in chunks of at most ``chunk_atoms`` leaf atoms,
    optionally on a thread pool; the output does not depend on either.
    """
    if n < 0:
        raise ValueError("depth must be nonnegative")
    indices = list(indices)
    per_tree = mu0.size * spec.N**n
    size = max(1, chunk_atoms // max(per_tree, 1))
    chunks = [indices[i : i + size] for i in range(0, len(indices), size)]

    def run(chunk):
        return _iterate_batch(seed, chunk, spec, mu0, n, prune)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(c) for c in chunks]
    measures = [m for ms, _ in results for m in ms]
    slacks = np.concatenate([s for _, s in results]) if results else np.zeros(0)
    return measures, slacks


@dataclass
class Trajectory:
    """``mu_0 .. mu_n`` of one tree with ``l_q(mu_k, mu_{k+1})`` and pruning slack per depth."""

    measures: list
    steps: np.ndarray
    slacks: np.ndarray
    q: float

    def __len__(self):
        return len(self.measures)

    def __getitem__(self, k):
        return self.measures[k]


def trajectory(seed, index, spec, mu0, n_max, q, prune: Prune = NO_PRUNE, metric="euclidean") -> Trajectory:
    return trajectories(seed, [index], spec, mu0, n_max, q, prune, metric=metric)[0]


def trajectories(seed, indices, spec, mu0, n_max, q, prune: Prune = NO_PRUNE, threads: int = 1, metric="euclidean"):
    """Trajectories of several trees at once (depth by depth, batched over trees)."""
    indices = list(indices)
    per_depth = [iterate_batch(seed, indices, spec, mu0, k, prune, threads) for k in range(n_max + 1)]
    out = []
    for t in range(len(indices)):
        ms = [per_depth[k][0][t] for k in range(n_max + 1)]
        sl = np.array([per_depth[k][1][t] for k in range(n_max + 1)])
        steps = np.array([lq(ms[k], ms[k + 1], q, metric, DEFAULT_CAP) for k in range(n_max)])
        out.append(Trajectory(ms, steps, sl, q))
    return out


@dataclass
class Ensemble:
    """``m`` depth-``n`` measures from trees ``0 .. m-1`` of one seed."""

    measures: list
    slacks: np.ndarray
    seed: int
    spec: RandomScalingLawSpec
    n: int
    q: float
    prune: Prune = field(default_factory=Prune)

    def __len__(self):
        return len(self.measures)

    def __iter__(self):
        return iter(self.measures)

    def __getitem__(self, i):
        return self.measures[i]

    def manifest(self) -> dict:
        return {
            "seed": int(self.seed),
            "spec_hash": self.spec.spec_hash(),
            "spec": self.spec.to_json(),
            "n": self.n,
            "m": len(self.measures),
            "q": self.q,
            "prune": self.prune.to_json(),
        }

    def manifest_json(self) -> str:
        return json.dumps(self.manifest(), sort_keys=True, indent=2)


def generate_ensemble(seed, spec, mu0, n, m, q=1.0, prune: Prune = NO_PRUNE, threads: int = 1) -> Ensemble:
    if m < 1:
        raise ValueError("ensemble size must be at least 1")
    measures, slacks = iterate_batch(seed, range(m), spec, mu0, n, prune, threads)
    return Ensemble(measures, slacks, seed, spec, n, q, prune)


def attractor_diameter_bound(spec: RandomScalingLawSpec, q: float = 1.0) -> float:
    """Crude diameter bound ``2 max|b| / (1 - max r)`` from the representative law."""
    law = spec.representative()
    rmax = max(law.ratios)
    if rmax >= 1:
        return math.inf
    bmax = max(float(np.max(np.abs(m.b))) for m in law.maps)
    return 2 * bmax / (1 - rmax)


def contraction_ratio(spec, q) -> float:
    """Pathwise step-distance ratio ``lambda_q^(min(1/q, 1))`` with the ess-sup factor."""
    return lambda_q_esssup(spec, q) ** min(1.0 / q, 1.0)
