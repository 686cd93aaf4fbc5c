"""Random forest of Gini decision trees.

Each tree draws its own seed from ``SeedSequence(seed, spawn_key=(i,))``, so
tree ``i`` is the same whatever ``n_estimators`` is and a forest of ``k``
trees is the prefix of any larger forest grown with the same settings.

Split search samples ``max_features`` candidate features without replacement.
Constant features count against that budget, but drawing continues past it
until at least one non-constant feature has been seen; a node becomes a leaf
for lack of features only when every feature is constant there. Thresholds sit at midpoints between
consecutive distinct values and samples with ``x <= threshold`` go left.
Equal impurities resolve to the lowest feature index, then the lowest
threshold.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numba
import numpy as np
import scipy.sparse as sp

from ._common import as_binary, as_matrix


@numba.njit(cache=True)
def _grow(Xt, colptr, rows, vals, y, sample_idx, max_features, min_samples_split, min_samples_leaf,
          max_depth, seed):
    np.random.seed(seed)
    V = Xt.shape[0]
    m_all = sample_idx.shape[0]
    cap = 2 * m_all + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    counts = np.zeros((cap, 2), dtype=np.int64)
    depth_of = np.zeros(cap, dtype=np.int64)
    idx = sample_idx.copy()
    feats = np.arange(V)
    st_node = np.empty(cap, dtype=np.int64)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = m_all
    sp = 1
    n_nodes = 1
    # samples are bootstrap draws, so a node holds each row with some multiplicity
    mult = np.zeros(Xt.shape[1], dtype=np.int64)
    ent_v = np.empty(m_all)
    ent_n = np.empty(m_all, dtype=np.int64)
    ent_f = np.empty(m_all, dtype=np.int64)
    run_v = np.empty(m_all + 1)
    run_n = np.empty(m_all + 1, dtype=np.int64)
    run_f = np.empty(m_all + 1, dtype=np.int64)
    while sp > 0:
        sp -= 1
        node = st_node[sp]
        start = st_start[sp]
        end = st_end[sp]
        depth = depth_of[node]
        m = end - start
        c1 = 0
        for k in range(start, end):
            c1 += y[idx[k]]
        c0 = m - c1
        counts[node, 0] = c0
        counts[node, 1] = c1
        if (max_depth >= 0 and depth >= max_depth) or m < min_samples_split or m < 2 * min_samples_leaf \
                or c0 == 0 or c1 == 0:
            continue
        for k in range(start, end):
            mult[idx[k]] += 1
        best_imp = np.inf
        best_f = -1
        best_thr = 0.0
        found = 0
        visited = 0
        remaining = V
        while (visited < max_features or found == 0) and remaining > 0:
            visited += 1
            r = np.random.randint(0, remaining)
            f = feats[r]
            feats[r] = feats[remaining - 1]
            feats[remaining - 1] = f
            remaining -= 1
            ne = 0
            nz = 0
            z1 = c1
            n_neg = 0
            if colptr[f + 1] - colptr[f] <= m:
                for q in range(colptr[f], colptr[f + 1]):
                    row = rows[q]
                    w = mult[row]
                    if w > 0:
                        ent_v[ne] = vals[q]
                        ent_n[ne] = w
                        ent_f[ne] = w * y[row]
                        nz += w
                        z1 -= w * y[row]
                        if vals[q] < 0.0:
                            n_neg += 1
                        ne += 1
            else:
                # column denser than the node: read the node's samples instead
                for k in range(start, end):
                    row = idx[k]
                    v = Xt[f, row]
                    if v != 0.0:
                        ent_v[ne] = v
                        ent_n[ne] = 1
                        ent_f[ne] = y[row]
                        nz += 1
                        z1 -= y[row]
                        if v < 0.0:
                            n_neg += 1
                        ne += 1
            if nz == 0:
                continue
            n_zero = m - nz
            if n_zero == 0:
                same = True
                for k in range(1, ne):
                    if ent_v[k] != ent_v[0]:
                        same = False
                        break
                if same:
                    continue
            found += 1
            sub = np.argsort(ent_v[:ne])
            # runs of equal values in ascending order, zeros as one run
            R = 0
            for k in range(ne + 1):
                if k == n_neg and n_zero > 0:
                    run_v[R] = 0.0
                    run_n[R] = n_zero
                    run_f[R] = z1
                    R += 1
                if k == ne:
                    break
                e = sub[k]
                if R > 0 and run_v[R - 1] == ent_v[e]:
                    run_n[R - 1] += ent_n[e]
                    run_f[R - 1] += ent_f[e]
                else:
                    run_v[R] = ent_v[e]
                    run_n[R] = ent_n[e]
                    run_f[R] = ent_f[e]
                    R += 1
            nl = 0
            lc1 = 0
            for g in range(R - 1):
                nl += run_n[g]
                lc1 += run_f[g]
                nr = m - nl
                if nl < min_samples_leaf or nr < min_samples_leaf:
                    continue
                va = run_v[g]
                vb = run_v[g + 1]
                lc0 = nl - lc1
                rc1 = c1 - lc1
                rc0 = nr - rc1
                imp = (nl - (lc0 * lc0 + lc1 * lc1) / nl) + (nr - (rc0 * rc0 + rc1 * rc1) / nr)
                thr = 0.5 * (va + vb)
                if thr >= vb:
                    thr = va
                if imp < best_imp or (imp == best_imp and (f < best_f or (f == best_f and thr < best_thr))):
                    best_imp = imp
                    best_f = f
                    best_thr = thr
        for k in range(start, end):
            mult[idx[k]] = 0
        if best_f < 0:
            continue
        # stable partition of idx[start:end]
        buf = idx[start:end].copy()
        p = start
        for k in range(m):
            if Xt[best_f, buf[k]] <= best_thr:
                idx[p] = buf[k]
                p += 1
        mid = p
        for k in range(m):
            if Xt[best_f, buf[k]] > best_thr:
                idx[p] = buf[k]
                p += 1
        feature[node] = best_f
        threshold[node] = best_thr
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        depth_of[lnode] = depth + 1
        depth_of[rnode] = depth + 1
        # push right first so the left subtree is expanded first
        st_node[sp] = rnode
        st_start[sp] = mid
        st_end[sp] = end
        sp += 1
        st_node[sp] = lnode
        st_start[sp] = start
        st_end[sp] = mid
        sp += 1
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), counts[:n_nodes].copy(), depth_of[:n_nodes].copy())


@numba.njit(cache=True)
def _apply(feature, threshold, left, right, X):
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@dataclass(frozen=True, eq=False)
class DecisionTree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (n_nodes, 2): normal, fraud
    depth: np.ndarray

    def __eq__(self, other) -> bool:
        return isinstance(other, DecisionTree) and all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("feature", "threshold", "left", "right", "counts", "depth"))

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.feature < 0)

    def max_depth(self) -> int:
        return int(self.depth.max())

    def apply(self, X) -> np.ndarray:
        return _apply(self.feature, self.threshold, self.left, self.right, np.ascontiguousarray(X, dtype=np.float64))

    def votes(self, X) -> np.ndarray:
        """1 where the reached leaf holds at least as many fraud as normal samples."""
        c = self.counts[self.apply(X)]
        return (c[:, 1] >= c[:, 0]).astype(np.int64)

    def to_dict(self) -> dict:
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(),
                "counts": self.counts.tolist(), "depth": self.depth.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        return cls(np.asarray(d["feature"], dtype=np.int64), np.asarray(d["threshold"], dtype=np.float64),
                   np.asarray(d["left"], dtype=np.int64), np.asarray(d["right"], dtype=np.int64),
                   np.asarray(d["counts"], dtype=np.int64).reshape(-1, 2), np.asarray(d["depth"], dtype=np.int64))


def resolve_max_features(max_features, n_features: int) -> int:
    if max_features == "sqrt":
        return max(1, math.ceil(math.sqrt(n_features)))
    if max_features is None:
        return n_features
    k = int(max_features)
    if k < 1:
        raise ValueError("max_features must be >= 1")
    return min(k, n_features)


def tree_seed(seed: int, i: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(i,))


def prepare(X) -> tuple:
    """Feature-major dense copy plus CSC arrays of ``X``, shared by every tree grown on it."""
    X = as_matrix(X)
    csc = sp.csc_matrix(X)
    csc.sort_indices()
    return (np.ascontiguousarray(X.T), csc.indptr.astype(np.int64), csc.indices.astype(np.int64),
            csc.data.astype(np.float64))


def grow_tree(X, y, *, max_features: Union[int, str, None] = "sqrt", min_samples_split: int = 2,
              min_samples_leaf: int = 1, max_depth: Optional[int] = None, bootstrap: bool = True,
              seed: Union[int, np.random.SeedSequence] = 0, prepared: Optional[tuple] = None) -> DecisionTree:
    """Grow one tree. ``prepared`` (from :func:`prepare`) may be passed to avoid rebuilding it per tree."""
    X = as_matrix(X)
    yb = as_binary(y)
    n, V = X.shape
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    rng = np.random.default_rng(ss)
    sample = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
    inner_seed = int(ss.generate_state(1)[0])
    if prepared is None:
        prepared = prepare(X)
    arrays = _grow(*prepared, yb, sample.astype(np.int64), resolve_max_features(max_features, V),
                   int(min_samples_split), int(min_samples_leaf), -1 if max_depth is None else int(max_depth),
                   inner_seed)
    return DecisionTree(*arrays)


@dataclass(frozen=True, eq=False)
class RandomForestModel:
    trees: tuple
    dim: int
    n_estimators: int
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_features: Union[int, str, None] = "sqrt"
    max_depth: Optional[int] = None
    bootstrap: bool = True
    seed: int = 0

    def __eq__(self, other) -> bool:
        return (isinstance(other, RandomForestModel) and self.params() == other.params()
                and len(self.trees) == len(other.trees)
                and all(a == b for a, b in zip(self.trees, other.trees)))

    def params(self) -> dict:
        return {"n_estimators": self.n_estimators, "min_samples_split": self.min_samples_split,
                "min_samples_leaf": self.min_samples_leaf, "max_features": self.max_features,
                "max_depth": self.max_depth, "bootstrap": self.bootstrap, "seed": self.seed}

    def truncated(self, n_estimators: int) -> "RandomForestModel":
        """The forest made of the first ``n_estimators`` trees."""
        if not 1 <= n_estimators <= len(self.trees):
            raise ValueError("cannot truncate beyond the grown trees")
        p = self.params()
        p["n_estimators"] = n_estimators
        return RandomForestModel(self.trees[:n_estimators], self.dim, **p)

    def vote_matrix(self, X) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
        return np.stack([t.votes(X) for t in self.trees], axis=0)

    def fraud_fraction(self, X) -> np.ndarray:
        return self.vote_matrix(X).sum(axis=0) / len(self.trees)

    def to_dict(self) -> dict:
        return {"dim": self.dim, **self.params(), "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "RandomForestModel":
        trees = tuple(DecisionTree.from_dict(t) for t in d["trees"])
        return cls(trees, int(d["dim"]), int(d["n_estimators"]), int(d["min_samples_split"]),
                   int(d["min_samples_leaf"]), d["max_features"], d["max_depth"], bool(d["bootstrap"]),
                   int(d["seed"]))


def train_random_forest(X, y, n_estimators: int = 100, min_samples_split: int = 2, min_samples_leaf: int = 1,
                        max_features: Union[int, str, None] = "sqrt", max_depth: Optional[int] = None,
                        bootstrap: bool = True, seed: int = 0) -> RandomForestModel:
    if n_estimators < 1:
        raise ValueError("n_estimators must be >= 1")
    X = as_matrix(X)
    yb = as_binary(y)
    prep = prepare(X)
    trees = tuple(
        grow_tree(X, yb, max_features=max_features, min_samples_split=min_samples_split,
                  min_samples_leaf=min_samples_leaf, max_depth=max_depth, bootstrap=bootstrap,
                  seed=tree_seed(seed, i), prepared=prep)
        for i in range(n_estimators)
    )
    return RandomForestModel(trees, X.shape[1], n_estimators, min_samples_split, min_samples_leaf,
                             max_features, max_depth, bootstrap, seed)
