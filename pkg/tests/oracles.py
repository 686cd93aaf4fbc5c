"""Independent reference solvers used only by the tests."""
from __future__ import annotations

from fractions import Fraction

import numba
import numpy as np


def qp_svm(K, y_pm, C):
    """Dense soft-margin dual solved by cvxopt; returns (alpha, b, objective).

    b follows the usual rule: average over free vectors, else midpoint of
    the feasible interval.
    """
    from cvxopt import matrix, solvers

    n = len(y_pm)
    P = matrix(np.outer(y_pm, y_pm) * K + 1e-12 * np.eye(n))
    q = matrix(-np.ones(n))
    G = matrix(np.vstack([-np.eye(n), np.eye(n)]))
    h = matrix(np.hstack([np.zeros(n), np.full(n, float(C))]))
    A = matrix(y_pm.reshape(1, -1).astype(float))
    solvers.options.update({"show_progress": False, "abstol": 1e-12, "reltol": 1e-12, "feastol": 1e-12,
                            "maxiters": 200})
    sol = solvers.qp(P, q, G, h, A, matrix(0.0))
    a = np.clip(np.array(sol["x"]).ravel(), 0.0, C)
    f0 = K @ (a * y_pm)
    grad = y_pm - f0  # b candidates: y_i - sum_j a_j y_j K_ij
    free = (a > 1e-6 * C) & (a < C * (1 - 1e-6))
    if free.any():
        b = float(np.mean(grad[free]))
    else:
        lo, hi = -np.inf, np.inf
        for i in range(n):
            at_zero = a[i] <= 1e-6 * C
            # y_i f_i >= 1 when alpha = 0, <= 1 when alpha = C
            if (y_pm[i] > 0) == at_zero:
                lo = max(lo, grad[i])
            else:
                hi = min(hi, grad[i])
        b = float((lo + hi) / 2) if np.isfinite(lo) and np.isfinite(hi) else float(lo if np.isfinite(lo) else hi)
    obj = float(a.sum() - 0.5 * (a * y_pm) @ K @ (a * y_pm))
    return a, b, obj


def _gini_sum(counts):
    n = sum(counts)
    if n == 0:
        return Fraction(0)
    return n - Fraction(sum(c * c for c in counts), n)  # n * gini


def split_impurity(X, y, j, t):
    """n_left * gini_left + n_right * gini_right, exactly."""
    left = X[:, j] <= t
    return (_gini_sum([int(((y == c) & left).sum()) for c in (0, 1)])
            + _gini_sum([int(((y == c) & ~left).sum()) for c in (0, 1)]))


def best_splits(X, y, min_samples_leaf=1):
    """Exhaustive Gini search over every feature and midpoint threshold, exact arithmetic.

    Returns ``(best_impurity, [(feature, threshold), ...])`` listing every
    optimal split in (feature, threshold) order, or ``(None, [])``.
    """
    n, V = X.shape
    best, arg = None, []
    for j in range(V):
        vals = np.unique(X[:, j])
        for lo, hi in zip(vals[:-1], vals[1:]):
            t = 0.5 * (lo + hi)
            if t >= hi:
                t = lo
            nl = int((X[:, j] <= t).sum())
            if nl < min_samples_leaf or n - nl < min_samples_leaf:
                continue
            imp = split_impurity(X, y, j, t)
            if best is None or imp < best:
                best, arg = imp, [(j, float(t))]
            elif imp == best:
                arg.append((j, float(t)))
    return best, arg


def pair_auc(y_fraud, scores):
    """AUC by counting every fraud/normal pair (wins + half ties)."""
    pos = [s for f, s in zip(y_fraud, scores) if f]
    neg = [s for f, s in zip(y_fraud, scores) if not f]
    wins = Fraction(0)
    for p in pos:
        for q in neg:
            wins += 1 if p > q else (Fraction(1, 2) if p == q else 0)
    return wins / (len(pos) * len(neg))


# dense split search the sparse grower must reproduce tree for tree
@numba.njit(cache=False)
def reference_grow(Xt, y, sample_idx, max_features, min_samples_split, min_samples_leaf, max_depth, seed):
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
    sp = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = m_all
    sp = 1
    n_nodes = 1
    vals = np.empty(m_all)
    nzval = np.empty(m_all)
    nzpos = np.empty(m_all, dtype=np.int64)
    order = np.empty(m_all, dtype=np.int64)
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
            # zeros dominate sparse columns: sort only the nonzero entries
            n_neg = 0
            n_pos = 0
            n_zero = 0
            for k in range(m):
                v = Xt[f, idx[start + k]]
                vals[k] = v
                if v < 0.0:
                    n_neg += 1
                elif v > 0.0:
                    n_pos += 1
                else:
                    n_zero += 1
            if n_neg + n_pos == 0:
                continue
            if n_zero == 0 and (n_neg == 0 or n_pos == 0):
                vmin = vals[0]
                vmax = vals[0]
                for k in range(1, m):
                    if vals[k] < vmin:
                        vmin = vals[k]
                    if vals[k] > vmax:
                        vmax = vals[k]
                if vmax <= vmin:
                    continue
            found += 1
            nz = 0
            for k in range(m):
                if vals[k] != 0.0:
                    nzpos[nz] = k
                    nzval[nz] = vals[k]
                    nz += 1
            sub = np.argsort(nzval[:nz], kind="mergesort")
            q = 0
            for k in range(n_neg):
                order[q] = nzpos[sub[k]]
                q += 1
            for k in range(m):
                if vals[k] == 0.0:
                    order[q] = k
                    q += 1
            for k in range(n_neg, nz):
                order[q] = nzpos[sub[k]]
                q += 1
            lc1 = 0
            for k in range(m - 1):
                s = order[k]
                lc1 += y[idx[start + s]]
                nl = k + 1
                va = vals[s]
                vb = vals[order[k + 1]]
                if va == vb:
                    continue
                nr = m - nl
                if nl < min_samples_leaf or nr < min_samples_leaf:
                    continue
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
