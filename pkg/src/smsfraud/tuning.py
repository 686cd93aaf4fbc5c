"""Grid search with stratified k-fold cross-validation.

TF-IDF is refit on the training part of every fold, so held-out folds never
leak into the vocabulary or idf weights. Scoring is accuracy.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .classifiers import (ClassifierError, as_binary, model_scores, threshold, train_model)
from .classifiers.forest import grow_tree, prepare, tree_seed
from .classifiers.svm import kernel_matrix, resolve_gamma, train_svm
from .textproc import TextprocError, TokenizerConfig, fit_tfidf, transform_many

logger = logging.getLogger(__name__)


class ClassSmallerThanK(ValueError):
    pass


@dataclass(frozen=True)
class ParamGrid:
    kind: str
    params: dict  # name -> ordered candidate list; declaration order is enumeration order

    def __post_init__(self):
        if not self.params or any(len(v) == 0 for v in self.params.values()):
            raise ValueError("parameter grid must be non-empty")

    def __len__(self) -> int:
        n = 1
        for v in self.params.values():
            n *= len(v)
        return n

    def points(self) -> list:
        names = list(self.params)
        return [dict(zip(names, combo)) for combo in itertools.product(*(self.params[k] for k in names))]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": {k: list(v) for k, v in self.params.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "ParamGrid":
        return cls(d["kind"], {k: list(v) for k, v in d["params"].items()})


@dataclass(frozen=True)
class CvConfig:
    k: int = 5
    seed: int = 0
    scoring: str = "accuracy"

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if self.scoring != "accuracy":
            raise ValueError("only accuracy scoring is supported")


@dataclass
class Trial:
    params: dict
    fold_scores: list
    mean: Optional[float]
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def to_dict(self) -> dict:
        return {"params": self.params, "fold_scores": self.fold_scores, "mean": self.mean, "error": self.error}


@dataclass
class TuningResult:
    kind: str
    best_params: dict
    best_score: float
    trials: list = field(default_factory=list)
    k: int = 5
    cv_seed: int = 0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "best_params": self.best_params, "best_score": self.best_score,
                "k": self.k, "cv_seed": self.cv_seed, "trials": [t.to_dict() for t in self.trials]}

    @classmethod
    def from_dict(cls, d: dict) -> "TuningResult":
        trials = [Trial(t["params"], t["fold_scores"], t["mean"], t.get("error")) for t in d["trials"]]
        return cls(d["kind"], d["best_params"], d["best_score"], trials, d.get("k", 5), d.get("cv_seed", 0))


def nb_var_smoothing_grid() -> list:
    return [float(v) for v in np.logspace(0, -9, num=100)]


DEFAULT_GRIDS = {
    "svm": {"kernel": ["linear", "rbf", "sigmoid"], "C": [0.1, 1, 10, 100, 1000],
            "gamma": [0.001, 0.01, 0.1, 1], "tol": [1e-3, 1e-4, 1e-6]},
    "rf": {"n_estimators": [80, 130, 180, 230], "min_samples_split": [2, 5, 10], "min_samples_leaf": [1, 2, 4],
           "max_features": [1, "sqrt"], "max_depth": [80, 110, None], "bootstrap": [True, False]},
    "nb": {"var_smoothing": nb_var_smoothing_grid()},
}


def default_grid(kind: str) -> ParamGrid:
    return ParamGrid(kind, {k: list(v) for k, v in DEFAULT_GRIDS[kind].items()})


def stratified_kfold_indices(y, k: int, seed: int) -> list:
    """Split ``range(len(y))`` into ``k`` class-stratified folds.

    Each class is shuffled and dealt in contiguous blocks of ``count // k``
    or ``count // k + 1``; the extra records of successive classes continue
    where the previous class's extras stopped, keeping fold sizes within one
    of each other.
    """
    yb = as_binary(y)
    if k < 2:
        raise ValueError("k must be >= 2")
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(k)]
    offset = 0
    for c in (1, 0):
        idx = np.flatnonzero(yb == c)
        if len(idx) < k:
            raise ClassSmallerThanK(f"class {'fraud' if c else 'normal'} has {len(idx)} samples, fewer than k={k}")
        idx = rng.permutation(idx)
        base, extra = divmod(len(idx), k)
        sizes = [base] * k
        for e in range(extra):
            sizes[(offset + e) % k] += 1
        offset = (offset + extra) % k
        pos = 0
        for f in range(k):
            folds[f].extend(idx[pos:pos + sizes[f]].tolist())
            pos += sizes[f]
    return [sorted(f) for f in folds]


def _accuracy(kind, model, X, y) -> float:
    pred = (model_scores(kind, model, X) >= threshold(kind)).astype(np.int64)
    return float(np.mean(pred == y))


class _FoldData:
    def __init__(self, texts, y, train_idx, test_idx, tokenizer):
        tfidf = fit_tfidf([texts[i] for i in train_idx], tokenizer)
        self.X_train = transform_many(tfidf, [texts[i] for i in train_idx])
        self.X_test = transform_many(tfidf, [texts[i] for i in test_idx])
        self.y_train = y[train_idx]
        self.y_test = y[test_idx]


def _evaluate_generic(kind, points, folds, seed):
    out = []
    for p in points:
        scores = []
        for fd in folds:
            model = train_model(kind, fd.X_train, fd.y_train, p, seed)
            scores.append(_accuracy(kind, model, fd.X_test, fd.y_test))
        out.append(scores)
    return out


def _evaluate_svm(points, folds):
    # linear ignores gamma, so equal effective configurations share one fit
    cache = {}
    kcache = {}
    out = []
    for p in points:
        scores = []
        for fi, fd in enumerate(folds):
            kernel = p.get("kernel", "rbf")
            g = resolve_gamma(p.get("gamma", "scale"), fd.X_train)
            gkey = None if kernel == "linear" else g
            key = (fi, kernel, gkey, float(p.get("C", 1.0)), float(p.get("tol", 1e-3)), p.get("max_iter"))
            if key not in cache:
                kk = (fi, kernel, gkey)
                if kk not in kcache:
                    kcache[kk] = kernel_matrix(kernel, g, fd.X_train, fd.X_train)
                model = train_svm(fd.X_train, fd.y_train, kernel=kernel, C=p.get("C", 1.0), gamma=g,
                                  tol=p.get("tol", 1e-3), max_iter=p.get("max_iter"), K=kcache[kk])
                cache[key] = _accuracy("svm", model, fd.X_test, fd.y_test)
            scores.append(cache[key])
        out.append(scores)
    return out


def _evaluate_rf(points, folds, seed):
    """Score forests by accumulating per-tree votes.

    Tree ``i`` depends only on (seed, i) and the tree settings, so the
    forest of ``n`` trees is a prefix of the largest forest in the grid. A
    depth-limited tree equals the unlimited one whenever the unlimited tree
    stays shallower than the limit, in which case it is reused.
    """
    base_cols = ("min_samples_split", "min_samples_leaf", "max_features", "bootstrap")
    votes = {}  # (fold, group, depth) -> (n_trees, n_test) vote matrix

    def group_key(p):
        return tuple((c, p[c]) for c in base_cols if c in p)

    need = {}
    for p in points:
        g = (group_key(p), p.get("max_depth"))
        need[g] = max(need.get(g, 0), int(p.get("n_estimators", 100)))
    depths_by_group = {}
    for (gk, depth), n in need.items():
        depths_by_group.setdefault(gk, {})[depth] = n

    for fi, fd in enumerate(folds):
        prep = prepare(fd.X_train)
        for gk, depth_need in depths_by_group.items():
            settings = dict(gk)
            kw = dict(max_features=settings.get("max_features", "sqrt"),
                      min_samples_split=settings.get("min_samples_split", 2),
                      min_samples_leaf=settings.get("min_samples_leaf", 1),
                      bootstrap=settings.get("bootstrap", True))
            n_max = max(depth_need.values())
            unlimited = {}
            rows = {d: [] for d in depth_need}
            for i in range(n_max):
                ss = tree_seed(seed, i)
                for depth, n in depth_need.items():
                    if i >= n:
                        continue
                    full = unlimited.get(i)
                    if full is None:
                        full = grow_tree(fd.X_train, fd.y_train, max_depth=None, seed=ss, prepared=prep, **kw)
                        unlimited[i] = full
                    tree = full
                    if depth is not None and full.max_depth() >= depth:
                        tree = grow_tree(fd.X_train, fd.y_train, max_depth=depth, seed=ss, prepared=prep, **kw)
                    rows[depth].append(tree.votes(fd.X_test))
                unlimited.pop(i, None)
            for depth, r in rows.items():
                votes[(fi, gk, depth)] = np.cumsum(np.stack(r), axis=0)
    out = []
    for p in points:
        n = int(p.get("n_estimators", 100))
        scores = []
        for fi, fd in enumerate(folds):
            cum = votes[(fi, group_key(p), p.get("max_depth"))]
            frac = cum[n - 1] / n
            pred = (frac >= 0.5).astype(np.int64)
            scores.append(float(np.mean(pred == fd.y_test)))
        out.append(scores)
    return out


def grid_search(texts: Sequence[str], y, grid: ParamGrid, cv: CvConfig = CvConfig(),
                tokenizer: TokenizerConfig = TokenizerConfig(), seed: int = 0) -> TuningResult:
    """Exhaustively score ``grid`` by k-fold CV accuracy on raw ``texts``.

    ``seed`` feeds the random forest's tree seeds. The best assignment is
    the first maximiser of the mean fold accuracy in enumeration order.
    Trials whose trainer raises are logged as failed and never selected.
    """
    texts = list(texts)
    yb = as_binary(y)
    fold_idx = stratified_kfold_indices(yb, cv.k, cv.seed)
    all_idx = np.arange(len(texts))
    folds = []
    for test in fold_idx:
        train = np.setdiff1d(all_idx, test)
        folds.append(_FoldData(texts, yb, train, np.asarray(test, dtype=np.int64), tokenizer))
    points = grid.points()

    trials = []
    if grid.kind in ("svm", "rf"):
        try:
            all_scores = _evaluate_svm(points, folds) if grid.kind == "svm" else _evaluate_rf(points, folds, seed)
        except (ClassifierError, ValueError, TextprocError) as exc:
            logger.warning("batched %s evaluation failed (%s); scoring trials one by one", grid.kind, exc)
            all_scores = None
        if all_scores is not None:
            trials = [Trial(p, s, float(np.mean(s))) for p, s in zip(points, all_scores)]
    if not trials:
        for p in points:
            try:
                s = _evaluate_generic(grid.kind, [p], folds, seed)[0]
                trials.append(Trial(p, s, float(np.mean(s))))
            except (ClassifierError, ValueError, TextprocError) as exc:
                logger.warning("trial %s failed: %s", p, exc)
                trials.append(Trial(p, [], None, f"{type(exc).__name__}: {exc}"))
    ok = [t for t in trials if not t.failed]
    if not ok:
        raise ClassifierError("every grid point failed")
    best = ok[0]
    for t in ok[1:]:
        if t.mean > best.mean:
            best = t
    return TuningResult(grid.kind, dict(best.params), best.mean, trials, cv.k, cv.seed)
