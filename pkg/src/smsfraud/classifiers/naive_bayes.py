"""Gaussian naive Bayes over dense feature matrices."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ._common import as_binary, as_matrix, check_two_classes


@dataclass(frozen=True, eq=False)
class GaussianNbModel:
    priors: np.ndarray  # (2,), index 0 = normal, 1 = fraud
    means: np.ndarray  # (2, V)
    variances: np.ndarray  # (2, V), smoothing already added
    var_smoothing: float
    epsilon: float

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def to_dict(self) -> dict:
        return {
            "priors": self.priors.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
            "var_smoothing": self.var_smoothing,
            "epsilon": self.epsilon,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianNbModel":
        return cls(np.asarray(d["priors"], dtype=float), np.asarray(d["means"], dtype=float),
                   np.asarray(d["variances"], dtype=float), float(d["var_smoothing"]), float(d["epsilon"]))


def train_gaussian_nb(X, y, var_smoothing: float = 1e-9) -> GaussianNbModel:
    """Fit per-class feature means and variances.

    Every variance is inflated by ``var_smoothing * max_j Var(X[:, j])`` so
    features that are constant inside a class still get a positive width.
    """
    if not var_smoothing > 0:
        raise ValueError("var_smoothing must be > 0")
    X = as_matrix(X)
    y = as_binary(y)
    check_two_classes(y)
    eps = var_smoothing * float(np.var(X, axis=0).max())
    means = np.empty((2, X.shape[1]))
    variances = np.empty((2, X.shape[1]))
    priors = np.empty(2)
    for c in (0, 1):
        Xc = X[y == c]
        means[c] = Xc.mean(axis=0)
        variances[c] = Xc.var(axis=0) + eps
        priors[c] = len(Xc) / len(X)
    if not (variances > 0).all():
        # all-constant training matrix: eps is 0
        variances = np.where(variances > 0, variances, np.finfo(float).tiny)
    return GaussianNbModel(priors, means, variances, float(var_smoothing), eps)


def joint_log_likelihood(m: GaussianNbModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = np.empty((X.shape[0], 2))
    for c in (0, 1):
        norm = -0.5 * np.sum(np.log(2.0 * np.pi * m.variances[c]))
        out[:, c] = np.log(m.priors[c]) + norm - 0.5 * np.sum((X - m.means[c]) ** 2 / m.variances[c], axis=1)
    return out


def nb_posterior(m: GaussianNbModel, X) -> np.ndarray:
    """Posterior ``[p_fraud, p_normal]`` per row (shape ``(n, 2)``)."""
    jll = joint_log_likelihood(m, X)
    p = np.exp(jll - logsumexp(jll, axis=1, keepdims=True))
    return p[:, ::-1]
