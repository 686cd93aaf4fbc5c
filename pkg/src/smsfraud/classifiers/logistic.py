"""L2-regularised logistic regression trained by batch gradient descent."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ._common import as_binary, as_matrix, check_two_classes

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class LogisticModel:
    weights: np.ndarray
    bias: float
    l2_lambda: float
    tol: float = 1e-6
    max_iter: int = 5000
    converged: bool = True
    n_iter: int = 0
    loss_history: tuple = field(default=(), repr=False)

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    def decision(self, X) -> np.ndarray:
        return np.atleast_2d(X) @ self.weights + self.bias

    def proba(self, X) -> np.ndarray:
        return expit(self.decision(X))

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "bias": self.bias, "l2_lambda": self.l2_lambda,
                "tol": self.tol, "max_iter": self.max_iter, "converged": self.converged, "n_iter": self.n_iter}

    @classmethod
    def from_dict(cls, d: dict) -> "LogisticModel":
        return cls(np.asarray(d["weights"], dtype=float), float(d["bias"]), float(d["l2_lambda"]),
                   float(d["tol"]), int(d["max_iter"]), bool(d["converged"]), int(d["n_iter"]))


def loss_and_grad(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2_lambda: float):
    """Mean log-loss plus ``l2_lambda / 2 * ||w||^2`` and its gradient ``(dw, db)``."""
    z = X @ w + b
    loss = np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2_lambda * np.dot(w, w)
    r = (expit(z) - y) / len(y)
    return loss, X.T @ r + l2_lambda * w, float(r.sum())


def train_logistic(X, y, l2_lambda: float | None = None, C: float = 1.0, tol: float = 1e-6,
                   max_iter: int = 5000) -> LogisticModel:
    """Gradient descent with step doubling on success and halving on Armijo failure.

    ``l2_lambda`` defaults to ``1 / (C * n)``. Stops once the gradient
    infinity-norm drops below ``tol``; hitting ``max_iter`` only logs a
    warning and marks the model as not converged.
    """
    X = as_matrix(X)
    y = as_binary(y).astype(float)
    check_two_classes(y.astype(np.int64))
    n, V = X.shape
    lam = 1.0 / (C * n) if l2_lambda is None else float(l2_lambda)
    if lam < 0:
        raise ValueError("l2_lambda must be >= 0")
    w = np.zeros(V)
    b = 0.0
    f, gw, gb = loss_and_grad(w, b, X, y, lam)
    history = [f]
    step = 1.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        gnorm = max(float(np.abs(gw).max(initial=0.0)), abs(gb))
        if gnorm < tol:
            converged = True
            it -= 1
            break
        sq = float(np.dot(gw, gw) + gb * gb)
        while True:
            w_new = w - step * gw
            b_new = b - step * gb
            f_new, gw_new, gb_new = loss_and_grad(w_new, b_new, X, y, lam)
            if f_new <= f - 0.5 * step * sq:
                break
            step *= 0.5
            if step < 1e-30:
                break
        if step < 1e-30:
            # no descent possible at machine precision
            converged = gnorm < 1e3 * tol
            break
        w, b, f, gw, gb = w_new, b_new, f_new, gw_new, gb_new
        history.append(f)
        step *= 2.0
    else:
        converged = max(float(np.abs(gw).max(initial=0.0)), abs(gb)) < tol
    if not converged:
        logger.warning("logistic regression stopped after %d iterations without reaching tol=%g", it, tol)
    return LogisticModel(w, float(b), lam, tol, max_iter, converged, it, tuple(history))
