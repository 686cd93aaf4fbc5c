"""Soft-margin kernel SVM solved with sequential minimal optimisation.

The dual ``min 1/2 a'Qa - sum(a)`` s.t. ``0 <= a <= C``, ``y'a = 0`` is
solved by repeatedly optimising the maximal-violating pair chosen with
second-order working-set selection. Training stops when the KKT gap
``max_{I_up} -y G - min_{I_low} -y G`` falls below ``tol``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numba
import numpy as np

from ._common import as_binary, as_matrix, check_two_classes

logger = logging.getLogger(__name__)

KERNELS = ("linear", "rbf", "sigmoid")
SV_ALPHA_MIN = 1e-9
_TAU = 1e-12


def resolve_gamma(gamma, X: np.ndarray) -> float:
    if gamma == "scale":
        var = float(np.var(X))
        return 1.0 / (X.shape[1] * var) if var > 0 else 1.0
    return float(gamma)


def kernel_matrix(kernel: str, gamma: float, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    dots = A @ B.T
    if kernel == "linear":
        return dots
    if kernel == "rbf":
        sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * dots
        return np.exp(-gamma * np.maximum(sq, 0.0))
    if kernel == "sigmoid":
        return np.tanh(gamma * dots)
    raise ValueError(f"unknown kernel {kernel!r}")


def kernel_eval(kernel: str, gamma: float, x, z) -> float:
    """Kernel value for two sparse ``FeatureVector`` objects."""
    if kernel == "linear":
        return x.dot(z)
    if kernel == "rbf":
        sq = x.dot(x) + z.dot(z) - 2.0 * x.dot(z)
        return float(np.exp(-gamma * max(sq, 0.0)))
    if kernel == "sigmoid":
        return float(np.tanh(gamma * x.dot(z)))
    raise ValueError(f"unknown kernel {kernel!r}")


@numba.njit(cache=True)
def _smo(K, y, C, tol, max_iter):
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    QD = np.empty(n)
    for t in range(n):
        QD[t] = K[t, t]
    it = 0
    converged = False
    while it < max_iter:
        # i: maximal violator in I_up
        gmax = -np.inf
        i = -1
        for t in range(n):
            if y[t] > 0:
                if alpha[t] < C and -G[t] >= gmax:
                    gmax = -G[t]
                    i = t
            else:
                if alpha[t] > 0 and G[t] >= gmax:
                    gmax = G[t]
                    i = t
        gmax2 = -np.inf
        j = -1
        best = np.inf
        for t in range(n):
            if y[t] > 0:
                if alpha[t] > 0:
                    if G[t] >= gmax2:
                        gmax2 = G[t]
                    diff = gmax + G[t]
                else:
                    continue
            else:
                if alpha[t] < C:
                    if -G[t] >= gmax2:
                        gmax2 = -G[t]
                    diff = gmax - G[t]
                else:
                    continue
            if i >= 0 and diff > 0:
                quad = QD[i] + QD[t] - 2.0 * K[i, t]
                if quad <= 0:
                    quad = _TAU
                obj = -(diff * diff) / quad
                if obj <= best:
                    best = obj
                    j = t
        if i < 0 or j < 0 or gmax + gmax2 < tol:
            converged = True
            break
        it += 1
        yi = y[i]
        yj = y[j]
        Qij = yi * yj * K[i, j]
        ai = alpha[i]
        aj = alpha[j]
        if yi != yj:
            quad = QD[i] + QD[j] + 2.0 * Qij
            if quad <= 0:
                quad = _TAU
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            quad = QD[i] + QD[j] - 2.0 * Qij
            if quad <= 0:
                quad = _TAU
            delta = (G[i] - G[j]) / quad
            s = ai + aj
            alpha[i] -= delta
            alpha[j] += delta
            if s > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = s - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = s
            if s > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = s - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = s
        dai = alpha[i] - ai
        daj = alpha[j] - aj
        for t in range(n):
            G[t] += y[t] * (yi * K[t, i] * dai + yj * K[t, j] * daj)

    # offset from free vectors, or the midpoint of the feasible interval
    ub = np.inf
    lb = -np.inf
    nfree = 0
    sfree = 0.0
    for t in range(n):
        yg = y[t] * G[t]
        if alpha[t] >= C:
            if y[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif alpha[t] <= 0:
            if y[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            nfree += 1
            sfree += yg
    if nfree > 0:
        rho = sfree / nfree
    else:
        rho = (ub + lb) / 2.0
    return alpha, rho, it, converged


def smo_solve(K: np.ndarray, y_pm: np.ndarray, C: float, tol: float, max_iter: int):
    """Solve the dual for a precomputed kernel matrix; ``y_pm`` in {-1, +1}.

    Returns ``(alpha, b, n_iter, converged)`` where the decision function is
    ``sum_i alpha_i y_i K(x_i, x) + b``.
    """
    K = np.ascontiguousarray(K, dtype=np.float64)
    y_pm = np.ascontiguousarray(y_pm, dtype=np.float64)
    alpha, rho, it, conv = _smo(K, y_pm, float(C), float(tol), int(max_iter))
    return alpha, -rho, it, conv


@dataclass(frozen=True, eq=False)
class SvmModel:
    kernel: str
    C: float
    gamma: float
    tol: float
    support_vectors: np.ndarray  # (n_sv, V)
    dual_coef: np.ndarray  # alpha_i * y_i
    bias: float
    converged: bool = True
    n_iter: int = 0

    @property
    def dim(self) -> int:
        return self.support_vectors.shape[1]

    def alphas(self) -> np.ndarray:
        return np.abs(self.dual_coef)

    def to_dict(self) -> dict:
        return {"kernel": self.kernel, "C": self.C, "gamma": self.gamma, "tol": self.tol,
                "support_vectors": self.support_vectors.tolist(), "dual_coef": self.dual_coef.tolist(),
                "bias": self.bias, "converged": self.converged, "n_iter": self.n_iter,
                "dim": self.dim}

    @classmethod
    def from_dict(cls, d: dict) -> "SvmModel":
        sv = np.asarray(d["support_vectors"], dtype=float).reshape(-1, int(d["dim"]))
        return cls(d["kernel"], float(d["C"]), float(d["gamma"]), float(d["tol"]), sv,
                   np.asarray(d["dual_coef"], dtype=float), float(d["bias"]), bool(d["converged"]),
                   int(d["n_iter"]))


def train_svm(X, y, kernel: str = "rbf", C: float = 1.0, gamma="scale", tol: float = 1e-3,
              max_iter: int | None = None, K: np.ndarray | None = None) -> SvmModel:
    """Fit a binary SVM (fraud = +1).

    ``gamma="scale"`` resolves to ``1 / (V * Var(X))``. ``K`` may carry a
    precomputed training kernel matrix to share across fits.
    """
    if kernel not in KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}")
    if not C > 0:
        raise ValueError("C must be > 0")
    X = as_matrix(X)
    yb = as_binary(y)
    check_two_classes(yb)
    g = resolve_gamma(gamma, X)
    if kernel != "linear" and not g > 0:
        raise ValueError("gamma must be > 0")
    if K is None:
        K = kernel_matrix(kernel, g, X, X)
    n = len(yb)
    if max_iter is None:
        max_iter = max(10_000_000, 100 * n)
    y_pm = np.where(yb == 1, 1.0, -1.0)
    alpha, b, it, conv = smo_solve(K, y_pm, C, tol, max_iter)
    if not conv:
        logger.warning("SMO hit max_iter=%d before reaching tol=%g", max_iter, tol)
    sv = alpha > SV_ALPHA_MIN
    return SvmModel(kernel, float(C), g, float(tol), X[sv].copy(), (alpha * y_pm)[sv], float(b), bool(conv), int(it))


def svm_decision(m: SvmModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if len(m.dual_coef) == 0:
        return np.full(X.shape[0], m.bias)
    return kernel_matrix(m.kernel, m.gamma, X, m.support_vectors) @ m.dual_coef + m.bias
