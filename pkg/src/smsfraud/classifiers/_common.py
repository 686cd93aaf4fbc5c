from __future__ import annotations

import numpy as np

from ..labels import Label


class ClassifierError(Exception):
    pass


class SingleClass(ClassifierError):
    pass


class DimensionMismatch(ClassifierError):
    pass


def as_binary(y) -> np.ndarray:
    """Labels (``Label`` members or 0/1) as an int array with fraud = 1."""
    y = list(y)
    if y and isinstance(y[0], Label):
        return np.array([1 if v is Label.FRAUD else 0 for v in y], dtype=np.int64)
    arr = np.asarray(y, dtype=np.int64)
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError("binary labels must be 0/1")
    return arr


def check_two_classes(y: np.ndarray) -> None:
    if y.size == 0 or y.min() == y.max():
        raise SingleClass("training data must contain both classes")


def as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be a 2-d array")
    return X
