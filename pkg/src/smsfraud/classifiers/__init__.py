"""Four from-scratch classifiers behind one predict/score interface.

Scores are ``P(fraud)`` for naive Bayes and logistic regression, the signed
margin for the SVM, and the fraction of trees voting fraud for the random
forest. ``predict`` returns fraud exactly when the score reaches the
variant's threshold (0 for the SVM, 0.5 otherwise).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..labels import Label
from ..textproc import FeatureVector, TfidfModel, transform_many
from ._common import ClassifierError, DimensionMismatch, SingleClass, as_binary
from .forest import DecisionTree, RandomForestModel, train_random_forest
from .logistic import LogisticModel, loss_and_grad, train_logistic
from .naive_bayes import GaussianNbModel, nb_posterior, train_gaussian_nb
from .svm import SvmModel, kernel_eval, kernel_matrix, svm_decision, train_svm

KINDS = ("nb", "lr", "svm", "rf")
MODEL_NAMES = {"nb": "NB", "lr": "LR", "svm": "SVM", "rf": "RF"}

_MODEL_TYPES = {"nb": GaussianNbModel, "lr": LogisticModel, "svm": SvmModel, "rf": RandomForestModel}

# untuned configurations; mirror common library defaults
BASELINE_PARAMS = {
    "nb": {"var_smoothing": 1e-9},
    "lr": {"C": 1.0, "tol": 1e-6, "max_iter": 5000},
    "svm": {"kernel": "rbf", "C": 1.0, "gamma": "scale", "tol": 1e-3},
    "rf": {"n_estimators": 100, "min_samples_split": 2, "min_samples_leaf": 1, "max_features": "sqrt",
           "max_depth": None, "bootstrap": True},
}


def threshold(kind: str) -> float:
    return 0.0 if kind == "svm" else 0.5


def train_model(kind: str, X, y, params: Optional[dict] = None, seed: int = 0):
    """Fit the raw model of ``kind`` with ``params`` (defaults: ``BASELINE_PARAMS``)."""
    p = dict(BASELINE_PARAMS[kind] if params is None else params)
    if kind == "nb":
        return train_gaussian_nb(X, y, **p)
    if kind == "lr":
        return train_logistic(X, y, **p)
    if kind == "svm":
        return train_svm(X, y, **p)
    if kind == "rf":
        p.setdefault("seed", seed)
        return train_random_forest(X, y, **p)
    raise ValueError(f"unknown classifier kind {kind!r}")


def model_scores(kind: str, model, X: np.ndarray) -> np.ndarray:
    if kind == "nb":
        return nb_posterior(model, X)[:, 0]
    if kind == "lr":
        return model.proba(X)
    if kind == "svm":
        return svm_decision(model, X)
    if kind == "rf":
        return model.fraud_fraction(X)
    raise ValueError(f"unknown classifier kind {kind!r}")


@dataclass(frozen=True, eq=False)
class TrainedClassifier:
    kind: str
    model: object
    tfidf: Optional[TfidfModel] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown classifier kind {self.kind!r}")
        if not isinstance(self.model, _MODEL_TYPES[self.kind]):
            raise TypeError(f"{self.kind} expects {_MODEL_TYPES[self.kind].__name__}")

    @property
    def dim(self) -> int:
        return self.model.dim

    @property
    def threshold(self) -> float:
        return threshold(self.kind)

    def _matrix(self, x) -> np.ndarray:
        if isinstance(x, FeatureVector):
            if x.dim != self.dim:
                raise DimensionMismatch(f"vector has dimension {x.dim}, model expects {self.dim}")
            return x.to_dense()[None, :]
        X = np.atleast_2d(np.asarray(x, dtype=float))
        if X.shape[1] != self.dim:
            raise DimensionMismatch(f"input has dimension {X.shape[1]}, model expects {self.dim}")
        return X

    def scores(self, X) -> np.ndarray:
        return model_scores(self.kind, self.model, self._matrix(X))

    def predictions(self, X) -> list:
        return [Label.FRAUD if s >= self.threshold else Label.NORMAL for s in self.scores(X)]

    def score_texts(self, texts) -> np.ndarray:
        if self.tfidf is None:
            raise ClassifierError("classifier has no TF-IDF model attached")
        texts = list(texts)
        if not texts:
            return np.zeros(0)
        return self.scores(transform_many(self.tfidf, texts))

    def predict_texts(self, texts) -> list:
        return [Label.FRAUD if s >= self.threshold else Label.NORMAL for s in self.score_texts(texts)]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params, "model": self.model.to_dict(),
                "tfidf": None if self.tfidf is None else self.tfidf.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedClassifier":
        kind = d["kind"]
        model = _MODEL_TYPES[kind].from_dict(d["model"])
        tfidf = None if d.get("tfidf") is None else TfidfModel.from_dict(d["tfidf"])
        return cls(kind, model, tfidf, dict(d.get("params", {})))


def score(m: TrainedClassifier, x) -> float:
    """Real-valued fraud score of a single feature vector."""
    return float(m.scores(x)[0])


def predict(m: TrainedClassifier, x) -> Label:
    return Label.FRAUD if score(m, x) >= m.threshold else Label.NORMAL


def fit_classifier(kind: str, X, y, params: Optional[dict] = None, tfidf: Optional[TfidfModel] = None,
                   seed: int = 0) -> TrainedClassifier:
    p = dict(BASELINE_PARAMS[kind] if params is None else params)
    if kind == "rf":
        p.setdefault("seed", seed)
    return TrainedClassifier(kind, train_model(kind, X, y, p, seed), tfidf, p)


__all__ = [
    "KINDS", "MODEL_NAMES", "BASELINE_PARAMS", "ClassifierError", "DimensionMismatch", "SingleClass",
    "DecisionTree", "GaussianNbModel", "LogisticModel", "RandomForestModel", "SvmModel", "TrainedClassifier",
    "as_binary", "fit_classifier", "kernel_eval", "kernel_matrix", "loss_and_grad", "model_scores",
    "nb_posterior", "predict", "score", "svm_decision", "threshold", "train_gaussian_nb", "train_logistic",
    "train_model", "train_random_forest", "train_svm",
]
