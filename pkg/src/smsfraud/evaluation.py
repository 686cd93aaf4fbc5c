"""Metrics and evaluation reports (fraud is the positive class)."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .labels import Label


class MetricError(ValueError):
    pass


class LengthMismatch(MetricError):
    pass


class EmptyInput(MetricError):
    pass


class DegenerateClass(MetricError):
    pass


class SingleClassAuc(MetricError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def incorrect(self) -> int:
        return self.fp + self.fn


@dataclass(frozen=True)
class ClassBlock:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class ClassMetrics:
    fraud: ClassBlock
    normal: ClassBlock
    accuracy: float


def confusion(y_true: Sequence[Label], y_pred: Sequence[Label]) -> ConfusionMatrix:
    if len(y_true) != len(y_pred):
        raise LengthMismatch(f"{len(y_true)} truths vs {len(y_pred)} predictions")
    if len(y_true) == 0:
        raise EmptyInput("confusion matrix of nothing")
    tp = fp = tn = fn = 0
    for t, p in zip(y_true, y_pred):
        if t is Label.FRAUD:
            if p is Label.FRAUD:
                tp += 1
            else:
                fn += 1
        elif p is Label.FRAUD:
            fp += 1
        else:
            tn += 1
    return ConfusionMatrix(tp, fp, tn, fn)


def _ratio(a: int, b: int) -> float:
    return a / b if b else 0.0


def _block(tp: int, fp: int, fn: int) -> ClassBlock:
    p = _ratio(tp, tp + fp)
    r = _ratio(tp, tp + fn)
    f1 = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return ClassBlock(p, r, f1)


def class_metrics(cm: ConfusionMatrix) -> ClassMetrics:
    if cm.total == 0:
        raise EmptyInput("no evaluated records")
    return ClassMetrics(
        fraud=_block(cm.tp, cm.fp, cm.fn),
        normal=_block(cm.tn, cm.fn, cm.fp),
        accuracy=(cm.tp + cm.tn) / cm.total,
    )


def rates(cm: ConfusionMatrix):
    """``(fp_pct, fn_pct)``: share of normal SMSs flagged and share of fraud SMSs missed, in percent."""
    if cm.fp + cm.tn == 0 or cm.fn + cm.tp == 0:
        raise DegenerateClass("both classes must be present to compute FP/FN rates")
    return 100.0 * cm.fp / (cm.fp + cm.tn), 100.0 * cm.fn / (cm.fn + cm.tp)


def auc_roc(y_true: Sequence[Label], scores: Sequence[float]) -> float:
    """Mann-Whitney AUC with average ranks for tied scores."""
    if len(y_true) != len(scores):
        raise LengthMismatch(f"{len(y_true)} truths vs {len(scores)} scores")
    pos = np.array([t is Label.FRAUD for t in y_true])
    n_f = int(pos.sum())
    n_n = len(pos) - n_f
    if n_f == 0 or n_n == 0:
        raise SingleClassAuc("AUC needs both classes")
    ranks = rankdata(np.asarray(scores, dtype=float), method="average")
    return float((ranks[pos].sum() - n_f * (n_f + 1) / 2.0) / (n_f * n_n))


@dataclass
class EvaluationReport:
    dataset: str
    model: str
    tuned: bool
    hyperparameters: dict
    confusion: ConfusionMatrix
    metrics: ClassMetrics
    auc_roc: Optional[float]
    fp_pct: Optional[float]
    fn_pct: Optional[float]
    misclassified: list = field(default_factory=list)  # {"sms_id", "truth", "prediction"}
    fingerprint: dict = field(default_factory=dict)

    @property
    def variant(self) -> str:
        return f"{self.model} best" if self.tuned else self.model

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "model": self.model,
            "tuned": self.tuned,
            "hyperparameters": self.hyperparameters,
            "confusion": asdict(self.confusion),
            "metrics": asdict(self.metrics),
            "auc_roc": self.auc_roc,
            "fp_pct": self.fp_pct,
            "fn_pct": self.fn_pct,
            "misclassified": self.misclassified,
            "fingerprint": self.fingerprint,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationReport":
        m = d["metrics"]
        return cls(
            d["dataset"], d["model"], bool(d["tuned"]), d["hyperparameters"],
            ConfusionMatrix(**d["confusion"]),
            ClassMetrics(ClassBlock(**m["fraud"]), ClassBlock(**m["normal"]), m["accuracy"]),
            d["auc_roc"], d["fp_pct"], d["fn_pct"], list(d["misclassified"]), dict(d["fingerprint"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "EvaluationReport":
        return cls.from_dict(json.loads(text))

    def __eq__(self, other) -> bool:
        return isinstance(other, EvaluationReport) and self.to_dict() == other.to_dict()


REPORT_SCHEMA = {
    "type": "object",
    "required": ["dataset", "model", "tuned", "hyperparameters", "confusion", "metrics", "auc_roc",
                 "fp_pct", "fn_pct", "misclassified", "fingerprint"],
    "properties": {
        "dataset": {"type": "string"},
        "model": {"type": "string", "enum": ["NB", "LR", "SVM", "RF"]},
        "tuned": {"type": "boolean"},
        "hyperparameters": {"type": "object"},
        "confusion": {
            "type": "object", "required": ["tp", "fp", "tn", "fn"],
            "properties": {k: {"type": "integer", "minimum": 0} for k in ("tp", "fp", "tn", "fn")},
        },
        "metrics": {
            "type": "object", "required": ["fraud", "normal", "accuracy"],
            "properties": {
                "accuracy": {"type": "number", "minimum": 0, "maximum": 1},
                "fraud": {"$ref": "#/$defs/block"},
                "normal": {"$ref": "#/$defs/block"},
            },
        },
        "auc_roc": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
        "fp_pct": {"type": ["number", "null"], "minimum": 0, "maximum": 100},
        "fn_pct": {"type": ["number", "null"], "minimum": 0, "maximum": 100},
        "misclassified": {
            "type": "array",
            "items": {"type": "object", "required": ["sms_id", "truth", "prediction"],
                      "properties": {"truth": {"enum": ["fraud", "normal"]},
                                     "prediction": {"enum": ["fraud", "normal"]}}},
        },
        "fingerprint": {"type": "object"},
    },
    "$defs": {
        "block": {
            "type": "object", "required": ["precision", "recall", "f1"],
            "properties": {k: {"type": "number", "minimum": 0, "maximum": 1} for k in ("precision", "recall", "f1")},
        },
    },
}


def build_report(dataset: str, model: str, tuned: bool, y_true: Sequence[Label], y_pred: Sequence[Label],
                 scores: Sequence[float], sms_ids: Sequence[str], hyperparameters: Optional[dict] = None,
                 fingerprint: Optional[dict] = None) -> EvaluationReport:
    if not (len(y_true) == len(y_pred) == len(scores) == len(sms_ids)):
        raise LengthMismatch("truths, predictions, scores and ids must align")
    cm = confusion(y_true, y_pred)
    fp_pct, fn_pct = rates(cm)
    wrong = [{"sms_id": i, "truth": t.value, "prediction": p.value}
             for i, t, p in zip(sms_ids, y_true, y_pred) if t is not p]
    return EvaluationReport(
        dataset=dataset, model=model, tuned=tuned, hyperparameters=dict(hyperparameters or {}),
        confusion=cm, metrics=class_metrics(cm), auc_roc=auc_roc(y_true, [float(s) for s in scores]),
        fp_pct=fp_pct, fn_pct=fn_pct, misclassified=wrong, fingerprint=dict(fingerprint or {}),
    )


# -- tables ---------------------------------------------------------------

TABLE6_COLUMNS = ("Dataset", "Model", "Accuracy", "Fraud P", "Fraud R", "Fraud F1", "Normal P", "Normal R",
                  "Normal F1", "AUC-ROC", "Incorrect", "FN", "FP", "FP %", "FN %")
VARIANT_ORDER = ("NB", "NB best", "SVM", "SVM best", "LR", "RF", "RF best")


def _sort_key(r: EvaluationReport, dataset_order):
    ds = dataset_order.index(r.dataset) if r.dataset in dataset_order else len(dataset_order)
    v = VARIANT_ORDER.index(r.variant) if r.variant in VARIANT_ORDER else len(VARIANT_ORDER)
    return ds, r.dataset, v


def table6_rows(reports: Sequence[EvaluationReport], dataset_order=()) -> list:
    rows = []
    for r in sorted(reports, key=lambda r: _sort_key(r, list(dataset_order))):
        m = r.metrics
        rows.append([
            r.dataset, r.variant, f"{m.accuracy:.2f}", f"{m.fraud.precision:.2f}", f"{m.fraud.recall:.2f}",
            f"{m.fraud.f1:.2f}", f"{m.normal.precision:.2f}", f"{m.normal.recall:.2f}", f"{m.normal.f1:.2f}",
            f"{r.auc_roc:.3f}", str(r.confusion.incorrect), str(r.confusion.fn), str(r.confusion.fp),
            f"{r.fp_pct:.1f}", f"{r.fn_pct:.1f}",
        ])
    return rows


def render_text(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(h)), *(len(str(row[i])) for row in rows)) if rows else len(str(h))
              for i, h in enumerate(header)]
    lines = ["  ".join(str(h).ljust(w) for h, w in zip(header, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(str(c).ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


def render_csv(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def table8_rows(reports: Sequence[EvaluationReport], dataset_order=()):
    """FP%/FN% grid: two rows per dataset, one column per model variant."""
    by = {(r.dataset, r.variant): r for r in reports}
    datasets = [d for d in dataset_order if any(k[0] == d for k in by)]
    datasets += sorted({k[0] for k in by} - set(datasets))
    variants = [v for v in VARIANT_ORDER if any(k[1] == v for k in by)]
    header = ["Dataset", "Rate", *variants]
    rows = []
    for d in datasets:
        for label, attr in (("FP, %", "fp_pct"), ("FN, %", "fn_pct")):
            cells = []
            for v in variants:
                r = by.get((d, v))
                cells.append("N/A" if r is None or getattr(r, attr) is None else f"{getattr(r, attr):.1f}")
            rows.append([d, label, *cells])
    return header, rows
