"""JSON model bundles.

Floats are written with ``repr`` precision by the json module, so every
weight survives a save/load round trip exactly and reloaded models score
inputs bit-for-bit identically.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .classifiers import TrainedClassifier

FORMAT_NAME = "smsfraud-model"
FORMAT_VERSION = 1


class BundleError(Exception):
    pass


class VersionMismatch(BundleError):
    pass


class CorruptBundle(BundleError):
    pass


@dataclass(frozen=True, eq=False)
class ModelBundle:
    classifier: TrainedClassifier
    fingerprint: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    @property
    def tfidf(self):
        return self.classifier.tfidf


def save_model(bundle: ModelBundle, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": FORMAT_NAME,
        "format_version": bundle.format_version,
        "fingerprint": bundle.fingerprint,
        "classifier": bundle.classifier.to_dict(),
    }
    path.write_text(json.dumps(payload, sort_keys=True, allow_nan=False), encoding="utf-8")
    return path


def load_model(path) -> ModelBundle:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptBundle(f"{path}: not a model bundle ({exc})") from None
    if not isinstance(payload, dict) or payload.get("format") != FORMAT_NAME:
        raise CorruptBundle(f"{path}: missing bundle header")
    if payload.get("format_version") != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: bundle version {payload.get('format_version')!r}, expected {FORMAT_VERSION}")
    try:
        clf = TrainedClassifier.from_dict(payload["classifier"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptBundle(f"{path}: malformed classifier ({exc})") from None
    if clf.tfidf is None or clf.tfidf.dim != clf.dim:
        raise CorruptBundle(f"{path}: TF-IDF model missing or inconsistent with classifier")
    return ModelBundle(clf, dict(payload.get("fingerprint", {})), FORMAT_VERSION)
