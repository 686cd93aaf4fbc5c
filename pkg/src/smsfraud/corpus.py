"""Loading, validating, deduplicating, merging, splitting and summarising SMS datasets.

Datasets are read from UTF-8 CSV files. The canonical column set is
``sms_id,text,label,source,parent_id,dataset_tag``; files with a different
header are adapted through a ``column_map`` (canonical field -> header name).
Only ``text`` and ``label`` are mandatory.
"""
from __future__ import annotations

import csv
import enum
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional

import numpy as np

from .labels import Label
from .textproc import TokenizerConfig, tokenize

logger = logging.getLogger(__name__)

CANONICAL_COLUMNS = ("sms_id", "text", "label", "source", "parent_id", "dataset_tag")


class CorpusError(Exception):
    """Base class for data errors raised while building datasets."""


class MissingColumn(CorpusError):
    pass


class RowError(CorpusError):
    def __init__(self, row: int, message: str):
        self.row = row
        super().__init__(f"row {row}: {message}")


class BadLabel(RowError):
    pass


class EmptyText(RowError):
    pass


class DuplicateId(RowError):
    pass


class ClassTooSmall(CorpusError):
    pass


class Source(enum.Enum):
    CROWD = "crowd"
    TELCO = "telco"
    AUGMENTED = "augmented"


@dataclass(frozen=True)
class SmsRecord:
    sms_id: str
    text: str
    label: Label
    source: Source = Source.CROWD
    parent_id: Optional[str] = None
    dataset_tag: str = ""

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError(f"record {self.sms_id!r} has empty text")
        if (self.parent_id is not None) != (self.source is Source.AUGMENTED):
            raise ValueError(
                f"record {self.sms_id!r}: parent_id must be set exactly when source is augmented"
            )


@dataclass(frozen=True)
class Dataset:
    records: tuple
    tag: str
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen = set()
        for i, r in enumerate(self.records, start=1):
            if r.sms_id in seen:
                raise DuplicateId(i, f"duplicate sms_id {r.sms_id!r}")
            seen.add(r.sms_id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def texts(self) -> list:
        return [r.text for r in self.records]

    @property
    def labels(self) -> list:
        return [r.label for r in self.records]

    @property
    def ids(self) -> list:
        return [r.sms_id for r in self.records]

    def count(self, label: Label) -> int:
        return sum(1 for r in self.records if r.label is label)

    def subset(self, indices: Iterable[int], tag: Optional[str] = None) -> "Dataset":
        return Dataset(tuple(self.records[i] for i in indices), tag or self.tag, dict(self.metadata))


@dataclass(frozen=True)
class DatasetStats:
    n_total: int
    n_fraud: int
    n_normal: int
    tokens_total: int
    tokens_fraud: int
    tokens_normal: int
    avg_tokens_any: float
    avg_tokens_fraud: float
    avg_tokens_normal: float
    unique_tokens: int


def _normalize_ws(text: str) -> str:
    return " ".join(text.split())


def load_dataset(path, tag: str, column_map: Optional[Mapping[str, str]] = None,
                 default_source: Source = Source.CROWD) -> Dataset:
    """Read a labelled SMS CSV into a :class:`Dataset`.

    Parameters
    ----------
    path : path-like
        UTF-8 CSV file with a header row.
    tag : str
        Dataset tag stored on the dataset and on every record.
    column_map : mapping, optional
        Canonical field name -> column header. Unmapped fields fall back to
        their canonical name when present in the header.
    default_source : Source
        Provenance used when the file has no ``source`` column.

    Raises
    ------
    MissingColumn, BadLabel, EmptyText, DuplicateId
        Row numbers are 1-based and count data rows only.
    """
    path = Path(path)
    cmap = {name: name for name in CANONICAL_COLUMNS}
    cmap.update(column_map or {})
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for required in ("text", "label"):
            if cmap[required] not in header:
                raise MissingColumn(f"{path}: column {cmap[required]!r} (for {required}) not in header {header}")
        present = {k: v for k, v in cmap.items() if v in header}

        records = []
        seen = set()
        for row_no, row in enumerate(reader, start=1):
            text = (row.get(present["text"]) or "").strip()
            if not text:
                raise EmptyText(row_no, f"{path}: empty text")
            try:
                label = Label.parse(row.get(present["label"]) or "")
            except ValueError:
                raise BadLabel(row_no, f"{path}: bad label {row.get(present['label'])!r}") from None
            sms_id = (row.get(present["sms_id"]) or "").strip() if "sms_id" in present else ""
            if not sms_id:
                sms_id = f"{tag}-{row_no:05d}"
            if sms_id in seen:
                raise DuplicateId(row_no, f"{path}: duplicate sms_id {sms_id!r}")
            seen.add(sms_id)
            source = default_source
            if "source" in present and (row.get(present["source"]) or "").strip():
                source = Source(row[present["source"]].strip().lower())
            parent = None
            if "parent_id" in present:
                parent = (row.get(present["parent_id"]) or "").strip() or None
            try:
                records.append(SmsRecord(sms_id, text, label, source, parent, tag))
            except ValueError as exc:
                raise RowError(row_no, f"{path}: {exc}") from None
    logger.info("loaded %s: %d records from %s", tag, len(records), path)
    return Dataset(tuple(records), tag, {"path": str(path)})


def save_dataset(d: Dataset, path) -> None:
    """Write ``d`` in the canonical CSV schema."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CANONICAL_COLUMNS)
        for r in d.records:
            w.writerow([r.sms_id, r.text, r.label.value, r.source.value, r.parent_id or "", r.dataset_tag])


def dedupe(d: Dataset) -> Dataset:
    """Drop records whose whitespace-normalised text was already seen (case-sensitive)."""
    seen = set()
    kept = []
    for r in d.records:
        key = _normalize_ws(r.text)
        if key in seen:
            continue
        seen.add(key)
        kept.append(r)
    return Dataset(tuple(kept), d.tag, dict(d.metadata))


def merge_datasets(a: Dataset, b: Dataset, new_tag: str) -> Dataset:
    """Concatenate ``a`` and ``b``; ids in ``b`` that collide with ``a`` get ``b.tag`` as prefix."""
    taken = {r.sms_id for r in a.records}
    out = [replace(r, dataset_tag=new_tag) for r in a.records]
    for r in b.records:
        sms_id = r.sms_id if r.sms_id not in taken else f"{b.tag}:{r.sms_id}"
        taken.add(sms_id)
        out.append(replace(r, sms_id=sms_id, dataset_tag=new_tag))
    return Dataset(tuple(out), new_tag, {"merged_from": f"{a.tag}+{b.tag}"})


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split(d: Dataset, test_fraction: float, seed: int):
    """Split ``d`` into (train, test) with per-class test counts ``round(count * fraction)``.

    Each class keeps at least one record on each side. Both parts keep ingest order.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    test_idx = []
    for label in (Label.FRAUD, Label.NORMAL):
        idx = np.array([i for i, r in enumerate(d.records) if r.label is label], dtype=np.int64)
        if len(idx) < 2:
            raise ClassTooSmall(f"{d.tag}: class {label.value} has {len(idx)} records, need >= 2")
        n_test = min(max(_round_half_up(len(idx) * test_fraction), 1), len(idx) - 1)
        test_idx.extend(rng.permutation(idx)[:n_test].tolist())
    test_set = set(test_idx)
    train = [i for i in range(len(d)) if i not in test_set]
    test = sorted(test_set)
    return d.subset(train), d.subset(test)


def compute_stats(d: Dataset, tok: Optional[TokenizerConfig] = None) -> DatasetStats:
    tok = tok or TokenizerConfig()
    counts = {Label.FRAUD: [0, 0], Label.NORMAL: [0, 0]}
    vocab = set()
    for r in d.records:
        toks = tokenize(r.text, tok)
        counts[r.label][0] += 1
        counts[r.label][1] += len(toks)
        vocab.update(toks)
    nf, tf = counts[Label.FRAUD]
    nn, tn = counts[Label.NORMAL]

    def avg(t, n):
        return t / n if n else 0.0

    return DatasetStats(
        n_total=nf + nn, n_fraud=nf, n_normal=nn,
        tokens_total=tf + tn, tokens_fraud=tf, tokens_normal=tn,
        avg_tokens_any=avg(tf + tn, nf + nn), avg_tokens_fraud=avg(tf, nf),
        avg_tokens_normal=avg(tn, nn), unique_tokens=len(vocab),
    )
