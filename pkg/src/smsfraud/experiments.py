"""Run configuration and the experiment matrix.

A run config is a JSON file; relative paths resolve against the file's
directory::

    {
      "seed": 7,
      "datasets": [
        {"tag": "D-CHI", "path": "D-CHI.csv", "column_map": {"text": "SMS", "label": "Label"}},
        {"tag": "telcoSMS_CHI", "path": "telco_chi.csv", "source": "telco"}
      ],
      "extended": [{"tag": "D-CHIe", "base": "D-CHI", "extra": "telcoSMS_CHI"}],
      "matrix": {"datasets": ["D-CHI", "D-CHIe"]},
      "tokenizer": {"mode": "raw", "stop_words": "none"}
    }

Every random choice derives from the master seed through
:func:`derive_seed`, so a cell's outcome does not depend on which other
cells run or in which order.
"""
from __future__ import annotations

import copy
import fnmatch
import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import plotting
from .classifiers import BASELINE_PARAMS, KINDS, MODEL_NAMES, fit_classifier
from .corpus import (CorpusError, Dataset, Source, compute_stats, dedupe, load_dataset, merge_datasets,
                     stratified_split)
from .evaluation import (TABLE6_COLUMNS, EvaluationReport, build_report, render_csv, render_text,
                         table6_rows, table8_rows)
from .labels import Label
from .textproc import (StopWordList, TokenizerConfig, TokenizerMode, derive_stop_words, english_stop_words,
                       fit_tfidf, transform_many)
from .tuning import CvConfig, ParamGrid, default_grid, grid_search

logger = logging.getLogger(__name__)

DEFAULT_MATRIX_DATASETS = ("D-CHI", "D-HT", "D-MT", "D-CHIe", "D-HTe", "D-MTe")
TUNABLE = ("nb", "svm", "rf")
STOP_WORD_CHOICES = ("none", "english", "derived", "union")


class ConfigError(Exception):
    pass


def derive_seed(master: int, *parts) -> int:
    """63-bit seed from SHA-256 of the master seed and the part labels."""
    h = hashlib.sha256(json.dumps([int(master), *[str(p) for p in parts]]).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "big") >> 1


@dataclass(frozen=True)
class DatasetSpec:
    tag: str
    path: Path
    column_map: dict = field(default_factory=dict)
    source: Source = Source.CROWD


@dataclass(frozen=True)
class Cell:
    dataset: str
    kind: str
    tuned: bool

    @property
    def variant(self) -> str:
        return "tuned" if self.tuned else "baseline"

    @property
    def cell_id(self) -> str:
        return f"{self.dataset}__{MODEL_NAMES[self.kind]}__{self.variant}"

    def matches(self, selector: str) -> bool:
        parts = (selector.split(":") + ["*", "*", "*"])[:3]
        return (fnmatch.fnmatchcase(self.dataset, parts[0])
                and fnmatch.fnmatchcase(MODEL_NAMES[self.kind].lower(), parts[1].lower())
                and fnmatch.fnmatchcase(self.variant, parts[2].lower()))


@dataclass
class RunConfig:
    seed: int
    datasets: list
    extended: list = field(default_factory=list)
    matrix_datasets: list = field(default_factory=list)
    models: list = field(default_factory=lambda: list(KINDS))
    tuned_models: list = field(default_factory=lambda: list(TUNABLE))
    tokenizer: dict = field(default_factory=lambda: {"mode": "raw", "stop_words": "none", "df_threshold": 0.5})
    test_fraction: float = 0.2
    cv_k: int = 5
    baseline: dict = field(default_factory=dict)
    grids: dict = field(default_factory=dict)
    ablation_arms: list = field(default_factory=list)
    augmentation: Optional[dict] = None
    dedupe: bool = False
    output_dir: Optional[Path] = None
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> "RunConfig":
        base = Path(base_dir)
        if "seed" not in data:
            raise ConfigError("config must set an explicit integer 'seed'")
        specs = []
        for d in data.get("datasets", []):
            try:
                specs.append(DatasetSpec(d["tag"], (base / d["path"]).resolve(), dict(d.get("column_map", {})),
                                         Source(d.get("source", "crowd"))))
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"bad dataset entry {d!r}: {exc}") from None
        matrix = data.get("matrix", {})
        tags = [s.tag for s in specs] + [e["tag"] for e in data.get("extended", [])]
        default_md = [t for t in DEFAULT_MATRIX_DATASETS if t in tags]
        arms = data.get("ablation", {}).get("arms") or [
            {"name": "raw", "tokenizer": {"mode": "raw", "stop_words": "none"}},
            {"name": "full", "tokenizer": {"mode": "full", "stop_words": "union"}},
        ]
        aug = copy.deepcopy(data.get("augmentation"))
        if aug:
            for key in ("input", "lexicon", "output"):
                if aug.get(key) and aug[key] != "builtin" and not any(s.tag == aug[key] for s in specs):
                    aug[key] = str((base / aug[key]).resolve())
        out = data.get("output_dir")
        try:
            cfg = cls(
                seed=int(data["seed"]),
                datasets=specs,
                extended=list(data.get("extended", [])),
                matrix_datasets=list(matrix.get("datasets", default_md)),
                models=list(matrix.get("models", KINDS)),
                tuned_models=list(matrix.get("tuned", TUNABLE)),
                tokenizer={"mode": "raw", "stop_words": "none", "df_threshold": 0.5, **data.get("tokenizer", {})},
                test_fraction=float(data.get("split", {}).get("test_fraction", 0.2)),
                cv_k=int(data.get("cv", {}).get("k", 5)),
                baseline=dict(data.get("baseline", {})),
                grids=dict(data.get("grids", {})),
                ablation_arms=list(arms),
                augmentation=aug,
                dedupe=bool(data.get("dedupe", False)),
                output_dir=(base / out).resolve() if out else None,
                raw=copy.deepcopy(data),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config value: {exc}") from None
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data, path.parent)

    def validate(self) -> None:
        tags = {s.tag for s in self.datasets}
        for s in self.datasets:
            if not s.path.is_file():
                raise ConfigError(f"dataset {s.tag}: file not found: {s.path}")
        for e in self.extended:
            if e.get("base") not in tags or e.get("extra") not in tags:
                raise ConfigError(f"extended dataset {e.get('tag')!r} references unknown tags")
            tags.add(e["tag"])
        for t in self.matrix_datasets:
            if t not in tags:
                raise ConfigError(f"matrix dataset {t!r} is not defined")
        for k in self.models + self.tuned_models:
            if k not in KINDS:
                raise ConfigError(f"unknown model {k!r}")
        if "lr" in self.tuned_models:
            raise ConfigError("logistic regression has no tuned variant")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("split.test_fraction must lie in (0, 1)")
        for where, spec in [("tokenizer", self.tokenizer)] + [(f"ablation arm {a.get('name')!r}", a.get("tokenizer", {}))
                                                               for a in self.ablation_arms]:
            if spec.get("stop_words", "none") not in STOP_WORD_CHOICES:
                raise ConfigError(f"{where}: stop_words must be one of {'|'.join(STOP_WORD_CHOICES)}")
            if spec.get("mode", "raw") not in ("raw", "full"):
                raise ConfigError(f"{where}: mode must be raw|full")
        names = [a.get("name") for a in self.ablation_arms]
        if len(names) < 2 or None in names or len(set(names)) != len(names):
            raise ConfigError("ablation needs at least two uniquely named arms")

    def with_seed(self, seed: int) -> "RunConfig":
        cfg = copy.copy(self)
        cfg.seed = int(seed)
        cfg.raw = {**self.raw, "seed": int(seed)}
        return cfg

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode("utf-8")).hexdigest()[:16]

    def baseline_params(self, kind: str) -> dict:
        return {**BASELINE_PARAMS[kind], **self.baseline.get(kind, {})}

    def grid(self, kind: str) -> ParamGrid:
        if kind in self.grids:
            return ParamGrid(kind, {k: list(v) for k, v in self.grids[kind].items()})
        return default_grid(kind)

    def cells(self) -> list:
        out = []
        for d in self.matrix_datasets:
            for kind in ("nb", "svm", "lr", "rf"):
                if kind not in self.models:
                    continue
                out.append(Cell(d, kind, False))
                if kind in self.tuned_models:
                    out.append(Cell(d, kind, True))
        return out


def load_all(cfg: RunConfig) -> dict:
    """Load every configured dataset and build the extended ones."""
    out = {}
    for s in cfg.datasets:
        d = load_dataset(s.path, s.tag, s.column_map, s.source)
        out[s.tag] = dedupe(d) if cfg.dedupe else d
    for e in cfg.extended:
        out[e["tag"]] = merge_datasets(out[e["base"]], out[e["extra"]], e["tag"])
    return out


def build_tokenizer(spec: dict, train: Dataset) -> TokenizerConfig:
    mode = TokenizerMode(spec.get("mode", "raw"))
    which = spec.get("stop_words", "none")
    if which not in STOP_WORD_CHOICES:
        raise ConfigError(f"unknown stop_words choice {which!r}")
    stop: Optional[StopWordList] = None
    if which in ("english", "union"):
        stop = english_stop_words()
    if which in ("derived", "union"):
        derived = derive_stop_words(train, TokenizerConfig(mode), float(spec.get("df_threshold", 0.5)))
        stop = derived if stop is None else stop.union(derived)
    return TokenizerConfig(mode, True, stop)


def split_seed(cfg: RunConfig) -> int:
    # shared by every dataset so parallel translations split identically
    return derive_seed(cfg.seed, "split")


def run_cell(cell: Cell, train: Dataset, test: Dataset, cfg: RunConfig, tokenizer_spec: dict) -> dict:
    """Train/tune one matrix cell and evaluate it on ``test``."""
    cell_seed = derive_seed(cfg.seed, cell.dataset, cell.kind, cell.variant)
    tok = build_tokenizer(tokenizer_spec, train)
    tuning = None
    if cell.tuned:
        tuning = grid_search(train.texts, train.labels, cfg.grid(cell.kind), CvConfig(cfg.cv_k, cell_seed), tok,
                             seed=cell_seed)
        params = dict(tuning.best_params)
    else:
        params = cfg.baseline_params(cell.kind)
    tfidf = fit_tfidf(train.texts, tok)
    clf = fit_classifier(cell.kind, transform_many(tfidf, train.texts), train.labels, params, tfidf, cell_seed)
    scores = clf.scores(transform_many(tfidf, test.texts))
    preds = [Label.FRAUD if s >= clf.threshold else Label.NORMAL for s in scores]
    hyper = dict(clf.params)
    if cell.kind == "lr":
        hyper["l2_lambda"] = clf.model.l2_lambda
    if cell.kind == "svm":
        hyper["gamma_resolved"] = clf.model.gamma
    fingerprint = {
        "config": cfg.fingerprint(), "master_seed": cfg.seed, "split_seed": split_seed(cfg),
        "cell_seed": cell_seed, "test_fraction": cfg.test_fraction, "cv_k": cfg.cv_k if cell.tuned else None,
        "tokenizer": {"mode": tok.mode.value, "stop_words": tokenizer_spec.get("stop_words", "none"),
                      "n_stop_words": 0 if tok.stop_words is None else len(tok.stop_words)},
        "n_train": len(train), "n_test": len(test), "n_features": tfidf.dim,
    }
    report = build_report(cell.dataset, MODEL_NAMES[cell.kind], cell.tuned, test.labels, preds, scores.tolist(),
                          test.ids, hyper, fingerprint)
    return {"cell": cell.cell_id, "report": report.to_dict(), "tuning": None if tuning is None else tuning.to_dict()}


def _run_cell_safe(args):
    cell, train, test, cfg, tok_spec = args
    t0 = time.perf_counter()
    try:
        out = run_cell(cell, train, test, cfg, tok_spec)
        out["error"] = None
    except Exception as exc:  # a failed cell must not abort the matrix
        logger.exception("cell %s failed", cell.cell_id)
        out = {"cell": cell.cell_id, "report": None, "tuning": None, "error": f"{type(exc).__name__}: {exc}"}
    out["seconds"] = time.perf_counter() - t0
    return out


@dataclass
class MatrixResult:
    reports: list
    failures: dict
    out_dir: Path

    @property
    def ok(self) -> bool:
        return not self.failures


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def run_cells(cfg: RunConfig, cells: list, datasets: dict, tokenizer_spec: dict, jobs: int = 1) -> list:
    splits = {}
    for c in cells:
        if c.dataset not in splits:
            splits[c.dataset] = stratified_split(datasets[c.dataset], cfg.test_fraction, split_seed(cfg))
    args = [(c, *splits[c.dataset], cfg, tokenizer_spec) for c in cells]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_cell_safe, args))
    return [_run_cell_safe(a) for a in args]


def write_matrix_outputs(out_dir: Path, results: list, cfg: RunConfig, figures: bool = True) -> MatrixResult:
    reports, failures = [], {}
    index = []
    for r in results:
        index.append({"cell": r["cell"], "status": "ok" if r["error"] is None else "failed", "error": r["error"]})
        if r["error"] is not None:
            failures[r["cell"]] = r["error"]
            continue
        _write(out_dir / "reports" / f"{r['cell']}.json", _json(r["report"]))
        if r["tuning"] is not None:
            _write(out_dir / "tuning" / f"{r['cell']}.json", _json(r["tuning"]))
        reports.append(EvaluationReport.from_dict(r["report"]))
    _write(out_dir / "cells.json", _json(index))
    order = list(cfg.matrix_datasets)
    rows = table6_rows(reports, order)
    _write(out_dir / "table6.txt", render_text(TABLE6_COLUMNS, rows))
    _write(out_dir / "table6.csv", render_csv(TABLE6_COLUMNS, rows))
    h8, rows8 = table8_rows(reports, order)
    _write(out_dir / "table8.txt", render_text(h8, rows8))
    _write(out_dir / "table8.csv", render_csv(h8, rows8))
    bal_header, bal_rows = balance_study(reports, cfg.extended)
    if bal_rows:
        _write(out_dir / "balance.txt", render_text(bal_header, bal_rows))
        _write(out_dir / "balance.csv", render_csv(bal_header, bal_rows))
    if figures and reports:
        (out_dir / "figures").mkdir(parents=True, exist_ok=True)
        plotting.accuracy_figure(reports, out_dir / "figures" / "accuracy.png", order)
        plotting.rates_figure(reports, out_dir / "figures" / "rates.png", order)
    return MatrixResult(reports, failures, out_dir)


def _direction(before: float, after: float) -> str:
    if after < before:
        return "improved"
    if after > before:
        return "worsened"
    return "unchanged"


def balance_study(reports, extended) -> tuple:
    """Compare FP%/FN% of each extended dataset against its balanced base (lower is better)."""
    by = {(r.dataset, r.variant): r for r in reports}
    header = ["Base", "Extended", "Model", "FP % base", "FP % ext", "FP", "FN % base", "FN % ext", "FN"]
    rows = []
    for e in extended:
        base, ext = e["base"], e["tag"]
        variants = sorted({v for (d, v) in by if d == base} & {v for (d, v) in by if d == ext},
                          key=lambda v: plotting.VARIANT_ORDER.index(v) if v in plotting.VARIANT_ORDER else 99)
        for v in variants:
            a, b = by[(base, v)], by[(ext, v)]
            rows.append([base, ext, v, f"{a.fp_pct:.1f}", f"{b.fp_pct:.1f}", _direction(a.fp_pct, b.fp_pct),
                         f"{a.fn_pct:.1f}", f"{b.fn_pct:.1f}", _direction(a.fn_pct, b.fn_pct)])
    return header, rows


def select_cells(cfg: RunConfig, only: Optional[str]) -> list:
    cells = cfg.cells()
    if only:
        selectors = [s.strip() for s in only.split(",") if s.strip()]
        cells = [c for c in cells if any(c.matches(s) for s in selectors)]
    return cells


def _log(out_dir: Path, lines: list) -> None:
    # timestamps live only here so every other output stays reproducible
    stamp = time.strftime("%Y-%m-%dT%H:%M:%S")
    with (out_dir / "run.log").open("a", encoding="utf-8") as fh:
        for line in lines:
            fh.write(f"{stamp} {line}\n")


def run_matrix(cfg: RunConfig, out_dir, only: Optional[str] = None, jobs: int = 1,
               datasets: Optional[dict] = None, figures: bool = True) -> MatrixResult:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    datasets = datasets if datasets is not None else load_all(cfg)
    cells = select_cells(cfg, only)
    t0 = time.perf_counter()
    results = run_cells(cfg, cells, datasets, cfg.tokenizer, jobs)
    res = write_matrix_outputs(out_dir, results, cfg, figures)
    _log(out_dir, [f"run-matrix cells={len(cells)} failures={len(res.failures)} "
                   f"seconds={time.perf_counter() - t0:.1f}"]
         + [f"cell {r['cell']} seconds={r['seconds']:.2f} error={r['error']}" for r in results])
    return res


@dataclass
class AblationResult:
    rows: list  # (dataset, model variant, acc per arm..., delta or None)
    arms: list
    out_dir: Path
    failures: dict

    def deltas(self) -> dict:
        return {(r[0], r[1]): r[-1] for r in self.rows}


def run_ablation(cfg: RunConfig, out_dir, only: Optional[str] = None, jobs: int = 1,
                 datasets: Optional[dict] = None, figures: bool = True) -> AblationResult:
    """Run the same cells under each tokenizer arm; delta = last arm accuracy minus first arm accuracy."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    datasets = datasets if datasets is not None else load_all(cfg)
    cells = select_cells(cfg, only)
    arms = cfg.ablation_arms
    acc = {}
    failures = {}
    for arm in arms:
        spec = {"mode": "raw", "stop_words": "none", "df_threshold": 0.5, **arm.get("tokenizer", {})}
        results = run_cells(cfg, cells, datasets, spec, jobs)
        res = write_matrix_outputs(out_dir / arm["name"], results, cfg, figures=False)
        for r in results:
            if r["error"] is None:
                rep = r["report"]
                acc[(arm["name"], r["cell"])] = rep["metrics"]["accuracy"]
            else:
                failures[f"{arm['name']}/{r['cell']}"] = r["error"]
        del res
    rows = []
    for c in cells:
        vals = [acc.get((a["name"], c.cell_id)) for a in arms]
        delta = None if any(v is None for v in vals) else vals[-1] - vals[0]
        variant = MODEL_NAMES[c.kind] + (" best" if c.tuned else "")
        rows.append([c.dataset, variant, *vals, delta])
    header = ["Dataset", "Model", *[f"acc {a['name']}" for a in arms], "delta"]

    def fmt(v):
        return "N/A" if v is None else f"{v:.4f}"

    text_rows = [[r[0], r[1], *[fmt(v) for v in r[2:]]] for r in rows]
    known = [r[-1] for r in rows if r[-1] is not None]
    summary = (f"cells with {arms[-1]['name']} <= {arms[0]['name']}: "
               f"{sum(1 for d in known if d <= 0)}/{len(known)} (N/A: {len(rows) - len(known)})\n")
    _write(out_dir / "ablation.txt", render_text(header, text_rows) + "\n" + summary)
    _write(out_dir / "ablation.csv", render_csv(header, text_rows))
    if figures and rows:
        (out_dir / "figures").mkdir(parents=True, exist_ok=True)
        plotting.ablation_figure([(f"{r[0]} {r[1]}", r[-1]) for r in rows], out_dir / "figures" / "ablation.png")
    _log(out_dir, [f"ablation arms={[a['name'] for a in arms]} cells={len(cells)} failures={len(failures)}"])
    return AblationResult(rows, [a["name"] for a in arms], out_dir, failures)


STATS_COLUMNS = ("Dataset", "SMS", "Fraud", "Normal", "Tokens", "Tokens fraud", "Tokens normal", "Avg any",
                 "Avg fraud", "Avg normal", "Unique tokens")


def stats_rows(datasets: dict, tokenizer: Optional[TokenizerConfig] = None) -> list:
    rows = []
    for tag, d in datasets.items():
        s = compute_stats(d, tokenizer)
        rows.append([tag, str(s.n_total), str(s.n_fraud), str(s.n_normal), str(s.tokens_total),
                     str(s.tokens_fraud), str(s.tokens_normal), f"{s.avg_tokens_any:.0f}",
                     f"{s.avg_tokens_fraud:.0f}", f"{s.avg_tokens_normal:.0f}", str(s.unique_tokens)])
    return rows
