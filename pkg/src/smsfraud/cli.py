"""Command-line entry point.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 partial
matrix failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiments as ex
from .augment import (AugmentationPlan, AugmentError, CannotReachTarget, Lexicons, Transformation,
                      augment_dataset, builtin_lexicons)
from .classifiers import KINDS, MODEL_NAMES, ClassifierError, fit_classifier
from .corpus import CorpusError, load_dataset, save_dataset, stratified_split
from .evaluation import render_csv, render_text
from .labels import Label
from .persistence import BundleError, ModelBundle, load_model, save_model
from .textproc import TextprocError, fit_tfidf, transform_many
from .tuning import CvConfig, grid_search

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_PARTIAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config(args) -> ex.RunConfig:
    if not args.config:
        raise UsageError("--config is required")
    cfg = ex.RunConfig.load(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _out_dir(args, cfg) -> Path:
    out = Path(args.out) if args.out else cfg.output_dir
    if out is None:
        raise UsageError("no output directory: pass --out or set output_dir in the config")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _kind(name: str) -> str:
    low = name.lower()
    if low not in KINDS:
        raise UsageError(f"unknown model {name!r}; choose from {', '.join(KINDS)}")
    return low


def _dataset(cfg, datasets, tag):
    if tag is None:
        if len(cfg.matrix_datasets) != 1:
            raise UsageError("--dataset is required when the config defines several datasets")
        tag = cfg.matrix_datasets[0]
    if tag not in datasets:
        raise UsageError(f"unknown dataset {tag!r}")
    return datasets[tag]


def cmd_stats(args) -> int:
    cfg = _config(args)
    if not cfg.datasets:
        raise UsageError("config lists no datasets")
    rows = ex.stats_rows(ex.load_all(cfg))
    print(render_text(ex.STATS_COLUMNS, rows), end="")
    if args.out:
        out = _out_dir(args, cfg)
        (out / "stats.txt").write_text(render_text(ex.STATS_COLUMNS, rows), encoding="utf-8")
        (out / "stats.csv").write_text(render_csv(ex.STATS_COLUMNS, rows), encoding="utf-8")
    return EXIT_OK


def cmd_split(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    datasets = ex.load_all(cfg)
    tags = [args.dataset] if args.dataset else list(datasets)
    for tag in tags:
        train, test = stratified_split(_dataset(cfg, datasets, tag), cfg.test_fraction, ex.split_seed(cfg))
        save_dataset(train, out / f"{tag}.train.csv")
        save_dataset(test, out / f"{tag}.test.csv")
        print(f"{tag}: train {len(train)} test {len(test)}")
    return EXIT_OK


def cmd_augment(args) -> int:
    cfg = _config(args)
    spec = cfg.augmentation
    if not spec:
        raise UsageError("config has no 'augmentation' section")
    datasets = {s.tag: s for s in cfg.datasets}
    src = spec.get("input")
    if src in datasets:
        d = ex.load_all(cfg)[src]
    elif src:
        d = load_dataset(src, spec.get("tag", Path(src).stem))
    else:
        raise UsageError("augmentation.input must name a dataset tag or a CSV path")
    lex_src = spec.get("lexicon", "builtin")
    lex = builtin_lexicons() if lex_src == "builtin" else Lexicons.load(lex_src)
    plan = AugmentationPlan(tuple(Transformation(t) for t in spec.get("transformations", [t.value for t in Transformation])),
                            int(spec.get("max_variants", 3)), int(spec.get("seed", ex.derive_seed(cfg.seed, "augment"))))
    labels = [Label.parse(x) for x in spec["labels"]] if spec.get("labels") else None
    target = int(spec.get("target_size", len(d)))
    if args.out:
        out_path = Path(args.out)
        if out_path.suffix.lower() != ".csv":
            out_path = out_path / f"{d.tag}.augmented.csv"
    elif spec.get("output"):
        out_path = Path(spec["output"])
    else:
        raise UsageError("no output path: pass --out or set augmentation.output")
    try:
        grown = augment_dataset(d, plan, lex, target, labels)
    except CannotReachTarget as exc:
        partial = out_path.with_name(out_path.stem + ".partial.csv")
        save_dataset(exc.partial, partial)
        print(f"cannot reach target {exc.target_size}: {len(exc.partial)} records written to {partial}",
              file=sys.stderr)
        return EXIT_DATA
    save_dataset(grown, out_path)
    print(f"{d.tag}: {len(d)} -> {len(grown)} records written to {out_path}")
    return EXIT_OK


def _train_test(cfg, args):
    datasets = ex.load_all(cfg)
    d = _dataset(cfg, datasets, args.dataset)
    train, test = stratified_split(d, cfg.test_fraction, ex.split_seed(cfg))
    return d, train, test


def cmd_tune(args) -> int:
    cfg = _config(args)
    kind = _kind(args.model)
    if kind not in ex.TUNABLE:
        raise UsageError(f"{MODEL_NAMES[kind]} has no tuned variant")
    d, train, _ = _train_test(cfg, args)
    seed = ex.derive_seed(cfg.seed, d.tag, kind, "tuned")
    tok = ex.build_tokenizer(cfg.tokenizer, train)
    res = grid_search(train.texts, train.labels, cfg.grid(kind), CvConfig(cfg.cv_k, seed), tok, seed=seed)
    text = json.dumps(res.to_dict(), indent=2, sort_keys=True) + "\n"
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")
    print(json.dumps({"best_params": res.best_params, "best_score": res.best_score}, sort_keys=True))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    kind = _kind(args.model)
    if not args.out:
        raise UsageError("--out <model.json> is required")
    d, train, _ = _train_test(cfg, args)
    tok = ex.build_tokenizer(cfg.tokenizer, train)
    variant = "tuned" if args.tuned else "baseline"
    seed = ex.derive_seed(cfg.seed, d.tag, kind, variant)
    if args.tuned:
        if kind not in ex.TUNABLE:
            raise UsageError(f"{MODEL_NAMES[kind]} has no tuned variant")
        params = grid_search(train.texts, train.labels, cfg.grid(kind), CvConfig(cfg.cv_k, seed), tok,
                             seed=seed).best_params
    else:
        params = cfg.baseline_params(kind)
    tfidf = fit_tfidf(train.texts, tok)
    clf = fit_classifier(kind, transform_many(tfidf, train.texts), train.labels, params, tfidf, seed)
    fp = {"dataset": d.tag, "variant": variant, "master_seed": cfg.seed, "cell_seed": seed,
          "config": cfg.fingerprint(), "n_train": len(train)}
    path = save_model(ModelBundle(clf, fp), args.out)
    print(f"saved {MODEL_NAMES[kind]} ({variant}) trained on {len(train)} {d.tag} records to {path}")
    return EXIT_OK


def _matrix_exit(failures: dict) -> int:
    for cell, err in sorted(failures.items()):
        print(f"FAILED {cell}: {err}", file=sys.stderr)
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_run_matrix(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    res = ex.run_matrix(cfg, out, only=args.only, jobs=args.jobs, figures=not args.no_figures)
    (out / "failures.json").write_text(json.dumps(res.failures, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print((out / "table6.txt").read_text(encoding="utf-8"), end="")
    print()
    print((out / "table8.txt").read_text(encoding="utf-8"), end="")
    if (out / "balance.txt").exists():
        print()
        print((out / "balance.txt").read_text(encoding="utf-8"), end="")
    return _matrix_exit(res.failures)


def cmd_ablation(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    res = ex.run_ablation(cfg, out, only=args.only, jobs=args.jobs, figures=not args.no_figures)
    (out / "failures.json").write_text(json.dumps(res.failures, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print((out / "ablation.txt").read_text(encoding="utf-8"), end="")
    return _matrix_exit(res.failures)


def _read_inputs(args) -> list:
    texts = list(args.text or [])
    if args.input:
        with open(args.input, encoding="utf-8") as fh:
            texts.extend(line.rstrip("\n") for line in fh if line.strip())
    return texts


def cmd_classify(args) -> int:
    bundle = load_model(args.model)
    texts = _read_inputs(args)
    clf = bundle.classifier
    scores = clf.score_texts(texts)
    rows = [{"text": t, "label": (Label.FRAUD if s >= clf.threshold else Label.NORMAL).value, "score": float(s)}
            for t, s in zip(texts, scores)]
    if args.json:
        for r in rows:
            print(json.dumps(r, ensure_ascii=False, sort_keys=True))
    else:
        for r in rows:
            print(f"{r['label']}\t{r['score']:.6f}\t{r['text']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="smsfraud", description="Fraudulent SMS classification experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_help="output directory"):
        sp.add_argument("--config", required=True, help="run-config JSON")
        sp.add_argument("--out", help=out_help)
        sp.add_argument("--seed", type=int, help="override the config's master seed")

    sp = sub.add_parser("stats", help="token statistics per dataset")
    common(sp)
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("augment", help="grow a dataset with label-preserving rewrites")
    common(sp, "output CSV path or directory")
    sp.set_defaults(func=cmd_augment)

    sp = sub.add_parser("split", help="write the stratified train/test split")
    common(sp)
    sp.add_argument("--dataset")
    sp.set_defaults(func=cmd_split)

    sp = sub.add_parser("train", help="train one model and save a bundle")
    common(sp, "model bundle path")
    sp.add_argument("--dataset")
    sp.add_argument("--model", required=True, help="nb | lr | svm | rf")
    sp.add_argument("--tuned", action="store_true", help="tune by grid search first")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("tune", help="grid-search one model")
    common(sp, "tuning result JSON path")
    sp.add_argument("--dataset")
    sp.add_argument("--model", required=True)
    sp.set_defaults(func=cmd_tune)

    for name, func, text in (("run-matrix", cmd_run_matrix, "dataset x model x variant matrix"),
                             ("ablation", cmd_ablation, "matrix under each tokenizer arm")):
        sp = sub.add_parser(name, help=text)
        common(sp)
        sp.add_argument("--only", help="cell selector(s) DATASET:MODEL:VARIANT, comma separated, globs allowed")
        sp.add_argument("--jobs", type=int, default=1)
        sp.add_argument("--no-figures", action="store_true")
        sp.set_defaults(func=func)

    sp = sub.add_parser("classify", help="label texts with a saved model")
    sp.add_argument("--model", required=True, help="model bundle path")
    sp.add_argument("--text", action="append", help="text to classify (repeatable)")
    sp.add_argument("--input", help="file with one text per line")
    sp.add_argument("--json", action="store_true", help="JSON lines output")
    sp.set_defaults(func=cmd_classify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help and usage errors
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ex.ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusError, TextprocError, AugmentError, ClassifierError, BundleError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
