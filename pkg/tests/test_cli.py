import hashlib
import json

import jsonschema
import pytest

from smsfraud.cli import main
from smsfraud.evaluation import REPORT_SCHEMA, TABLE6_COLUMNS, EvaluationReport
from smsfraud.experiments import Cell, ConfigError, RunConfig, derive_seed
from cliutil import make_workspace


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    return make_workspace(tmp_path_factory.mktemp("ws"))


def run(args, capsys):
    code = main([str(a) for a in args])
    out = capsys.readouterr()
    return code, out.out, out.err


def tree_digest(root, skip=("run.log",)):
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file() and p.name not in skip}


def test_stats(ws, capsys, tmp_path):
    code, out, _ = run(["stats", "--config", ws, "--out", tmp_path], capsys)
    assert code == 0
    lines = {l.split()[0]: l.split() for l in out.splitlines()[2:]}
    assert lines["D-CHI"][1:4] == ["60", "30", "30"]
    assert lines["telcoSMS_CHI"][1:4] == ["12", "0", "12"]
    assert lines["D-CHIe"][1:4] == ["72", "30", "42"]
    assert (tmp_path / "stats.csv").read_text().startswith("Dataset,SMS,Fraud")


def test_usage_and_data_errors(ws, capsys, tmp_path):
    empty = tmp_path / "empty.json"
    empty.write_text(json.dumps({"seed": 1, "datasets": []}))
    assert run(["stats", "--config", empty], capsys)[0] == 1
    noseed = tmp_path / "noseed.json"
    noseed.write_text(json.dumps({"datasets": []}))
    assert run(["stats", "--config", noseed], capsys)[0] == 1
    missing = tmp_path / "missing.json"
    missing.write_text(json.dumps({"seed": 1, "datasets": [{"tag": "X", "path": "nope.csv"}]}))
    code, _, err = run(["stats", "--config", missing], capsys)
    assert code == 1 and "nope.csv" in err
    (tmp_path / "bad.csv").write_text("text,label\nhello,spam\n")
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"seed": 1, "datasets": [{"tag": "B", "path": "bad.csv"}]}))
    code, _, err = run(["stats", "--config", bad], capsys)
    assert code == 2 and "row 1" in err
    assert run(["nonsense"], capsys)[0] == 1


def test_split_counts(ws, capsys, tmp_path):
    code, out, _ = run(["split", "--config", ws, "--out", tmp_path, "--dataset", "D-CHI"], capsys)
    assert code == 0 and "train 48 test 12" in out
    test_rows = (tmp_path / "D-CHI.test.csv").read_text().splitlines()[1:]
    assert sum(1 for r in test_rows if ",fraud," in r) == 6


def test_augment_reach_fail_and_hash(tmp_path, capsys):
    cfg = make_workspace(tmp_path / "a", augmentation={"input": "D-CHI", "labels": ["fraud"], "target_size": 60,
                                                      "seed": 3})
    code, out, _ = run(["augment", "--config", cfg, "--out", tmp_path / "same.csv"], capsys)
    assert code == 0 and "60 -> 60" in out
    data = json.loads(cfg.read_text())
    data["augmentation"] = {"input": "D-CHI", "labels": ["fraud"], "target_size": 70, "seed": 3,
                            "lexicon": "lex.json"}
    (tmp_path / "a" / "lex.json").write_text(json.dumps({"phrases": [{"text": "Chonde", "position": "prefix"},
                                                                      {"text": "lero", "position": "suffix"}]}))
    cfg.write_text(json.dumps(data))
    code, out, _ = run(["augment", "--config", cfg, "--out", tmp_path / "g1.csv"], capsys)
    assert code == 0
    run(["augment", "--config", cfg, "--out", tmp_path / "g2.csv"], capsys)
    assert (tmp_path / "g1.csv").read_bytes() == (tmp_path / "g2.csv").read_bytes()
    rows = (tmp_path / "g1.csv").read_text().splitlines()[1:]
    assert len(rows) == 70 and sum(1 for r in rows if ",augmented," in r) == 10
    data["augmentation"]["target_size"] = 500
    cfg.write_text(json.dumps(data))
    code, _, err = run(["augment", "--config", cfg, "--out", tmp_path / "big.csv"], capsys)
    assert code == 2 and "big.partial.csv" in err
    assert (tmp_path / "big.partial.csv").exists()


def test_train_classify(ws, capsys, tmp_path):
    model = tmp_path / "rf.json"
    code, _, _ = run(["train", "--config", ws, "--dataset", "D-CHI", "--model", "rf", "--out", model], capsys)
    assert code == 0
    code, out, _ = run(["classify", "--model", model, "--text", "f1 f2 agent mwayi", "--text", "qqq", "--json"],
                       capsys)
    assert code == 0
    rows = [json.loads(l) for l in out.splitlines()]
    assert [r["text"] for r in rows] == ["f1 f2 agent mwayi", "qqq"]
    assert all(r["label"] in ("fraud", "normal") and 0 <= r["score"] <= 1 for r in rows)
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    assert run(["classify", "--model", model, "--input", empty], capsys)[:2] == (0, "")
    assert run(["classify", "--model", tmp_path / "none.json", "--text", "x"], capsys)[0] == 2
    code, out, _ = run(["tune", "--config", ws, "--dataset", "D-CHI", "--model", "nb", "--out", tmp_path / "t.json"],
                       capsys)
    assert code == 0 and "best_params" in out
    assert run(["tune", "--config", ws, "--dataset", "D-CHI", "--model", "lr"], capsys)[0] == 1


def test_run_matrix_full_and_deterministic(ws, capsys, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["run-matrix", "--config", ws, "--out", a], capsys)[0] == 0
    assert run(["run-matrix", "--config", ws, "--out", b], capsys)[0] == 0
    reports = sorted((a / "reports").glob("*.json"))
    assert len(reports) == 42
    da, db = tree_digest(a), tree_digest(b)
    assert da == db
    assert "figures/accuracy.png" in da and (a / "run.log").exists()
    rows = [l.split(",") for l in (a / "table6.csv").read_text().splitlines()[1:]]
    by = {(r[0], r[1]): dict(zip(TABLE6_COLUMNS, r)) for r in rows}
    for path in reports:
        data = json.loads(path.read_text())
        jsonschema.validate(data, REPORT_SCHEMA)
        rep = EvaluationReport.from_dict(data)
        row = by[(rep.dataset, rep.variant)]
        assert row["Accuracy"] == f"{rep.metrics.accuracy:.2f}" and row["FP"] == str(rep.confusion.fp)
        assert data["fingerprint"]["n_test"] == rep.confusion.total
    balance = (a / "balance.csv").read_text().splitlines()
    assert len(balance) == 1 + 3 * 7
    assert all(r.split(",")[5] in ("improved", "worsened", "unchanged") for r in balance[1:])


def test_only_selector_and_seed_override(ws, capsys, tmp_path):
    out = tmp_path / "one"
    assert run(["run-matrix", "--config", ws, "--out", out, "--only", "D-CHI:RF:tuned", "--no-figures"],
               capsys)[0] == 0
    assert [p.name for p in (out / "reports").glob("*.json")] == ["D-CHI__RF__tuned.json"]
    full = json.loads((out / "reports" / "D-CHI__RF__tuned.json").read_text())
    out2 = tmp_path / "two"
    run(["run-matrix", "--config", ws, "--out", out2, "--only", "D-CHI:RF:tuned", "--seed", "12", "--no-figures"],
        capsys)
    other = json.loads((out2 / "reports" / "D-CHI__RF__tuned.json").read_text())
    assert other["fingerprint"]["master_seed"] == 12 and full["fingerprint"]["master_seed"] == 11
    assert Cell("D-HTe", "svm", True).matches("D-*e:svm")
    assert not Cell("D-HT", "svm", True).matches("D-*e:svm")
    assert Cell("D-HT", "nb", False).matches("*:*:baseline")


def test_cell_results_independent_of_selection(ws, capsys, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run(["run-matrix", "--config", ws, "--out", a, "--only", "D-MT:*", "--no-figures"], capsys)
    run(["run-matrix", "--config", ws, "--out", b, "--only", "D-MT:SVM:baseline", "--no-figures", "--jobs", "2"],
        capsys)
    name = "D-MT__SVM__baseline.json"
    assert (a / "reports" / name).read_bytes() == (b / "reports" / name).read_bytes()


def test_partial_failure_exit_code(tmp_path, capsys):
    cfg = make_workspace(tmp_path / "f")
    data = json.loads(cfg.read_text())
    data["grids"]["svm"] = {"kernel": ["linear"], "C": [-1.0]}
    cfg.write_text(json.dumps(data))
    out = tmp_path / "o"
    code, _, err = run(["run-matrix", "--config", cfg, "--out", out, "--only", "D-CHI:SVM:*", "--no-figures"], capsys)
    assert code == 3 and "D-CHI__SVM__tuned" in err
    assert list(json.loads((out / "failures.json").read_text())) == ["D-CHI__SVM__tuned"]
    assert (out / "reports" / "D-CHI__SVM__baseline.json").exists()


def test_ablation_identical_arms_and_failed_arm(tmp_path, capsys):
    same = {"arms": [{"name": "raw", "tokenizer": {"mode": "raw"}}, {"name": "raw2", "tokenizer": {"mode": "raw"}}]}
    cfg = make_workspace(tmp_path / "s", ablation=same)
    out = tmp_path / "o1"
    code, text, _ = run(["ablation", "--config", cfg, "--out", out, "--only", "D-CHI:*:baseline"], capsys)
    assert code == 0
    rows = [l.split(",") for l in (out / "ablation.csv").read_text().splitlines()[1:]]
    assert len(rows) == 4 and all(float(r[-1]) == 0.0 for r in rows)
    broken = {"arms": [{"name": "raw", "tokenizer": {"mode": "raw"}},
                       {"name": "full", "tokenizer": {"mode": "full", "stop_words": "derived", "df_threshold": 0.0}}]}
    cfg2 = make_workspace(tmp_path / "b", ablation=broken)
    out2 = tmp_path / "o2"
    code, text, _ = run(["ablation", "--config", cfg2, "--out", out2, "--only", "D-CHI:NB:baseline"], capsys)
    assert code == 3
    row = (out2 / "ablation.csv").read_text().splitlines()[1].split(",")
    assert row[-1] == "N/A" and row[2] != "N/A"


def test_config_validation(tmp_path):
    cfg = make_workspace(tmp_path / "v")
    data = json.loads(cfg.read_text())
    RunConfig.from_dict(data, cfg.parent)
    for patch in ({"matrix": {"datasets": ["D-XX"]}}, {"matrix": {"tuned": ["lr"]}},
                  {"split": {"test_fraction": 1.5}}, {"tokenizer": {"stop_words": "all"}},
                  {"ablation": {"arms": [{"name": "a", "tokenizer": {"stop_words": "bogus"}}, {"name": "b"}]}},
                  {"ablation": {"arms": [{"name": "a"}, {"name": "a"}]}}):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({**data, **patch}, cfg.parent)
    assert derive_seed(1, "D-CHI", "rf", "tuned") == derive_seed(1, "D-CHI", "rf", "tuned")
    assert derive_seed(1, "D-CHI", "rf", "tuned") != derive_seed(1, "D-CHI", "rf", "baseline")
