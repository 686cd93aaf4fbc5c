import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smsfraud.labels import Label
from smsfraud.textproc import TokenizerConfig
from smsfraud.tuning import (DEFAULT_GRIDS, ClassSmallerThanK, CvConfig, ParamGrid, TuningResult, _FoldData,
                             _evaluate_generic, _evaluate_rf, _evaluate_svm, default_grid, grid_search,
                             nb_var_smoothing_grid, stratified_kfold_indices)
from synth import synthetic_dataset

F, N = Label.FRAUD, Label.NORMAL
TABLE7_NB = [1.0, 0.12328467394420659, 0.1873817422860384, 0.005336699231206307]


def test_kfold_examples():
    folds = stratified_kfold_indices([F] * 4 + [N] * 4, 2, seed=0)
    for f in folds:
        assert sum(1 for i in f if i < 4) == 2 and sum(1 for i in f if i >= 4) == 2
    folds = stratified_kfold_indices([F] * 5 + [N] * 5, 2, seed=0)
    per = [(sum(1 for i in f if i < 5), sum(1 for i in f if i >= 5)) for f in folds]
    assert per == [(3, 2), (2, 3)]
    assert [len(f) for f in folds] == [5, 5]
    assert stratified_kfold_indices([F] * 5 + [N] * 5, 2, 7) == stratified_kfold_indices([F] * 5 + [N] * 5, 2, 7)
    with pytest.raises(ClassSmallerThanK):
        stratified_kfold_indices([F] * 2 + [N] * 9, 3, 0)


@settings(max_examples=100, deadline=None)
@given(nf=st.integers(2, 40), nn=st.integers(2, 40), k=st.integers(2, 6), seed=st.integers(0, 2**31))
def test_kfold_partition_and_balance(nf, nn, k, seed):
    if min(nf, nn) < k:
        return
    rng = np.random.default_rng(seed)
    y = rng.permutation([F] * nf + [N] * nn).tolist()
    folds = stratified_kfold_indices(y, k, seed)
    flat = sorted(i for f in folds for i in f)
    assert flat == list(range(nf + nn))
    sizes = [len(f) for f in folds]
    assert max(sizes) - min(sizes) <= 1
    for lab, n in ((F, nf), (N, nn)):
        for f in folds:
            assert abs(sum(1 for i in f if y[i] is lab) - n / k) < 1 + 1e-9


def test_nb_grid_contains_table7_values_exactly():
    grid = nb_var_smoothing_grid()
    assert len(grid) == 100 and grid[0] == 1.0 and grid[-1] == pytest.approx(1e-9)
    for v in TABLE7_NB:
        assert v in grid


def test_default_grids_cover_table7_best_values():
    svm = DEFAULT_GRIDS["svm"]
    assert "linear" in svm["kernel"] and 1000 in svm["C"] and 0.1 in svm["gamma"] and 1e-6 in svm["tol"]
    rf = DEFAULT_GRIDS["rf"]
    for name, v in {"n_estimators": 180, "min_samples_split": 5, "min_samples_leaf": 1, "max_features": 1,
                    "max_depth": 110, "bootstrap": True}.items():
        assert v in rf[name]
    assert len(default_grid("svm")) == 180 and len(default_grid("rf")) == 432


def test_grid_enumeration_order():
    g = ParamGrid("svm", {"kernel": ["linear", "rbf"], "C": [1, 10]})
    assert g.points() == [{"kernel": "linear", "C": 1}, {"kernel": "linear", "C": 10},
                          {"kernel": "rbf", "C": 1}, {"kernel": "rbf", "C": 10}]
    assert ParamGrid.from_dict(g.to_dict()) == g
    with pytest.raises(ValueError):
        ParamGrid("nb", {"var_smoothing": []})


@pytest.fixture(scope="module")
def small_corpus():
    d = synthetic_dataset(25, 25, seed=8, vocab_size=120, signal=0.15)
    return d.texts, d.labels


def _folds(texts, labels, k=3, seed=1):
    from smsfraud.classifiers import as_binary
    y = as_binary(labels)
    idx = stratified_kfold_indices(y, k, seed)
    allidx = np.arange(len(texts))
    return [_FoldData(texts, y, np.setdiff1d(allidx, t), np.asarray(t), TokenizerConfig()) for t in idx]


def test_single_point_grid(small_corpus):
    texts, labels = small_corpus
    res = grid_search(texts, labels, ParamGrid("nb", {"var_smoothing": [0.5]}), CvConfig(3, 1))
    assert res.best_params == {"var_smoothing": 0.5} and len(res.trials) == 1
    assert res.best_score == res.trials[0].mean == np.mean(res.trials[0].fold_scores)


def test_best_is_first_maximiser_and_roundtrip(small_corpus):
    texts, labels = small_corpus
    res = grid_search(texts, labels, ParamGrid("nb", {"var_smoothing": [1.0, 1.0, 1e-3]}), CvConfig(3, 2))
    means = [t.mean for t in res.trials]
    assert res.best_score == max(means)
    first = means.index(max(means))
    assert res.best_params == res.trials[first].params
    text = json.dumps(res.to_dict(), sort_keys=True)
    again = grid_search(texts, labels, ParamGrid("nb", {"var_smoothing": [1.0, 1.0, 1e-3]}), CvConfig(3, 2))
    assert json.dumps(again.to_dict(), sort_keys=True) == text
    assert TuningResult.from_dict(json.loads(text)).to_dict() == res.to_dict()


def test_failed_trials_are_skipped(small_corpus):
    texts, labels = small_corpus
    res = grid_search(texts, labels, ParamGrid("nb", {"var_smoothing": [-1.0, 0.1]}), CvConfig(3, 0))
    assert res.trials[0].failed and res.trials[0].mean is None
    assert res.best_params == {"var_smoothing": 0.1}


def test_svm_cached_evaluator_equals_direct_fits(small_corpus):
    folds = _folds(*small_corpus)
    grid = ParamGrid("svm", {"kernel": ["linear", "rbf", "sigmoid"], "C": [0.1, 10], "gamma": [0.01, 1],
                             "tol": [1e-3, 1e-6]})
    assert _evaluate_svm(grid.points(), folds) == _evaluate_generic("svm", grid.points(), folds, 0)


def test_rf_vote_evaluator_equals_direct_forests(small_corpus):
    folds = _folds(*small_corpus)
    grid = ParamGrid("rf", {"n_estimators": [3, 7], "min_samples_split": [2, 5], "max_features": [1, "sqrt"],
                            "max_depth": [2, 80, None], "bootstrap": [True, False]})
    assert _evaluate_rf(grid.points(), folds, 5) == _evaluate_generic("rf", grid.points(), folds, 5)


def test_tfidf_is_refit_per_fold(small_corpus):
    texts, labels = small_corpus
    folds = _folds(texts, labels)
    dims = {fd.X_train.shape[1] for fd in folds}
    assert len(dims) > 1 or all(fd.X_train.shape[1] < len(set(" ".join(texts).split())) for fd in folds)
