import math
from collections import Counter

import numpy as np
import pytest
import scipy.sparse as sp

from pfmalware.baselines import (
    BASELINES,
    LogisticRegressionClassifier,
    fit_tfidf,
    forest_predict_proba,
    grid_search,
    load_baseline,
    make_baseline,
    ngrams,
    save_baseline,
    train_forest,
    train_logreg,
    transform_tfidf,
    truncated_svd,
)
from pfmalware.baselines.forest import LEAF, build_tree
from pfmalware.baselines.logreg import logreg_predict_proba, objective_and_gradient
from pfmalware.baselines.text import SEPARATOR
from pfmalware.exceptions import Degenerate, EmptyCorpus, RankTooLarge

S = SEPARATOR


# -- n-grams and TF-IDF ------------------------------------------------------

def test_ngram_examples():
    assert ngrams(["a", "b", "c"], 2) == Counter({f"a{S}b": 1, f"b{S}c": 1})
    assert ngrams(["a"], 2) == Counter()
    assert ngrams(["a", "a", "a"], 2) == Counter({f"a{S}a": 2})
    assert ngrams(["a", "b", "c", "d"], 3) == Counter({f"a{S}b{S}c": 1, f"b{S}c{S}d": 1})
    with pytest.raises(ValueError):
        ngrams(["a", "b"], 4)


def _brute_tfidf(docs, doc):
    N = len(docs)
    terms = sorted({t for d in docs for t in d})
    vec = []
    for t in terms:
        df = sum(1 for d in docs if t in d)
        vec.append(doc.get(t, 0) * (math.log((1 + N) / (1 + df)) + 1))
    norm = math.sqrt(sum(v * v for v in vec))
    return [v / norm if norm else 0.0 for v in vec]


def test_tfidf_matches_brute_force():
    seqs = [list("abcab"), list("bcd"), list("aaaxb")]
    docs = [ngrams(s, 2) for s in seqs]
    model = fit_tfidf(docs)
    M = transform_tfidf(model, docs).toarray()
    for row, doc in zip(M, docs):
        np.testing.assert_allclose(row, _brute_tfidf(docs, doc), atol=1e-9, rtol=0)


def test_tfidf_term_in_every_document():
    docs = [Counter({"x": 1, f"y{i}": 1}) for i in range(4)]
    model = fit_tfidf(docs)
    assert model.idf[model.ngram_to_index["x"]] == 1.0


def test_tfidf_sparse_invariants():
    docs = [ngrams(list("abcabd"), 2), ngrams(list("dcba"), 2)]
    model = fit_tfidf(docs)
    M = transform_tfidf(model, docs + [Counter({"unseen": 3})])
    for r in range(M.shape[0]):
        cols = M.indices[M.indptr[r]:M.indptr[r + 1]]
        assert (np.diff(cols) > 0).all()
    assert (M.data != 0).all() and np.isfinite(M.data).all()
    assert M[2].nnz == 0
    assert (model.idf > 0).all()


def test_tfidf_empty_inputs():
    model = fit_tfidf([Counter({"a": 1})])
    assert transform_tfidf(model, [Counter()]).nnz == 0
    with pytest.raises(EmptyCorpus):
        fit_tfidf([])


# -- SVD ---------------------------------------------------------------------

def test_svd_rank_one_exact():
    rng = np.random.default_rng(0)
    A = np.outer(rng.standard_normal(12), rng.standard_normal(9))
    US, V, s = truncated_svd(sp.csr_matrix(A), 1)
    assert np.abs(US @ V.T - A).max() <= 1e-6


def test_svd_against_eigh_oracle():
    A = np.random.default_rng(1).standard_normal((20, 15))
    _, V, s = truncated_svd(A, 3)
    oracle = np.sqrt(np.linalg.eigh(A.T @ A)[0][::-1][:3])
    np.testing.assert_allclose(s, oracle, rtol=1e-6)
    np.testing.assert_allclose(V.T @ V, np.eye(3), atol=1e-6)


def test_svd_monotone():
    A = sp.random(30, 25, density=0.3, random_state=2, format="csr")
    errors = []
    for r in range(1, 8):
        US, V, s = truncated_svd(A, r)
        assert (np.diff(s) <= 1e-12).all()
        errors.append(np.linalg.norm(A.toarray() - US @ V.T))
    assert all(b <= a + 1e-9 for a, b in zip(errors, errors[1:]))


def test_svd_rank_bounds():
    A = np.ones((4, 3))
    for r in (0, 4):
        with pytest.raises(RankTooLarge):
            truncated_svd(A, r)


def test_svd_deterministic_signs():
    A = np.random.default_rng(3).standard_normal((10, 8))
    a, b = truncated_svd(A, 4, seed=0), truncated_svd(A, 4, seed=9)
    np.testing.assert_allclose(a[1], b[1], atol=1e-8)


# -- logistic regression -----------------------------------------------------

def test_logreg_separable():
    X = np.array([[0, 1.0], [0, 2.0], [1.0, 0], [2.0, 0]])
    y = np.array([0, 0, 1, 1])
    model = train_logreg(X, y)
    assert (logreg_predict_proba(model, X).argmax(axis=1) == y).all()


def test_logreg_zero_weights_uniform():
    model = train_logreg(np.eye(3), [0, 1, 2])
    model.weights[:] = 0
    model.bias[:] = 0
    np.testing.assert_allclose(logreg_predict_proba(model, np.eye(3)), 1 / 3)


def test_logreg_gradient_at_optimum():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((5, 3))
    y = np.array([0, 1, 2, 1, 0])
    model = train_logreg(X, y, l2_strength=0.1)
    assert model.gradient_norm <= 1e-5
    Y = np.eye(3)[y]
    W, b = model.weights.astype(np.float64), model.bias.astype(np.float64)
    _, gW, gb = objective_and_gradient(W, b, X, Y, 0.1)
    eps = 1e-6
    fd = np.zeros_like(W)
    for i in np.ndindex(W.shape):
        Wp, Wm = W.copy(), W.copy()
        Wp[i] += eps
        Wm[i] -= eps
        fd[i] = (objective_and_gradient(Wp, b, X, Y, 0.1)[0] - objective_and_gradient(Wm, b, X, Y, 0.1)[0]) / (2 * eps)
    np.testing.assert_allclose(gW, fd, atol=1e-7)
    assert np.sqrt((fd ** 2).sum() + (gb ** 2).sum()) <= 1e-5


def test_logreg_single_class():
    with pytest.raises(Degenerate):
        train_logreg(np.eye(3), [1, 1, 1])


def test_logreg_duplicate_invariance():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((12, 4))
    y = rng.integers(0, 3, 12)
    y[:3] = [0, 1, 2]
    dup_X, dup_y = np.vstack([X, X]), np.concatenate([y, y])
    a = train_logreg(X, y, l2_strength=0.1)
    b = train_logreg(dup_X, dup_y, l2_strength=0.1)
    probe = rng.standard_normal((30, 4))
    pa, pb = logreg_predict_proba(a, probe), logreg_predict_proba(b, probe)
    np.testing.assert_allclose(pa, pb, atol=1e-4)
    assert (pa.argmax(axis=1) == pb.argmax(axis=1)).all()


def test_logreg_probabilities_sum_to_one():
    rng = np.random.default_rng(6)
    X = sp.random(40, 30, density=0.2, random_state=6, format="csr")
    clf = LogisticRegressionClassifier().fit(X, rng.integers(0, 4, 40))
    np.testing.assert_allclose(clf.predict_proba(X).sum(axis=1), 1, atol=1e-9)


# -- random forest -----------------------------------------------------------

def test_forest_root_uses_only_informative_feature():
    rng = np.random.default_rng(7)
    X = np.zeros((40, 5))
    X[:, 2] = rng.random(40)
    y = (X[:, 2] > 0.5).astype(int)
    forest, _ = train_forest(X, y, trees=20, seed=1)
    for tree in forest.trees:
        assert tree.feature[0] == 2


def test_forest_single_tree_without_bootstrap_is_cart():
    rng = np.random.default_rng(8)
    X = rng.random((30, 6))
    y = rng.integers(0, 3, 30)
    forest, oob = train_forest(X, y, trees=1, bootstrap=False, seed=4)
    child = np.random.SeedSequence(4).spawn(1)[0]
    tree = build_tree(X, y, 3, math.ceil(math.sqrt(6)), np.random.default_rng(child))
    assert np.array_equal(forest_predict_proba(forest, X), tree.predict_proba(X))
    assert math.isnan(oob)


def test_forest_oob_on_synthetic(small_dataset):
    pipe = make_baseline("rf2", clf__trees=50)
    pipe.fit(small_dataset.sequences, small_dataset.labels)
    assert pipe.named_steps["clf"].oob_score_ >= 0.9


def test_forest_probability_bounds_and_structure():
    rng = np.random.default_rng(9)
    X = rng.random((50, 4))
    y = rng.integers(0, 3, 50)
    forest, _ = train_forest(X, y, trees=10, seed=0)
    p = forest_predict_proba(forest, rng.random((20, 4)))
    assert (p >= 0).all() and (p <= 1).all()
    np.testing.assert_allclose(p.sum(axis=1), 1, atol=1e-6)
    for t in forest.trees:
        internal = t.feature != LEAF
        assert ((t.left[internal] != LEAF) & (t.right[internal] != LEAF)).all()
        assert (t.value >= 0).all()


def test_forest_prefix_determinism():
    rng = np.random.default_rng(10)
    X = rng.random((40, 5))
    y = rng.integers(0, 2, 40)
    small, _ = train_forest(X, y, trees=3, seed=2)
    big, _ = train_forest(X, y, trees=6, seed=2)
    for a, b in zip(small.trees, big.trees):
        assert np.array_equal(a.feature, b.feature) and np.array_equal(a.threshold, b.threshold)


def test_forest_needs_two_samples():
    with pytest.raises(Degenerate):
        train_forest(np.ones((1, 2)), [0])


# -- grid search and persistence ---------------------------------------------

def test_grid_single_point(small_dataset):
    result = grid_search(make_baseline("lr2"), {"clf__l2_strength": [0.1]}, small_dataset, k=3)
    assert result.best_params == {"clf__l2_strength": 0.1} and len(result.rows) == 1


def test_grid_rows_and_tie_rule(small_dataset):
    grid = {"clf__l2_strength": [0.05, 0.05], "clf__max_iter": [50, 1000]}
    result = grid_search(make_baseline("lr2"), grid, small_dataset, k=3)
    assert len(result.rows) == 4
    assert result.rows[0]["mean_f1"] == result.rows[2]["mean_f1"]
    assert result.best_index in (0, 1)
    lines = result.to_csv().splitlines()
    assert len(lines) == 5 and lines[0].endswith("mean_f1,std_f1,macro_f1")


def test_grid_identical_points_pick_first(small_dataset):
    result = grid_search(make_baseline("lr2"), {"clf__l2_strength": [1.0, 1.0]}, small_dataset, k=3)
    assert result.best_index == 0


@pytest.mark.parametrize("name", BASELINES)
def test_baseline_persistence(name, small_dataset, tmp_path):
    pipe = make_baseline(name, clf__trees=10) if name.startswith("rf") else make_baseline(name)
    pipe.fit(small_dataset.sequences, small_dataset.labels)
    loaded = load_baseline(save_baseline(pipe, tmp_path / name))
    probe = small_dataset.sequences
    assert np.array_equal(loaded.predict_proba(probe), pipe.predict_proba(probe))
    assert loaded.classes_.tolist() == pipe.classes_.tolist()
