import numpy as np
import pytest
from sklearn.svm import SVC

from transphylo.classify import (ClassifyError, ConfusionMatrix, collapse_families, cross_validate, predict,
                                 stratified_folds, train_multiclass, train_smo, vote_winner, BinaryModel)


def blobs(rng, n=40, d=2, sep=4.0):
    X = np.vstack([rng.normal(size=(n, d)) + sep, rng.normal(size=(n, d)) - sep])
    return X, np.r_[np.ones(n), -np.ones(n)]


def test_two_point_analytic():
    m = train_smo([[-1.0], [1.0]], [-1, 1], C=1.0)
    assert m.weights[0] == pytest.approx(1.0, abs=1e-3)
    assert m.bias == pytest.approx(0.0, abs=1e-3)


def test_predict_sign_rule():
    m = BinaryModel(np.array([1.0]), 0.0, 1.0, 2)
    assert predict(m, [0.5]) == 1
    assert predict(m, [-0.5]) == -1
    assert predict(m, [0.0]) == 1
    with pytest.raises(ClassifyError):
        predict(m, [1.0, 2.0])


def test_separable_training_accuracy(rng):
    X, y = blobs(rng)
    m = train_smo(X, y)
    assert (m.predict(X) == y).all()


def test_errors():
    with pytest.raises(ClassifyError):
        train_smo([[0.0], [1.0]], [1, 1])
    with pytest.raises(ClassifyError):
        train_smo([[0.0], [1.0]], [1])


def test_matches_reference_qp_solver(rng):
    for _ in range(5):
        X, y = blobs(rng, n=30, d=3, sep=0.8)
        ours = train_smo(X, y, C=1.0, tol=1e-6)
        ref = SVC(kernel="linear", C=1.0, tol=1e-8).fit(X, y)
        np.testing.assert_allclose(ours.weights, ref.coef_[0], atol=1e-3)
        assert ours.bias == pytest.approx(ref.intercept_[0], abs=1e-3)


def test_duplicating_points_keeps_boundary(rng):
    X, y = blobs(rng, n=20, sep=3.0)
    a = train_smo(X, y)
    b = train_smo(np.vstack([X, X]), np.r_[y, y])
    grid = rng.normal(size=(200, 2)) * 3
    np.testing.assert_allclose(a.decision_function(grid), b.decision_function(grid), atol=5e-3)


def test_multiclass_three_clusters(rng):
    centers = np.array([[0, 6], [6, 0], [-6, -6]])
    X = np.vstack([rng.normal(size=(20, 2)) + c for c in centers])
    y = ["a"] * 20 + ["b"] * 20 + ["c"] * 20
    m = train_multiclass(X, y)
    assert m.predict(X) == y


def test_multiclass_two_labels_is_binary(rng):
    X, yb = blobs(rng)
    y = ["p" if v > 0 else "n" for v in yb]
    m = train_multiclass(X, y, labels=["p", "n"])
    assert list(m.models) == [(0, 1)]
    b = train_smo(X, yb)
    np.testing.assert_allclose(m.models[(0, 1)].weights, b.weights)


def test_vote_tie_lowest_label():
    assert vote_winner([1, 1, 1], ["a", "b", "c"]) == "a"


def test_stratified_fold_sizes(rng):
    y = ["O"] * 200 + ["T"] * 200
    folds = stratified_folds(y, 10, rng)
    for k in range(10):
        members = [y[i] for i in np.flatnonzero(folds == k)]
        assert len(members) == 40 and members.count("O") == 20


def test_class_smaller_than_k(rng):
    with pytest.raises(ClassifyError):
        stratified_folds(["a"] * 5 + ["b"] * 20, 10, rng)


def test_cv_separable_is_perfect(rng):
    X, y = blobs(rng, n=30, sep=5)
    assert cross_validate(X, y, 5, rng=rng).accuracy == 1.0


def test_cv_noise_is_chance():
    accs = []
    for seed in range(10):
        r = np.random.default_rng(seed)
        X = r.random((100, 10))
        y = ["a"] * 50 + ["b"] * 50
        accs.append(cross_validate(X, y, 10, rng=r).accuracy)
    assert abs(np.mean(accs) - 0.5) <= 0.1


def test_cv_order_invariance(rng):
    X, yb = blobs(rng, n=25, sep=0.7)
    y = list(yb)
    base = cross_validate(X, y, 5, rng=np.random.default_rng(3))
    perm = rng.permutation(len(y))
    shuffled = cross_validate(X[perm], [y[i] for i in perm], 5, rng=np.random.default_rng(3))
    assert base.accuracy == shuffled.accuracy
    np.testing.assert_array_equal(base.folds[perm], shuffled.folds)


def test_collapse_examples():
    labels = [f"l{i}" for i in range(14)]
    fam = {lab: ("G" if i < 4 else "R" if i < 9 else "S") for i, lab in enumerate(labels)}
    diag = ConfusionMatrix(tuple(labels), np.eye(14, dtype=int) * 7)
    assert collapse_families(diag, fam).accuracy == 1.0
    intra = np.zeros((14, 14), dtype=int)
    intra[0, 1] = intra[5, 6] = intra[10, 13] = 3
    assert collapse_families(ConfusionMatrix(tuple(labels), intra), fam).accuracy == 1.0
    uniform = ConfusionMatrix(tuple(labels), np.ones((14, 14), dtype=int))
    assert collapse_families(uniform, fam).accuracy == pytest.approx((16 + 25 + 25) / 196)
    with pytest.raises(ClassifyError):
        collapse_families(diag, {"l0": "G"})


def test_collapse_never_decreases(rng):
    labels = tuple("abcdef")
    fam = dict(zip(labels, "xxyyzz"))
    for _ in range(50):
        cm = ConfusionMatrix(labels, rng.integers(0, 10, size=(6, 6)))
        assert collapse_families(cm, fam).accuracy >= cm.accuracy


def test_confusion_csv():
    cm = ConfusionMatrix.from_predictions(["a", "b", "b"], ["a", "a", "b"], ["a", "b"])
    assert cm.to_csv() == "actual\\predicted,a,b\na,1,0\nb,1,1\n"
    assert cm.accuracy == pytest.approx(2 / 3)
