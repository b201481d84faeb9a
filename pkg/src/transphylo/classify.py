"""Linear SVM trained with SMO, one-vs-one multiclass, stratified k-fold CV."""
from __future__ import annotations

import csv
import hashlib
import io
import warnings
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

DEFAULT_C = 1.0
DEFAULT_TOL = 1e-3
_TAU = 1e-12


class ClassifyError(ValueError):
    pass


class ConvergenceWarning(UserWarning):
    pass


def _as_matrix(X) -> np.ndarray:
    if len(X) and hasattr(X[0], "values") and not isinstance(X, np.ndarray):
        X = [x.values for x in X]
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return X


@dataclass(frozen=True, eq=False)
class BinaryModel:
    weights: np.ndarray
    bias: float
    C: float
    support_count: int
    iterations: int = 0

    def decision_function(self, X) -> np.ndarray:
        X = _as_matrix(X)
        if X.shape[1] != len(self.weights):
            raise ClassifyError(f"expected {len(self.weights)} features, got {X.shape[1]}")
        return X @ self.weights + self.bias

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision_function(X) >= 0, 1, -1)


def train_smo(X, y, C: float = DEFAULT_C, tol: float = DEFAULT_TOL,
              max_iter: Optional[int] = None) -> BinaryModel:
    """Solve the soft-margin linear SVM dual by sequential minimal optimization.

    Working pairs are the maximal KKT violators (the first-order selection
    of Keerthi et al.); each step optimizes the pair analytically and
    updates the gradient.  Iteration stops once the largest pairwise
    violation is at most ``tol``.  Ties pick the lowest index, so results
    are fully deterministic.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float)
    n = len(y)
    if X.shape[0] != n:
        raise ClassifyError(f"{X.shape[0]} samples but {n} labels")
    if n < 2:
        raise ClassifyError("need at least two training samples")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ClassifyError("binary labels must be +1 or -1")
    if np.all(y == y[0]):
        raise ClassifyError("training data contains a single class")
    if C <= 0 or tol <= 0:
        raise ClassifyError("C and tol must be positive")
    if max_iter is None:
        max_iter = max(100_000, 200 * n)

    K = X @ X.T
    diag = np.diag(K).copy()
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 0.5 a'Qa - sum(a)
    pos = y > 0
    it = 0
    while True:
        v = -y * grad
        up = (pos & (alpha < C)) | (~pos & (alpha > 0))
        low = (pos & (alpha > 0)) | (~pos & (alpha < C))
        i = int(np.argmax(np.where(up, v, -np.inf)))
        j = int(np.argmin(np.where(low, v, np.inf)))
        gap = v[i] - v[j]
        if gap <= tol:
            break
        if it >= max_iter:
            warnings.warn(f"SMO stopped after {it} iterations with KKT gap {gap:.3g}", ConvergenceWarning)
            break
        it += 1
        eta = max(diag[i] + diag[j] - 2 * K[i, j], _TAU)
        # a_i += y_i t, a_j -= y_j t keeps sum(y a) fixed
        t = gap / eta
        t = min(t, C - alpha[i] if y[i] > 0 else alpha[i])
        t = min(t, alpha[j] if y[j] > 0 else C - alpha[j])
        di, dj = y[i] * t, -y[j] * t
        alpha[i] = min(max(alpha[i] + di, 0.0), C)
        alpha[j] = min(max(alpha[j] + dj, 0.0), C)
        grad += y * (y[i] * di * K[:, i] + y[j] * dj * K[:, j])

    v = -y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        bias = float(v[free].mean())
    else:
        up = (pos & (alpha < C)) | (~pos & (alpha > 0))
        low = (pos & (alpha > 0)) | (~pos & (alpha < C))
        bias = float((v[up].max() + v[low].min()) / 2)
    w = X.T @ (alpha * y)
    return BinaryModel(w, bias, float(C), int(np.count_nonzero(alpha > 0)), it)


def predict(model: BinaryModel, x) -> int:
    """Sign of the decision value for one sample; zero maps to +1."""
    vals = x.values if hasattr(x, "values") else x
    x = np.atleast_1d(np.asarray(vals, dtype=float))
    if x.ndim != 1 or len(x) != len(model.weights):
        raise ClassifyError(f"expected {len(model.weights)} features, got shape {x.shape}")
    return 1 if float(x @ model.weights + model.bias) >= 0 else -1


@dataclass(frozen=True, eq=False)
class MulticlassModel:
    """One-vs-one ensemble; ``models[(a, b)]`` votes for ``labels[a]`` on +1."""

    labels: tuple
    models: dict

    def votes(self, X) -> np.ndarray:
        X = _as_matrix(X)
        votes = np.zeros((X.shape[0], len(self.labels)), dtype=int)
        for (a, b), m in self.models.items():
            pred = m.predict(X)
            votes[:, a] += pred == 1
            votes[:, b] += pred == -1
        return votes

    def predict(self, X) -> list:
        return [self.labels[k] for k in np.argmax(self.votes(X), axis=1)]


def vote_winner(votes: Sequence[int], labels: Sequence) -> object:
    """Label with the most votes; ties go to the earliest label."""
    return labels[int(np.argmax(votes))]


def train_multiclass(X, y: Sequence, C: float = DEFAULT_C, tol: float = DEFAULT_TOL,
                     labels: Optional[Sequence] = None) -> MulticlassModel:
    X = _as_matrix(X)
    y = list(y)
    if labels is None:
        labels = sorted(set(y))
    labels = tuple(labels)
    missing = [lab for lab in labels if lab not in set(y)]
    if missing:
        raise ClassifyError(f"classes without training data: {missing}")
    if len(labels) < 2:
        raise ClassifyError("need at least two classes")
    idx = {lab: k for k, lab in enumerate(labels)}
    yk = np.array([idx[v] for v in y])
    models = {}
    for a, b in combinations(range(len(labels)), 2):
        mask = (yk == a) | (yk == b)
        models[(a, b)] = train_smo(X[mask], np.where(yk[mask] == a, 1.0, -1.0), C, tol)
    return MulticlassModel(labels, models)


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Rows are actual classes, columns predicted classes."""

    labels: tuple
    counts: np.ndarray

    @classmethod
    def from_predictions(cls, actual: Sequence, predicted: Sequence, labels: Sequence) -> "ConfusionMatrix":
        labels = tuple(labels)
        idx = {lab: k for k, lab in enumerate(labels)}
        counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
        for a, p in zip(actual, predicted):
            counts[idx[a], idx[p]] += 1
        return cls(labels, counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total if self.total else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["actual\\predicted", *self.labels])
        for lab, row in zip(self.labels, self.counts):
            w.writerow([lab, *(int(c) for c in row)])
        return buf.getvalue()


def collapse_families(cm: ConfusionMatrix, mapping: Mapping) -> ConfusionMatrix:
    """Sum confusion-matrix blocks by family; family order follows first appearance."""
    unmapped = [lab for lab in cm.labels if lab not in mapping]
    if unmapped:
        raise ClassifyError(f"labels without a family: {unmapped}")
    families = tuple(dict.fromkeys(mapping[lab] for lab in cm.labels))
    fidx = np.array([families.index(mapping[lab]) for lab in cm.labels])
    out = np.zeros((len(families), len(families)), dtype=np.int64)
    np.add.at(out, (fidx[:, None], fidx[None, :]), cm.counts)
    return ConfusionMatrix(families, out)


def _item_key(item) -> bytes:
    if isinstance(item, np.ndarray):
        return item.tobytes()
    if hasattr(item, "values") and isinstance(item.values, np.ndarray):
        return item.values.tobytes()
    return hashlib.sha1(repr(item).encode("utf-8")).digest()


def stratified_folds(y: Sequence, k: int, rng: np.random.Generator,
                     keys: Optional[Sequence[bytes]] = None) -> np.ndarray:
    """Fold index per sample.

    Within each class the samples are put in a canonical order (by
    ``keys``; by position if absent), shuffled with ``rng`` and dealt
    round-robin, so every fold gets an equal share of each class and the
    fold contents do not depend on input order when keys are given.
    """
    y = list(y)
    labels = sorted(set(y), key=repr)
    folds = np.empty(len(y), dtype=int)
    offset = 0
    for lab in labels:
        members = [i for i, v in enumerate(y) if v == lab]
        if len(members) < k:
            raise ClassifyError(f"class {lab!r} has {len(members)} instances, fewer than {k} folds")
        if keys is not None:
            members.sort(key=lambda i: keys[i])
        members = [members[p] for p in rng.permutation(len(members))]
        for r, i in enumerate(members):
            folds[i] = (r + offset) % k
        offset += len(members)
    return folds


FitTransform = Callable[[Sequence, Sequence, Sequence], tuple]


def minmax_fit_transform(train, train_labels, test):
    """Default per-fold preprocessing: min-max scaling fitted on the training rows."""
    from .features import apply_minmax, fit_minmax

    Xtr, Xte = _as_matrix(train), _as_matrix(test)
    lo, span = fit_minmax(Xtr)
    return apply_minmax(Xtr, lo, span), apply_minmax(Xte, lo, span)


@dataclass(frozen=True, eq=False)
class CVResult:
    accuracy: float
    confusion: ConfusionMatrix
    folds: np.ndarray
    fold_accuracies: tuple


def cross_validate(X: Sequence, y: Sequence, k_folds: int = 10, C: float = DEFAULT_C,
                   rng: Optional[np.random.Generator] = None,
                   fit_transform: Optional[FitTransform] = minmax_fit_transform,
                   labels: Optional[Sequence] = None, tol: float = DEFAULT_TOL,
                   keys: Optional[Sequence[bytes]] = None) -> CVResult:
    """Stratified k-fold cross-validation with pooled accuracy and confusion matrix.

    ``X`` may be a feature matrix or any sequence of items; ``fit_transform``
    turns (train items, train labels, test items) into feature matrices and
    is fitted on the training folds only.  Pass ``fit_transform=None`` to
    use ``X`` unchanged.
    """
    if k_folds < 2:
        raise ClassifyError("k_folds must be >= 2")
    y = list(y)
    if len(X) != len(y):
        raise ClassifyError(f"{len(X)} samples but {len(y)} labels")
    rng = rng if rng is not None else np.random.default_rng()
    if labels is None:
        labels = sorted(set(y), key=repr)
    if keys is None:
        keys = [_item_key(x) for x in X]
    folds = stratified_folds(y, k_folds, rng, keys)
    actual, predicted = [], []
    fold_acc = []
    for f in range(k_folds):
        tr = np.flatnonzero(folds != f)
        te = np.flatnonzero(folds == f)
        train = [X[i] for i in tr]
        test = [X[i] for i in te]
        ytr = [y[i] for i in tr]
        if fit_transform is None:
            Xtr, Xte = _as_matrix(train), _as_matrix(test)
        else:
            Xtr, Xte = fit_transform(train, ytr, test)
        model = train_multiclass(Xtr, ytr, C, tol, labels=[lab for lab in labels if lab in set(ytr)])
        pred = model.predict(Xte)
        yte = [y[i] for i in te]
        actual.extend(yte)
        predicted.extend(pred)
        fold_acc.append(float(np.mean([a == p for a, p in zip(yte, pred)])))
    cm = ConfusionMatrix.from_predictions(actual, predicted, labels)
    return CVResult(cm.accuracy, cm, folds, tuple(fold_acc))
