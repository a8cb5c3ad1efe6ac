"""Comparison classifiers: a split-budgeted single CART and k-nearest neighbours."""

from __future__ import annotations

import csv
import heapq
import io
from dataclasses import dataclass

import numpy as np

from forestlens import rng as streams
from forestlens.cart import Branch, DecisionTree, _best_split, _surrogates, make_leaf
from forestlens.dataset import DataError, LabeledDataset, identity_sample, stratified_kfold
from forestlens.forest import train_forest
from forestlens.metrics import auc_ovr, confusion_matrix, macro_metrics


@dataclass(frozen=True)
class SoloTreeConfig:
    max_splits: int | None = 20  # None: unlimited

    def __post_init__(self):
        if self.max_splits is not None and self.max_splits < 1:
            raise ValueError("max_splits must be >= 1")


@dataclass(frozen=True)
class KnnConfig:
    neighbors: int = 1

    def __post_init__(self):
        if self.neighbors < 1:
            raise ValueError("neighbors must be >= 1")


class _Pending:
    __slots__ = ("idx", "counts", "split", "children")

    def __init__(self, idx, counts, split):
        self.idx, self.counts, self.split = idx, counts, split
        self.children = None


def train_solo_tree(dataset: LabeledDataset, config: SoloTreeConfig = SoloTreeConfig(), surrogates=True) -> DecisionTree:
    """Grow one CART on all rows and all features, best split first.

    Candidate nodes are expanded in decreasing order of their split's Gini
    decrease (ties by creation order) until ``max_splits`` branch nodes exist.
    """
    X, y, k = dataset.features, dataset.labels, dataset.k
    all_features = range(dataset.m)

    def pending(idx):
        counts = np.bincount(y[idx], minlength=k)
        split = None
        if idx.size >= 2 and np.count_nonzero(counts) > 1:
            split = _best_split(X, y, k, idx, all_features)
        return _Pending(idx, counts, split)

    root = pending(np.arange(dataset.n))
    heap, order, used = [], 0, 0
    if root.split is not None:
        heapq.heappush(heap, (-root.split.delta_gini, order, root))
    budget = config.max_splits if config.max_splits is not None else np.inf
    while heap and used < budget:
        _, _, node = heapq.heappop(heap)
        go_left = X[node.idx, node.split.feature] < node.split.threshold
        node.children = (pending(node.idx[go_left]), pending(node.idx[~go_left]))
        used += 1
        for child in node.children:
            if child.split is not None:
                order += 1
                heapq.heappush(heap, (-child.split.delta_gini, order, child))

    def freeze(p):
        if p.children is None:
            return make_leaf(p.counts)
        sur = _surrogates(X, p.idx, p.split) if surrogates else ()
        return Branch(p.split, sur, freeze(p.children[0]), freeze(p.children[1]), tuple(int(c) for c in p.counts))

    return DecisionTree(freeze(root), dataset.m, None, dataset.m, k, identity_sample(dataset.n))


class KnnModel:
    """z-scored Euclidean k-NN; ties in distance go to the lower training row."""

    def __init__(self, train: LabeledDataset, config: KnnConfig = KnnConfig()):
        if config.neighbors > train.n:
            raise DataError(f"k={config.neighbors} exceeds {train.n} training rows")
        self.config = config
        self.k_classes = train.k
        self.mean = train.features.mean(axis=0)
        sd = train.features.std(axis=0)
        self.scale = np.where(sd > 0, sd, 1.0)
        self.Z = (train.features - self.mean) / self.scale
        self.labels = train.labels

    def neighbours(self, x):
        z = (np.asarray(x, dtype=float) - self.mean) / self.scale
        d2 = ((self.Z - z) ** 2).sum(axis=1)
        return np.argsort(d2, kind="stable")[: self.config.neighbors]

    def vote_fractions(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros((X.shape[0], self.k_classes))
        for r, x in enumerate(X):
            out[r] = np.bincount(self.labels[self.neighbours(x)], minlength=self.k_classes)
        return out / self.config.neighbors

    def predict(self, X):
        return np.argmax(self.vote_fractions(X), axis=1)


def knn_predict(train: LabeledDataset, x, config: KnnConfig = KnnConfig()) -> int:
    return int(KnnModel(train, config).predict(x)[0])


@dataclass(frozen=True)
class ApproachScore:
    approach: str
    macro_f1: float
    auc: float | None
    predictions: np.ndarray


def compare_approaches(
    dataset: LabeledDataset,
    j: int,
    m: int,
    seed: int,
    k_folds: int = 5,
    solo: SoloTreeConfig = SoloTreeConfig(),
    knn: KnnConfig = KnnConfig(),
):
    """k-fold predictions for solo DT, k-NN and the forest, scored on pooled folds."""
    plan = stratified_kfold(dataset, k_folds, streams.child_seed(seed, "folds"))
    names = ("DT", "KNN", "RF")
    preds = {a: np.zeros(dataset.n, dtype=np.intp) for a in names}
    scores = {a: np.zeros((dataset.n, dataset.k)) for a in names}
    for fold in range(k_folds):
        train_rows, test_rows = plan.split(fold)
        train = dataset.select_rows(train_rows)
        Xt = dataset.features[test_rows]
        tree = train_solo_tree(train, solo, surrogates=False)
        knn_model = KnnModel(train, knn)
        forest = train_forest(train, j, m, streams.child_seed(seed, "fold", fold), surrogates=False)
        scores["DT"][test_rows] = tree.predict_proba(Xt)
        scores["KNN"][test_rows] = knn_model.vote_fractions(Xt)
        scores["RF"][test_rows] = forest.vote_fractions(Xt)
        preds["DT"][test_rows] = tree.predict(Xt)
        preds["KNN"][test_rows] = knn_model.predict(Xt)
        preds["RF"][test_rows] = forest.predict(Xt)
    out = []
    for a in names:
        cm = confusion_matrix(dataset.labels, preds[a], dataset.k, dataset.class_names)
        out.append(ApproachScore(a, macro_metrics(cm).macro_f1, auc_ovr(scores[a], dataset.labels).auc, preds[a]))
    return out


def comparison_to_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["approach", "macroF1", "auc"])
    for r in rows:
        w.writerow([r.approach, repr(r.macro_f1), "" if r.auc is None else repr(r.auc)])
    return buf.getvalue()
