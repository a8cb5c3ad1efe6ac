"""Feature importance estimators and the surrogate-association matrix."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from forestlens import rng as streams
from forestlens.dataset import LabeledDataset
from forestlens.forest import RandomForest


@dataclass(frozen=True)
class PermutationResult:
    ofm: np.ndarray  # per-feature mean local importance over all N observations
    normalized: list  # OFM / std of per-tree error differences; None where std is 0
    tree_diffs: np.ndarray  # J x M per-tree OOB error increase


def permutation_importance(forest: RandomForest, dataset: LabeledDataset, seed: int, repeats: int = 1):
    """OOB permutation importance.

    For every tree and feature, the feature is shuffled among that tree's
    out-of-bag rows only and the tree re-predicts them.  Each observation's
    local importance is its permuted-minus-original error rate over the trees
    it is out-of-bag for; the feature score averages that over all N rows,
    with rows that have no out-of-bag tree contributing 0.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    X, y = dataset.features, dataset.labels
    n, m = X.shape
    tree_count = np.zeros(n)
    base_err = np.zeros(n)
    perm_err = np.zeros((repeats, m, n))
    tree_diffs = np.zeros((repeats, forest.j_count, m))
    for j, (tree, bag) in enumerate(zip(forest.trees, forest.bags)):
        rows = bag.oob
        if rows.size == 0:
            continue
        Xo = X[rows]
        base_wrong = tree.predict(Xo) != y[rows]
        tree_count[rows] += 1
        base_err[rows] += base_wrong
        for r in range(repeats):
            for k in range(m):
                gen = streams.stream(seed, "permute", r, j, k)
                Xp = Xo.copy()
                Xp[:, k] = Xo[gen.permutation(rows.size), k]
                wrong = tree.predict(Xp) != y[rows]
                perm_err[r, k, rows] += wrong
                tree_diffs[r, j, k] = wrong.mean() - base_wrong.mean()
    has_trees = tree_count > 0
    denom = np.where(has_trees, tree_count, 1.0)
    local = np.where(has_trees, (perm_err - base_err) / denom, 0.0)
    ofm = local.mean(axis=2).mean(axis=0)
    diffs = tree_diffs.mean(axis=0)
    used = np.array([bag.oob.size > 0 for bag in forest.bags])
    normalized = []
    for k in range(m):
        d = diffs[used, k]
        sd = float(np.std(d, ddof=1)) if d.size > 1 else 0.0
        normalized.append(float(ofm[k] / sd) if sd > 0 else None)
    return PermutationResult(ofm, normalized, diffs)


@dataclass(frozen=True)
class GiniResult:
    importance: np.ndarray
    total: np.ndarray
    split_count: np.ndarray


def gini_importance(forest: RandomForest, weighted: bool = True) -> GiniResult:
    """Mean Gini decrease per split on each feature, over every tree.

    Each split's decrease is scaled by the node's share of its tree's in-bag
    samples, then summed per feature and divided by that feature's split
    count.  ``weighted=False`` uses the raw node-local decrease instead, which
    lets tiny deep nodes (where any feature can score a large decrease)
    dominate the average.
    """
    m = forest.n_features
    total = np.zeros(m)
    count = np.zeros(m, dtype=np.int64)
    for tree in forest.trees:
        root_n = tree.root.n
        for node in tree.branches():
            f = node.split.feature
            gain = node.split.delta_gini
            if weighted:
                gain *= node.n / root_n
            total[f] += gain
            count[f] += 1
    importance = np.divide(total, count, out=np.zeros(m), where=count > 0)
    return GiniResult(importance, total, count)


@dataclass(frozen=True)
class AssociationMatrix:
    """``values[e, g]``: aggregated PMOA of surrogates on ``g`` for splits on ``e``.

    ``aggregation`` is ``"weighted"`` (node-size weighted mean), ``"mean"``
    (plain mean over nodes) or ``"max"``.

    NaN marks pairs with no qualifying node; ``counts`` holds how many nodes
    contributed.  The diagonal is 1 by convention.
    """

    values: np.ndarray
    counts: np.ndarray
    feature_names: list
    aggregation: str = "weighted"

    def defined(self):
        return ~np.isnan(self.values)

    def undefined_cells(self):
        return [
            {"row": self.feature_names[e], "column": self.feature_names[g]}
            for e, g in zip(*np.nonzero(np.isnan(self.values)))
        ]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["split_feature\\surrogate", *self.feature_names])
        for e, name in enumerate(self.feature_names):
            w.writerow([name, *("" if np.isnan(v) else repr(float(v)) for v in self.values[e])])
        return buf.getvalue()


AGGREGATIONS = ("weighted", "mean", "max")


def association_matrix(forest: RandomForest, aggregation: str = "weighted") -> AssociationMatrix:
    """Aggregate stored surrogate PMOA values into an M x M matrix.

    The default weights each node by its sample count.  Deep nodes hold a
    handful of samples, and the best of many thresholds on an unrelated
    feature often mimics such a split by chance, so a plain mean over nodes
    overstates association between independent features.
    """
    if aggregation not in AGGREGATIONS:
        raise ValueError(f"aggregation must be one of {AGGREGATIONS}")
    m = forest.n_features
    total = np.zeros((m, m))
    weight = np.zeros((m, m))
    best = np.full((m, m), -np.inf)
    counts = np.zeros((m, m), dtype=np.int64)
    for tree in forest.trees:
        for node in tree.branches():
            e = node.split.feature
            w = float(node.n) if aggregation == "weighted" else 1.0
            for s in node.surrogates:
                total[e, s.feature] += w * s.pmoa
                weight[e, s.feature] += w
                best[e, s.feature] = max(best[e, s.feature], s.pmoa)
                counts[e, s.feature] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        values = best if aggregation == "max" else total / weight
    values = np.where(counts > 0, values, np.nan)
    np.fill_diagonal(values, 1.0)
    return AssociationMatrix(values, counts, list(forest.feature_names), aggregation)


@dataclass(frozen=True)
class ImportanceReport:
    feature_names: list
    unbiased_fi: np.ndarray
    gini_fi: np.ndarray
    split_count: np.ndarray
    normalized_fi: list

    def ranking(self, by="unbiased_fi"):
        """Feature indices ordered most to least important (stable on ties)."""
        values = np.asarray(getattr(self, by), dtype=float)
        return [int(i) for i in np.argsort(-values, kind="stable")]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["feature", "unbiased_fi", "gini_fi", "split_count"])
        for k, name in enumerate(self.feature_names):
            w.writerow([name, repr(float(self.unbiased_fi[k])), repr(float(self.gini_fi[k])), int(self.split_count[k])])
        return buf.getvalue()

    def to_dict(self):
        return {
            "features": [
                {
                    "feature": name,
                    "unbiased_fi": float(self.unbiased_fi[k]),
                    "gini_fi": float(self.gini_fi[k]),
                    "split_count": int(self.split_count[k]),
                    "normalized_fi": self.normalized_fi[k],
                }
                for k, name in enumerate(self.feature_names)
            ]
        }


def importance_report(forest, dataset, seed, repeats=1, weighted_gini=True) -> ImportanceReport:
    perm = permutation_importance(forest, dataset, seed, repeats)
    gini = gini_importance(forest, weighted=weighted_gini)
    return ImportanceReport(list(dataset.feature_names), perm.ofm, gini.importance, gini.split_count, perm.normalized)
