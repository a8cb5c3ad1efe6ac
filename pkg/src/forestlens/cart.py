"""Unpruned CART classification trees with Gini splits and surrogate splits.

A node's samples are an index array into the training matrix; bootstrap
duplicates are kept, so every count and proportion below is weighted by
multiplicity.  Samples with ``x[feature] < threshold`` go left.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from typing import Union

import numpy as np

from forestlens import _kernels
from forestlens.dataset import BootstrapSample, LabeledDataset

# gains within this distance of the best are ties (resolved by feature, then threshold)
TIE_TOL = 1e-12


def gini_impurity(counts) -> float:
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total <= 0:
        raise ValueError("Gini impurity of an empty node is undefined")
    p = counts / total
    return float(1.0 - np.dot(p, p))


def weighted_child_impurity(left, right) -> float:
    nl = float(np.sum(left))
    nr = float(np.sum(right))
    n = nl + nr
    if n <= 0:
        raise ValueError("both children are empty")
    total = 0.0
    if nl > 0:
        total += nl / n * gini_impurity(left)
    if nr > 0:
        total += nr / n * gini_impurity(right)
    return total


def pmoa(min_side, p_left_left, p_right_right):
    """Predictive measure of association from the three proportions.

    ``min_side`` is min(Pl, Pr) of the optimal split; the other two are the
    fractions of node samples both splits send left, and both send right.
    """
    return (min_side - 1.0 + p_left_left + p_right_right) / min_side


@dataclass(frozen=True)
class DecisionSplit:
    feature: int
    threshold: float
    delta_gini: float
    left_fraction: float


@dataclass(frozen=True)
class SurrogateSplit:
    feature: int
    threshold: float
    flipped: bool  # True: x >= threshold goes left
    pmoa: float

    def goes_left(self, x):
        x = np.asarray(x)
        return x >= self.threshold if self.flipped else x < self.threshold


@dataclass(frozen=True)
class Leaf:
    counts: tuple
    predicted: int

    @property
    def n(self):
        return sum(self.counts)


@dataclass(frozen=True)
class Branch:
    split: DecisionSplit
    surrogates: tuple
    left: "Node"
    right: "Node"
    counts: tuple

    @property
    def n(self):
        return sum(self.counts)


Node = Union[Leaf, Branch]


def make_leaf(counts) -> Leaf:
    counts = tuple(int(c) for c in counts)
    # argmax returns the first maximum: ties go to the lowest class index
    return Leaf(counts, int(np.argmax(counts)))


def _best_split(X, y, k, idx, features):
    if idx.size < 2:
        return None
    feats = np.unique(np.asarray(features, dtype=np.int64))
    f, threshold, gain, n_left = _kernels.best_cut(X, y, idx, feats, k, TIE_TOL)
    if f < 0:
        return None
    return DecisionSplit(int(f), float(threshold), float(gain), n_left / idx.size)


def best_split(samples, dataset: LabeledDataset, candidate_features):
    """Highest-gain split over the candidate features, or ``None``.

    Thresholds are midpoints between consecutive distinct values.  ``None``
    means no candidate feature varies on the node, or no split reduces Gini.
    """
    idx = np.asarray(samples, dtype=np.intp)
    if idx.size == 0 or len(candidate_features) == 0:
        raise ValueError("best_split needs samples and candidate features")
    return _best_split(dataset.features, dataset.labels, dataset.k, idx, candidate_features)


def _surrogates(X, idx, split):
    Xn = X[idx]
    goes_left = Xn[:, split.feature] < split.threshold
    out = []
    for g in range(X.shape[1]):
        if g == split.feature:
            continue
        threshold, flipped, value = _kernels.best_surrogate(np.ascontiguousarray(Xn[:, g]), goes_left)
        out.append(SurrogateSplit(g, float(threshold), bool(flipped), float(value)))
    return tuple(out)


def find_surrogates(samples, dataset: LabeledDataset, optimal: DecisionSplit):
    """Best-mimicking split on every other feature, one per feature, by PMOA."""
    idx = np.asarray(samples, dtype=np.intp)
    left = dataset.features[idx, optimal.feature] < optimal.threshold
    if left.all() or not left.any():
        raise ValueError("optimal split does not separate these samples")
    return list(_surrogates(dataset.features, idx, optimal))


def _build(flat, with_surrogates):
    feature, threshold, gain, left_frac, left, right, counts, sur_thr, sur_flip, sur_pmoa = flat
    n_nodes, n_features = sur_thr.shape
    feature_l = feature.tolist()
    counts_l = [tuple(c) for c in counts.tolist()]
    built = [None] * n_nodes
    # children always carry larger ids than their parent
    for i in range(n_nodes - 1, -1, -1):
        f = feature_l[i]
        if f < 0:
            c = counts_l[i]
            built[i] = Leaf(c, c.index(max(c)))
            continue
        split = DecisionSplit(f, float(threshold[i]), float(gain[i]), float(left_frac[i]))
        sur = ()
        if with_surrogates:
            sur = tuple(
                SurrogateSplit(g, float(sur_thr[i, g]), bool(sur_flip[i, g]), float(sur_pmoa[i, g]))
                for g in range(n_features)
                if g != f
            )
        built[i] = Branch(split, sur, built[left[i]], built[right[i]], counts_l[i])
    return built[0]


def _routing_arrays(flat):
    # same layout DecisionTree._arrays builds, already in pre-order
    feature, threshold, _, _, left, right, counts = flat[:7]
    counts = counts.astype(float)
    predicted = np.where(feature < 0, np.argmax(counts, axis=1), -1)
    dist = counts / counts.sum(axis=1, keepdims=True)
    return (
        feature.astype(np.intp),
        threshold.copy(),
        left.astype(np.intp),
        right.astype(np.intp),
        predicted.astype(np.intp),
        dist,
    )


@dataclass
class DecisionTree:
    root: Node
    m_used: int
    seed: int | None
    n_features: int
    n_classes: int
    trained_on: BootstrapSample | None = None

    def __post_init__(self):
        self._flat = None

    def _route(self, X):
        feature, threshold, left, right, _, _ = self._arrays()
        X = np.atleast_2d(np.asarray(X, dtype=float))
        node = np.zeros(X.shape[0], dtype=np.intp)
        rows = np.arange(X.shape[0])
        active = feature[node] >= 0
        while active.any():
            a = rows[active]
            nd = node[a]
            go_left = X[a, feature[nd]] < threshold[nd]
            node[a] = np.where(go_left, left[nd], right[nd])
            active[a] = feature[node[a]] >= 0
        return node

    def predict(self, X):
        """Vectorised routing of the rows of ``X`` to leaf classes."""
        return self._arrays()[4][self._route(X)]

    def predict_proba(self, X):
        """Leaf class distributions, normalised to fractions."""
        return self._arrays()[5][self._route(X)]

    def _arrays(self):
        if self._flat is None:
            feature, threshold, left, right, predicted, dist = [], [], [], [], [], []
            stack = [(self.root, -1, False)]
            while stack:
                node, parent, is_left = stack.pop()
                i = len(feature)
                if parent >= 0:
                    (left if is_left else right)[parent] = i
                left.append(-1)
                right.append(-1)
                counts = np.asarray(node.counts, dtype=float)
                dist.append(counts / counts.sum())
                if isinstance(node, Leaf):
                    feature.append(-1)
                    threshold.append(0.0)
                    predicted.append(node.predicted)
                else:
                    feature.append(node.split.feature)
                    threshold.append(node.split.threshold)
                    predicted.append(-1)
                    stack.append((node.right, i, False))
                    stack.append((node.left, i, True))
            self._flat = (
                np.array(feature, dtype=np.intp),
                np.array(threshold, dtype=float),
                np.array(left, dtype=np.intp),
                np.array(right, dtype=np.intp),
                np.array(predicted, dtype=np.intp),
                np.array(dist, dtype=float).reshape(len(feature), self.n_classes),
            )
        return self._flat

    def nodes(self):
        """Pre-order iteration over all nodes."""
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if isinstance(node, Branch):
                stack.append(node.right)
                stack.append(node.left)

    def branches(self):
        return (n for n in self.nodes() if isinstance(n, Branch))

    @property
    def n_leaves(self):
        return sum(isinstance(n, Leaf) for n in self.nodes())

    @property
    def depth(self):
        def _d(node):
            return 0 if isinstance(node, Leaf) else 1 + max(_d(node.left), _d(node.right))

        return _d(self.root)

    def to_dict(self):
        return {
            "m_used": self.m_used,
            "seed": self.seed,
            "n_features": self.n_features,
            "n_classes": self.n_classes,
            "root": node_to_dict(self.root),
        }

    @classmethod
    def from_dict(cls, d, trained_on=None):
        return cls(
            root=node_from_dict(d["root"]),
            m_used=d["m_used"],
            seed=d["seed"],
            n_features=d["n_features"],
            n_classes=d["n_classes"],
            trained_on=trained_on,
        )


def node_to_dict(node):
    if isinstance(node, Leaf):
        return {"leaf": True, "counts": list(node.counts), "predicted": node.predicted}
    s = node.split
    return {
        "leaf": False,
        "counts": list(node.counts),
        "split": {
            "feature": s.feature,
            "threshold": s.threshold,
            "delta_gini": s.delta_gini,
            "left_fraction": s.left_fraction,
        },
        "surrogates": [
            {"feature": g.feature, "threshold": g.threshold, "flipped": g.flipped, "pmoa": g.pmoa}
            for g in node.surrogates
        ],
        "left": node_to_dict(node.left),
        "right": node_to_dict(node.right),
    }


def node_from_dict(d):
    if d["leaf"]:
        return Leaf(tuple(d["counts"]), d["predicted"])
    return Branch(
        split=DecisionSplit(**d["split"]),
        surrogates=tuple(SurrogateSplit(**g) for g in d["surrogates"]),
        left=node_from_dict(d["left"]),
        right=node_from_dict(d["right"]),
        counts=tuple(d["counts"]),
    )


def _ensure_recursion(depth_needed):
    if sys.getrecursionlimit() < depth_needed + 200:
        sys.setrecursionlimit(depth_needed + 200)


def grow_tree(dataset: LabeledDataset, bag: BootstrapSample, m: int, seed, surrogates=True) -> DecisionTree:
    """Grow an unpruned tree on the bag's in-bag samples.

    A generator seeded by ``seed`` fills one row of random keys per potential
    node; the node numbered ``t`` in pre-order tries the ``m`` features with
    the smallest keys in row ``t``.  A node becomes a leaf when it is pure,
    holds fewer than two samples, or admits no positive-gain split.
    ``surrogates=False`` skips surrogate search (prediction is unaffected).
    """
    if not 1 <= m <= dataset.m:
        raise ValueError(f"m must be in [1, {dataset.m}], got {m}")
    if bag.n != dataset.n:
        raise ValueError("bootstrap sample does not match the dataset size")
    rng = np.random.default_rng(seed)
    _ensure_recursion(dataset.n)
    samples = np.sort(bag.in_bag).astype(np.int64)
    # node t (pre-order) takes the m features with the smallest keys in row t
    keys = rng.random((2 * samples.size + 1, dataset.m))
    X = np.ascontiguousarray(dataset.features, dtype=float)
    y = np.ascontiguousarray(dataset.labels, dtype=np.int64)
    flat = _kernels.grow(X, y, samples, dataset.k, m, keys, surrogates, TIE_TOL)
    tree = DecisionTree(
        root=_build(flat, surrogates),
        m_used=m,
        seed=seed if isinstance(seed, (int, np.integer)) else None,
        n_features=dataset.m,
        n_classes=dataset.k,
        trained_on=bag,
    )
    tree._flat = _routing_arrays(flat)
    return tree


def predict_tree(tree: DecisionTree, x) -> int:
    node = tree.root
    while isinstance(node, Branch):
        node = node.left if x[node.split.feature] < node.split.threshold else node.right
    return node.predicted
