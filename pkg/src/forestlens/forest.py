"""Bagged forests: training, majority vote, and out-of-bag evaluation."""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from forestlens import rng as streams
from forestlens.cart import DecisionTree, grow_tree
from forestlens.dataset import BootstrapSample, LabeledDataset, bootstrap_sample

MODEL_FORMAT = "forestlens-model"
MODEL_VERSION = 1


@dataclass
class RandomForest:
    trees: list
    bags: list
    m: int
    master_seed: int
    feature_names: list
    class_names: list

    def __post_init__(self):
        if not self.trees or len(self.trees) != len(self.bags):
            raise ValueError("a forest needs J >= 1 trees, one bag per tree")

    @property
    def j_count(self):
        return len(self.trees)

    @property
    def n_classes(self):
        return len(self.class_names)

    @property
    def n_features(self):
        return len(self.feature_names)

    def votes(self, X):
        """N x K matrix of tree votes."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        tally = np.zeros((X.shape[0], self.n_classes), dtype=np.int64)
        rows = np.arange(X.shape[0])
        for tree in self.trees:
            np.add.at(tally, (rows, tree.predict(X)), 1)
        return tally

    def predict(self, X):
        # argmax picks the first maximum: vote ties go to the lowest class index
        return np.argmax(self.votes(X), axis=1)

    def vote_fractions(self, X):
        return self.votes(X) / self.j_count

    def to_dict(self):
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "j_count": self.j_count,
            "m": self.m,
            "master_seed": self.master_seed,
            "feature_names": list(self.feature_names),
            "class_names": list(self.class_names),
            "bags": [bag.in_bag.tolist() for bag in self.bags],
            "trees": [tree.to_dict() for tree in self.trees],
        }

    def dumps(self):
        return json.dumps(self.to_dict(), separators=(",", ":"), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != MODEL_FORMAT:
            raise ValueError("not a forestlens model file")
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')}")
        bags = [BootstrapSample(np.asarray(b, dtype=np.intp)) for b in d["bags"]]
        trees = [DecisionTree.from_dict(t, bag) for t, bag in zip(d["trees"], bags)]
        return cls(trees, bags, d["m"], d["master_seed"], d["feature_names"], d["class_names"])

    @classmethod
    def loads(cls, text):
        return cls.from_dict(json.loads(text))


def _grow_one(args):
    dataset, bag, m, seed, surrogates = args
    return grow_tree(dataset, bag, m, seed, surrogates=surrogates)


def train_forest(
    dataset: LabeledDataset,
    j_count: int,
    m: int,
    master_seed: int,
    surrogates: bool = True,
    n_jobs: int = 1,
) -> RandomForest:
    """Train ``j_count`` trees, each on its own bootstrap sample.

    Bag ``j`` comes from stream ``(master_seed, "bag", j)`` and tree ``j`` is
    grown with seed ``(master_seed, "tree", j)``, so a forest with more trees
    extends a smaller one and parallel training gives identical results.
    """
    if j_count < 1:
        raise ValueError("j_count must be >= 1")
    if not 1 <= m <= dataset.m:
        raise ValueError(f"m must be in [1, {dataset.m}], got {m}")
    bags = [bootstrap_sample(dataset.n, streams.stream(master_seed, "bag", j)) for j in range(j_count)]
    seeds = [streams.child_seed(master_seed, "tree", j) for j in range(j_count)]
    jobs = [(dataset, bag, m, seed, surrogates) for bag, seed in zip(bags, seeds)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(_grow_one, jobs))
        for tree, bag in zip(trees, bags):
            tree.trained_on = bag
    else:
        trees = [_grow_one(job) for job in jobs]
    return RandomForest(trees, bags, m, master_seed, dataset.feature_names, dataset.class_names)


def predict_forest(forest: RandomForest, x) -> int:
    return int(forest.predict(np.asarray(x, dtype=float)[None, :])[0])


@dataclass(frozen=True)
class OOBResult:
    """Pooled out-of-bag votes for every training observation.

    ``votes[i]`` tallies only trees whose bag excludes ``i``; ``prediction[i]``
    is -1 where no such tree exists.
    """

    votes: np.ndarray
    prediction: np.ndarray
    tree_count: np.ndarray

    @property
    def defined(self):
        return self.tree_count > 0

    def vote_fractions(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = self.votes / self.tree_count[:, None]
        return np.where(self.defined[:, None], frac, 0.0)


def oob_tree_sets(forest: RandomForest, n: int):
    """For each observation, the indices of trees whose bag excludes it."""
    member = np.zeros((n, forest.j_count), dtype=bool)
    for j, bag in enumerate(forest.bags):
        member[bag.oob, j] = True
    return [np.flatnonzero(row) for row in member]


def oob_predict(forest: RandomForest, dataset: LabeledDataset) -> OOBResult:
    n = dataset.n
    votes = np.zeros((n, forest.n_classes), dtype=np.int64)
    for tree, bag in zip(forest.trees, forest.bags):
        if bag.n != n:
            raise ValueError("forest was not trained on a dataset of this size")
        rows = bag.oob
        if rows.size:
            np.add.at(votes, (rows, tree.predict(dataset.features[rows])), 1)
    count = votes.sum(axis=1)
    prediction = np.where(count > 0, np.argmax(votes, axis=1), -1)
    return OOBResult(votes, prediction, count)


@dataclass(frozen=True)
class OOBError:
    error: float
    n_observations: int
    n_defined: int
    class_error: list  # None for classes with no defined OOB prediction


def oob_error(forest: RandomForest, dataset: LabeledDataset, oob: OOBResult | None = None) -> OOBError:
    """Misclassification rate of pooled OOB predictions.

    The denominator counts only observations that have at least one
    out-of-bag tree.
    """
    if oob is None:
        oob = oob_predict(forest, dataset)
    defined = oob.defined
    if not defined.any():
        raise ValueError("no observation is out-of-bag for any tree; increase J")
    wrong = (oob.prediction != dataset.labels) & defined
    class_error = []
    for c in range(dataset.k):
        mask = defined & (dataset.labels == c)
        class_error.append(float(wrong[mask].mean()) if mask.any() else None)
    return OOBError(
        error=float(wrong.sum() / defined.sum()),
        n_observations=dataset.n,
        n_defined=int(defined.sum()),
        class_error=class_error,
    )
