import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forestlens.cart import DecisionTree, Leaf, predict_tree
from forestlens.dataset import BootstrapSample, LabeledDataset
from forestlens.forest import (
    OOBResult,
    RandomForest,
    oob_error,
    oob_predict,
    oob_tree_sets,
    predict_forest,
    train_forest,
)
from forestlens.rng import child_seed, stream


def constant_tree(cls, k=2, m=1):
    counts = tuple(1 if c == cls else 0 for c in range(k))
    return DecisionTree(Leaf(counts, cls), 1, None, m, k)


def tiny_dataset(labels, k=2):
    labels = np.asarray(labels)
    return LabeledDataset(["x"], np.arange(labels.size, dtype=float)[:, None], labels, [f"c{i}" for i in range(k)])


class TestStreams:
    def test_same_identity_same_draws(self):
        assert stream(3, "bag", 4).random() == stream(3, "bag", 4).random()

    def test_distinct_identities(self):
        draws = {stream(3, "bag", 4).random(), stream(3, "bag", 5).random(), stream(3, "tree", 4).random(), stream(4, "bag", 4).random()}
        assert len(draws) == 4

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            stream(-1, "bag")
        assert 0 <= child_seed(0, "x") < 2**63


class TestTraining:
    def test_single_tree_forest_is_its_tree(self, averaged_82):
        f = train_forest(averaged_82, 1, 2, 8)
        probes = np.random.default_rng(1).uniform(averaged_82.features.min(0), averaged_82.features.max(0), (200, 4))
        assert np.array_equal(f.predict(probes), f.trees[0].predict(probes))

    def test_same_seed_same_bytes(self, averaged_82):
        assert train_forest(averaged_82, 10, 3, 42).dumps() == train_forest(averaged_82, 10, 3, 42).dumps()
        assert train_forest(averaged_82, 10, 3, 42).dumps() != train_forest(averaged_82, 10, 3, 43).dumps()

    def test_82_rows_train_quickly(self, averaged_82):
        start = time.perf_counter()
        train_forest(averaged_82, 100, 3, 0)
        assert time.perf_counter() - start < 5.0

    def test_more_trees_extend_fewer(self, averaged_82):
        small = train_forest(averaged_82, 60, 2, 11)
        big = train_forest(averaged_82, 120, 2, 11)
        assert [t.to_dict() for t in small.trees] == [t.to_dict() for t in big.trees[:60]]
        assert all(np.array_equal(a.in_bag, b.in_bag) for a, b in zip(small.bags, big.bags))

    def test_parallel_matches_serial(self, averaged_82):
        assert train_forest(averaged_82, 6, 2, 3, n_jobs=2).dumps() == train_forest(averaged_82, 6, 2, 3).dumps()

    @pytest.mark.parametrize("j, m", [(0, 2), (5, 0), (5, 5)])
    def test_bad_hyperparameters(self, averaged_82, j, m):
        with pytest.raises(ValueError):
            train_forest(averaged_82, j, m, 0)

    def test_model_roundtrip_bytes(self, small_forest):
        text = small_forest.dumps()
        assert RandomForest.loads(text).dumps() == text

    def test_model_format_checked(self):
        with pytest.raises(ValueError):
            RandomForest.from_dict({"format": "something-else"})


class TestVoting:
    def test_unanimous(self):
        f = RandomForest([constant_tree(1)] * 3, [BootstrapSample(np.zeros(2, int))] * 3, 1, 0, ["x"], ["a", "b"])
        assert predict_forest(f, [0.0]) == 1

    def test_tie_goes_to_lowest_class(self):
        trees = [constant_tree(1), constant_tree(0), constant_tree(1), constant_tree(0)]
        f = RandomForest(trees, [BootstrapSample(np.zeros(2, int))] * 4, 1, 0, ["x"], ["a", "b"])
        assert predict_forest(f, [0.0]) == 0

    def test_tally_is_sum_of_tree_predictions(self, small_forest, averaged_82):
        X = averaged_82.features
        tally = np.zeros((X.shape[0], small_forest.n_classes), int)
        for tree in small_forest.trees:
            for i, x in enumerate(X):
                tally[i, predict_tree(tree, x)] += 1
        assert np.array_equal(small_forest.votes(X), tally)
        np.testing.assert_allclose(small_forest.vote_fractions(X).sum(axis=1), 1.0)


class TestOOB:
    def test_single_tree(self, averaged_82):
        f = train_forest(averaged_82, 1, 2, 4)
        res = oob_predict(f, averaged_82)
        bag = f.bags[0]
        assert np.all(res.prediction[np.unique(bag.in_bag)] == -1)
        tree_pred = f.trees[0].predict(averaged_82.features[bag.oob])
        assert np.array_equal(res.prediction[bag.oob], tree_pred)

    def test_always_out_of_bag_row_gets_forest_vote(self):
        ds = tiny_dataset([0, 1, 1, 0])
        # row 3 is never drawn
        bags = [BootstrapSample(np.array(b)) for b in ([0, 1, 2, 2], [1, 1, 0, 2], [2, 0, 0, 1])]
        trees = [constant_tree(1), constant_tree(0), constant_tree(1)]
        f = RandomForest(trees, bags, 1, 0, ["x"], ["a", "b"])
        assert oob_predict(f, ds).prediction[3] == predict_forest(f, ds.features[3])

    def test_votes_match_recount(self, small_forest, averaged_82):
        res = oob_predict(small_forest, averaged_82)
        sets = oob_tree_sets(small_forest, averaged_82.n)
        for i, trees in enumerate(sets):
            want = np.zeros(small_forest.n_classes, int)
            for j in trees:
                want[predict_tree(small_forest.trees[j], averaged_82.features[i])] += 1
            assert np.array_equal(res.votes[i], want)
            assert res.tree_count[i] == len(trees)

    @pytest.mark.parametrize(
        "prediction, expected",
        [([0, 1, 0, 1, 1], 0.0), ([1, 0, 1, 0, 0], 1.0), ([0, 1, 1, 0, 1], 0.4)],
    )
    def test_error_counting(self, prediction, expected):
        ds = tiny_dataset([0, 1, 0, 1, 1])
        votes = np.zeros((5, 2), int)
        votes[np.arange(5), prediction] = 1
        res = OOBResult(votes, np.array(prediction), np.ones(5, int))
        assert oob_error(None, ds, res).error == pytest.approx(expected, abs=1e-15)

    def test_undefined_rows_excluded_from_denominator(self):
        ds = tiny_dataset([0, 1, 0, 1, 1])
        res = OOBResult(np.zeros((5, 2), int), np.array([0, 0, -1, -1, 1]), np.array([1, 1, 0, 0, 1]))
        e = oob_error(None, ds, res)
        assert e.error == pytest.approx(1 / 3) and e.n_defined == 3
        assert e.class_error[0] == 0.0 and e.class_error[1] == 0.5

    def test_no_defined_rows(self):
        ds = tiny_dataset([0, 1])
        with pytest.raises(ValueError):
            oob_error(None, ds, OOBResult(np.zeros((2, 2), int), np.array([-1, -1]), np.zeros(2, int)))

    def test_pooled_differs_from_per_tree_average(self):
        ds = tiny_dataset([0, 1, 0])
        # row 2 is in every bag; tree 1 sees rows 0 and 1 out-of-bag, trees 2-3 only row 1
        bags = [BootstrapSample(np.array(b)) for b in ([2, 2, 2], [0, 2, 2], [0, 2, 2])]
        trees = [constant_tree(0), constant_tree(1), constant_tree(1)]
        f = RandomForest(trees, bags, 1, 0, ["x"], ["a", "b"])
        per_tree = np.mean([np.mean(t.predict(ds.features[b.oob]) != ds.labels[b.oob]) for t, b in zip(trees, bags)])
        assert per_tree == pytest.approx(1 / 6)
        assert oob_error(f, ds).error == 0.0

    def test_every_row_defined_with_many_trees(self, averaged_82):
        complete = 0
        for seed in range(100):
            f = train_forest(averaged_82, 50, 2, seed, surrogates=False)
            complete += oob_predict(f, averaged_82).defined.all()
        assert complete >= 99

    @settings(max_examples=25, deadline=None)
    @given(j=st.integers(1, 12), seed=st.integers(0, 2**32 - 1))
    def test_fractions_and_counts(self, averaged_82, j, seed):
        f = train_forest(averaged_82, j, 2, seed, surrogates=False)
        res = oob_predict(f, averaged_82)
        assert np.array_equal(res.votes.sum(axis=1), res.tree_count)
        frac = res.vote_fractions()
        np.testing.assert_allclose(frac[res.defined].sum(axis=1), 1.0)
        assert np.all(frac[~res.defined] == 0)
