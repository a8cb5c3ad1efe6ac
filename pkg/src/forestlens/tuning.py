"""Randomized (J, m) search by cross-validated accuracy, and feature-subset ablations."""

from __future__ import annotations

import csv
import io
import itertools
import logging
from dataclasses import dataclass

import numpy as np

from forestlens import rng as streams
from forestlens.dataset import DataError, LabeledDataset, stratified_kfold
from forestlens.forest import oob_predict, train_forest
from forestlens.metrics import MacroMetrics, confusion_matrix, macro_metrics

log = logging.getLogger(__name__)

# trees per forest and features per split tried by default
DEFAULT_J_GRID = (40, 60, 80, 100, 120)
DEFAULT_M_GRID = (2, 3)


@dataclass(frozen=True)
class SearchSpace:
    j_candidates: tuple = DEFAULT_J_GRID
    m_candidates: tuple = DEFAULT_M_GRID
    n_trials: int = 10
    k_folds: int = 5
    seed: int = 0

    def grid(self):
        return sorted(set(itertools.product(self.j_candidates, self.m_candidates)))

    def validate(self, dataset):
        if not self.j_candidates or not self.m_candidates:
            raise DataError("search space needs at least one J and one m")
        if self.n_trials < 1:
            raise DataError("n_trials must be >= 1")
        if min(self.j_candidates) < 1:
            raise DataError("J candidates must be >= 1")
        if min(self.m_candidates) < 1 or max(self.m_candidates) > dataset.m:
            raise DataError(f"m candidates must lie in [1, {dataset.m}]")


@dataclass(frozen=True)
class TrialResult:
    j: int
    m: int
    mcva: float
    per_fold_accuracy: tuple


@dataclass(frozen=True)
class SearchResult:
    best: TrialResult
    table: list

    def to_csv(self):
        k = len(self.table[0].per_fold_accuracy)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["J", "m", "mcva", *(f"fold_{i + 1}" for i in range(k))])
        for t in self.table:
            w.writerow([t.j, t.m, repr(t.mcva), *(repr(a) for a in t.per_fold_accuracy)])
        return buf.getvalue()


def cross_val_accuracy(dataset: LabeledDataset, plan, j, m, seed):
    scores = []
    for fold in range(plan.k):
        train, test = plan.split(fold)
        forest = train_forest(dataset.select_rows(train), j, m, streams.child_seed(seed, "fold", fold), surrogates=False)
        pred = forest.predict(dataset.features[test])
        scores.append(float(np.mean(pred == dataset.labels[test])))
    return scores


def randomized_search(dataset: LabeledDataset, space: SearchSpace) -> SearchResult:
    """Score sampled (J, m) pairs by mean cross-validated accuracy.

    The folds are drawn once and shared by every trial.  The best row has
    the highest MCVA; ties go to the smaller J, then the smaller m.
    """
    space.validate(dataset)
    grid = space.grid()
    n_trials = space.n_trials
    if n_trials > len(grid):
        log.warning("n_trials=%d exceeds the %d grid points; evaluating all", n_trials, len(grid))
        n_trials = len(grid)
    picker = streams.stream(space.seed, "trials")
    chosen = sorted(picker.choice(len(grid), size=n_trials, replace=False).tolist())
    plan = stratified_kfold(dataset, space.k_folds, streams.child_seed(space.seed, "folds"))
    table = []
    for g in chosen:
        j, m = grid[g]
        acc = cross_val_accuracy(dataset, plan, j, m, streams.child_seed(space.seed, "trial", g))
        table.append(TrialResult(j, m, float(np.mean(acc)), tuple(acc)))
    best = min(table, key=lambda t: (-t.mcva, t.j, t.m))
    return SearchResult(best, table)


@dataclass(frozen=True)
class AblationCase:
    name: str
    feature_subset: tuple
    feature_names: tuple
    m_used: int
    metrics: MacroMetrics


def drop_one_cases(feature_names):
    """All features, then the four three-feature cases.

    With the electrode feature names the cases drop viscosity, StoLR, AMMC
    and CG in turn; otherwise each case drops one feature, last first.
    """
    names = list(feature_names)
    everything = ("All features", tuple(range(len(names))))
    if set(names) >= {"AMMC", "StoLR", "Viscosity", "CG"}:
        drops = ["Viscosity", "StoLR", "AMMC", "CG"]
    else:
        drops = names[::-1]
    cases = [everything]
    for i, drop in enumerate(drops, start=1):
        cases.append((f"Case {i}", tuple(k for k, n in enumerate(names) if n != drop)))
    return cases


def ablation_study(dataset: LabeledDataset, cases, j: int, m: int, seed: int):
    """Train one forest per feature subset and score its OOB predictions.

    ``cases`` is a list of ``(name, feature_indices)``.  If ``m`` exceeds a
    subset's size it is clamped for that case.
    """
    results = []
    for name, subset in cases:
        subset = tuple(int(i) for i in subset)
        if not subset or len(set(subset)) != len(subset) or any(not 0 <= i < dataset.m for i in subset):
            raise DataError(f"{name}: invalid feature subset {subset}")
        m_case = m
        if m > len(subset):
            log.warning("%s: m=%d clamped to subset size %d", name, m, len(subset))
            m_case = len(subset)
        sub = dataset.select_features(subset)
        forest = train_forest(sub, j, m_case, seed, surrogates=False)
        oob = oob_predict(forest, sub)
        ok = oob.defined
        cm = confusion_matrix(sub.labels[ok], oob.prediction[ok], sub.k, sub.class_names)
        results.append(AblationCase(name, subset, tuple(sub.feature_names), m_case, macro_metrics(cm)))
    return results


def ablation_to_csv(cases):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["case", "macroP", "macroR", "macroF1", "occ_rate"])
    for c in cases:
        mm = c.metrics
        w.writerow([c.name, repr(mm.macro_p), repr(mm.macro_r), repr(mm.macro_f1), repr(mm.occ_rate)])
    return buf.getvalue()
