"""Confusion matrix and the rates derived from it.

Orientation: ``counts[p, a]`` counts observations predicted as class ``p``
whose actual class is ``a`` (rows predicted, columns actual).  The augmented
table adds a Prate column, an Rrate row and the overall rate in the corner.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata


@dataclass(frozen=True)
class ClassRates:
    prate: float
    rrate: float
    fmeasure: float
    prate_defined: bool = True
    rrate_defined: bool = True
    fmeasure_defined: bool = True

    @property
    def defined(self):
        return self.prate_defined and self.rrate_defined and self.fmeasure_defined


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray
    class_names: list = field(default_factory=list)

    @property
    def k(self):
        return self.counts.shape[0]

    @property
    def n(self):
        return int(self.counts.sum())

    def augmented(self):
        """(K+1) x (K+1) float table; undefined rates are NaN here only."""
        k = self.k
        out = np.full((k + 1, k + 1), np.nan)
        out[:k, :k] = self.counts
        for c in range(k):
            r = class_metrics(self, c)
            out[c, k] = r.prate if r.prate_defined else np.nan
            out[k, c] = r.rrate if r.rrate_defined else np.nan
        out[k, k] = occ_rate(self)
        return out

    def to_csv(self):
        names = self.class_names or [str(c) for c in range(self.k)]
        table = self.augmented()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["predicted\\actual", *names, "Prate"])

        def pct(v):
            return "-" if np.isnan(v) else f"{100 * v:.1f}%"

        for p in range(self.k):
            w.writerow([names[p], *(int(v) for v in self.counts[p]), pct(table[p, self.k])])
        w.writerow(["Rrate", *(pct(table[self.k, a]) for a in range(self.k)), pct(table[self.k, self.k])])
        return buf.getvalue()

    def to_dict(self):
        rates = [class_metrics(self, c) for c in range(self.k)]
        return {
            "orientation": "rows=predicted, columns=actual",
            "class_names": list(self.class_names),
            "counts": self.counts.tolist(),
            "prate": [r.prate for r in rates],
            "prate_defined": [r.prate_defined for r in rates],
            "rrate": [r.rrate for r in rates],
            "rrate_defined": [r.rrate_defined for r in rates],
            "occ_rate": occ_rate(self),
        }


def confusion_matrix(actual, predicted, k, class_names=None) -> ConfusionMatrix:
    actual = np.asarray(actual, dtype=np.intp)
    predicted = np.asarray(predicted, dtype=np.intp)
    if actual.shape != predicted.shape:
        raise ValueError(f"length mismatch: {actual.size} actual vs {predicted.size} predicted")
    if actual.size == 0:
        raise ValueError("confusion matrix needs at least one observation")
    for name, arr in (("actual", actual), ("predicted", predicted)):
        if arr.min() < 0 or arr.max() >= k:
            raise ValueError(f"{name} class index out of range [0, {k})")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (predicted, actual), 1)
    return ConfusionMatrix(counts, list(class_names) if class_names is not None else [])


def _ratio(num, den):
    return (num / den, True) if den > 0 else (0.0, False)


def class_metrics(cm: ConfusionMatrix, class_index: int) -> ClassRates:
    c = class_index
    tp = cm.counts[c, c]
    p, p_ok = _ratio(tp, cm.counts[c, :].sum())
    r, r_ok = _ratio(tp, cm.counts[:, c].sum())
    f, f_ok = _ratio(2 * p * r, p + r)
    return ClassRates(float(p), float(r), float(f), p_ok, r_ok, f_ok and p_ok and r_ok)


def occ_rate(cm: ConfusionMatrix) -> float:
    n = cm.counts.sum()
    if n == 0:
        raise ValueError("empty confusion matrix")
    return float(np.trace(cm.counts) / n)


@dataclass(frozen=True)
class MacroMetrics:
    macro_p: float
    macro_r: float
    macro_f1: float
    occ_rate: float
    per_class: list

    def to_dict(self):
        return {
            "macro_p": self.macro_p,
            "macro_r": self.macro_r,
            "macro_f1": self.macro_f1,
            "occ_rate": self.occ_rate,
            "per_class": [
                {
                    "prate": r.prate,
                    "rrate": r.rrate,
                    "fmeasure": r.fmeasure,
                    "defined": r.defined,
                }
                for r in self.per_class
            ],
        }


def macro_metrics(cm: ConfusionMatrix) -> MacroMetrics:
    """Unweighted means over all K classes; undefined rates count as 0."""
    rates = [class_metrics(cm, c) for c in range(cm.k)]
    return MacroMetrics(
        macro_p=float(np.mean([r.prate for r in rates])),
        macro_r=float(np.mean([r.rrate for r in rates])),
        macro_f1=float(np.mean([r.fmeasure for r in rates])),
        occ_rate=occ_rate(cm),
        per_class=rates,
    )


@dataclass(frozen=True)
class AUCResult:
    auc: float | None
    per_class: list  # None where the class lacks positives or negatives
    excluded: list


def binary_auc(scores, positive) -> float:
    """Mann-Whitney AUC with midranks for tied scores."""
    scores = np.asarray(scores, dtype=float)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative")
    ranks = rankdata(scores, method="average")
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def auc_ovr(scores, actual) -> AUCResult:
    """Macro one-vs-rest AUC over classes with both positives and negatives."""
    scores = np.asarray(scores, dtype=float)
    actual = np.asarray(actual, dtype=np.intp)
    per_class, excluded = [], []
    for c in range(scores.shape[1]):
        pos = actual == c
        if pos.all() or not pos.any():
            per_class.append(None)
            excluded.append(c)
        else:
            per_class.append(binary_auc(scores[:, c], pos))
    defined = [a for a in per_class if a is not None]
    return AUCResult(float(np.mean(defined)) if defined else None, per_class, excluded)
