"""Synthetic electrode-manufacturing tables with planted structure.

Four process features are drawn as latent Gaussians, rank-quantised into a
fixed number of levels and mapped onto a physical range.  A feature can be
made monotonically dependent on another through its latent value.  The two
targets are linear scores of the standardised features plus noise, rescaled
so that the default class boundaries split them into five classes.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from forestlens.dataset import DEFAULT_RULES, DataError, LabeledDataset, RawTable


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    low: float
    high: float
    levels: int


DEFAULT_FEATURES = (
    FeatureSpec("AMMC", 92.0, 98.0, 4),
    FeatureSpec("StoLR", 0.55, 0.77, 23),
    FeatureSpec("Viscosity", 1200.0, 6500.0, 76),
    FeatureSpec("CG", 100.0, 350.0, 6),
)

# target -> (centre, spread, feature weights)
DEFAULT_TARGETS = {
    "mass_load": (30.0, 12.0, {"AMMC": 0.3, "StoLR": 0.35, "Viscosity": 0.0, "CG": 1.0}),
    "porosity": (51.25, 3.0, {"AMMC": 0.05, "StoLR": 0.6, "Viscosity": 0.5, "CG": 0.3}),
}


@dataclass(frozen=True)
class SyntheticSpec:
    n_observations: int = 656
    group_size: int = 8
    features: tuple = DEFAULT_FEATURES
    # (parent, child, strength): child latent = s * parent latent + sqrt(1 - s^2) * noise
    dependencies: tuple = (("AMMC", "StoLR", 0.9),)
    targets: dict = field(default_factory=lambda: dict(DEFAULT_TARGETS))
    noise: float = 0.1  # share of target variance that is label noise
    sample_noise: float = 0.02  # per-row jitter within a group, relative to spread
    seed: int = 0

    def validate(self):
        if self.n_observations < 1 or self.group_size < 1:
            raise DataError("n_observations and group_size must be positive")
        if self.n_observations % self.group_size:
            raise DataError("n_observations must be a multiple of group_size")
        groups = self.n_observations // self.group_size
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise DataError("feature names must be unique")
        for f in self.features:
            if f.levels < 1:
                raise DataError(f"{f.name}: level count must be >= 1")
            if f.levels > groups:
                raise DataError(f"{f.name}: {f.levels} levels need at least that many groups")
            if f.levels > 1 and not f.high > f.low:
                raise DataError(f"{f.name}: need high > low")
        if not 0 <= self.noise < 1:
            raise DataError("noise level must be in [0, 1)")
        if self.sample_noise < 0:
            raise DataError("sample_noise must be >= 0")
        for parent, child, s in self.dependencies:
            if parent not in names or child not in names or parent == child:
                raise DataError(f"bad dependency {parent!r} -> {child!r}")
            if not -1 <= s <= 1:
                raise DataError("dependency strength must be in [-1, 1]")
        for target, (_, spread, weights) in self.targets.items():
            if set(weights) - set(names):
                raise DataError(f"{target}: weights for unknown features")
            if spread <= 0:
                raise DataError(f"{target}: spread must be positive")

    def to_dict(self):
        d = asdict(self)
        d["features"] = [asdict(f) for f in self.features]
        d["dependencies"] = [list(dep) for dep in self.dependencies]
        d["targets"] = {k: {"centre": c, "spread": s, "weights": w} for k, (c, s, w) in self.targets.items()}
        return d


def _quantise(latent, levels, low, high):
    if levels == 1:
        return np.full(latent.shape, float(low))
    ranks = np.argsort(np.argsort(latent, kind="stable"), kind="stable")
    level = ranks * levels // latent.size
    return low + level * (high - low) / (levels - 1)


def generate(spec: SyntheticSpec):
    """Return ``(RawTable, ground_truth_dict)``."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    groups = spec.n_observations // spec.group_size
    names = [f.name for f in spec.features]
    latent = {name: rng.standard_normal(groups) for name in names}
    for parent, child, s in spec.dependencies:
        latent[child] = s * latent[parent] + np.sqrt(1 - s * s) * latent[child]
    values = {f.name: _quantise(latent[f.name], f.levels, f.low, f.high) for f in spec.features}

    def standardised(v):
        sd = v.std()
        return (v - v.mean()) / sd if sd > 0 else np.zeros_like(v)

    z = {name: standardised(values[name]) for name in names}
    columns = {name: np.repeat(values[name], spec.group_size) for name in names}
    truth = {"dominant": {}, "weights": {}, "dependencies": [list(d) for d in spec.dependencies]}
    for target, (centre, spread, weights) in spec.targets.items():
        signal = sum(w * z[name] for name, w in weights.items())
        signal = standardised(np.asarray(signal, dtype=float) + np.zeros(groups))
        score = np.sqrt(1 - spec.noise) * signal + np.sqrt(spec.noise) * rng.standard_normal(groups)
        group_value = centre + spread * score
        jitter = spec.sample_noise * spread * rng.standard_normal((groups, spec.group_size))
        if spec.group_size > 1:
            jitter -= jitter.mean(axis=1, keepdims=True)  # group means stay exact
        else:
            jitter[:] = 0.0
        columns[target] = (group_value[:, None] + jitter).ravel()
        truth["weights"][target] = dict(weights)
        truth["dominant"][target] = max(weights, key=lambda k: abs(weights[k]))
    header = names + list(spec.targets)
    rows = np.column_stack([columns[c] for c in header])
    truth["level_counts"] = {name: int(np.unique(values[name]).size) for name in names}
    truth["spec"] = spec.to_dict()
    return RawTable(header, rows, "<synthetic>"), truth


def table_to_csv(table: RawTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.column_names)
    for row in table.rows:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def truth_to_json(truth) -> str:
    return json.dumps(truth, indent=2, sort_keys=True) + "\n"


def synthetic_dataset(target="mass_load", **kwargs) -> LabeledDataset:
    """Generate, average by group and label in one step (test and demo helper)."""
    from forestlens.dataset import group_average, make_dataset

    spec = SyntheticSpec(**kwargs)
    table, _ = generate(spec)
    table = group_average(table, spec.group_size)
    return make_dataset(table, target, DEFAULT_RULES[target], [f.name for f in spec.features])


__all__ = [
    "FeatureSpec",
    "SyntheticSpec",
    "generate",
    "synthetic_dataset",
    "table_to_csv",
    "truth_to_json",
]
