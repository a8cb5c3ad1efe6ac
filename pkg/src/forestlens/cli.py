"""``forestlens`` command line: synthetic data through to report bundles.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant
violation.  Every output file is written to a temporary name in the target
directory and renamed into place.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from forestlens import __version__
from forestlens.baselines import KnnConfig, SoloTreeConfig, compare_approaches, comparison_to_csv
from forestlens.dataset import (
    DEFAULT_RULES,
    TARGET_COLUMNS,
    DataError,
    LabelRule,
    group_average,
    load_csv,
    make_dataset,
)
from forestlens.forest import RandomForest, oob_error, oob_predict, train_forest
from forestlens.importance import AGGREGATIONS, association_matrix, importance_report
from forestlens.metrics import auc_ovr, confusion_matrix, macro_metrics
from forestlens.plotting import heatmap_svg
from forestlens.synth import SyntheticSpec, generate, table_to_csv, truth_to_json
from forestlens.tuning import (
    DEFAULT_J_GRID,
    DEFAULT_M_GRID,
    SearchSpace,
    ablation_study,
    ablation_to_csv,
    drop_one_cases,
    randomized_search,
)

log = logging.getLogger("forestlens")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

# prep adds this column; later commands never treat it as a feature
CLASS_COLUMN = "class"

REPORT_FILES = (
    "model.json",
    "confusion_matrix.csv",
    "metrics.json",
    "importance.csv",
    "association.csv",
    "association.svg",
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def write_atomic(path, data):
    """Write ``data`` (str or bytes) to ``path`` via a temp file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj):
    # allow_nan=False: undefined quantities must already be explicit nulls
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _seed(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("seed must be non-negative")
    return value


def _int_list(text):
    try:
        values = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("grid values must be >= 1")
    return values


def load_labeled(args):
    """Read ``--input``, average groups and bin the target."""
    table = load_csv(args.input)
    table = group_average(table, args.group_size)
    rule = LabelRule.from_json(args.labels) if args.labels else DEFAULT_RULES[args.target]
    features = [c for c in table.column_names if c not in TARGET_COLUMNS and c != CLASS_COLUMN]
    return make_dataset(table, args.target, rule, features)


def _check_mtry(m, dataset):
    if not 1 <= m <= dataset.m:
        raise UsageError(f"--mtry must be in [1, {dataset.m}] for {dataset.m} features, got {m}")


def _emit(args, name, text):
    write_atomic(Path(args.out) / name, text)
    sys.stdout.write(text)


def cmd_synth(args):
    spec = SyntheticSpec(
        n_observations=args.n_observations,
        group_size=args.group_size,
        noise=args.noise,
        seed=args.seed,
    )
    table, truth = generate(spec)
    out = Path(args.out)
    write_atomic(out / "synthetic.csv", table_to_csv(table))
    write_atomic(out / "synthetic_truth.json", truth_to_json(truth))
    print(f"wrote {table.n_rows} rows to {out / 'synthetic.csv'}")


def cmd_prep(args):
    dataset = load_labeled(args)
    table = group_average(load_csv(args.input), args.group_size)
    header = [*dataset.feature_names, args.target, CLASS_COLUMN]
    rows = [header]
    target = table.column(args.target)
    for i in range(dataset.n):
        rows.append([*(repr(float(v)) for v in dataset.features[i]), repr(float(target[i])), str(int(dataset.labels[i]))])
    text = "".join(",".join(r) + "\n" for r in rows)
    write_atomic(Path(args.out) / "prepared.csv", text)
    print(f"wrote {dataset.n} rows to {Path(args.out) / 'prepared.csv'}")


def cmd_train(args):
    dataset = load_labeled(args)
    _check_mtry(args.mtry, dataset)
    forest = train_forest(dataset, args.trees, args.mtry, args.seed)
    err = oob_error(forest, dataset)
    write_atomic(Path(args.out) / "model.json", forest.dumps())
    print(f"trained J={args.trees} m={args.mtry}; OOB error {err.error:.4f} over {err.n_defined} rows")


def _evaluate(forest, dataset):
    oob = oob_predict(forest, dataset)
    err = oob_error(forest, dataset, oob)
    ok = oob.defined
    cm = confusion_matrix(dataset.labels[ok], oob.prediction[ok], dataset.k, dataset.class_names)
    auc = auc_ovr(oob.vote_fractions()[ok], dataset.labels[ok])
    metrics = {
        "oob_error": err.error,
        "oob_defined_rows": err.n_defined,
        "n_observations": err.n_observations,
        "class_oob_error": err.class_error,
        "confusion_matrix": cm.to_dict(),
        "macro": macro_metrics(cm).to_dict(),
        "auc_ovr": {"auc": auc.auc, "per_class": auc.per_class, "excluded_classes": auc.excluded},
    }
    return cm, metrics


def cmd_report(args):
    dataset = load_labeled(args)
    _check_mtry(args.mtry, dataset)
    forest = train_forest(dataset, args.trees, args.mtry, args.seed)
    fi = importance_report(forest, dataset, args.seed, args.permutation_repeats, args.weighted_gini)
    assoc = association_matrix(forest, args.pmoa_agg)

    model, model_data = forest, dataset
    reduced = None
    if args.reduced_features is not None:
        keep_n = args.reduced_features
        if not 1 <= keep_n <= dataset.m:
            raise UsageError(f"--reduced-features must be in [1, {dataset.m}]")
        keep = sorted(fi.ranking("unbiased_fi")[:keep_n])
        model_data = dataset.select_features(keep)
        m_reduced = min(args.mtry, keep_n)
        model = train_forest(model_data, args.trees, m_reduced, args.seed)
        reduced = {"features": list(model_data.feature_names), "mtry": m_reduced}

    cm, metrics = _evaluate(model, model_data)
    metrics["config"] = {
        "target": args.target,
        "trees": args.trees,
        "mtry": args.mtry,
        "seed": args.seed,
        "group_size": args.group_size,
        "permutation_repeats": args.permutation_repeats,
        "weighted_gini": args.weighted_gini,
        "pmoa_aggregation": args.pmoa_agg,
        "reduced_features": reduced,
    }
    metrics["importance"] = fi.to_dict()["features"]
    metrics["association"] = {
        "aggregation": assoc.aggregation,
        "node_counts": assoc.counts.tolist(),
        "undefined_cells": assoc.undefined_cells(),
    }
    metrics["version"] = __version__

    out = Path(args.out)
    write_atomic(out / "model.json", model.dumps())
    write_atomic(out / "confusion_matrix.csv", cm.to_csv())
    write_atomic(out / "metrics.json", dump_json(metrics))
    write_atomic(out / "importance.csv", fi.to_csv())
    write_atomic(out / "association.csv", assoc.to_csv())
    write_atomic(out / "association.svg", heatmap_svg(assoc.values, assoc.feature_names))
    sys.stdout.write(fi.to_csv())
    print(f"OOB error {metrics['oob_error']:.4f}; report written to {out}")


def cmd_tune(args):
    dataset = load_labeled(args)
    for m in args.mtry_grid:
        _check_mtry(m, dataset)
    space = SearchSpace(args.trees_grid, args.mtry_grid, args.trials, args.folds, args.seed)
    result = randomized_search(dataset, space)
    _emit(args, "tuning.csv", result.to_csv())
    print(f"best J={result.best.j} m={result.best.m} MCVA={result.best.mcva:.4f}")


def cmd_ablate(args):
    dataset = load_labeled(args)
    _check_mtry(args.mtry, dataset)
    cases = ablation_study(dataset, drop_one_cases(dataset.feature_names), args.trees, args.mtry, args.seed)
    _emit(args, "ablation.csv", ablation_to_csv(cases))


def cmd_baselines(args):
    dataset = load_labeled(args)
    _check_mtry(args.mtry, dataset)
    rows = compare_approaches(
        dataset,
        args.trees,
        args.mtry,
        args.seed,
        k_folds=args.folds,
        solo=SoloTreeConfig(args.max_splits),
        knn=KnnConfig(args.neighbors),
    )
    _emit(args, "baselines.csv", comparison_to_csv(rows))


def cmd_predict(args):
    try:
        forest = RandomForest.loads(Path(args.model).read_text(encoding="utf-8"))
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{args.model}: unreadable model ({exc})") from None
    table = group_average(load_csv(args.input), args.group_size)
    X = np.column_stack([table.column(c) for c in forest.feature_names])
    pred = forest.predict(X)
    lines = ["row,predicted,class_name"]
    lines += [f"{i},{int(p)},{forest.class_names[p]}" for i, p in enumerate(pred)]
    _emit(args, "predictions.csv", "\n".join(lines) + "\n")


def build_parser():
    parser = _Parser(prog="forestlens", description="Random forest analysis of electrode process data.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_args(p, seeded=True):
        p.add_argument("--input", required=True, help="CSV with a header and numeric cells")
        p.add_argument("--target", choices=TARGET_COLUMNS, default="mass_load")
        p.add_argument("--labels", help="JSON label rule {class_names, upper_bounds}")
        p.add_argument("--group-size", type=_positive, default=1, help="rows averaged per sample")
        p.add_argument("--out", required=True, help="output directory")
        if seeded:
            p.add_argument("--seed", type=_seed, required=True)

    def forest_args(p, trees=100, mtry=3):
        p.add_argument("--trees", type=_positive, default=trees, help="number of trees J")
        p.add_argument("--mtry", type=_positive, default=mtry, help="features tried per split m")

    p = sub.add_parser("synth", help="generate a synthetic table with planted structure")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--n-observations", type=_positive, default=656)
    p.add_argument("--group-size", type=_positive, default=8)
    p.add_argument("--noise", type=float, default=0.1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prep", help="average groups and append the class column")
    data_args(p, seeded=False)
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("train", help="train a forest and save model.json")
    data_args(p)
    forest_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("report", help="train, evaluate and write the report bundle")
    data_args(p)
    forest_args(p)
    p.add_argument("--permutation-repeats", type=_positive, default=1)
    p.add_argument(
        "--weighted-gini",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="scale each split's Gini decrease by its node's sample share",
    )
    p.add_argument("--pmoa-agg", choices=AGGREGATIONS, default="weighted")
    p.add_argument("--reduced-features", type=_positive, help="retrain on the top N features")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("tune", help="randomized (J, m) search by cross-validated accuracy")
    data_args(p)
    p.add_argument("--trees-grid", type=_int_list, default=DEFAULT_J_GRID)
    p.add_argument("--mtry-grid", type=_int_list, default=DEFAULT_M_GRID)
    p.add_argument("--trials", type=_positive, default=10)
    p.add_argument("--folds", type=_positive, default=5)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("ablate", help="all features versus each three-feature case")
    data_args(p)
    forest_args(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("baselines", help="solo tree, k-NN and forest under k-fold")
    data_args(p)
    forest_args(p)
    p.add_argument("--folds", type=_positive, default=5)
    p.add_argument("--max-splits", type=_positive, default=20)
    p.add_argument("--neighbors", type=_positive, default=1)
    p.set_defaults(func=cmd_baselines)

    p = sub.add_parser("predict", help="classify rows with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--group-size", type=_positive, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # anything else means a broken internal assumption
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
