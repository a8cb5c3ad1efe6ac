import json

import pytest

from forestlens.cli import REPORT_FILES, main, write_atomic
from forestlens.dataset import DEFAULT_RULES, group_average, load_csv, make_dataset
from forestlens.forest import RandomForest, oob_predict, train_forest
from forestlens.importance import importance_report


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--out", str(out), "--seed", "1"]) == 0
    return out


@pytest.fixture(scope="module")
def csv_path(synth_dir):
    return str(synth_dir / "synthetic.csv")


def run(*args):
    return main([str(a) for a in args])


def bundle(path):
    return {name: (path / name).read_bytes() for name in REPORT_FILES}


def test_synth_outputs(synth_dir, tmp_path):
    text = (synth_dir / "synthetic.csv").read_text()
    assert len(text.splitlines()) == 657
    truth = json.loads((synth_dir / "synthetic_truth.json").read_text())
    assert truth["level_counts"] == {"AMMC": 4, "StoLR": 23, "Viscosity": 76, "CG": 6}
    assert run("synth", "--out", tmp_path, "--seed", 1) == 0
    assert (tmp_path / "synthetic.csv").read_text() == text


def test_prep_adds_class_column(csv_path, tmp_path):
    assert run("prep", "--input", csv_path, "--group-size", 8, "--out", tmp_path) == 0
    t = load_csv(tmp_path / "prepared.csv")
    assert t.column_names == ["AMMC", "StoLR", "Viscosity", "CG", "mass_load", "class"]
    assert t.n_rows == 82
    raw = group_average(load_csv(csv_path), 8)
    want = make_dataset(raw, "mass_load", DEFAULT_RULES["mass_load"], ["AMMC", "StoLR", "Viscosity", "CG"])
    assert t.column("class").astype(int).tolist() == want.labels.tolist()


@pytest.fixture(scope="module")
def report(csv_path, tmp_path_factory):
    out = tmp_path_factory.mktemp("report")
    args = ["report", "--input", csv_path, "--group-size", 8, "--trees", 100, "--mtry", 3, "--seed", 4, "--out", out]
    assert run(*args) == 0
    return out, args


class TestReport:
    def test_six_files(self, report):
        out, _ = report
        assert sorted(p.name for p in out.iterdir()) == sorted(REPORT_FILES)

    def test_rerun_is_byte_identical(self, report, tmp_path):
        out, args = report
        args = args[:-1] + [tmp_path]
        assert run(*args) == 0
        assert bundle(out) == bundle(tmp_path)

    def test_model_roundtrip(self, report):
        out, _ = report
        text = (out / "model.json").read_text()
        assert RandomForest.loads(text).dumps() == text

    def test_metrics_have_no_bare_nan(self, report):
        out, _ = report
        text = (out / "metrics.json").read_text()
        metrics = json.loads(text, parse_constant=lambda c: pytest.fail(f"bare {c} in metrics"))
        assert metrics["config"]["seed"] == 4
        assert "undefined_cells" in metrics["association"]
        assert 0 <= metrics["oob_error"] <= 1

    def test_association_outputs(self, report):
        out, _ = report
        lines = (out / "association.csv").read_text().splitlines()
        assert lines[0] == "split_feature\\surrogate,AMMC,StoLR,Viscosity,CG"
        svg = (out / "association.svg").read_text()
        assert svg.lstrip().startswith("<?xml") and "<svg" in svg

    def test_tables_match_library(self, report, csv_path):
        out, _ = report
        ds = make_dataset(group_average(load_csv(csv_path), 8), "mass_load", DEFAULT_RULES["mass_load"], ["AMMC", "StoLR", "Viscosity", "CG"])
        f = train_forest(ds, 100, 3, 4)
        assert (out / "model.json").read_text() == f.dumps()
        assert (out / "importance.csv").read_text() == importance_report(f, ds, 4).to_csv()


def test_reduced_features_match_manual_subset(csv_path, tmp_path):
    args = ["report", "--input", csv_path, "--group-size", 8, "--trees", 30, "--mtry", 2, "--seed", 2]
    assert run(*args, "--reduced-features", 3, "--out", tmp_path) == 0
    ds = make_dataset(group_average(load_csv(csv_path), 8), "mass_load", DEFAULT_RULES["mass_load"], ["AMMC", "StoLR", "Viscosity", "CG"])
    full = train_forest(ds, 30, 2, 2)
    keep = sorted(importance_report(full, ds, 2).ranking()[:3])
    manual = train_forest(ds.select_features(keep), 30, 2, 2)
    assert (tmp_path / "model.json").read_text() == manual.dumps()
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics["config"]["reduced_features"]["features"] == [ds.feature_names[i] for i in keep]
    oob = oob_predict(manual, ds.select_features(keep))
    assert metrics["oob_defined_rows"] == int(oob.defined.sum())


def test_report_flags(csv_path, tmp_path):
    args = ["report", "--input", csv_path, "--group-size", 8, "--trees", 10, "--mtry", 2, "--seed", 0, "--out", tmp_path]
    assert run(*args, "--no-weighted-gini", "--pmoa-agg", "max", "--permutation-repeats", 2) == 0
    cfg = json.loads((tmp_path / "metrics.json").read_text())["config"]
    assert cfg["weighted_gini"] is False and cfg["pmoa_aggregation"] == "max" and cfg["permutation_repeats"] == 2


def test_train_and_predict(csv_path, tmp_path):
    assert run("train", "--input", csv_path, "--group-size", 8, "--trees", 15, "--mtry", 2, "--seed", 3, "--out", tmp_path) == 0
    assert run("predict", "--model", tmp_path / "model.json", "--input", csv_path, "--group-size", 8, "--out", tmp_path) == 0
    lines = (tmp_path / "predictions.csv").read_text().splitlines()
    assert lines[0] == "row,predicted,class_name" and len(lines) == 83
    forest = RandomForest.loads((tmp_path / "model.json").read_text())
    X = group_average(load_csv(csv_path), 8).rows[:, :4]
    assert [int(line.split(",")[1]) for line in lines[1:]] == forest.predict(X).tolist()


def test_tune_default_grid(csv_path, tmp_path):
    assert run("tune", "--input", csv_path, "--group-size", 8, "--seed", 0, "--out", tmp_path) == 0
    lines = (tmp_path / "tuning.csv").read_text().splitlines()
    assert len(lines) == 11 and lines[0].startswith("J,m,mcva")


def test_ablate_rows(csv_path, tmp_path):
    assert run("ablate", "--input", csv_path, "--group-size", 8, "--trees", 20, "--seed", 0, "--out", tmp_path) == 0
    rows = [line.split(",")[0] for line in (tmp_path / "ablation.csv").read_text().splitlines()[1:]]
    assert rows == ["All features", "Case 1", "Case 2", "Case 3", "Case 4"]


def test_baselines_rows(csv_path, tmp_path):
    assert run("baselines", "--input", csv_path, "--group-size", 8, "--trees", 20, "--seed", 0, "--out", tmp_path) == 0
    rows = [line.split(",")[0] for line in (tmp_path / "baselines.csv").read_text().splitlines()[1:]]
    assert rows == ["DT", "KNN", "RF"]


def test_custom_label_rule(csv_path, tmp_path):
    rule = tmp_path / "rule.json"
    rule.write_text(json.dumps({"class_names": ["low", "high"], "upper_bounds": [30.0]}))
    assert run("train", "--input", csv_path, "--group-size", 8, "--labels", rule, "--trees", 5, "--mtry", 2, "--seed", 0, "--out", tmp_path) == 0
    assert RandomForest.loads((tmp_path / "model.json").read_text()).class_names == ["low", "high"]


class TestExitCodes:
    def test_missing_seed_is_usage(self, csv_path, tmp_path):
        assert run("train", "--input", csv_path, "--out", tmp_path) == 1

    def test_unknown_command(self):
        assert run("frobnicate") == 1

    def test_bad_mtry(self, csv_path, tmp_path):
        assert run("train", "--input", csv_path, "--mtry", 9, "--seed", 0, "--out", tmp_path) == 1

    def test_bad_target(self, csv_path, tmp_path):
        assert run("train", "--input", csv_path, "--target", "density", "--seed", 0, "--out", tmp_path) == 1

    def test_missing_file_is_data_error(self, tmp_path):
        assert run("train", "--input", tmp_path / "nope.csv", "--seed", 0, "--out", tmp_path) == 2

    def test_malformed_csv_is_data_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("AMMC,mass_load\n1,n/a\n")
        assert run("train", "--input", bad, "--seed", 0, "--out", tmp_path) == 2
        assert "row 2, column 2" in capsys.readouterr().err

    def test_indivisible_groups_is_data_error(self, csv_path, tmp_path):
        assert run("train", "--input", csv_path, "--group-size", 7, "--seed", 0, "--out", tmp_path) == 2

    def test_bad_model_is_data_error(self, csv_path, tmp_path):
        model = tmp_path / "model.json"
        model.write_text('{"format": "other"}')
        assert run("predict", "--model", model, "--input", csv_path, "--out", tmp_path) == 2

    def test_internal_failure(self, monkeypatch, csv_path, tmp_path):
        import forestlens.cli as cli

        def boom(*a, **k):
            raise AssertionError("broken invariant")

        monkeypatch.setattr(cli, "train_forest", boom)
        assert run("train", "--input", csv_path, "--group-size", 8, "--seed", 0, "--out", tmp_path) == 3


def test_atomic_write_leaves_no_temp_files(tmp_path):
    write_atomic(tmp_path / "a.txt", "one")
    write_atomic(tmp_path / "a.txt", b"two")
    assert [p.name for p in tmp_path.iterdir()] == ["a.txt"]
    assert (tmp_path / "a.txt").read_text() == "two"


def test_module_entry_point():
    import subprocess
    import sys

    proc = subprocess.run([sys.executable, "-m", "forestlens", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "forestlens" in proc.stdout
