import numpy as np
import pytest

from drivestress.config import PipelineConfig
from drivestress.datasets import make_random_label_instances, make_two_profile_instances
from drivestress.errors import InvalidParameterError, ShapeError, StratificationError
from drivestress.harness import (
    CvReport,
    ModelChoice,
    UsageTracer,
    compute_metrics,
    default_grid,
    grid_search,
    make_fold_plan,
    make_folds,
    run_experiment,
)

FAST = PipelineConfig(n_outer_folds=4, n_inner_folds=3)


class TestMakeFolds:
    def test_exact_stratification(self):
        labels = np.array([1.0] * 10 + [-1.0] * 10)
        folds = make_folds(labels, 10, seed=0)
        for k in range(10):
            members = labels[folds == k]
            assert np.sum(members == 1.0) == 1
            assert np.sum(members == -1.0) == 1

    def test_deterministic(self):
        labels = np.array([1.0, -1.0] * 25)
        np.testing.assert_array_equal(make_folds(labels, 5, seed=3), make_folds(labels, 5, seed=3))
        assert not np.array_equal(make_folds(labels, 5, seed=3), make_folds(labels, 5, seed=4))

    def test_partition_property(self):
        labels = np.array([1.0] * 23 + [-1.0] * 31)
        folds = make_folds(labels, 5, seed=1)
        assert folds.min() == 0 and folds.max() == 4
        sizes = np.bincount(folds)
        assert sizes.sum() == 54
        assert sizes.max() - sizes.min() <= 1

    def test_small_class_rejected(self):
        labels = np.array([1.0] * 3 + [-1.0] * 30)
        with pytest.raises(StratificationError):
            make_folds(labels, 5, seed=0)

    def test_fold_plan_inner_partitions_training(self):
        labels = np.array([1.0, -1.0] * 30)
        plan = make_fold_plan(labels, 5, 3, seed=0)
        for k in range(5):
            inner = plan.inner[k]
            assert np.all(inner[plan.outer == k] == -1)
            train = inner[plan.outer != k]
            assert set(train.tolist()) == {0, 1, 2}


class TestComputeMetrics:
    def test_perfect(self):
        y = np.array([1.0, -1.0, 1.0])
        m = compute_metrics(y, y)
        assert (m.accuracy, m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0, 1.0)

    def test_all_positive_on_half_positive(self):
        y_true = np.array([1.0, 1.0, -1.0, -1.0])
        y_pred = np.ones(4)
        m = compute_metrics(y_pred, y_true)
        assert m.accuracy == 0.5
        assert m.precision == 0.5
        assert m.recall == 1.0
        assert m.f1 == pytest.approx(2.0 / 3.0)
        assert not m.degenerate

    def test_all_negative_is_degenerate(self):
        y_true = np.array([1.0, 1.0, -1.0, -1.0])
        m = compute_metrics(-np.ones(4), y_true)
        assert m.recall == 0.0 and m.f1 == 0.0
        assert m.degenerate

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            compute_metrics(np.ones(3), np.ones(4))


class TestGridSearch:
    def test_single_point_short_circuits(self):
        calls = []

        def score(params, train_mask, val_mask):
            calls.append(params)
            return 1.0

        best, table = grid_search(score, [{"C": 1.0}], np.zeros(10, dtype=int), 3)
        assert best == {"C": 1.0}
        assert calls == [] and table == []

    def test_higher_inner_accuracy_wins(self):
        inner = np.array([0, 1, 2] * 6)

        def score(params, train_mask, val_mask):
            return 0.9 if params["C"] == 10.0 else 0.6

        best, _ = grid_search(score, [{"C": 0.1}, {"C": 10.0}], inner, 3)
        assert best == {"C": 10.0}

    def test_tie_breaks_toward_smaller_params(self):
        inner = np.array([0, 1, 2] * 6)

        def score(params, train_mask, val_mask):
            return 0.5

        points = [{"C": 10.0, "nu": 1.0}, {"C": 0.1, "nu": 10.0}, {"C": 0.1, "nu": 0.5}]
        best, _ = grid_search(score, points, inner, 3)
        assert best == {"C": 0.1, "nu": 0.5}

    def test_failed_point_scores_zero_and_is_flagged(self):
        from drivestress.errors import IllConditionedError

        inner = np.array([0, 1, 2] * 6)

        def score(params, train_mask, val_mask):
            if params["C"] == 10.0:
                raise IllConditionedError("boom")
            return 0.4

        best, table = grid_search(score, [{"C": 10.0}, {"C": 1.0}], inner, 3)
        assert best == {"C": 1.0}
        failed = [row for row in table if row["failed"]]
        assert len(failed) == 1 and failed[0]["params"] == {"C": 10.0}

    def test_empty_grid_rejected(self):
        with pytest.raises(InvalidParameterError):
            grid_search(lambda *a: 1.0, [], np.zeros(4, dtype=int), 2)

    def test_default_grids_match_config(self):
        config = PipelineConfig()
        assert len(default_grid(ModelChoice("logreg-l1"), config)) == 7
        assert len(default_grid(ModelChoice("stk-linear"), config)) == 7
        assert len(default_grid(ModelChoice("stk-rbf"), config)) == 21
        assert len(default_grid(ModelChoice("mtmkl", kernel="rbf"), config)) == 147
        assert len(default_grid(ModelChoice("mtmkl", kernel="linear"), config)) == 49


class TestUsageTracer:
    def test_catches_injected_leakage(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(0, 1, (10, 3))
        y = np.array([1.0, -1.0] * 5)
        drives = np.array([f"d{i}" for i in range(10)], dtype=object)
        tracer = UsageTracer(X, y, drives)
        tracer.record("training", np.array([0, 1, 2, 5]))
        tracer.assert_no_leakage(np.array([3, 4]))
        with pytest.raises(AssertionError):
            tracer.assert_no_leakage(np.array([5, 6]))


class TestRunExperiment:
    def test_random_labels_near_chance(self):
        X, y, drives = make_random_label_instances(n_instances=200, seed=0)
        report = run_experiment(
            X, y, drives, ModelChoice("logreg-l2"), config=PipelineConfig(),
            grid=[{"lam": 1.0}],
        )
        assert 0.4 <= report.mean["accuracy"] <= 0.6

    def test_bitwise_reproducible(self):
        X, y, drives = make_random_label_instances(n_instances=80, seed=1)
        kwargs = dict(config=FAST, grid=[{"C": 1.0, "gamma": 1.0}])
        r1 = run_experiment(X, y, drives, ModelChoice("stk-rbf"), **kwargs)
        r2 = run_experiment(X, y, drives, ModelChoice("stk-rbf"), **kwargs)
        assert r1.to_json() == r2.to_json()

    def test_mean_equals_fold_mean_exactly(self):
        X, y, drives = make_random_label_instances(n_instances=80, seed=2)
        report = run_experiment(
            X, y, drives, ModelChoice("logreg-l1"), config=FAST, grid=[{"lam": 0.1}]
        )
        for key in ("accuracy", "precision", "recall", "f1"):
            assert report.mean[key] == np.mean([f[key] for f in report.folds])

    def test_unbalanced_rejected(self):
        X, y, drives = make_random_label_instances(n_instances=80, seed=3)
        y[0] = 1.0 if y[0] == -1.0 else -1.0
        with pytest.raises(InvalidParameterError):
            run_experiment(X, y, drives, ModelChoice("logreg-l2"), config=FAST)

    def test_mtmkl_separable_dataset_high_accuracy(self):
        X, y, drives, _ = make_two_profile_instances(
            n_drives=8, windows_per_drive=20, seed=4
        )
        config = PipelineConfig(n_outer_folds=4, n_inner_folds=2)
        report = run_experiment(
            X, y, drives,
            ModelChoice("mtmkl", tasks=2, kernel="rbf"),
            config=config,
            grid=[{"C": 10.0, "nu": 1e-4, "gamma": 1.0}],
        )
        assert report.mean["accuracy"] >= 0.95
        for fold in report.folds:
            assert len(fold["etas"]) == 2
            # one task leans on the EDA view, the other on the HR view
            weights = sorted(eta[0] for eta in fold["etas"])
            assert weights[0] <= 0.3 and weights[1] >= 0.7

    def test_report_json_roundtrip(self):
        X, y, drives = make_random_label_instances(n_instances=80, seed=5)
        report = run_experiment(
            X, y, drives, ModelChoice("logreg-l2"), config=FAST, grid=[{"lam": 1.0}]
        )
        again = CvReport.from_json(report.to_json())
        assert again.to_json() == report.to_json()

    def test_group_by_drive_keeps_drives_whole(self):
        X, y, drives, _ = make_two_profile_instances(
            n_drives=10, windows_per_drive=12, seed=6
        )
        config = PipelineConfig(n_outer_folds=3, n_inner_folds=2, group_by_drive=True)
        report = run_experiment(
            X, y, drives, ModelChoice("stk-linear"), config=config, grid=[{"C": 1.0}]
        )
        assert len(report.folds) == 3
