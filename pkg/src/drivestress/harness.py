"""Nested cross-validation engine.

Outer 10-fold CV estimates performance; within each outer training split a
5-fold grid search picks hyperparameters. For multi-task models the drive
profiles and task assignment are built from the outer training split only
and reused across the inner folds, so held-out instances never influence
profiling, clustering, selection, or training. A content hash trace of every
instance handed to a training-side stage enforces that claim at runtime.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .clustering import TaskAssignment, assign_tasks
from .config import PipelineConfig
from .baselines import LogisticRegressionClassifier, SingleTaskKernelClassifier
from .errors import (
    DriveStressError,
    InvalidParameterError,
    ShapeError,
    StratificationError,
)
from .features import EDA_FEATURE_NAMES, WindowInstance
from .mtmkl import MtMklClassifier

MODEL_KINDS = ("logreg-l1", "logreg-l2", "stk-linear", "stk-rbf", "mtmkl")


@dataclass(frozen=True)
class ModelChoice:
    """Which model family to evaluate, plus its task/kernel options."""

    kind: str
    tasks: int = 1
    kernel: str = "rbf"
    reg: str = "l1"

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise InvalidParameterError(f"model kind must be one of {MODEL_KINDS}, got {self.kind!r}")
        if self.tasks < 1:
            raise InvalidParameterError(f"tasks must be >= 1, got {self.tasks}")

    @property
    def uses_tasks(self) -> bool:
        return self.kind == "mtmkl"


def make_folds(labels: np.ndarray, n_folds: int, seed) -> np.ndarray:
    """Stratified fold indices 0..n_folds-1, deterministic for a seed.

    Each class is shuffled and dealt round-robin from a running offset, so
    per-class counts per fold differ by at most one and so do fold sizes.
    """
    labels = np.asarray(labels)
    if n_folds < 2:
        raise InvalidParameterError(f"n_folds must be >= 2, got {n_folds}")
    rng = np.random.default_rng(seed)
    folds = np.empty(len(labels), dtype=int)
    offset = 0
    for value in sorted(np.unique(labels).tolist()):
        idx = np.flatnonzero(labels == value)
        if len(idx) < n_folds:
            raise StratificationError(
                f"class {value} has {len(idx)} instances, fewer than {n_folds} folds"
            )
        perm = rng.permutation(idx)
        for j, i in enumerate(perm):
            folds[i] = (offset + j) % n_folds
        offset = (offset + len(idx)) % n_folds
    return folds


def make_group_folds(labels: np.ndarray, groups: np.ndarray, n_folds: int, seed) -> np.ndarray:
    """Drive-grouped folds: whole drives assigned to the smallest fold so far."""
    labels = np.asarray(labels)
    groups = np.asarray(groups, dtype=object)
    unique = sorted({str(g) for g in groups})
    if len(unique) < n_folds:
        raise StratificationError(f"{len(unique)} drives cannot fill {n_folds} folds")
    rng = np.random.default_rng(seed)
    order = [unique[i] for i in rng.permutation(len(unique))]
    order.sort(key=lambda g: -int(np.sum(groups == g)))
    sizes = np.zeros(n_folds, dtype=int)
    folds = np.empty(len(labels), dtype=int)
    for g in order:
        k = int(np.argmin(sizes))
        mask = groups == g
        folds[mask] = k
        sizes[k] += int(np.sum(mask))
    return folds


@dataclass
class FoldPlan:
    """Outer fold of every instance plus inner folds within each training split.

    ``inner[k]`` maps instances to inner folds 0..n_inner-1 inside outer
    training split k, with -1 marking the held-out instances of fold k.
    """

    n_outer: int
    n_inner: int
    seed: int
    outer: np.ndarray
    inner: dict[int, np.ndarray]


def make_fold_plan(
    labels: np.ndarray,
    n_outer: int,
    n_inner: int,
    seed: int,
    groups: np.ndarray | None = None,
) -> FoldPlan:
    labels = np.asarray(labels)
    if groups is None:
        outer = make_folds(labels, n_outer, seed)
    else:
        outer = make_group_folds(labels, groups, n_outer, seed)
    inner: dict[int, np.ndarray] = {}
    for k in range(n_outer):
        train_idx = np.flatnonzero(outer != k)
        assignment = np.full(len(labels), -1, dtype=int)
        if groups is None:
            sub = make_folds(labels[train_idx], n_inner, [seed, k])
        else:
            sub = make_group_folds(labels[train_idx], groups[train_idx], n_inner, [seed, k])
        assignment[train_idx] = sub
        inner[k] = assignment
    return FoldPlan(n_outer=n_outer, n_inner=n_inner, seed=seed, outer=outer, inner=inner)


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int
    degenerate: bool

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "confusion": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
            "degenerate": self.degenerate,
        }


def compute_metrics(y_pred: np.ndarray, y_true: np.ndarray, positive: float = 1.0) -> Metrics:
    """Accuracy/precision/recall/F1 with the high-stress class positive.

    Zero-denominator precision or recall is reported as 0 with the
    ``degenerate`` flag set; F1 is 0 when precision + recall is 0.
    """
    y_pred = np.asarray(y_pred, dtype=float)
    y_true = np.asarray(y_true, dtype=float)
    if y_pred.shape != y_true.shape:
        raise ShapeError(f"predictions {y_pred.shape} and labels {y_true.shape} differ")
    pos_pred = y_pred == positive
    pos_true = y_true == positive
    tp = int(np.sum(pos_pred & pos_true))
    fp = int(np.sum(pos_pred & ~pos_true))
    fn = int(np.sum(~pos_pred & pos_true))
    tn = int(np.sum(~pos_pred & ~pos_true))
    accuracy = (tp + tn) / len(y_true) if len(y_true) else 0.0
    degenerate = False
    if tp + fp > 0:
        precision = tp / (tp + fp)
    else:
        precision, degenerate = 0.0, True
    if tp + fn > 0:
        recall = tp / (tp + fn)
    else:
        recall, degenerate = 0.0, True
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return Metrics(
        accuracy=float(accuracy),
        precision=float(precision),
        recall=float(recall),
        f1=float(f1),
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
        degenerate=degenerate,
    )


def _make_estimator(choice: ModelChoice, params: dict, config: PipelineConfig):
    if choice.kind == "logreg-l1":
        return LogisticRegressionClassifier(penalty="l1", lam=params["lam"])
    if choice.kind == "logreg-l2":
        return LogisticRegressionClassifier(penalty="l2", lam=params["lam"])
    if choice.kind == "stk-linear":
        return SingleTaskKernelClassifier(kernel="linear", C=params["C"])
    if choice.kind == "stk-rbf":
        return SingleTaskKernelClassifier(kernel="rbf", gamma=params["gamma"], C=params["C"])
    return MtMklClassifier(
        kernel=choice.kernel,
        gamma=params.get("gamma", 1.0),
        C=params["C"],
        reg=choice.reg,
        nu=params["nu"],
        step_size=config.mtmkl_step_size,
        max_outer_iters=config.mtmkl_max_outer_iters,
        eta_tolerance=config.mtmkl_eta_tolerance,
        omega2_sign=config.omega2_sign,
    )


def default_grid(choice: ModelChoice, config: PipelineConfig) -> list[dict]:
    """Explicit hyperparameter grid points for one model family."""
    if choice.kind.startswith("logreg"):
        return [{"lam": lam} for lam in config.grid_lambda]
    if choice.kind == "stk-linear":
        return [{"C": c} for c in config.grid_c]
    if choice.kind == "stk-rbf":
        return [{"C": c, "gamma": g} for c in config.grid_c for g in config.grid_gamma]
    points = []
    for c in config.grid_c:
        for nu in config.grid_nu:
            if choice.kernel == "rbf":
                points.extend({"C": c, "nu": nu, "gamma": g} for g in config.grid_gamma)
            else:
                points.append({"C": c, "nu": nu})
    return points


def _tie_break_key(point: dict) -> tuple:
    return (
        point.get("C", point.get("lam", 0.0)),
        point.get("nu", 0.0),
        point.get("gamma", 0.0),
    )


def grid_search(
    fit_score: Callable[[dict, np.ndarray, np.ndarray], float],
    points: list[dict],
    inner_folds: np.ndarray,
    n_inner: int,
) -> tuple[dict, list[dict]]:
    """Pick the grid point with the best mean inner-fold accuracy.

    ``fit_score(params, train_mask, val_mask)`` returns validation accuracy.
    A training failure scores that point 0 and flags it rather than aborting.
    Ties break toward smaller (C, nu, gamma). A single-point grid skips the
    inner loop entirely since the selection is forced.
    """
    if not points:
        raise InvalidParameterError("hyperparameter grid is empty")
    if len(points) == 1:
        return points[0], []
    table = []
    for point in points:
        accs = []
        failed = False
        for f in range(n_inner):
            train_mask = (inner_folds != f) & (inner_folds >= 0)
            val_mask = inner_folds == f
            try:
                accs.append(fit_score(point, train_mask, val_mask))
            except DriveStressError as exc:
                failed = True
                table.append({"params": point, "mean_accuracy": 0.0, "failed": str(exc)})
                break
        if not failed:
            table.append({"params": point, "mean_accuracy": float(np.mean(accs)), "failed": None})
    best = min(table, key=lambda row: (-row["mean_accuracy"],) + _tie_break_key(row["params"]))
    return best["params"], table


class UsageTracer:
    """Records which instances each training-side stage consumed.

    Hashes combine position and content so the no-leakage assertion catches
    both index mix-ups and silently substituted rows.
    """

    def __init__(self, X: np.ndarray, y: np.ndarray, drives: np.ndarray):
        self._hashes = [
            hashlib.blake2b(
                np.ascontiguousarray(X[i]).tobytes()
                + bytes(str((i, float(y[i]), str(drives[i]))), "utf-8"),
                digest_size=16,
            ).hexdigest()
            for i in range(len(X))
        ]
        self.stage_use: dict[str, set[str]] = {}

    def record(self, stage: str, indices: np.ndarray) -> None:
        self.stage_use.setdefault(stage, set()).update(self._hashes[i] for i in indices)

    def assert_no_leakage(self, test_indices: np.ndarray) -> None:
        test_hashes = {self._hashes[i] for i in test_indices}
        for stage, used in self.stage_use.items():
            overlap = used & test_hashes
            if overlap:
                raise AssertionError(
                    f"stage {stage!r} consumed {len(overlap)} held-out instance(s)"
                )


@dataclass
class CvReport:
    """Per-fold and aggregate results of one nested-CV experiment."""

    model: str
    tasks: int
    kernel: str
    reg: str
    seed: int
    n_outer: int
    n_inner: int
    folds: list[dict] = field(default_factory=list)
    mean: dict = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "model": self.model,
                "tasks": self.tasks,
                "kernel": self.kernel,
                "reg": self.reg,
                "seed": self.seed,
                "n_outer": self.n_outer,
                "n_inner": self.n_inner,
                "folds": self.folds,
                "mean": self.mean,
                "flags": self.flags,
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "CvReport":
        doc = json.loads(text)
        return cls(
            model=doc["model"],
            tasks=doc["tasks"],
            kernel=doc["kernel"],
            reg=doc["reg"],
            seed=doc["seed"],
            n_outer=doc["n_outer"],
            n_inner=doc["n_inner"],
            folds=doc["folds"],
            mean=doc["mean"],
            flags=doc["flags"],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    def eta_matrix(self) -> list[tuple[str, list[float]]]:
        """Rows (label, eta) for every fold and task, for the heatmap."""
        rows = []
        for fold in self.folds:
            for r, eta in enumerate(fold.get("etas", []) or []):
                rows.append((f"fold {fold['fold']} task {r + 1}", list(eta)))
        return rows


def _fit_predict(estimator, choice, X, y, drives, train_mask, val_mask, assignment):
    if choice.uses_tasks:
        estimator.fit(X[train_mask], y[train_mask], drives=drives[train_mask], assignment=assignment)
        return estimator.predict(X[val_mask], drives=drives[val_mask])
    estimator.fit(X[train_mask], y[train_mask])
    return estimator.predict(X[val_mask])


def run_experiment(
    X: np.ndarray,
    y: np.ndarray,
    drives: np.ndarray,
    choice: ModelChoice,
    config: PipelineConfig | None = None,
    seed: int | None = None,
    grid: list[dict] | None = None,
) -> CvReport:
    """Full nested-CV evaluation of one model family on a balanced dataset."""
    config = config or PipelineConfig()
    seed = config.seed if seed is None else seed
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    drives = np.asarray(drives, dtype=object)
    if not (len(X) == len(y) == len(drives)):
        raise ShapeError("X, y and drives must have equal length")
    n_pos = int(np.sum(y == 1.0))
    n_neg = int(np.sum(y == -1.0))
    if n_pos != n_neg:
        raise InvalidParameterError(
            f"expected a balanced binary dataset, got {n_pos} H vs {n_neg} L"
        )

    plan = make_fold_plan(
        y,
        config.n_outer_folds,
        config.n_inner_folds,
        seed,
        groups=drives if config.group_by_drive else None,
    )
    points = grid if grid is not None else default_grid(choice, config)
    report = CvReport(
        model=choice.kind,
        tasks=choice.tasks,
        kernel=choice.kernel,
        reg=choice.reg,
        seed=seed,
        n_outer=plan.n_outer,
        n_inner=plan.n_inner,
    )

    for k in range(plan.n_outer):
        train_idx = np.flatnonzero(plan.outer != k)
        test_idx = np.flatnonzero(plan.outer == k)
        inner = plan.inner[k]
        tracer = UsageTracer(X, y, drives)  # per fold: usage is checked against this fold's holdout

        assignment: TaskAssignment | None = None
        if choice.uses_tasks and choice.tasks >= 1:
            tracer.record("profiles", train_idx)
            tracer.record("clustering", train_idx)
            train_instances = _rows_as_instances(X[train_idx], y[train_idx], drives[train_idx])
            assignment, _, _ = assign_tasks(
                train_instances,
                choice.tasks,
                gamma=config.profile_gamma,
                seed=seed,
                n_restarts=config.kmeans_restarts,
                max_iter=config.kmeans_max_iter,
            )

        def fit_score(params, train_mask, val_mask):
            estimator = _make_estimator(choice, params, config)
            preds = _fit_predict(estimator, choice, X, y, drives, train_mask, val_mask, assignment)
            return compute_metrics(preds, y[val_mask]).accuracy

        tracer.record("grid_search", train_idx)
        best_params, table = grid_search(fit_score, points, inner, plan.n_inner)
        for row in table:
            if row["failed"]:
                report.flags.append(f"fold {k}: grid point {row['params']} failed: {row['failed']}")

        tracer.record("training", train_idx)
        estimator = _make_estimator(choice, best_params, config)
        train_mask = plan.outer != k
        test_mask = plan.outer == k
        preds = _fit_predict(estimator, choice, X, y, drives, train_mask, test_mask, assignment)
        metrics = compute_metrics(preds, y[test_mask])

        tracer.assert_no_leakage(test_idx)
        if choice.uses_tasks:
            check = _rows_as_instances(X[train_idx], y[train_idx], drives[train_idx])
            recheck, _, _ = assign_tasks(
                check,
                choice.tasks,
                gamma=config.profile_gamma,
                seed=seed,
                n_restarts=config.kmeans_restarts,
                max_iter=config.kmeans_max_iter,
            )
            if recheck.tasks != assignment.tasks:
                raise AssertionError("profiles recomputed from the training split changed")

        fold_entry = {
            "fold": k,
            "params": best_params,
            "n_train": int(len(train_idx)),
            "n_test": int(len(test_idx)),
            **metrics.as_dict(),
        }
        if choice.uses_tasks:
            fold_entry["etas"] = [e.tolist() for e in estimator.model_.etas]
            fold_entry["assignment"] = dict(sorted(assignment.tasks.items()))
            fold_entry["converged"] = estimator.model_.converged
        report.folds.append(fold_entry)

    for key in ("accuracy", "precision", "recall", "f1"):
        report.mean[key] = float(np.mean([f[key] for f in report.folds]))
    return report


def _rows_as_instances(X: np.ndarray, y: np.ndarray, drives: np.ndarray) -> list[WindowInstance]:
    """View rows as labeled instances so the profiler can consume them."""
    n_eda = len(EDA_FEATURE_NAMES)
    out = []
    for i in range(len(X)):
        out.append(
            WindowInstance(
                drive_id=str(drives[i]),
                start=0.0,
                duration=0.0,
                eda_features=X[i, :n_eda],
                hr_features=X[i, n_eda:],
                label="H" if y[i] == 1.0 else "L",
            )
        )
    return out
