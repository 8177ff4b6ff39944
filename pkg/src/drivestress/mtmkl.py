"""Multi-task multiple-kernel learning.

Each task (a cluster of drives) owns kernel weights eta on the probability
simplex and an LSSVM over the combined per-view kernel. Training alternates
between per-task LSSVM solves and a projected gradient step on every eta,
where the gradient couples tasks through a cross-task regularizer Omega:

    l1:  Omega = -nu * sum_r sum_s eta_r . eta_s
    l2:  Omega = -nu * sum_r sum_s ||eta_r - eta_s||_2

The eta gradient for task r is

    g_m = -2 dOmega/deta_m  -  1/2 sum_ij alpha_i alpha_j y_i y_j K_m[i, j]

and steps move opposite g with Euclidean projection back onto the simplex.
Step acceptance is monitored on the fixed-alpha surrogate objective whose
exact gradient is the expression above; the step halves until the surrogate
does not increase.

The printed l2 form rewards dissimilarity even though larger nu is meant to
enforce similar kernel weights across tasks; ``omega2_sign="similarity"``
flips that sign, the default keeps the printed form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .clustering import TaskAssignment
from .errors import (
    InvalidParameterError,
    MissingClassError,
    ShapeError,
    UnassignedDriveError,
)
from .features import FEATURE_NAMES
from .kernels import KernelSpec, combined_gram, gram, split_views, validate_eta
from .lssvm import LssvmSolution, decision_labels, lssvm_decision, lssvm_fit
from .validation import check_binary_labels

OMEGA2_SIGNS = ("as_printed", "similarity")
_MIN_STEP = 1e-12


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {eta : eta >= 0, sum eta = 1}."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or len(v) == 0:
        raise ShapeError(f"expected a non-empty vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidParameterError("cannot project a non-finite vector")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, len(v) + 1)
    valid = u - css / ks > 0
    rho = int(np.max(np.flatnonzero(valid)))
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def _omega2_factor(omega2_sign: str) -> float:
    if omega2_sign not in OMEGA2_SIGNS:
        raise InvalidParameterError(f"omega2_sign must be one of {OMEGA2_SIGNS}, got {omega2_sign!r}")
    return -1.0 if omega2_sign == "as_printed" else 1.0


def omega(
    etas: list[np.ndarray],
    reg: str,
    nu: float,
    omega2_sign: str = "as_printed",
) -> float:
    """Cross-task coupling term over all ordered task pairs (r, s)."""
    etas = [np.asarray(e, dtype=float) for e in etas]
    if reg == "l1":
        total = np.sum(etas, axis=0)
        return float(-nu * np.dot(total, total))
    if reg == "l2":
        sgn = _omega2_factor(omega2_sign)
        acc = 0.0
        for r, er in enumerate(etas):
            for s, es in enumerate(etas):
                if r != s:
                    acc += float(np.linalg.norm(er - es))
        return sgn * nu * acc
    raise InvalidParameterError(f"reg must be 'l1' or 'l2', got {reg!r}")


def omega_gradient(
    etas: list[np.ndarray],
    reg: str,
    nu: float,
    r: int,
    omega2_sign: str = "as_printed",
) -> np.ndarray:
    """d Omega / d eta^(r); the double sum counts pairs (r, s) and (s, r)."""
    etas = [np.asarray(e, dtype=float) for e in etas]
    if reg == "l1":
        return -2.0 * nu * np.sum(etas, axis=0)
    if reg == "l2":
        sgn = _omega2_factor(omega2_sign)
        grad = np.zeros_like(etas[r])
        for s, es in enumerate(etas):
            if s == r:
                continue
            diff = etas[r] - es
            norm = np.linalg.norm(diff)
            if norm > 1e-15:  # subgradient 0 at coincident etas
                grad += diff / norm
        return sgn * 2.0 * nu * grad
    raise InvalidParameterError(f"reg must be 'l1' or 'l2', got {reg!r}")


def _quad_forms(
    alpha: np.ndarray,
    y: np.ndarray,
    view_grams: list[np.ndarray],
) -> np.ndarray:
    """Per-view quadratic forms sum_ij a_i a_j y_i y_j K_m[i, j].

    The label product is written for dual multipliers a of a decision
    function sum_i a_i y_i k(x, x_i) + b. Our KKT system solves the
    regression form f = sum_i alpha_i k + b whose coefficients already fold
    the labels in (a_i = alpha_i y_i), so the quadratic form reduces to
    alpha^T K_m alpha; y_i y_j a_i a_j = alpha_i alpha_j.
    """
    del y  # absorbed into the regression-form coefficients
    return np.array([float(alpha @ K @ alpha) for K in view_grams])


def objective_gradient(
    r: int,
    etas: list[np.ndarray],
    alphas: list[np.ndarray],
    view_grams: list[list[np.ndarray]],
    labels: list[np.ndarray],
    reg: str,
    nu: float,
    omega2_sign: str = "as_printed",
) -> np.ndarray:
    """Gradient of the fixed-alpha objective with respect to eta^(r)."""
    n_views = len(view_grams[r])
    if len(etas[r]) != n_views:
        raise ShapeError(f"eta for task {r} has length {len(etas[r])}, expected {n_views}")
    quad = _quad_forms(alphas[r], labels[r], view_grams[r])
    return -2.0 * omega_gradient(etas, reg, nu, r, omega2_sign) - 0.5 * quad


def fixed_alpha_objective(
    etas: list[np.ndarray],
    alphas: list[np.ndarray],
    view_grams: list[list[np.ndarray]],
    labels: list[np.ndarray],
    reg: str,
    nu: float,
    omega2_sign: str = "as_printed",
) -> float:
    """Surrogate objective whose exact eta-gradient is ``objective_gradient``.

    Holding every alpha fixed, only the Omega term (with its leading -2) and
    the eta-weighted kernel quadratic terms vary with eta; constant parts of
    the per-task learner objectives are dropped.
    """
    total = -2.0 * omega(etas, reg, nu, omega2_sign)
    for r, eta in enumerate(etas):
        quad = _quad_forms(alphas[r], labels[r], view_grams[r])
        total -= 0.5 * float(np.dot(eta, quad))
    return total


@dataclass
class TaskData:
    """Training instances of one task, pre-split into per-view matrices."""

    views: list[np.ndarray]
    y: np.ndarray

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.views = [np.asarray(V, dtype=float) for V in self.views]
        for V in self.views:
            if V.ndim != 2 or len(V) != len(self.y):
                raise ShapeError(
                    f"view matrix of shape {V.shape} does not match {len(self.y)} labels"
                )


@dataclass
class MtMklModel:
    """Trained model: per-task kernel weights, dual solutions, and data refs."""

    specs: list[KernelSpec]
    reg: str
    nu: float
    C: float
    etas: list[np.ndarray]
    solutions: list[LssvmSolution]
    task_views: list[list[np.ndarray]]
    assignment: TaskAssignment | None
    converged: bool
    n_iter: int
    eta_trace: list[list[np.ndarray]] = field(repr=False, default_factory=list)

    @property
    def n_tasks(self) -> int:
        return len(self.etas)


def mtmkl_train(
    tasks: list[TaskData],
    specs: list[KernelSpec] | KernelSpec,
    reg: str = "l1",
    nu: float = 0.1,
    C: float = 1.0,
    step_size: float = 0.01,
    max_outer_iters: int = 100,
    eta_tolerance: float = 1e-4,
    omega2_sign: str = "as_printed",
    eta_init: np.ndarray | None = None,
    freeze_eta: bool = False,
    assignment: TaskAssignment | None = None,
) -> MtMklModel:
    """Alternating optimization over per-task (alpha, b) and eta.

    Each outer iteration fits one LSSVM per task on its combined Gram, then
    steps every eta against the objective gradient with simplex projection.
    Stops when the largest eta change falls below ``eta_tolerance``; hitting
    ``max_outer_iters`` first leaves ``converged=False`` on the model.
    """
    if not tasks:
        raise InvalidParameterError("need at least one task")
    n_views = len(tasks[0].views)
    if isinstance(specs, KernelSpec):
        specs = [specs] * n_views
    if len(specs) != n_views:
        raise ShapeError(f"{len(specs)} kernel specs for {n_views} views")
    for r, task in enumerate(tasks):
        if len(task.views) != n_views:
            raise ShapeError(f"task {r} has {len(task.views)} views, expected {n_views}")
        if len(task.y) < 2 or len(set(np.unique(task.y).tolist())) < 2:
            raise MissingClassError(f"task {r + 1} needs both classes, got labels {np.unique(task.y)}")

    T = len(tasks)
    if eta_init is None:
        eta0 = np.full(n_views, 1.0 / n_views)
    else:
        eta0 = validate_eta(np.asarray(eta_init, dtype=float), n_views)
    etas = [eta0.copy() for _ in range(T)]
    eta_trace: list[list[np.ndarray]] = [[e.copy() for e in etas]]

    view_grams = [[gram(V, None, spec) for V, spec in zip(task.views, specs)] for task in tasks]
    labels = [task.y for task in tasks]

    def fit_all(current_etas):
        return [
            lssvm_fit(combined_gram(view_grams[r], current_etas[r]), labels[r], C)
            for r in range(T)
        ]

    solutions = fit_all(etas)
    converged = False
    n_iter = 0
    for n_iter in range(1, max_outer_iters + 1):
        alphas = [sol.alpha for sol in solutions]
        if freeze_eta:
            converged = True
            break
        grads = [
            objective_gradient(r, etas, alphas, view_grams, labels, reg, nu, omega2_sign)
            for r in range(T)
        ]
        base = fixed_alpha_objective(etas, alphas, view_grams, labels, reg, nu, omega2_sign)
        step = step_size
        while True:
            candidate = [project_simplex(etas[r] - step * grads[r]) for r in range(T)]
            cand_obj = fixed_alpha_objective(
                candidate, alphas, view_grams, labels, reg, nu, omega2_sign
            )
            if cand_obj <= base + 1e-12 * max(1.0, abs(base)):
                break
            if step < _MIN_STEP:
                candidate = etas  # no non-increasing step exists, stay put
                break
            step *= 0.5
        delta = max(float(np.max(np.abs(candidate[r] - etas[r]))) for r in range(T))
        etas = candidate
        eta_trace.append([e.copy() for e in etas])
        solutions = fit_all(etas)
        if delta < eta_tolerance:
            converged = True
            break

    return MtMklModel(
        specs=list(specs),
        reg=reg,
        nu=nu,
        C=C,
        etas=etas,
        solutions=solutions,
        task_views=[task.views for task in tasks],
        assignment=assignment,
        converged=converged,
        n_iter=n_iter,
        eta_trace=eta_trace,
    )


def mtmkl_predict(
    model: MtMklModel,
    X: np.ndarray,
    drives: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Route instances to their drives' tasks and score them.

    Returns (labels in {-1, +1}, decision scores).
    """
    X = np.asarray(X, dtype=float)
    drives = np.asarray(drives, dtype=object)
    if len(X) != len(drives):
        raise ShapeError(f"{len(X)} instances but {len(drives)} drive ids")
    if model.assignment is None:
        if model.n_tasks != 1:
            raise UnassignedDriveError("model has multiple tasks but no drive assignment")
        task_idx = np.zeros(len(X), dtype=int)
    else:
        task_idx = np.empty(len(X), dtype=int)
        for i, drive in enumerate(drives):
            if str(drive) not in model.assignment.tasks:
                raise UnassignedDriveError(f"drive {drive!r} is not in the task assignment")
            task_idx[i] = model.assignment.task_of(str(drive)) - 1

    widths = [V.shape[1] for V in model.task_views[0]]
    if X.shape[1] != sum(widths):
        raise ShapeError(f"X has {X.shape[1]} columns, expected {sum(widths)}")
    edges = np.cumsum([0] + widths)
    views = [X[:, edges[m]:edges[m + 1]] for m in range(len(widths))]
    scores = np.empty(len(X))
    for r in range(model.n_tasks):
        mask = task_idx == r
        if not np.any(mask):
            continue
        cross = [
            gram(view[mask], train_view, spec)
            for view, train_view, spec in zip(views, model.task_views[r], model.specs)
        ]
        k_eta = combined_gram(cross, model.etas[r])
        scores[mask] = lssvm_decision(model.solutions[r], k_eta)
    return decision_labels(scores), scores


def build_task_data(
    X: np.ndarray,
    y: np.ndarray,
    drives: np.ndarray,
    assignment: TaskAssignment,
) -> list[TaskData]:
    """Group instances into per-task view-split datasets by drive assignment."""
    X = np.asarray(X, dtype=float)
    y = check_binary_labels(y)
    drives = np.asarray(drives, dtype=object)
    if not (len(X) == len(y) == len(drives)):
        raise ShapeError("X, y and drives must have equal length")
    task_idx = np.empty(len(X), dtype=int)
    for i, drive in enumerate(drives):
        if str(drive) not in assignment.tasks:
            raise UnassignedDriveError(f"drive {drive!r} is not in the task assignment")
        task_idx[i] = assignment.task_of(str(drive)) - 1
    views = split_views(X)
    tasks = []
    for r in range(assignment.n_tasks):
        mask = task_idx == r
        if not np.any(mask):
            raise MissingClassError(f"task {r + 1} has no training instances")
        tasks.append(TaskData(views=[V[mask] for V in views], y=y[mask]))
    return tasks


class MtMklClassifier(BaseEstimator, ClassifierMixin):
    """Estimator wrapper around ``mtmkl_train`` / ``mtmkl_predict``.

    ``fit`` needs per-instance drive ids plus a TaskAssignment so instances
    can be routed to their tasks; ``predict`` routes unseen instances the
    same way. With a single task and no assignment, routing is trivial.
    """

    model_kind = "mtmkl"

    def __init__(
        self,
        kernel: str = "rbf",
        gamma: float = 1.0,
        C: float = 1.0,
        reg: str = "l1",
        nu: float = 0.1,
        step_size: float = 0.01,
        max_outer_iters: int = 100,
        eta_tolerance: float = 1e-4,
        omega2_sign: str = "as_printed",
        eta_init=None,
        freeze_eta: bool = False,
    ):
        self.kernel = kernel
        self.gamma = gamma
        self.C = C
        self.reg = reg
        self.nu = nu
        self.step_size = step_size
        self.max_outer_iters = max_outer_iters
        self.eta_tolerance = eta_tolerance
        self.omega2_sign = omega2_sign
        self.eta_init = eta_init
        self.freeze_eta = freeze_eta

    def _spec(self) -> KernelSpec:
        return KernelSpec(self.kernel, self.gamma if self.kernel == "rbf" else None)

    def fit(self, X, y, drives=None, assignment: TaskAssignment | None = None):
        X = np.asarray(X, dtype=float)
        y = check_binary_labels(y)
        if assignment is None:
            tasks = [TaskData(views=split_views(X), y=y)]
        else:
            if drives is None:
                raise InvalidParameterError("drives are required when an assignment is given")
            tasks = build_task_data(X, y, drives, assignment)
        self.model_ = mtmkl_train(
            tasks,
            self._spec(),
            reg=self.reg,
            nu=self.nu,
            C=self.C,
            step_size=self.step_size,
            max_outer_iters=self.max_outer_iters,
            eta_tolerance=self.eta_tolerance,
            omega2_sign=self.omega2_sign,
            eta_init=self.eta_init,
            freeze_eta=self.freeze_eta,
            assignment=assignment,
        )
        return self

    def decision_function(self, X, drives=None) -> np.ndarray:
        drives = self._default_drives(X, drives)
        _, scores = mtmkl_predict(self.model_, X, drives)
        return scores

    def predict(self, X, drives=None) -> np.ndarray:
        drives = self._default_drives(X, drives)
        labels, _ = mtmkl_predict(self.model_, X, drives)
        return labels

    def _default_drives(self, X, drives):
        if drives is None:
            if self.model_.assignment is not None:
                raise InvalidParameterError("drives are required for a multi-task model")
            return np.array([""] * len(np.asarray(X)), dtype=object)
        return drives

    @property
    def etas_(self) -> list[np.ndarray]:
        return self.model_.etas

    def to_doc(self) -> dict:
        model = self.model_
        doc = {
            "model_kind": self.model_kind,
            "params": {k: v for k, v in self.get_params().items() if k != "eta_init"},
            "feature_names": list(FEATURE_NAMES),
            "converged": model.converged,
            "n_iter": model.n_iter,
            "kernels": [
                {"kind": s.kind, "gamma": s.gamma} for s in model.specs
            ],
            "tasks": [
                {
                    "eta": model.etas[r].tolist(),
                    "alpha": model.solutions[r].alpha.tolist(),
                    "bias": model.solutions[r].bias,
                    "C": model.solutions[r].C,
                    "views": [V.tolist() for V in model.task_views[r]],
                }
                for r in range(model.n_tasks)
            ],
        }
        if model.assignment is not None:
            doc["assignment"] = {
                "n_tasks": model.assignment.n_tasks,
                "tasks": dict(sorted(model.assignment.tasks.items())),
            }
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "MtMklClassifier":
        est = cls(**doc["params"])
        specs = [KernelSpec(k["kind"], k["gamma"]) for k in doc["kernels"]]
        assignment = None
        if "assignment" in doc:
            assignment = TaskAssignment(
                tasks={k: int(v) for k, v in doc["assignment"]["tasks"].items()},
                n_tasks=int(doc["assignment"]["n_tasks"]),
            )
        etas, solutions, task_views = [], [], []
        for task in doc["tasks"]:
            etas.append(np.array(task["eta"]))
            solutions.append(
                LssvmSolution(
                    alpha=np.array(task["alpha"]),
                    bias=float(task["bias"]),
                    C=float(task["C"]),
                    residual=0.0,
                )
            )
            task_views.append([np.array(V) for V in task["views"]])
        est.model_ = MtMklModel(
            specs=specs,
            reg=doc["params"]["reg"],
            nu=doc["params"]["nu"],
            C=doc["params"]["C"],
            etas=etas,
            solutions=solutions,
            task_views=task_views,
            assignment=assignment,
            converged=bool(doc["converged"]),
            n_iter=int(doc["n_iter"]),
        )
        return est


def save_model_json(estimator, path: str | Path) -> None:
    Path(path).write_text(json.dumps(estimator.to_doc(), indent=2, sort_keys=True), encoding="utf-8")
