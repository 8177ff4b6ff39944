"""Drive-agnostic single-task baselines.

Logistic regression with an l1 or l2 penalty (bias unpenalized), and a
single-task kernel LSSVM over the concatenated 14-dim feature vector. None
of these models ever sees a drive id.

The l2 solver is plain gradient descent with backtracking; the l1 solver is
proximal gradient with soft-thresholding, so zero weights are exact and the
reported sparsity is a count of true zeros.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .errors import InvalidParameterError, ShapeError
from .features import FEATURE_NAMES
from .kernels import KernelSpec, gram
from .lssvm import LssvmSolution, decision_labels, lssvm_decision, lssvm_fit
from .validation import as_float_matrix, check_binary_labels

PENALTIES = ("l1", "l2")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _log1pexp(z: np.ndarray) -> np.ndarray:
    # stable log(1 + exp(z))
    out = np.empty_like(z, dtype=float)
    big = z > 30
    out[big] = z[big]
    out[~big] = np.log1p(np.exp(z[~big]))
    return out


def _loss_and_grad(w, b, X, y):
    z = X @ w + b
    margins = -y * z
    loss = float(np.mean(_log1pexp(margins)))
    coeff = -y * _sigmoid(margins) / len(y)
    return loss, X.T @ coeff, float(np.sum(coeff))


@dataclass
class LogRegModel:
    weights: np.ndarray
    bias: float
    penalty: str
    lam: float
    n_iter: int
    converged: bool
    objective_history: list[float] | None = None

    @property
    def sparsity(self) -> int:
        return int(np.sum(self.weights == 0.0))


def _penalty_value(w: np.ndarray, penalty: str, lam: float) -> float:
    if penalty == "l2":
        return lam * float(np.dot(w, w))
    return lam * float(np.sum(np.abs(w)))


def logreg_fit(
    X: np.ndarray,
    y: np.ndarray,
    penalty: str = "l2",
    lam: float = 1.0,
    tol: float = 1e-6,
    max_iter: int = 20000,
) -> LogRegModel:
    """Minimize mean logistic loss + lam * penalty(w), bias unpenalized.

    l2 runs gradient descent to gradient norm <= tol; l1 runs proximal
    gradient (soft-thresholding) until the composite gradient map has norm
    <= tol. Both backtrack the step on objective increase.
    """
    X = as_float_matrix(X)
    y = check_binary_labels(y)
    if len(X) != len(y):
        raise ShapeError(f"X has {len(X)} rows but y has length {len(y)}")
    if penalty not in PENALTIES:
        raise InvalidParameterError(f"penalty must be one of {PENALTIES}, got {penalty!r}")
    if lam < 0:
        raise InvalidParameterError(f"lam must be >= 0, got {lam}")

    w = np.zeros(X.shape[1])
    # start the unpenalized intercept at its weights-free optimum log(n+/n-)
    n_pos = int(np.sum(y == 1.0))
    b = float(np.log(n_pos / (len(y) - n_pos)))
    step = 1.0
    converged = False
    n_iter = 0
    loss, gw, gb = _loss_and_grad(w, b, X, y)
    history = [loss + _penalty_value(w, penalty, lam)]

    for n_iter in range(1, max_iter + 1):
        if penalty == "l2":
            grad_w = gw + 2.0 * lam * w
            grad_norm = float(np.sqrt(np.sum(grad_w**2) + gb**2))
            if grad_norm <= tol:
                converged = True
                break
            obj = loss + _penalty_value(w, "l2", lam)
            t = step
            while True:
                w_new = w - t * grad_w
                b_new = b - t * gb
                loss_new, gw_new, gb_new = _loss_and_grad(w_new, b_new, X, y)
                if loss_new + _penalty_value(w_new, "l2", lam) <= obj + 1e-15 or t < 1e-14:
                    break
                t *= 0.5
            w, b, loss, gw, gb = w_new, b_new, loss_new, gw_new, gb_new
            history.append(loss + _penalty_value(w, "l2", lam))
            step = min(t * 2.0, 1e4)
        else:
            obj = loss + _penalty_value(w, "l1", lam)
            t = step
            while True:
                shifted = w - t * gw
                w_new = np.sign(shifted) * np.maximum(np.abs(shifted) - t * lam, 0.0)
                b_new = b - t * gb
                loss_new, gw_new, gb_new = _loss_and_grad(w_new, b_new, X, y)
                if loss_new + _penalty_value(w_new, "l1", lam) <= obj + 1e-15 or t < 1e-14:
                    break
                t *= 0.5
            gmap = float(np.sqrt(np.sum(((w - w_new) / t) ** 2) + gb**2))
            w, b, loss, gw, gb = w_new, b_new, loss_new, gw_new, gb_new
            history.append(loss + _penalty_value(w, "l1", lam))
            step = min(t * 2.0, 1e4)
            if gmap <= tol:
                converged = True
                break

    return LogRegModel(
        weights=w,
        bias=float(b),
        penalty=penalty,
        lam=lam,
        n_iter=n_iter,
        converged=converged,
        objective_history=history,
    )


def logreg_predict(model: LogRegModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Labels (+1 where p >= 0.5) and probabilities p = sigmoid(w.x + b)."""
    X = as_float_matrix(X, n_cols=len(model.weights))
    probs = _sigmoid(X @ model.weights + model.bias)
    labels = np.where(probs >= 0.5, 1.0, -1.0)
    return labels, probs


def single_task_kernel_fit(
    X: np.ndarray,
    y: np.ndarray,
    spec: KernelSpec,
    C: float,
) -> tuple[LssvmSolution, np.ndarray]:
    """Kernel LSSVM on the full concatenated feature vector."""
    X = as_float_matrix(X)
    K = gram(X, None, spec)
    return lssvm_fit(K, y, C), X


class LogisticRegressionClassifier(BaseEstimator, ClassifierMixin):
    """Penalized logistic regression baseline."""

    model_kind = "logreg"

    def __init__(self, penalty: str = "l2", lam: float = 1.0, tol: float = 1e-6, max_iter: int = 20000):
        self.penalty = penalty
        self.lam = lam
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        self.model_ = logreg_fit(X, y, penalty=self.penalty, lam=self.lam, tol=self.tol, max_iter=self.max_iter)
        return self

    def predict(self, X):
        labels, _ = logreg_predict(self.model_, X)
        return labels

    def predict_proba(self, X):
        _, probs = logreg_predict(self.model_, X)
        return np.column_stack([1.0 - probs, probs])

    def to_doc(self) -> dict:
        return {
            "model_kind": self.model_kind,
            "params": self.get_params(),
            "feature_names": list(FEATURE_NAMES),
            "weights": self.model_.weights.tolist(),
            "bias": self.model_.bias,
            "converged": self.model_.converged,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "LogisticRegressionClassifier":
        est = cls(**doc["params"])
        est.model_ = LogRegModel(
            weights=np.array(doc["weights"]),
            bias=float(doc["bias"]),
            penalty=doc["params"]["penalty"],
            lam=float(doc["params"]["lam"]),
            n_iter=0,
            converged=bool(doc["converged"]),
        )
        return est


class SingleTaskKernelClassifier(BaseEstimator, ClassifierMixin):
    """Kernel LSSVM baseline standing in for the hinge-loss SVM rows."""

    model_kind = "stk"

    def __init__(self, kernel: str = "linear", gamma: float = 1.0, C: float = 1.0):
        self.kernel = kernel
        self.gamma = gamma
        self.C = C

    def _spec(self) -> KernelSpec:
        return KernelSpec(self.kernel, self.gamma if self.kernel == "rbf" else None)

    def fit(self, X, y):
        self.solution_, self.X_train_ = single_task_kernel_fit(X, y, self._spec(), self.C)
        return self

    def decision_function(self, X):
        X = as_float_matrix(X, n_cols=self.X_train_.shape[1])
        k_test = gram(X, self.X_train_, self._spec())
        return lssvm_decision(self.solution_, k_test)

    def predict(self, X):
        return decision_labels(self.decision_function(X))

    def to_doc(self) -> dict:
        return {
            "model_kind": self.model_kind,
            "params": self.get_params(),
            "feature_names": list(FEATURE_NAMES),
            "alpha": self.solution_.alpha.tolist(),
            "bias": self.solution_.bias,
            "X_train": self.X_train_.tolist(),
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "SingleTaskKernelClassifier":
        est = cls(**doc["params"])
        est.solution_ = LssvmSolution(
            alpha=np.array(doc["alpha"]),
            bias=float(doc["bias"]),
            C=float(doc["params"]["C"]),
            residual=0.0,
        )
        est.X_train_ = np.array(doc["X_train"])
        return est
