"""Least-squares SVM trained by solving one symmetric linear system.

The dual problem with equality constraints reduces to

    [ 0   1^T      ] [ b     ]   [ 0 ]
    [ 1   K + I/C  ] [ alpha ] = [ y ]

so larger C means less regularization, matching an SVM-style cost. The
solve uses a dense symmetric-indefinite factorization; if it fails or the
residual is poor, a jitter of 1e-10 * trace(K)/n is added to the Gram
diagonal once before giving up.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import IllConditionedError, InvalidParameterError, ShapeError
from .validation import check_binary_labels, check_square

KKT_TOLERANCE = 1e-8
_JITTER_SCALE = 1e-10


@dataclass(frozen=True)
class LssvmSolution:
    alpha: np.ndarray
    bias: float
    C: float
    residual: float
    gram_key: str | None = None


def _solve_kkt(K: np.ndarray, y: np.ndarray, C: float) -> tuple[np.ndarray, float, float]:
    n = len(y)
    A = np.zeros((n + 1, n + 1))
    A[0, 1:] = 1.0
    A[1:, 0] = 1.0
    A[1:, 1:] = K + np.eye(n) / C
    rhs = np.concatenate([[0.0], y])
    sol = scipy.linalg.solve(A, rhs, assume_a="sym")
    residual = float(np.linalg.norm(A @ sol - rhs) / np.linalg.norm(rhs))
    return sol[1:], float(sol[0]), residual


def lssvm_fit(
    K: np.ndarray,
    y: np.ndarray,
    C: float,
    gram_key: str | None = None,
) -> LssvmSolution:
    """Solve the KKT system for dual coefficients alpha and bias b."""
    K = check_square(K, "K")
    y = check_binary_labels(y)
    if len(y) != K.shape[0]:
        raise ShapeError(f"K is {K.shape} but y has length {len(y)}")
    if len(y) < 2:
        raise InvalidParameterError(f"need at least 2 instances, got {len(y)}")
    if C <= 0:
        raise InvalidParameterError(f"C must be positive, got {C}")

    try:
        alpha, bias, residual = _solve_kkt(K, y, C)
    except scipy.linalg.LinAlgError:
        alpha, bias, residual = None, None, np.inf
    if residual > KKT_TOLERANCE:
        jitter = _JITTER_SCALE * np.trace(K) / len(y)
        try:
            alpha, bias, residual = _solve_kkt(K + jitter * np.eye(len(y)), y, C)
        except scipy.linalg.LinAlgError as exc:
            raise IllConditionedError("LSSVM system is singular even after jitter") from exc
        if residual > KKT_TOLERANCE:
            raise IllConditionedError(
                f"LSSVM residual {residual:.3g} exceeds {KKT_TOLERANCE:.0e} after jitter"
            )
    return LssvmSolution(alpha=alpha, bias=bias, C=float(C), residual=residual, gram_key=gram_key)


def lssvm_decision(solution: LssvmSolution, k_test: np.ndarray) -> np.ndarray:
    """Decision scores f(x) = sum_i alpha_i k(x, x_i) + b for cross-Gram rows."""
    k_test = np.asarray(k_test, dtype=float)
    if k_test.ndim != 2 or k_test.shape[1] != len(solution.alpha):
        raise ShapeError(
            f"cross-Gram must be m x {len(solution.alpha)}, got shape {k_test.shape}"
        )
    return k_test @ solution.alpha + solution.bias


def decision_labels(scores: np.ndarray) -> np.ndarray:
    """Predicted labels: sign of the score with sign(0) -> +1."""
    return np.where(np.asarray(scores) >= 0, 1.0, -1.0)
