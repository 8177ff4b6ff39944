"""Per-view Gram matrices and their convex combination.

The 14-dim feature vector splits into two views: EDA (columns 0-8) and HR
(columns 9-13). Each view carries one kernel (linear or RBF) and the views
are mixed by nonnegative weights eta that sum to one.
"""

from __future__ import annotations

import csv
import hashlib
import threading
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidParameterError, ShapeError
from .features import EDA_FEATURE_NAMES, N_FEATURES

LINEAR = "linear"
RBF = "rbf"
KERNEL_KINDS = (LINEAR, RBF)

EDA_VIEW = slice(0, len(EDA_FEATURE_NAMES))
HR_VIEW = slice(len(EDA_FEATURE_NAMES), N_FEATURES)
VIEW_SLICES = (EDA_VIEW, HR_VIEW)
VIEW_NAMES = ("eda", "hr")
N_VIEWS = len(VIEW_SLICES)


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    gamma: float | None = None

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise InvalidParameterError(f"kernel kind must be one of {KERNEL_KINDS}, got {self.kind!r}")
        if self.kind == RBF:
            if self.gamma is None or self.gamma <= 0:
                raise InvalidParameterError(f"RBF kernel needs gamma > 0, got {self.gamma}")

    def key(self) -> str:
        return self.kind if self.kind == LINEAR else f"{self.kind}:{self.gamma!r}"


def split_views(X: np.ndarray) -> list[np.ndarray]:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != N_FEATURES:
        raise ShapeError(f"expected an n x {N_FEATURES} matrix, got shape {X.shape}")
    return [X[:, sl] for sl in VIEW_SLICES]


def gram(X: np.ndarray, Z: np.ndarray | None, spec: KernelSpec) -> np.ndarray:
    """Kernel matrix k(x_i, z_j). Pass Z=None for the symmetric self-Gram."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ShapeError(f"X must be 2-dimensional, got shape {X.shape}")
    self_gram = Z is None
    Zm = X if self_gram else np.asarray(Z, dtype=float)
    if Zm.ndim != 2:
        raise ShapeError(f"Z must be 2-dimensional, got shape {Zm.shape}")
    if X.shape[1] != Zm.shape[1]:
        raise ShapeError(f"column mismatch: X has {X.shape[1]}, Z has {Zm.shape[1]}")

    if spec.kind == LINEAR:
        K = X @ Zm.T
        if self_gram:
            K = 0.5 * (K + K.T)
        return K

    sq = (
        np.sum(X**2, axis=1)[:, None]
        + np.sum(Zm**2, axis=1)[None, :]
        - 2.0 * (X @ Zm.T)
    )
    np.maximum(sq, 0.0, out=sq)
    K = np.exp(-spec.gamma * sq)
    if self_gram:
        K = 0.5 * (K + K.T)
        np.fill_diagonal(K, 1.0)
    return K


def validate_eta(eta: np.ndarray, n_views: int | None = None, atol: float = 1e-8) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    if eta.ndim != 1:
        raise ShapeError(f"eta must be a vector, got shape {eta.shape}")
    if n_views is not None and len(eta) != n_views:
        raise ShapeError(f"eta must have length {n_views}, got {len(eta)}")
    if np.min(eta) < -atol:
        raise InvalidParameterError(f"eta has negative weight {np.min(eta):.3g}")
    if abs(float(np.sum(eta)) - 1.0) > atol:
        raise InvalidParameterError(f"eta must sum to 1, got {np.sum(eta):.12g}")
    return eta


def combined_gram(view_grams: list[np.ndarray], eta: np.ndarray) -> np.ndarray:
    """Weighted average sum_m eta_m K_m of same-shaped per-view Grams."""
    if len(view_grams) == 0:
        raise ShapeError("need at least one view Gram")
    eta = np.asarray(eta, dtype=float)
    if len(eta) != len(view_grams):
        raise ShapeError(f"{len(view_grams)} Grams but eta has length {len(eta)}")
    validate_eta(eta)
    shape = view_grams[0].shape
    for i, K in enumerate(view_grams):
        if K.shape != shape:
            raise ShapeError(f"view Gram {i} has shape {K.shape}, expected {shape}")
    out = np.zeros(shape)
    for w, K in zip(eta, view_grams):
        out += w * K
    return out


def _content_key(*arrays: np.ndarray) -> str:
    digest = hashlib.blake2b(digest_size=16)
    for arr in arrays:
        arr = np.ascontiguousarray(arr)
        digest.update(str(arr.shape).encode())
        digest.update(arr.tobytes())
    return digest.hexdigest()


class GramCache:
    """Content-keyed Gram cache, safe for concurrent reads with exclusive insert.

    The inner grid search recomputes the same (fold, view, spec) Grams many
    times over; caching them by content removes the dominant cost. Entries
    are evicted FIFO past ``max_entries``.
    """

    def __init__(self, max_entries: int = 64):
        self._store: OrderedDict[tuple[str, str], np.ndarray] = OrderedDict()
        self._lock = threading.Lock()
        self.max_entries = max_entries
        self.hits = 0
        self.misses = 0

    def gram(self, X: np.ndarray, Z: np.ndarray | None, spec: KernelSpec) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        Zm = None if Z is None else np.asarray(Z, dtype=float)
        key = (_content_key(X) if Zm is None else _content_key(X, Zm), spec.key())
        with self._lock:
            if key in self._store:
                self.hits += 1
                return self._store[key]
        K = gram(X, Zm, spec)
        with self._lock:
            if key not in self._store:
                self._store[key] = K
                self.misses += 1
                while len(self._store) > self.max_entries:
                    self._store.popitem(last=False)
            return self._store[key]

    def __len__(self) -> int:
        return len(self._store)


def dump_gram_csv(K: np.ndarray, path: str | Path) -> None:
    """Debug dump of a Gram matrix."""
    K = np.asarray(K, dtype=float)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for row in K:
            writer.writerow([f"{v:.12g}" for v in row])
