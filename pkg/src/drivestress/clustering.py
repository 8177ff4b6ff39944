"""Drive profiling and task assignment via normalized spectral clustering.

Each drive is summarized by the mean feature vector of its high-stress
training windows. Profiles form a fully connected similarity graph with RBF
edge weights; the degree matrix G and unnormalized Laplacian L = G - W give
the generalized eigenproblem L u = lambda G u whose first T eigenvectors,
clustered row-wise with k-means, partition the drives into T tasks.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ClusteringFailureError,
    DegenerateGraphError,
    InvalidParameterError,
    MissingProfileError,
    SchemaError,
    ShapeError,
)
from .features import N_FEATURES, WindowInstance

DEFAULT_GAMMA = 0.1


@dataclass(frozen=True)
class ProfileVector:
    """Per-drive descriptor: mean features over high-stress training windows."""

    drive_id: str
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        if self.p.shape != (N_FEATURES,):
            raise ShapeError(f"profile must have shape ({N_FEATURES},), got {self.p.shape}")
        if not np.all(np.isfinite(self.p)):
            raise InvalidParameterError(f"profile for {self.drive_id} has non-finite entries")


@dataclass(frozen=True)
class TaskAssignment:
    """Mapping drive_id -> task index in 1..n_tasks, every task non-empty."""

    tasks: dict[str, int]
    n_tasks: int

    def __post_init__(self):
        seen = set(self.tasks.values())
        if not self.tasks:
            raise InvalidParameterError("assignment must cover at least one drive")
        if seen != set(range(1, self.n_tasks + 1)):
            raise InvalidParameterError(
                f"tasks must cover 1..{self.n_tasks} with none empty, got {sorted(seen)}"
            )

    def task_of(self, drive_id: str) -> int:
        return self.tasks[drive_id]

    def drives_in(self, task: int) -> list[str]:
        return sorted(d for d, t in self.tasks.items() if t == task)

    def to_json(self) -> str:
        return json.dumps(
            {"n_tasks": self.n_tasks, "tasks": dict(sorted(self.tasks.items()))},
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "TaskAssignment":
        try:
            doc = json.loads(text)
            return cls(tasks={str(k): int(v) for k, v in doc["tasks"].items()}, n_tasks=int(doc["n_tasks"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed assignment document: {exc}") from exc


def profile_vector(instances: list[WindowInstance], drive_id: str) -> ProfileVector:
    """Mean feature vector over the drive's H-labeled instances."""
    rows = [inst.features for inst in instances if inst.drive_id == drive_id and inst.label == "H"]
    if not rows:
        raise MissingProfileError(f"drive {drive_id!r} has no H-labeled training instances")
    return ProfileVector(drive_id=drive_id, p=np.mean(rows, axis=0))


def build_profiles(
    instances: list[WindowInstance],
) -> tuple[list[ProfileVector], dict[str, np.ndarray]]:
    """Profiles for every drive with H instances, plus fallback descriptors.

    Drives lacking H windows in the training split cannot be profiled; they
    get an L-instance mean as a fallback descriptor and are later attached
    to the nearest task centroid instead of participating in clustering.
    """
    drive_ids = sorted({inst.drive_id for inst in instances})
    profiles: list[ProfileVector] = []
    fallbacks: dict[str, np.ndarray] = {}
    for drive_id in drive_ids:
        try:
            profiles.append(profile_vector(instances, drive_id))
        except MissingProfileError:
            rows = [
                inst.features
                for inst in instances
                if inst.drive_id == drive_id and inst.label == "L"
            ]
            if not rows:
                raise MissingProfileError(
                    f"drive {drive_id!r} has neither H nor L training instances"
                ) from None
            fallbacks[drive_id] = np.mean(rows, axis=0)
    return profiles, fallbacks


def similarity_matrix(profiles: list[ProfileVector], gamma: float = DEFAULT_GAMMA) -> np.ndarray:
    """RBF similarities w_ij = exp(-gamma ||p_i - p_j||^2), unit diagonal."""
    if len(profiles) < 2:
        raise InvalidParameterError(f"need at least 2 profiles, got {len(profiles)}")
    P = np.array([pv.p for pv in profiles])
    sq = (
        np.sum(P**2, axis=1)[:, None]
        + np.sum(P**2, axis=1)[None, :]
        - 2.0 * (P @ P.T)
    )
    np.maximum(sq, 0.0, out=sq)
    W = np.exp(-gamma * sq)
    W = 0.5 * (W + W.T)
    np.fill_diagonal(W, 1.0)
    return W


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray | None:
    """k-means++ seeding; None when k distinct centers cannot be placed."""
    n = len(points)
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            return None
        idx = rng.choice(n, p=d2 / total)
        centers[j] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centers[j]) ** 2, axis=1))
    return centers


def _lloyd(
    points: np.ndarray,
    centers: np.ndarray,
    max_iter: int,
) -> tuple[np.ndarray, float] | None:
    """Lloyd iterations to an assignment fixed point; None on an empty cluster."""
    k = len(centers)
    labels = None
    for _ in range(max_iter):
        dists = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_labels = np.argmin(dists, axis=1)
        if np.any(np.bincount(new_labels, minlength=k) == 0):
            return None
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        centers = np.array([points[labels == j].mean(axis=0) for j in range(k)])
    wcss = float(np.sum((points - centers[labels]) ** 2))
    return labels, wcss


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int,
    n_restarts: int = 10,
    max_iter: int = 300,
) -> np.ndarray:
    """Seeded k-means: best of ``n_restarts`` k-means++ starts by WCSS."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ShapeError(f"points must be 2-dimensional, got shape {points.shape}")
    n = len(points)
    if k > n:
        raise InvalidParameterError(f"k={k} exceeds number of points {n}")
    if k < 1:
        raise InvalidParameterError(f"k must be >= 1, got {k}")
    if k == 1:
        return np.zeros(n, dtype=int)

    rng = np.random.default_rng(seed)
    best_labels, best_wcss = None, np.inf
    for _ in range(n_restarts):
        centers = _kmeans_pp_init(points, k, rng)
        if centers is None:
            continue
        result = _lloyd(points, centers, max_iter)
        if result is None:
            continue
        labels, wcss = result
        if wcss < best_wcss:
            best_labels, best_wcss = labels, wcss
    if best_labels is None:
        raise ClusteringFailureError(
            f"k-means could not form {k} non-empty clusters in {n_restarts} restarts "
            f"(fewer than {k} distinct points?)"
        )
    return best_labels


def _sorted_generalized_eigvecs(W: np.ndarray, n_vecs: int) -> np.ndarray:
    """First generalized eigenvectors of (L, G), via the symmetric transform.

    With d = G^{-1/2}, the problem L u = lambda G u becomes the symmetric
    eigenproblem (d L d) v = lambda v with u = d v. Eigenvalues are sorted
    ascending; ties break by lexicographic order of the (sign-normalized)
    eigenvector entries so the output is reproducible.
    """
    degrees = W.sum(axis=1)
    if np.any(degrees <= 1e-12):
        idx = int(np.argmin(degrees))
        raise DegenerateGraphError(f"vertex {idx} is isolated (degree {degrees[idx]:.3g})")
    d_isqrt = 1.0 / np.sqrt(degrees)
    L = np.diag(degrees) - W
    L_sym = d_isqrt[:, None] * L * d_isqrt[None, :]
    L_sym = 0.5 * (L_sym + L_sym.T)
    eigvals, eigvecs = np.linalg.eigh(L_sym)

    # sign convention: first entry of significant magnitude is positive
    for j in range(eigvecs.shape[1]):
        col = eigvecs[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if len(nz) and col[nz[0]] < 0:
            eigvecs[:, j] = -col
    scale = max(abs(eigvals[0]), abs(eigvals[-1]), 1.0)
    order = sorted(
        range(len(eigvals)),
        key=lambda j: (round(eigvals[j] / (1e-10 * scale)), tuple(eigvecs[:, j])),
    )
    U = d_isqrt[:, None] * eigvecs[:, order[:n_vecs]]
    norms = np.linalg.norm(U, axis=0)
    norms[norms == 0] = 1.0
    return U / norms


def spectral_cluster(
    W: np.ndarray,
    T: int,
    seed: int,
    n_restarts: int = 10,
    max_iter: int = 300,
) -> np.ndarray:
    """Partition graph vertices into T clusters; returns 0-based labels."""
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ShapeError(f"W must be square, got shape {W.shape}")
    E = W.shape[0]
    if not 1 <= T <= E:
        raise InvalidParameterError(f"T must lie in [1, {E}], got {T}")
    if not np.allclose(W, W.T, atol=1e-10):
        raise InvalidParameterError("similarity matrix must be symmetric")
    if np.min(W) < -1e-12:
        raise InvalidParameterError("similarity matrix must be non-negative")
    if T == 1:
        return np.zeros(E, dtype=int)
    U = _sorted_generalized_eigvecs(W, T)
    return kmeans(U, T, seed, n_restarts=n_restarts, max_iter=max_iter)


def assign_tasks(
    instances: list[WindowInstance],
    T: int,
    gamma: float = DEFAULT_GAMMA,
    seed: int = 0,
    n_restarts: int = 10,
    max_iter: int = 300,
) -> tuple[TaskAssignment, list[ProfileVector], np.ndarray]:
    """Cluster training drives into T tasks; returns (assignment, profiles, W).

    Drives without H-labeled training instances are attached to the task
    whose centroid (mean profile) is closest to their L-instance mean.
    """
    profiles, fallbacks = build_profiles(instances)
    n_drives = len(profiles) + len(fallbacks)
    if T > n_drives:
        raise InvalidParameterError(f"T={T} exceeds number of drives {n_drives}")
    if len(profiles) < T:
        raise MissingProfileError(
            f"only {len(profiles)} drives have H instances; cannot form {T} tasks"
        )

    if len(profiles) == 1:
        labels = np.zeros(1, dtype=int)
        W = np.ones((1, 1))
    elif T == 1:
        labels = np.zeros(len(profiles), dtype=int)
        W = similarity_matrix(profiles, gamma=gamma)
    else:
        W = similarity_matrix(profiles, gamma=gamma)
        labels = spectral_cluster(W, T, seed, n_restarts=n_restarts, max_iter=max_iter)

    tasks = {pv.drive_id: int(lab) + 1 for pv, lab in zip(profiles, labels)}
    if fallbacks:
        P = np.array([pv.p for pv in profiles])
        centroids = np.array([P[labels == t].mean(axis=0) for t in range(T)])
        for drive_id in sorted(fallbacks):
            dists = np.sum((centroids - fallbacks[drive_id]) ** 2, axis=1)
            tasks[drive_id] = int(np.argmin(dists)) + 1
    return TaskAssignment(tasks=tasks, n_tasks=T), profiles, W


def save_profiles_csv(profiles: list[ProfileVector], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["drive_id"] + [f"p{i + 1}" for i in range(N_FEATURES)])
        for pv in profiles:
            writer.writerow([pv.drive_id] + [f"{v:.12g}" for v in pv.p])


def load_assignment(path: str | Path) -> TaskAssignment:
    return TaskAssignment.from_json(Path(path).read_text(encoding="utf-8"))
