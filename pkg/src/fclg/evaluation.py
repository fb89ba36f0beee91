"""K-Means clustering of graph embeddings and matched accuracy / macro-F1."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass(eq=False)
class ClusteringResult:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int = 0
    cluster_to_class: dict | None = None


def _sq_dists(X, C):
    d = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _kmeans_pp(X, k, rng):
    n = len(X)
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    closest = _sq_dists(X, centers[:1])[:, 0]
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers[j] = X[idx]
        closest = np.minimum(closest, _sq_dists(X, centers[j:j + 1])[:, 0])
    return centers


def _lloyd(X, centers, max_iter, tol, trace=None):
    prev = None
    for it in range(1, max_iter + 1):
        d = _sq_dists(X, centers)
        assign = d.argmin(axis=1)
        inertia = float(d[np.arange(len(X)), assign].sum())
        if trace is not None:
            trace.append(inertia)
        new = np.empty_like(centers)
        counts = np.bincount(assign, minlength=len(centers))
        point_d = d[np.arange(len(X)), assign]
        taken = set()
        for j in range(len(centers)):
            if counts[j]:
                new[j] = X[assign == j].mean(axis=0)
            else:
                # reseed an empty cluster at the point farthest from its centroid
                order = np.argsort(-point_d, kind="stable")
                pick = next((i for i in order if i not in taken), order[0])
                taken.add(pick)
                new[j] = X[pick]
        centers = new
        if prev is not None and abs(prev - inertia) <= tol * max(prev, 1e-300):
            break
        prev = inertia
    d = _sq_dists(X, centers)
    assign = d.argmin(axis=1)
    inertia = float(((X - centers[assign]) ** 2).sum())
    return assign, centers, inertia, it


def kmeans(X, k: int, restarts: int = 10, seed: int = 0, max_iter: int = 300, tol: float = 1e-4) -> ClusteringResult:
    """Lloyd's algorithm with k-means++ seeding; lowest-inertia restart wins."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or not 1 <= k <= len(X):
        raise ValueError(f"need 1 <= k <= N, got k={k}, N={len(X)}")
    best = None
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        assign, centers, inertia, it = _lloyd(X, _kmeans_pp(X, k, rng), max_iter, tol)
        if best is None or inertia < best.inertia:
            best = ClusteringResult(assign, centers, inertia, it)
    return best


def contingency(assignments, labels, k: int, num_classes: int) -> np.ndarray:
    m = np.zeros((k, num_classes), dtype=np.int64)
    np.add.at(m, (np.asarray(assignments), np.asarray(labels)), 1)
    return m


def match_clusters(assignments, labels, k: int, num_classes: int) -> dict:
    """Optimal one-to-one cluster -> class map maximising matched count."""
    m = contingency(assignments, labels, k, num_classes)
    rows, cols = linear_sum_assignment(m, maximize=True)
    return {int(r): int(c) for r, c in zip(rows, cols)}


def clustering_accuracy(assignments, labels, k: int, num_classes: int) -> float:
    assignments = np.asarray(assignments)
    if len(assignments) != len(labels):
        raise ValueError("assignments and labels differ in length")
    if len(assignments) == 0:
        return 0.0
    m = contingency(assignments, labels, k, num_classes)
    rows, cols = linear_sum_assignment(m, maximize=True)
    return float(m[rows, cols].sum() / len(assignments))


def apply_mapping(assignments, mapping: dict) -> np.ndarray:
    """Map clusters to classes; unmatched clusters become -1."""
    return np.array([mapping.get(int(a), -1) for a in assignments], dtype=np.int64)


def macro_f1(predictions, labels, num_classes: int) -> float:
    """Unweighted mean of per-class F1 over ``num_classes`` classes."""
    pred = np.asarray(predictions)
    labels = np.asarray(labels)
    scores = []
    for c in range(num_classes):
        tp = np.sum((pred == c) & (labels == c))
        n_pred = np.sum(pred == c)
        n_true = np.sum(labels == c)
        if n_pred + n_true == 0 or tp == 0:
            scores.append(0.0)
        else:
            scores.append(2.0 * tp / (n_pred + n_true))
    return float(np.mean(scores))


def evaluate_embeddings(U, labels, num_classes: int, restarts: int = 10, seed: int = 0) -> dict:
    """Cluster with k = number of classes and score against ground truth."""
    labels = np.asarray(labels)
    result = kmeans(U, num_classes, restarts=restarts, seed=seed)
    mapping = match_clusters(result.assignments, labels, num_classes, num_classes)
    result.cluster_to_class = mapping
    pred = apply_mapping(result.assignments, mapping)
    return {
        "accuracy": clustering_accuracy(result.assignments, labels, num_classes, num_classes),
        "macro_f1": macro_f1(pred, labels, num_classes),
        "inertia": result.inertia,
        "clustering": result,
    }


def export_embeddings(U, labels, path) -> None:
    """One line per graph: label followed by the embedding, comma-separated."""
    U = np.asarray(U, dtype=np.float64)
    if U.ndim == 1:
        U = U[:, None]
    with open(Path(path), "w") as fh:
        for y, row in zip(labels, U):
            fh.write(",".join([str(int(y))] + [repr(float(x)) for x in row]) + "\n")


def read_embeddings(path) -> tuple[np.ndarray, np.ndarray]:
    labels, rows = [], []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        parts = line.split(",")
        labels.append(int(parts[0]))
        rows.append([float(x) for x in parts[1:]])
    return np.array(rows, dtype=np.float64), np.array(labels, dtype=np.int64)
