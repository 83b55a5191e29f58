"""Clustering evaluation: optimal-matching accuracy, NMI, ARI, k-means."""
from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .nn.seeding import stream


def _as_labels(y) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError("labelings must be 1-D")
    y = y.astype(np.int64)
    if y.size and y.min() < 0:
        raise ValueError("labels must be non-negative integers")
    return y


def contingency_table(y_true, y_pred) -> np.ndarray:
    """Co-occurrence counts, padded square over the union label alphabet."""
    y_true, y_pred = _as_labels(y_true), _as_labels(y_pred)
    if y_true.shape != y_pred.shape:
        raise ValueError("labelings must have equal length")
    m = int(max(y_true.max(initial=-1), y_pred.max(initial=-1)) + 1)
    table = np.zeros((m, m), dtype=np.int64)
    np.add.at(table, (y_true, y_pred), 1)
    return table


def hungarian(cost: np.ndarray) -> np.ndarray:
    """Permutation p minimizing sum_i cost[i, p[i]] (square cost matrix)."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError("cost matrix must be square")
    if not np.isfinite(cost).all():
        raise ValueError("cost entries must be finite")
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(cost.shape[0], dtype=np.int64)
    perm[rows] = cols
    return perm


def acc(y_true, y_pred) -> float:
    """Clustering accuracy: best label matching via the Hungarian assignment."""
    table = contingency_table(y_true, y_pred)
    n = table.sum()
    if n == 0:
        raise ValueError("empty labelings")
    perm = hungarian(-table.astype(np.float64))
    matched = table[np.arange(table.shape[0]), perm].sum()
    return float(matched / n)


def _entropy(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def nmi(y_true, y_pred) -> float:
    """Mutual information normalized by the geometric mean of the entropies;
    0 when either labeling carries no information."""
    table = contingency_table(y_true, y_pred).astype(np.float64)
    n = table.sum()
    pij = table / n
    pi = pij.sum(axis=1)
    pj = pij.sum(axis=0)
    hu, hv = _entropy(pi), _entropy(pj)
    if hu == 0.0 or hv == 0.0:
        return 0.0
    nz = pij > 0
    mi = (pij[nz] * np.log(pij[nz] / np.outer(pi, pj)[nz])).sum()
    return float(max(0.0, mi) / np.sqrt(hu * hv))


def ari(y_true, y_pred) -> float:
    """Adjusted Rand index from pair counts of the contingency table."""
    table = contingency_table(y_true, y_pred).astype(np.float64)
    n = table.sum()

    def pairs(x):
        return (x * (x - 1) / 2.0).sum()

    index = pairs(table)
    sum_a = pairs(table.sum(axis=1))
    sum_b = pairs(table.sum(axis=0))
    total = n * (n - 1) / 2.0
    expected = sum_a * sum_b / total
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        return 1.0  # both labelings constant: identical partitions
    return float((index - expected) / (max_index - expected))


def kmeans(
    X: np.ndarray,
    k: int,
    seed: int = 0,
    max_iter: int = 100,
    return_history: bool = False,
):
    """Lloyd's algorithm with k-means++ seeding.

    Empty clusters are reseeded to the point farthest from its center, so the
    inertia sequence stays non-increasing. Returns (labels, inertia) or
    (labels, inertia, per-iteration inertia history).
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if k > n:
        raise ValueError(f"k={k} exceeds sample count n={n}")
    rng = stream(seed, "kmeans")

    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total == 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centers[j] = X[idx]
        d2 = np.minimum(d2, ((X - centers[j]) ** 2).sum(axis=1))

    labels = np.zeros(n, dtype=np.int64)
    prev = None
    history: list[float] = []
    for _ in range(max_iter):
        dist = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = dist.argmin(axis=1)
        cost = dist[np.arange(n), labels]
        for j in range(k):
            if not (labels == j).any():
                # empty cluster: reseed at the farthest point (cost can only drop)
                worst = int(cost.argmax())
                centers[j] = X[worst]
                labels[worst] = j
                cost[worst] = 0.0
        history.append(float(cost.sum()))
        if prev is not None and (labels == prev).all():
            break
        prev = labels.copy()
        for j in range(k):
            centers[j] = X[labels == j].mean(axis=0)

    if return_history:
        return labels, history[-1], history
    return labels, history[-1]


def kmeans_best_of(X: np.ndarray, k: int, seed: int = 0, restarts: int = 5):
    """Lowest-inertia labels over seeded restarts (stabilizes stage scoring)."""
    best = None
    for r in range(restarts):
        labels, inertia = kmeans(X, k, seed=seed * 1000 + r)
        if best is None or inertia < best[1]:
            best = (labels, inertia)
    return best
