"""Hierarchical Risk Parity: correlation clustering, quasi-diagonal order, recursive bisection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, ZeroVariance
from .market_data import ledoit_wolf


@dataclass(frozen=True)
class Dendrogram:
    """Agglomeration history in the usual linkage layout.

    ``merges[m] = (a, b, distance)`` joins clusters ``a < b`` into cluster
    ``n_leaves + m``; leaves are ``0..n_leaves-1``.
    """

    n_leaves: int
    merges: tuple[tuple[int, int, float], ...]


def corr_distance(cov) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    var = np.diag(cov)
    if np.any(var <= 0):
        raise ZeroVariance(f"zero-variance assets at {np.flatnonzero(var <= 0).tolist()}")
    sd = np.sqrt(var)
    rho = np.clip(cov / np.outer(sd, sd), -1.0, 1.0)
    d = np.sqrt(np.clip(0.5 * (1.0 - rho), 0.0, None))
    d = (d + d.T) / 2
    np.fill_diagonal(d, 0.0)
    return d


def single_linkage(dist) -> Dendrogram:
    """Naive single-linkage agglomeration; ties go to the smallest ``(a, b)`` cluster-id pair."""
    dist = np.asarray(dist, dtype=float)
    n = dist.shape[0]
    active = {i: [i] for i in range(n)}
    merges = []
    for m in range(n - 1):
        best = None
        ids = sorted(active)
        for ia, a in enumerate(ids):
            for b in ids[ia + 1 :]:
                d = dist[np.ix_(active[a], active[b])].min()
                if best is None or d < best[0]:
                    best = (d, a, b)
        d, a, b = best
        merges.append((a, b, float(d)))
        active[n + m] = active.pop(a) + active.pop(b)
    return Dendrogram(n, tuple(merges))


def quasi_diagonalize(tree: Dendrogram) -> list[int]:
    """Leaf order from expanding the merge tree, left child first."""
    n = tree.n_leaves
    if n == 1:
        return [0]
    order = [n + len(tree.merges) - 1]
    while any(c >= n for c in order):
        expanded = []
        for c in order:
            if c >= n:
                a, b, _ = tree.merges[c - n]
                expanded.extend((a, b))
            else:
                expanded.append(c)
        order = expanded
    return order


def _cluster_variance(cov: np.ndarray, items: list[int]) -> float:
    sub = cov[np.ix_(items, items)]
    var = np.diag(sub)
    if np.any(var <= 0):
        return 0.0
    w = (1.0 / var) / np.sum(1.0 / var)
    return float(w @ sub @ w)


def recursive_bisection(cov, order) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    w = np.ones(cov.shape[0])
    clusters = [list(order)]
    while clusters:
        clusters = [c[s:e] for c in clusters for s, e in ((0, len(c) // 2), (len(c) // 2, len(c))) if len(c) > 1]
        for left, right in zip(clusters[::2], clusters[1::2]):
            v_left, v_right = _cluster_variance(cov, left), _cluster_variance(cov, right)
            total = v_left + v_right
            alpha = 0.5 if total <= 0 else 1.0 - v_left / total
            w[left] *= alpha
            w[right] *= 1.0 - alpha
    return w


def hrp_weights(returns, *, shrinkage: bool = False) -> np.ndarray:
    """HRP weights from a ``(days, assets)`` return matrix.

    Uses the unbiased sample covariance by default; ``shrinkage=True``
    switches to the Ledoit-Wolf estimate.
    """
    r = np.asarray(returns, dtype=float)
    if r.ndim != 2 or r.shape[0] < 2:
        raise DegenerateInput("HRP needs a 2-D return matrix with at least 2 observations")
    if r.shape[1] == 1:
        return np.ones(1)
    cov = ledoit_wolf(r) if shrinkage else np.cov(r, rowvar=False)
    for_dist = cov.copy()
    flat = np.flatnonzero(np.diag(cov) <= 0)
    # constant assets cluster as uncorrelated with everything
    for_dist[flat, :] = 0.0
    for_dist[:, flat] = 0.0
    for_dist[flat, flat] = 1.0
    order = quasi_diagonalize(single_linkage(corr_distance(for_dist)))
    return recursive_bisection(cov, order)
