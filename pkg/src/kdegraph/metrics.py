"""Clustering and spectral quality measures over EdgeGraph instances.

Label agreement scores are computed from the contingency table directly so
they carry no library dependency into the acceptance checks; the spectral
path uses a dense symmetric eigensolver, which keeps results deterministic
up to the documented cap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .graphs import DENSE_CAP, EdgeGraph

__all__ = ["relative_error", "nmi", "ari", "conductance", "lambda_k",
           "spectral_clustering", "SpectralPartition"]


def relative_error(estimates, exact, return_excluded: bool = False):
    """Mean |(estimate - exact) / exact| over queries with exact > 0.

    Queries whose exact value is zero cannot be scored and are dropped;
    ``return_excluded`` also returns how many were.
    """
    est = np.asarray(estimates, dtype=np.float64)
    ext = np.asarray(exact, dtype=np.float64)
    if est.shape != ext.shape:
        raise ValueError(f"length mismatch: {est.shape} vs {ext.shape}")
    mask = ext > 0.0
    excluded = int((~mask).sum())
    if not mask.any():
        raise ValueError("no query has a positive exact value")
    err = float(np.mean(np.abs((est[mask] - ext[mask]) / ext[mask])))
    return (err, excluded) if return_excluded else err


def _contingency(labels_a, labels_b) -> np.ndarray:
    a = np.asarray(labels_a).ravel()
    b = np.asarray(labels_b).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("empty labelings")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def nmi(labels_a, labels_b) -> float:
    """Normalised mutual information with arithmetic-mean normalisation."""
    table = _contingency(labels_a, labels_b)
    n = table.sum()
    pa = table.sum(axis=1) / n
    pb = table.sum(axis=0) / n
    mutual = 0.0
    for i in range(table.shape[0]):
        for j in range(table.shape[1]):
            if table[i, j]:
                pij = table[i, j] / n
                mutual += pij * np.log(pij / (pa[i] * pb[j]))
    ha = -float(np.sum(pa * np.log(pa, where=pa > 0, out=np.zeros_like(pa))))
    hb = -float(np.sum(pb * np.log(pb, where=pb > 0, out=np.zeros_like(pb))))
    denom = 0.5 * (ha + hb)
    if denom == 0.0:
        # both labelings constant: identical partitions by definition
        return 1.0
    return float(min(1.0, max(0.0, mutual / denom)))


def ari(labels_a, labels_b) -> float:
    """Adjusted Rand index from the pair-counting contingency sums."""
    table = _contingency(labels_a, labels_b)
    n = table.sum()

    def choose2(x):
        return x * (x - 1) / 2.0

    sum_ij = float(choose2(table).sum())
    sum_a = float(choose2(table.sum(axis=1)).sum())
    sum_b = float(choose2(table.sum(axis=0)).sum())
    total = choose2(float(n))
    expected = sum_a * sum_b / total if total else 0.0
    top = sum_ij - expected
    bottom = 0.5 * (sum_a + sum_b) - expected
    if bottom == 0.0:
        return 1.0
    return top / bottom


def conductance(graph: EdgeGraph, subset) -> float:
    """Cut weight over the smaller side's volume; 1.0 on empty or full sets."""
    S = {int(v) for v in subset}
    unknown = S - set(graph.vertices)
    if unknown:
        raise KeyError(f"subset references unknown vertices {sorted(unknown)}")
    if not S or len(S) == len(graph.vertices):
        return 1.0
    cut = vol_s = vol_rest = 0.0
    for (a, b), w in graph.edges.items():
        ina, inb = a in S, b in S
        if ina != inb:
            cut += w
            vol_s += w
            vol_rest += w
        elif ina:
            vol_s += 2.0 * w
        else:
            vol_rest += 2.0 * w
    denom = min(vol_s, vol_rest)
    if denom == 0.0:
        return 1.0
    return cut / denom


def _normalized_laplacian(graph: EdgeGraph) -> np.ndarray:
    A = graph.adjacency()
    deg = A.sum(axis=1)
    with np.errstate(divide="ignore"):
        d_isqrt = np.where(deg > 0.0, 1.0 / np.sqrt(deg), 0.0)
    L = -A * d_isqrt[:, None] * d_isqrt[None, :]
    np.fill_diagonal(L, np.where(deg > 0.0, 1.0, 0.0))
    return L


def lambda_k(graph: EdgeGraph, k: int) -> float:
    """k-th smallest eigenvalue (1-indexed) of the normalised Laplacian."""
    if not 1 <= k <= graph.size:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={graph.size}")
    L = _normalized_laplacian(graph)
    vals = scipy.linalg.eigh(L, eigvals_only=True,
                             subset_by_index=(0, k - 1))
    return float(vals[k - 1])


@dataclass
class SpectralPartition:
    k: int
    labels: np.ndarray
    eigenvalues: np.ndarray = field(repr=False)


def spectral_clustering(graph: EdgeGraph, k: int, seed: int = 0) -> SpectralPartition:
    """Normalised spectral clustering with seeded k-means.

    Bottom-k eigenvectors of the normalised Laplacian, rows normalised to
    unit length, then k-means (k-means++ init, 20 restarts, 100 iterations).
    Vertices with no edges embed at the origin, so they fall into a single
    cluster of their own rather than perturbing the others.
    """
    from sklearn.cluster import KMeans

    n = graph.size
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    L = _normalized_laplacian(graph)
    vals, vecs = scipy.linalg.eigh(L, subset_by_index=(0, min(k, n - 1)))
    emb = vecs[:, :k]
    norms = np.linalg.norm(emb, axis=1)
    emb = np.where(norms[:, None] > 0.0, emb / np.maximum(norms, 1e-300)[:, None], 0.0)
    km = KMeans(n_clusters=k, n_init=20, max_iter=100, random_state=seed)
    labels = km.fit_predict(emb)
    return SpectralPartition(k=k, labels=np.asarray(labels, dtype=np.int64),
                             eigenvalues=np.asarray(vals, dtype=np.float64))
