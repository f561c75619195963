"""Dataset loading, synthetic blob generation, and bandwidth selection."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .kernels import KernelConfig, kernel_matrix
from .rng import derive_rng

__all__ = ["Dataset", "generate_blobs", "load_dataset", "auto_sigma"]


@dataclass
class Dataset:
    """Points in insertion order, with optional ground-truth labels."""

    points: np.ndarray
    labels: np.ndarray | None = None
    name: str = "data"

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2:
            raise ValueError(f"points must be a 2-d array, got shape {self.points.shape}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if self.labels.shape[0] != self.points.shape[0]:
                raise ValueError("labels length does not match point count")

    def __len__(self) -> int:
        return self.points.shape[0]


def generate_blobs(n: int, dim: int, k: int, spread: float = 1.0, seed: int = 0,
                   order: str = "shuffled") -> Dataset:
    """Isotropic Gaussian blobs with well-separated means.

    Means sit on scaled coordinate axes so every pair is at least 10 * spread
    apart; cluster sizes are balanced to within one point.  ``order`` is
    "grouped" (cluster by cluster, the layout a one-cluster-at-a-time insertion
    stream wants), "shuffled", or "interleaved" (round robin).
    """
    if k < 1 or n < k:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    rng = derive_rng(seed, "blobs", n, dim, k)
    means = np.zeros((k, dim))
    for c in range(k):
        means[c, c % dim] = 10.0 * spread * (1.0 + c // dim)
    sizes = [n // k + (1 if c < n % k else 0) for c in range(k)]
    labels = np.repeat(np.arange(k), sizes)
    points = means[labels] + spread * rng.standard_normal((n, dim))
    if order == "grouped":
        idx = np.arange(n)
    elif order == "shuffled":
        idx = rng.permutation(n)
    elif order == "interleaved":
        idx = np.argsort(np.concatenate([np.arange(s) for s in sizes]), kind="stable")
    else:
        raise ValueError(f"unknown order {order!r}")
    return Dataset(points=points[idx], labels=labels[idx], name=f"blobs{k}")


def load_dataset(path: str | Path, label_column: int | str | None = None) -> Dataset:
    """Load a delimited numeric dataset (comma or whitespace separated).

    ``label_column`` may be a 0-based column index or "last"; that column is
    split off as integer labels.  Malformed rows raise with their row number.
    """
    path = Path(path)
    text = path.read_text()
    delim = "," if "," in text.splitlines()[0] else None
    rows: list[list[float]] = []
    if delim == ",":
        reader = csv.reader(text.splitlines())
        raw = [r for r in reader if r and any(f.strip() for f in r)]
    else:
        raw = [line.split() for line in text.splitlines() if line.strip()]
    width = None
    for i, row in enumerate(raw):
        try:
            vals = [float(f) for f in row]
        except ValueError as exc:
            raise ValueError(f"{path.name} row {i}: {exc}") from None
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise ValueError(f"{path.name} row {i}: expected {width} columns, got {len(vals)}")
        rows.append(vals)
    if not rows:
        raise ValueError(f"{path.name}: no data rows")
    data = np.asarray(rows, dtype=np.float64)
    labels = None
    if label_column is not None:
        col = data.shape[1] - 1 if label_column == "last" else int(label_column)
        if not 0 <= col < data.shape[1]:
            raise ValueError(f"label column {label_column} out of range for {data.shape[1]} columns")
        labels = data[:, col].astype(np.int64)
        data = np.delete(data, col, axis=1)
    return Dataset(points=data, labels=labels, name=path.stem)


def auto_sigma(kind: str, points: np.ndarray, target_fraction: float = 0.01,
               seed: int = 0, subsample: int = 256, degree: float = 2.0) -> float:
    """Bandwidth at which the mean exact density is ~ target_fraction * n.

    The mean density is monotone decreasing in sigma, so a bisection on
    log(sigma) converges; queries are a seeded subsample, densities are exact.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    rng = derive_rng(seed, "auto-sigma", n)
    q_idx = rng.choice(n, size=min(subsample, n), replace=False)
    queries = points[q_idx]
    target = target_fraction * n

    def mean_density(sigma: float) -> float:
        config = KernelConfig(kind=kind, sigma=sigma, degree=degree)
        return float(kernel_matrix(config, queries, points).sum(axis=1).mean())

    lo, hi = 1e-10, 1e10
    if mean_density(lo) < target or mean_density(hi) > target:
        raise ValueError("target density unreachable on this dataset")
    for _ in range(80):
        mid = float(np.sqrt(lo * hi))
        if mean_density(mid) > target:
            lo = mid
        else:
            hi = mid
        if hi / lo < 1.0 + 1e-6:
            break
    return float(np.sqrt(lo * hi))
