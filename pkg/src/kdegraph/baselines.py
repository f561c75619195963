"""Reference estimators: exact densities, random sampling, periodic rebuild."""

from __future__ import annotations

import numpy as np

from .kernels import KernelConfig, kernel_matrix, kernel_row
from .rng import derive_rng

__all__ = ["exact_kde", "ExactKde", "DynamicRS", "StaticRebuildKde"]


def exact_kde(config: KernelConfig, queries: np.ndarray, data: np.ndarray) -> np.ndarray:
    """Exact densities sum_x k(q, x) for each query row; the ground truth.

    Accepts a single query vector or a matrix of query rows, and returns a
    scalar array that mirrors the input's leading shape.
    """
    queries = np.asarray(queries, dtype=np.float64)
    data = np.asarray(data, dtype=np.float64)
    single = queries.ndim == 1
    q = queries[None, :] if single else queries
    if data.size == 0:
        out = np.zeros(q.shape[0])
    else:
        out = kernel_matrix(config, q, data).sum(axis=1)
    return out[0] if single else out


class ExactKde:
    """Incrementally maintained exact densities for a fixed query set.

    Densities are additive over data points, so an insertion only needs one
    kernel row against the registered queries.  Used as the oracle for error
    measurement; cost is Theta(|Q|) per update and Theta(n) per added query.
    """

    def __init__(self, config: KernelConfig, data: np.ndarray | None = None):
        self.config = config
        self._data: list[np.ndarray] = []
        self._queries: dict[int, np.ndarray] = {}
        self._density: dict[int, float] = {}
        if data is not None:
            for row in np.asarray(data, dtype=np.float64):
                self._data.append(row.copy())

    @property
    def size(self) -> int:
        return len(self._data)

    def add_data_point(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=np.float64)
        self._data.append(x.copy())
        for qid, q in self._queries.items():
            self._density[qid] += float(kernel_row(self.config, x, q[None, :])[0])

    def add_query_point(self, qid: int, q: np.ndarray) -> None:
        if qid in self._queries:
            raise KeyError(f"query id {qid} already registered")
        q = np.asarray(q, dtype=np.float64).copy()
        self._queries[qid] = q
        self._density[qid] = float(exact_kde(self.config, q, self.points()))

    def delete_query_point(self, qid: int) -> None:
        del self._queries[qid]
        del self._density[qid]

    def query_point(self, qid: int) -> float:
        return self._density[qid]

    def points(self) -> np.ndarray:
        if not self._data:
            return np.zeros((0, 0))
        return np.vstack(self._data)


class DynamicRS:
    """Uniform random-sampling density estimator.

    Keeps each inserted point independently with probability ``rate`` and
    scales kernel sums by 1/rate.  Unbiased, cheap, and high variance in
    low-density regions; the natural weak baseline.
    """

    def __init__(self, config: KernelConfig, rate: float = 0.1, seed: int = 0,
                 data: np.ndarray | None = None):
        if not 0.0 < rate <= 1.0:
            raise ValueError(f"rate must be in (0, 1], got {rate}")
        self.config = config
        self.rate = rate
        self.seed = seed
        self._count = 0
        self._sample: list[np.ndarray] = []
        self._rng = derive_rng(seed, "rs")
        if data is not None:
            for row in np.asarray(data, dtype=np.float64):
                self.add_data_point(row)

    @property
    def size(self) -> int:
        return self._count

    def add_data_point(self, x: np.ndarray) -> None:
        self._count += 1
        if self._rng.random() < self.rate:
            self._sample.append(np.asarray(x, dtype=np.float64).copy())

    def query(self, q: np.ndarray) -> float:
        if not self._sample:
            return 0.0
        rows = np.vstack(self._sample)
        return float(exact_kde(self.config, np.asarray(q, dtype=np.float64), rows)) / self.rate

    def query_many(self, queries: np.ndarray) -> np.ndarray:
        queries = np.asarray(queries, dtype=np.float64)
        if not self._sample:
            return np.zeros(queries.shape[0])
        rows = np.vstack(self._sample)
        return exact_kde(self.config, queries, rows) / self.rate


class StaticRebuildKde:
    """Sketch-based estimator rebuilt from scratch on every insertion.

    Same estimator as the dynamic structure, but with no incremental update
    path: ``add_data_point`` reconstructs over the full accumulated dataset.
    Serves as the update-time baseline that the dynamic structure must beat.
    """

    def __init__(self, config: KernelConfig, epsilon: float = 0.5, seed: int = 0,
                 data: np.ndarray | None = None, **kde_kwargs):
        self.config = config
        self.epsilon = epsilon
        self.seed = seed
        self.kde_kwargs = kde_kwargs
        self._rows: list[np.ndarray] = []
        self._queries: dict[int, np.ndarray] = {}
        self._kde = None
        if data is not None:
            self._rows = [row.copy() for row in np.asarray(data, dtype=np.float64)]
            self._rebuild()

    @property
    def size(self) -> int:
        return len(self._rows)

    def _rebuild(self) -> None:
        from .kde import DynamicKde

        self._kde = DynamicKde(self.config, epsilon=self.epsilon, seed=self.seed,
                               data=np.vstack(self._rows), **self.kde_kwargs)
        if self._queries:
            ids = sorted(self._queries)
            self._kde.add_query_points(ids, np.vstack([self._queries[i] for i in ids]))

    def add_data_point(self, x: np.ndarray) -> None:
        self._rows.append(np.asarray(x, dtype=np.float64).copy())
        self._rebuild()

    def add_data_points(self, rows: np.ndarray) -> None:
        """Append a whole chunk, then reconstruct once."""
        for row in np.asarray(rows, dtype=np.float64):
            self._rows.append(row.copy())
        self._rebuild()

    def add_query_point(self, qid: int, q: np.ndarray) -> None:
        if qid in self._queries:
            raise KeyError(f"query id {qid} already registered")
        self._queries[qid] = np.asarray(q, dtype=np.float64).copy()
        if self._kde is not None:
            self._kde.add_query_points([qid], self._queries[qid][None, :])

    def query_point(self, qid: int) -> float:
        if self._kde is None:
            raise RuntimeError("no data inserted yet")
        return self._kde.query_point(qid)
