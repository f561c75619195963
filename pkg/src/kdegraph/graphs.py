"""Static weighted graphs: containers, reference constructions, exchange format.

The dynamic structure produces snapshots of this form; the kNN and fully
connected builders are the comparison graphs.  Files carry one edge per line
as ``id_i id_j weight`` with ids sorted within and across lines, preceded by
a metadata header line so a graph round-trips with its provenance.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .kernels import KernelConfig, kernel_matrix

__all__ = ["EdgeGraph", "knn_graph", "fully_connected_graph", "from_dynamic",
           "save_graph", "load_graph"]

DENSE_CAP = 4096


class EdgeGraph:
    """Undirected weighted graph over integer vertex ids.

    Edges live in one dict keyed by (min id, max id); vertices with no edges
    still count.  ``meta`` carries construction parameters (n, L, epsilon,
    seed) for the file header and is otherwise inert.
    """

    def __init__(self, vertex_ids, meta: dict | None = None):
        self.vertices = sorted(int(v) for v in vertex_ids)
        if len(set(self.vertices)) != len(self.vertices):
            raise ValueError("duplicate vertex ids")
        self._vset = set(self.vertices)
        self.edges: dict[tuple[int, int], float] = {}
        self.meta = dict(meta or {})
        self.meta.setdefault("n", len(self.vertices))

    @property
    def size(self) -> int:
        return len(self.vertices)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def add_edge(self, a: int, b: int, weight: float) -> None:
        a, b = int(a), int(b)
        if a == b:
            raise ValueError(f"self loop at {a}")
        if a not in self._vset or b not in self._vset:
            raise KeyError(f"edge ({a}, {b}) references unknown vertex")
        if weight < 0.0:
            raise ValueError(f"negative weight {weight}")
        self.edges[(a, b) if a < b else (b, a)] = float(weight)

    def weight(self, a: int, b: int) -> float:
        return self.edges.get((a, b) if a < b else (b, a), 0.0)

    def degree(self, v: int) -> float:
        return sum(w for (a, b), w in self.edges.items() if a == v or b == v)

    def adjacency(self) -> np.ndarray:
        """Dense symmetric weight matrix in sorted-vertex order."""
        if self.size > DENSE_CAP:
            raise ValueError(f"n={self.size} exceeds dense cap {DENSE_CAP}")
        index = {v: i for i, v in enumerate(self.vertices)}
        A = np.zeros((self.size, self.size))
        for (a, b), w in self.edges.items():
            i, j = index[a], index[b]
            A[i, j] = A[j, i] = w
        return A

    def edge_list(self) -> list[tuple[int, int, float]]:
        return [(a, b, self.edges[(a, b)]) for a, b in sorted(self.edges)]


def knn_graph(config: KernelConfig, points: np.ndarray, k: int = 20,
              vertex_ids=None) -> EdgeGraph:
    """Brute-force k-nearest-neighbour graph, undirected union, kernel weights."""
    X = np.asarray(points, dtype=np.float64)
    n = X.shape[0]
    if not 0 < k < n:
        raise ValueError(f"need 0 < k < n, got k={k}, n={n}")
    ids = list(range(n)) if vertex_ids is None else [int(v) for v in vertex_ids]
    g = EdgeGraph(ids, meta={"kind": "knn", "k": k})
    W = kernel_matrix(config, X, X)
    d2 = (np.square(X).sum(axis=1)[:, None] + np.square(X).sum(axis=1)[None, :]
          - 2.0 * X @ X.T)
    np.fill_diagonal(d2, np.inf)
    for i in range(n):
        for j in np.argpartition(d2[i], k)[:k]:
            g.add_edge(ids[i], ids[int(j)], float(W[i, int(j)]))
    return g


def fully_connected_graph(config: KernelConfig, points: np.ndarray,
                          vertex_ids=None) -> EdgeGraph:
    """All pairs joined with their kernel weight; quadratic, capped."""
    X = np.asarray(points, dtype=np.float64)
    n = X.shape[0]
    if n > DENSE_CAP:
        raise ValueError(f"n={n} exceeds dense cap {DENSE_CAP}")
    ids = list(range(n)) if vertex_ids is None else [int(v) for v in vertex_ids]
    g = EdgeGraph(ids, meta={"kind": "fully-connected"})
    W = kernel_matrix(config, X, X)
    for i in range(n):
        for j in range(i + 1, n):
            g.add_edge(ids[i], ids[j], float(W[i, j]))
    return g


def from_dynamic(graph) -> EdgeGraph:
    """Snapshot a DynamicSimilarityGraph's current edges."""
    g = EdgeGraph(graph.vertex_ids(),
                  meta={"kind": "dynamic", "L": graph.n_paths,
                        "epsilon": graph.epsilon, "seed": graph.seed})
    for a, b, w in graph.edge_list():
        g.add_edge(a, b, w)
    return g


def save_graph(graph: EdgeGraph, path) -> None:
    """Write the header line and the sorted ``id_i id_j weight`` edge lines."""
    path = Path(path)
    meta = dict(graph.meta)
    meta["n"] = graph.size
    with path.open("w", encoding="utf-8") as fh:
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        fh.write(" ".join(str(v) for v in graph.vertices) + "\n")
        for a, b, w in graph.edge_list():
            fh.write(f"{a} {b} {w:.16e}\n")


def load_graph(path) -> EdgeGraph:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError(f"{path}: missing metadata header")
    meta = json.loads(lines[0][1:].strip())
    if len(lines) < 2:
        raise ValueError(f"{path}: missing vertex line")
    vertices = [int(tok) for tok in lines[1].split()]
    g = EdgeGraph(vertices, meta=meta)
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 'id_i id_j weight'")
        g.add_edge(int(parts[0]), int(parts[1]), float(parts[2]))
    return g
