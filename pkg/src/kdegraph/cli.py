"""Benchmark command line: chunked insertion streams with per-chunk scoring.

``bench kde`` drives a density estimator and scores it against the exact
oracle; ``bench graph`` drives a graph builder and scores spectral clustering
against ground-truth labels.  Both write the per-iteration CSV, render the
companion figures unless told not to, and print a one-line JSON summary.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from .baselines import DynamicRS, ExactKde, StaticRebuildKde
from .datasets import Dataset, auto_sigma, generate_blobs, load_dataset
from .dynamic_graph import DynamicSimilarityGraph
from .graphs import from_dynamic, fully_connected_graph, knn_graph, save_graph
from .kde import DynamicKde
from .kernels import KernelConfig, ceil_log2
from .metrics import ari, nmi, relative_error, spectral_clustering
from .report import IterationRecord, RunReport, render_figures

_KDE_ALGORITHMS = ("dynamic", "exact", "rs", "static-rebuild")
_GRAPH_ALGORITHMS = ("dynamic", "knn", "fully-connected")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bench",
        description="chunked-insertion benchmarks for the density sketch "
                    "and the similarity graph built on it")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode, algorithms in (("kde", _KDE_ALGORITHMS), ("graph", _GRAPH_ALGORITHMS)):
        p = sub.add_parser(mode, help=f"benchmark a {mode} algorithm")
        p.add_argument("--dataset", default="blobs",
                       help="path to a delimited numeric file, or 'blobs'")
        p.add_argument("--label-column", default=None,
                       help="column holding cluster labels in a dataset file "
                            "(index or 'last')")
        p.add_argument("--n", type=int, default=2000,
                       help="points to generate for the blobs dataset")
        p.add_argument("--dim", type=int, default=10,
                       help="dimension for the blobs dataset")
        p.add_argument("--spread", type=float, default=1.0,
                       help="within-cluster deviation for the blobs dataset")
        p.add_argument("--order", default="shuffled",
                       choices=("shuffled", "grouped", "interleaved"),
                       help="insertion order for the blobs dataset")
        p.add_argument("--kernel", default="gaussian",
                       choices=("gaussian", "exponential", "t_student"))
        p.add_argument("--sigma", default="auto",
                       help="kernel scale parameter, or 'auto' to tune it")
        p.add_argument("--epsilon", type=float, default=0.5)
        p.add_argument("--chunk-size", type=int, default=500)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--algorithm", default="dynamic", choices=algorithms)
        p.add_argument("--rate", type=float, default=0.1,
                       help="sampling rate for the rs baseline")
        p.add_argument("--k-clusters", type=int, default=4,
                       help="cluster count for blobs generation and "
                            "spectral scoring")
        p.add_argument("--out", default="report.csv")
        p.add_argument("--no-figures", action="store_true",
                       help="skip rendering PNG figures next to the CSV")
        if mode == "graph":
            p.add_argument("--n-paths", type=int, default=None,
                           help="sample paths per vertex "
                                "(default 3*ceil(log2 n))")
            p.add_argument("--save-graph", default=None,
                           help="write the final graph as an edge-list file")
    return parser


def _load(args) -> Dataset:
    if args.dataset == "blobs":
        return generate_blobs(args.n, args.dim, args.k_clusters,
                              spread=args.spread, seed=args.seed,
                              order=args.order)
    label_column = args.label_column
    if label_column not in (None, "last"):
        label_column = int(label_column)
    return load_dataset(args.dataset, label_column=label_column)


def _config(args, points: np.ndarray) -> KernelConfig:
    if args.sigma == "auto":
        return KernelConfig(args.kernel, auto_sigma(args.kernel, points))
    return KernelConfig(args.kernel, float(args.sigma))


def _chunks(n: int, size: int):
    if size < 1:
        raise ValueError("chunk size must be positive")
    for lo in range(0, n, size):
        yield lo, min(lo + size, n)


def run_kde(args, dataset: Dataset, config: KernelConfig) -> RunReport:
    X = dataset.points
    oracle = ExactKde(config)
    if args.algorithm == "dynamic":
        algo = DynamicKde(config, epsilon=args.epsilon, seed=args.seed)
    elif args.algorithm == "exact":
        algo = ExactKde(config)
    elif args.algorithm == "rs":
        algo = DynamicRS(config, rate=args.rate, seed=args.seed)
    else:
        algo = StaticRebuildKde(config, epsilon=args.epsilon, seed=args.seed)

    report = RunReport(algorithm=args.algorithm, seed=args.seed)
    for iteration, (lo, hi) in enumerate(_chunks(X.shape[0], args.chunk_size)):
        t0 = time.perf_counter()
        if args.algorithm == "static-rebuild":
            # the rebuild baseline reconstructs once per chunk
            algo.add_data_points(X[lo:hi])
        else:
            for i in range(lo, hi):
                algo.add_data_point(X[i])
        elapsed = time.perf_counter() - t0
        # the query set grows with the data: every inserted point queries
        for i in range(lo, hi):
            oracle.add_data_point(X[i])
        for qid in range(lo, hi):
            oracle.add_query_point(qid, X[qid])
            if args.algorithm != "rs":
                algo.add_query_point(qid, X[qid])
        qids = list(range(hi))
        exact = np.array([oracle.query_point(q) for q in qids])
        if args.algorithm == "rs":
            estimates = algo.query_many(X[:hi])
        else:
            estimates = np.array([algo.query_point(q) for q in qids])
        report.append(IterationRecord(
            iteration=iteration, n_current=hi, wall_time_update=elapsed,
            relative_error=relative_error(estimates, exact)))
    return report


def run_graph(args, dataset: Dataset, config: KernelConfig) -> RunReport:
    X = dataset.points
    if dataset.labels is None:
        raise ValueError("graph mode needs ground-truth labels "
                         "(blobs, or a labelled dataset file)")
    n = X.shape[0]
    k = args.k_clusters
    n_paths = args.n_paths or 3 * max(1, ceil_log2(max(2.0, float(n))))

    dynamic = None
    report = RunReport(algorithm=args.algorithm, seed=args.seed)
    for iteration, (lo, hi) in enumerate(_chunks(n, args.chunk_size)):
        t0 = time.perf_counter()
        if args.algorithm == "dynamic":
            if dynamic is None:
                dynamic = DynamicSimilarityGraph(
                    config, X[:hi], epsilon=args.epsilon, seed=args.seed,
                    n_paths=n_paths)
            else:
                for i in range(lo, hi):
                    dynamic.update_graph(X[i])
            snapshot = from_dynamic(dynamic)
        elif args.algorithm == "knn":
            snapshot = knn_graph(config, X[:hi], k=min(20, hi - 1))
        else:
            snapshot = fully_connected_graph(config, X[:hi])
        elapsed = time.perf_counter() - t0

        part = spectral_clustering(snapshot, k, seed=args.seed)
        truth = dataset.labels[:hi]
        report.append(IterationRecord(
            iteration=iteration, n_current=hi, wall_time_update=elapsed,
            nmi=nmi(part.labels, truth), ari=ari(part.labels, truth),
            edge_count=snapshot.edge_count))
    if args.save_graph:
        save_graph(snapshot, args.save_graph)
    return report


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    dataset = _load(args)
    config = _config(args, dataset.points)
    if args.mode == "kde":
        report = run_kde(args, dataset, config)
    else:
        report = run_graph(args, dataset, config)
    report.to_csv(args.out)
    if not args.no_figures:
        render_figures(report, args.out)
    print(report.summary())
    return 0


if __name__ == "__main__":
    sys.exit(main())
