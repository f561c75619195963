"""Dynamic kernel density estimation and similarity graphs under insertion.

The package keeps a multiplicative-error density sketch current while points
arrive one at a time, builds a sampled similarity graph on top of it, and
ships the benchmark harness that scores both against exact baselines.
"""

from .baselines import DynamicRS, ExactKde, StaticRebuildKde, exact_kde
from .datasets import Dataset, auto_sigma, generate_blobs, load_dataset
from .dynamic_graph import DynamicSimilarityGraph
from .graphs import (EdgeGraph, from_dynamic, fully_connected_graph,
                     knn_graph, load_graph, save_graph)
from .kde import DynamicKde
from .kernels import KernelConfig, eval_kernel, kernel_matrix, kernel_row
from .metrics import (SpectralPartition, ari, conductance, lambda_k, nmi,
                      relative_error, spectral_clustering)
from .report import IterationRecord, RunReport, render_figures

__all__ = [
    "Dataset",
    "DynamicKde",
    "DynamicRS",
    "DynamicSimilarityGraph",
    "EdgeGraph",
    "ExactKde",
    "IterationRecord",
    "KernelConfig",
    "RunReport",
    "SpectralPartition",
    "StaticRebuildKde",
    "ari",
    "auto_sigma",
    "conductance",
    "eval_kernel",
    "exact_kde",
    "from_dynamic",
    "fully_connected_graph",
    "generate_blobs",
    "kernel_matrix",
    "kernel_row",
    "knn_graph",
    "lambda_k",
    "load_dataset",
    "load_graph",
    "nmi",
    "relative_error",
    "render_figures",
    "save_graph",
    "spectral_clustering",
]
__version__ = "0.1.0"
