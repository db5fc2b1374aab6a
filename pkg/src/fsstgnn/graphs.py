"""Graph objects consumed by the GNN: filtered (inverse) correlation
graphs plus the ones/zeros/identity benchmark graphs.

A FilteredGraph pairs an edge-weight matrix with a boolean mask. The
mask diagonal is always true so every node attends to itself, which
keeps attention softmaxes well-defined even on the fully disconnected
benchmarks. Negative weights (anti-correlations, negative partial
correlations) pass through unchanged and count as edges.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .filtering import FilterResult
from .linalg import write_matrix

GRAPH_KINDS = ("correlation", "inverse-correlation", "ones", "zeros", "identity")
BENCHMARK_KINDS = ("ones", "zeros", "identity")


@dataclass(frozen=True)
class FilteredGraph:
    """Weighted graph over series nodes with an explicit edge mask."""

    n: int
    weights: np.ndarray
    mask: np.ndarray
    kind: str

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if weights.shape != (self.n, self.n) or mask.shape != (self.n, self.n):
            raise ShapeError(f"graph arrays must be {(self.n, self.n)}, got {weights.shape} and {mask.shape}")
        if np.max(np.abs(weights - weights.T), initial=0.0) > 1e-12:
            raise ShapeError("graph weights must be symmetric")
        if not np.array_equal(mask, mask.T):
            raise ShapeError("graph mask must be symmetric")
        if not np.all(np.diag(mask)):
            raise ShapeError("graph mask diagonal must be true (self-loops are retained)")
        off_violation = (~mask) & (weights != 0.0)
        np.fill_diagonal(off_violation, False)
        if np.any(off_violation):
            raise ShapeError("unmasked off-diagonal entries must have zero weight")
        if self.kind not in GRAPH_KINDS:
            raise ParameterError(f"unknown graph kind {self.kind!r}; expected one of {GRAPH_KINDS}")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "mask", mask)

    def edge_list(self) -> list:
        """Off-diagonal undirected edges as (i, j, weight) with i < j."""
        edges = []
        for i in range(self.n):
            for j in range(i + 1, self.n):
                if self.mask[i, j]:
                    edges.append((i, j, float(self.weights[i, j])))
        return edges

    def n_offdiag_edges(self) -> int:
        """Count of masked off-diagonal entries (directed count)."""
        mask = self.mask.copy()
        np.fill_diagonal(mask, False)
        return int(mask.sum())


def from_filter_result(result: FilterResult, kind: str) -> FilteredGraph:
    """Turn a filter output into the graph of the requested kind.

    ``correlation`` uses the dense filtered correlation (diagonal 1);
    ``inverse-correlation`` uses the precision entries, whose zeros
    become missing edges.
    """
    if kind == "correlation":
        weights = result.correlation.entries.copy()
    elif kind == "inverse-correlation":
        weights = result.precision.entries.copy()
    else:
        raise ParameterError(f"filter results map to 'correlation' or 'inverse-correlation', not {kind!r}")
    mask = weights != 0.0
    np.fill_diagonal(mask, True)
    return FilteredGraph(n=weights.shape[0], weights=weights, mask=mask, kind=kind)


def benchmark_graph(n: int, kind: str) -> FilteredGraph:
    """The ones / zeros / identity reference graphs.

    Zeros keeps only self-loop mask entries (with zero weight everywhere)
    so attention stays well-defined while convolution aggregates nothing.
    """
    if n < 1:
        raise ParameterError(f"benchmark graph needs n >= 1, got {n}")
    if kind == "ones":
        weights = np.ones((n, n))
        mask = np.ones((n, n), dtype=bool)
    elif kind == "zeros":
        weights = np.zeros((n, n))
        mask = np.eye(n, dtype=bool)
    elif kind == "identity":
        weights = np.eye(n)
        mask = np.eye(n, dtype=bool)
    else:
        raise ParameterError(f"unknown benchmark kind {kind!r}; expected one of {BENCHMARK_KINDS}")
    return FilteredGraph(n=n, weights=weights, mask=mask, kind=kind)


def permute_graph(graph: FilteredGraph, perm) -> FilteredGraph:
    """Relabel nodes by ``perm`` (row and column reordering)."""
    perm = np.asarray(perm, dtype=int)
    if sorted(perm.tolist()) != list(range(graph.n)):
        raise ParameterError("perm must be a permutation of node indices")
    idx = np.ix_(perm, perm)
    return FilteredGraph(n=graph.n, weights=graph.weights[idx], mask=graph.mask[idx], kind=graph.kind)


def write_graph(path, graph: FilteredGraph) -> None:
    """Serialize edge weights in the plain-text matrix fixture format."""
    write_matrix(path, graph.weights)


def write_edge_list(path, graph: FilteredGraph) -> None:
    """Debug export: one `i j weight` line per undirected edge."""
    with open(path, "w", encoding="utf-8") as handle:
        for i, j, weight in graph.edge_list():
            handle.write(f"{i} {j} {repr(weight)}\n")
