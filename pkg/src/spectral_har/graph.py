"""Radius-graph construction and the combinatorial Laplacian.

Vertices are the points of a frame; an undirected edge joins two vertices
when their Euclidean distance is strictly below the radius. Construction
uses a uniform spatial hash with cell size equal to the radius, so only the
27-cell neighborhood of each point is examined; the result is exact, not
approximate. Distances are compared in the squared domain in double
precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components as _sparse_components

from .errors import EmptyFrameError
from .ingest import FrameCloud

DEFAULT_RADIUS_M = 0.15

# Lexicographically positive half of the 26-cell neighborhood: each
# unordered cell pair is visited exactly once.
_HALF_NEIGHBORHOOD = [
    (dx, dy, dz)
    for dx in (-1, 0, 1)
    for dy in (-1, 0, 1)
    for dz in (-1, 0, 1)
    if (dx, dy, dz) > (0, 0, 0)
]


@dataclass
class ProximityGraph:
    """Undirected radius graph of one frame (or one body part).

    ``edges`` is an (E, 2) int64 array with i < j per row, sorted
    lexicographically; ``degrees`` counts incident edges per vertex.
    """

    n_vertices: int
    edges: np.ndarray
    degrees: np.ndarray
    radius_m: float

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]


@dataclass
class LaplacianMatrix:
    """Combinatorial Laplacian L = D - A of a proximity graph."""

    dimension: int
    csr: sp.csr_matrix

    def toarray(self) -> np.ndarray:
        return self.csr.toarray()


def build_graph(frame: FrameCloud, radius_m: float = DEFAULT_RADIUS_M) -> ProximityGraph:
    """Build the radius graph of a frame: edge iff squared distance < radius^2."""
    if radius_m <= 0:
        raise ValueError(f"radius_m must be > 0, got {radius_m}")
    pts = frame.points
    n = pts.shape[0]
    if n == 0:
        raise EmptyFrameError(
            f"frame {frame.frame_index} is empty; cannot build a graph"
        )
    r2 = radius_m * radius_m
    cells = np.floor(pts / radius_m).astype(np.int64)

    order = np.lexsort((cells[:, 2], cells[:, 1], cells[:, 0]))
    sorted_cells = cells[order]
    if n > 1:
        change = np.any(np.diff(sorted_cells, axis=0) != 0, axis=1)
        starts = np.concatenate(([0], np.nonzero(change)[0] + 1))
    else:
        starts = np.array([0])
    ends = np.concatenate((starts[1:], [n]))
    buckets: dict[tuple[int, int, int], np.ndarray] = {}
    for s, e in zip(starts, ends):
        buckets[tuple(sorted_cells[s])] = order[s:e]

    edge_i: list[np.ndarray] = []
    edge_j: list[np.ndarray] = []
    for key, idx in buckets.items():
        p_here = pts[idx]
        m = idx.shape[0]
        if m > 1:
            a, b = np.triu_indices(m, k=1)
            d2 = np.sum((p_here[a] - p_here[b]) ** 2, axis=1)
            hit = d2 < r2
            if hit.any():
                edge_i.append(idx[a[hit]])
                edge_j.append(idx[b[hit]])
        for off in _HALF_NEIGHBORHOOD:
            other = buckets.get((key[0] + off[0], key[1] + off[1], key[2] + off[2]))
            if other is None:
                continue
            diff = p_here[:, None, :] - pts[other][None, :, :]
            d2 = np.einsum("ijk,ijk->ij", diff, diff)
            ai, bj = np.nonzero(d2 < r2)
            if ai.size:
                edge_i.append(idx[ai])
                edge_j.append(other[bj])

    if edge_i:
        ei = np.concatenate(edge_i)
        ej = np.concatenate(edge_j)
        edges = np.column_stack((np.minimum(ei, ej), np.maximum(ei, ej)))
        edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]
    else:
        edges = np.empty((0, 2), dtype=np.int64)
    degrees = np.bincount(edges.ravel(), minlength=n).astype(np.int64)
    return ProximityGraph(n_vertices=n, edges=edges, degrees=degrees, radius_m=radius_m)


def laplacian(graph: ProximityGraph) -> LaplacianMatrix:
    """L[i][i] = deg(i), L[i][j] = -1 iff (i, j) is an edge."""
    n = graph.n_vertices
    e = graph.edges
    rows = np.concatenate((e[:, 0], e[:, 1], np.arange(n)))
    cols = np.concatenate((e[:, 1], e[:, 0], np.arange(n)))
    vals = np.concatenate(
        (
            np.full(e.shape[0] * 2, -1.0),
            graph.degrees.astype(np.float64),
        )
    )
    csr = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return LaplacianMatrix(dimension=n, csr=csr)


def adjacency(graph: ProximityGraph) -> sp.csr_matrix:
    """Symmetric 0/1 adjacency matrix of the graph."""
    n = graph.n_vertices
    e = graph.edges
    rows = np.concatenate((e[:, 0], e[:, 1]))
    cols = np.concatenate((e[:, 1], e[:, 0]))
    return sp.csr_matrix(
        (np.ones(rows.shape[0]), (rows, cols)), shape=(n, n)
    )


def connected_components(graph: ProximityGraph) -> int:
    """Number of connected components (isolated vertices each count as one)."""
    if graph.n_vertices == 0:
        return 0
    n_comp, _ = _sparse_components(adjacency(graph), directed=False)
    return int(n_comp)


def write_edge_list(graph: ProximityGraph, path: str | Path) -> None:
    """Debug dump: one "i j" line per edge."""
    lines = [f"{i} {j}" for i, j in graph.edges]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
