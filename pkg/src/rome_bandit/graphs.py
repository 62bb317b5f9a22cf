"""Cohesion graphs and block-diagonal penalty matrices.

Vertices are study units (users or time points); an edge says the two
units' differential-reward coefficients should be shrunk toward each
other. The graph Laplacian L turns that into the quadratic penalty

    sum_{(i,j) in E} ||theta_i - theta_j||^2  =  tr(Theta' L Theta),

and the per-block prior precision used by the pooled estimators is

    ridge_weight * I  +  cohesion_weight * (L kron I_d).

Contents: CohesionGraph, cohesion_penalty, ridge_block, cohesion_block,
PenaltyMatrix, build_penalty_matrix, knn_graph, chain_graph,
load_edge_list.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

Edge = tuple[int, int]


class CohesionGraph:
    """Undirected simple graph on vertices 0..num_vertices-1.

    Edges are stored canonically as (lo, hi) pairs, deduplicated and
    sorted. Self loops are rejected.
    """

    def __init__(self, num_vertices: int, edges: Iterable[Edge] = ()):
        if num_vertices < 0:
            raise ValueError("num_vertices must be nonnegative")
        canonical = set()
        for a, b in edges:
            a, b = int(a), int(b)
            if a == b:
                raise ValueError(f"self loop ({a}, {b}) is not allowed")
            lo, hi = (a, b) if a < b else (b, a)
            if lo < 0 or hi >= num_vertices:
                raise ValueError(f"edge ({a}, {b}) out of range for {num_vertices} vertices")
            canonical.add((lo, hi))
        self.num_vertices = num_vertices
        self.edges: tuple[Edge, ...] = tuple(sorted(canonical))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def incidence(self) -> sp.csc_matrix:
        """Vertex-by-edge incidence Q with +1 at the higher-index endpoint.

        The Laplacian equals Q @ Q.T regardless of the sign convention;
        the convention only fixes edge orientations.
        """
        rows, cols, vals = [], [], []
        for col, (lo, hi) in enumerate(self.edges):
            rows.extend((hi, lo))
            cols.extend((col, col))
            vals.extend((1.0, -1.0))
        return sp.csc_matrix(
            (vals, (rows, cols)), shape=(self.num_vertices, self.num_edges)
        )

    def laplacian(self) -> sp.csr_matrix:
        """Sparse combinatorial Laplacian (degree minus adjacency)."""
        n = self.num_vertices
        if not self.edges:
            return sp.csr_matrix((n, n))
        rows, cols, vals = [], [], []
        degree = np.zeros(n)
        for lo, hi in self.edges:
            degree[lo] += 1.0
            degree[hi] += 1.0
            rows.extend((lo, hi))
            cols.extend((hi, lo))
            vals.extend((-1.0, -1.0))
        rows.extend(range(n))
        cols.extend(range(n))
        vals.extend(degree)
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def __repr__(self) -> str:
        return f"CohesionGraph(num_vertices={self.num_vertices}, num_edges={self.num_edges})"


def cohesion_penalty(theta: np.ndarray, laplacian: sp.spmatrix) -> float:
    """Quadratic disagreement tr(Theta' L Theta) of per-vertex coefficient rows.

    `theta` has one row per vertex; a 1-d array is treated as a single
    column of scalars.
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    if theta.shape[0] == 1 and laplacian.shape[0] != 1:
        theta = theta.T
    if theta.shape[0] != laplacian.shape[0]:
        raise ValueError(
            f"theta has {theta.shape[0]} rows but the Laplacian has side {laplacian.shape[0]}"
        )
    return float(np.sum(theta * (laplacian @ theta)))


def ridge_block(size: int, weight: float) -> sp.csr_matrix:
    """Diagonal prior precision weight * I_size."""
    if size <= 0:
        raise ValueError("block size must be positive")
    if weight <= 0:
        raise ValueError("ridge weight must be positive")
    return sp.identity(size, format="csr") * weight


def cohesion_block(
    graph: CohesionGraph, d: int, ridge_weight: float, cohesion_weight: float
) -> sp.csr_matrix:
    """Prior precision ridge*I + cohesion*(L kron I_d) for one vertex set."""
    if d <= 0:
        raise ValueError("d must be positive")
    if ridge_weight <= 0:
        raise ValueError("ridge weight must be positive")
    if cohesion_weight < 0:
        raise ValueError("cohesion weight must be nonnegative")
    size = graph.num_vertices * d
    block = sp.identity(size, format="csr") * ridge_weight
    if cohesion_weight > 0 and graph.num_edges > 0:
        block = block + cohesion_weight * sp.kron(
            graph.laplacian(), sp.identity(d, format="csr"), format="csr"
        )
    return sp.csr_matrix(block)


class PenaltyMatrix:
    """Symmetric positive-definite block-diagonal prior precision.

    Holds the ordered diagonal blocks so the inverse can be taken
    block-wise; every estimator layout in this package (shared-only,
    user/time pooled, with or without a raw-baseline block) is a stack
    of these blocks.
    """

    def __init__(self, blocks: Sequence[sp.spmatrix]):
        if not blocks:
            raise ValueError("at least one block is required")
        self.blocks = [sp.csr_matrix(b) for b in blocks]
        for b in self.blocks:
            if b.shape[0] != b.shape[1]:
                raise ValueError("penalty blocks must be square")
        self.dim = sum(b.shape[0] for b in self.blocks)
        self._matrix: sp.csr_matrix | None = None

    def matrix(self) -> sp.csr_matrix:
        if self._matrix is None:
            self._matrix = sp.block_diag(self.blocks, format="csr")
        return self._matrix

    def inverse_dense(self) -> np.ndarray:
        """Dense inverse, computed block by block."""
        out = np.zeros((self.dim, self.dim))
        offset = 0
        for block in self.blocks:
            size = block.shape[0]
            dense = block.toarray()
            try:
                inv = np.linalg.inv(dense)
            except np.linalg.LinAlgError as err:
                raise ValueError("penalty block is singular") from err
            out[offset : offset + size, offset : offset + size] = 0.5 * (inv + inv.T)
            offset += size
        return out


def build_penalty_matrix(
    num_users: int,
    num_times: int,
    d: int,
    ridge_weight: float,
    cohesion_weight: float,
    user_graph: CohesionGraph | None = None,
    time_graph: CohesionGraph | None = None,
) -> PenaltyMatrix:
    """Penalty for the canonical shared/user/time coefficient layout.

    Blocks, in order: a ridge on the shared d coefficients, then
    ridge-plus-cohesion blocks for the per-user and per-time
    coefficients. Passing no graph for a vertex set means no cohesion
    there (pure ridge).
    """
    if num_users < 0 or num_times < 0:
        raise ValueError("vertex counts must be nonnegative")
    user_graph = user_graph if user_graph is not None else CohesionGraph(num_users)
    time_graph = time_graph if time_graph is not None else CohesionGraph(num_times)
    if user_graph.num_vertices != num_users:
        raise ValueError(
            f"user graph has {user_graph.num_vertices} vertices, expected {num_users}"
        )
    if time_graph.num_vertices != num_times:
        raise ValueError(
            f"time graph has {time_graph.num_vertices} vertices, expected {num_times}"
        )
    blocks = [ridge_block(d, ridge_weight)]
    if num_users > 0:
        blocks.append(cohesion_block(user_graph, d, ridge_weight, cohesion_weight))
    if num_times > 0:
        blocks.append(cohesion_block(time_graph, d, ridge_weight, cohesion_weight))
    return PenaltyMatrix(blocks)


def knn_graph(features: np.ndarray, k: int) -> CohesionGraph:
    """Symmetrized k-nearest-neighbor graph over row vectors.

    Each vertex links to its k nearest others by Euclidean distance;
    the directed picks are unioned. Distance ties resolve to the lower
    vertex index.
    """
    features = np.atleast_2d(np.asarray(features, dtype=float))
    n = features.shape[0]
    if n < 2:
        raise ValueError("knn_graph needs at least two vertices")
    if k < 1:
        raise ValueError("k must be at least 1")
    if k >= n:
        raise ValueError(f"k={k} must be smaller than the number of vertices {n}")
    diffs = features[:, None, :] - features[None, :, :]
    dist = np.sqrt(np.sum(diffs**2, axis=-1))
    np.fill_diagonal(dist, np.inf)
    edges = []
    for i in range(n):
        # Stable sort keeps lower indices first among equal distances.
        nearest = np.argsort(dist[i], kind="stable")[:k]
        edges.extend((i, int(j)) for j in nearest)
    return CohesionGraph(n, edges)


def chain_graph(num_vertices: int) -> CohesionGraph:
    """Path graph linking consecutive vertices (the time-point network)."""
    return CohesionGraph(num_vertices, [(i, i + 1) for i in range(num_vertices - 1)])


def load_edge_list(path: str | Path, num_vertices: int) -> CohesionGraph:
    """Read an edge list file with one whitespace-separated '<i> <j>' pair per line."""
    edges = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected two vertex ids, got {line!r}")
        try:
            a, b = int(parts[0]), int(parts[1])
        except ValueError as err:
            raise ValueError(f"{path}:{lineno}: vertex ids must be integers") from err
        edges.append((a, b))
    return CohesionGraph(num_vertices, edges)
