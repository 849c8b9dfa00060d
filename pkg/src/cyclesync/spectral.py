"""Spectral initialization of absolute rotations from a weighted connection matrix.

The 3n x 3n block matrix X holds w_ij R_ij in block (i, j), with weights
normalized so each node's weights sum to one. For consistent measurements the
stacked reference rotations span an invariant subspace with eigenvalue one,
so the dominant three-dimensional invariant subspace, extracted by orthogonal
(subspace) iteration and projected blockwise onto SO(3), recovers the
rotations up to one global right factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import bsr_array

from .errors import InputFormatError, SolverFailureError
from .so3 import project_to_so3_many
from .viewgraph import ViewGraph

_SUBSPACE_SEED = 0x5EED
_WEIGHT_CAP = 1e8


@dataclass
class WeightedConnection:
    """Directed edge weights aligned to a graph's adjacency structure.

    weights[m] belongs to the ordered pair (src, adj_nodes[m]) of the graph's
    adjacency; per-node weights sum to one, so w_ij and w_ji generally differ
    even though the underlying raw weight is symmetric.
    """

    graph: ViewGraph
    weights: np.ndarray

    def node_sums(self) -> np.ndarray:
        src = np.repeat(np.arange(self.graph.n_nodes), self.graph.degrees())
        return np.bincount(src, weights=self.weights, minlength=self.graph.n_nodes)


def build_weight_matrix(graph: ViewGraph, s_hat: np.ndarray,
                        exponent: float = 1.5,
                        cap: float = _WEIGHT_CAP) -> WeightedConnection:
    """Corruption-driven weights: raw w = min(s_hat^-exponent, cap), row-normalized.

    Edges estimated clean get (capped) large weight; per-node normalization
    then makes each block row of the connection matrix an affine combination.

    Raises:
        InputFormatError: if some node has no incident edge.
    """
    s_hat = np.asarray(s_hat, dtype=float)
    if len(s_hat) != graph.n_edges:
        raise InputFormatError(
            f"{len(s_hat)} corruption estimates for {graph.n_edges} edges"
        )
    if np.any(s_hat < 0):
        raise InputFormatError("corruption estimates must be nonnegative")
    degrees = graph.degrees()
    if np.any(degrees == 0):
        raise InputFormatError(
            f"isolated nodes {np.flatnonzero(degrees == 0).tolist()} cannot be weighted"
        )
    with np.errstate(divide="ignore"):
        raw = np.minimum(s_hat ** -exponent, cap)
    return _normalize(graph, raw[graph.adj_edges])


def uniform_weights(graph: ViewGraph) -> WeightedConnection:
    """Corruption-agnostic weights, 1/degree per directed pair."""
    if np.any(graph.degrees() == 0):
        raise InputFormatError("isolated nodes cannot be weighted")
    return _normalize(graph, np.ones(2 * graph.n_edges))


def _normalize(graph: ViewGraph, raw: np.ndarray) -> WeightedConnection:
    src = np.repeat(np.arange(graph.n_nodes), graph.degrees())
    sums = np.bincount(src, weights=raw, minlength=graph.n_nodes)
    return WeightedConnection(graph, raw / sums[src])


def connection_matrix(wc: WeightedConnection) -> bsr_array:
    """Assemble the sparse 3n x 3n block matrix with blocks w_ij R(i -> j)."""
    g = wc.graph
    src = np.repeat(np.arange(g.n_nodes), g.degrees())
    rot = g.rotations[g.adj_edges]
    transpose = src > g.adj_nodes  # stored orientation is low -> high
    rot = np.where(transpose[:, None, None], np.swapaxes(rot, 1, 2), rot)
    blocks = wc.weights[:, None, None] * rot
    return bsr_array((blocks, g.adj_nodes, g.adj_indptr),
                     shape=(3 * g.n_nodes, 3 * g.n_nodes))


@dataclass
class SpectralResult:
    rotations: np.ndarray
    iterations: int
    subspace_delta: float
    rayleigh_residual: float


def spectral_sync(wc: WeightedConnection, max_iters: int = 1000,
                  tol: float = 1e-10) -> SpectralResult:
    """Recover rotations (up to a global right factor) by subspace iteration.

    Iterates Q <- qr((X + I) Q) from a fixed-seed start. The identity shift
    maps the target eigenvalues near +1 away from any reflective spectrum
    near -1 (which ties with it in magnitude on bipartite-like graphs)
    without changing invariant subspaces. Convergence is declared when the
    component of the new basis outside the previous subspace drops below tol.

    The converged basis equals the stacked rotations times one 3x3 orthogonal
    factor; if that factor has negative determinant (the subspace is
    orientation-agnostic), the basis' last column is flipped before blockwise
    projection so all blocks share a proper rotation factor.

    Raises:
        SolverFailureError: if the subspace has not settled within max_iters.
    """
    x = connection_matrix(wc)
    n = wc.graph.n_nodes
    rng = np.random.default_rng(_SUBSPACE_SEED)
    q, _ = np.linalg.qr(rng.standard_normal((3 * n, 3)))
    delta = np.inf
    iterations = 0
    for iterations in range(1, max_iters + 1):
        z = x @ q + q
        q_next, _ = np.linalg.qr(z)
        delta = float(np.linalg.norm(q_next - q @ (q.T @ q_next)))
        q = q_next
        if delta <= tol:
            break
    else:
        raise SolverFailureError(
            f"subspace iteration did not settle within {max_iters} iterations",
            residual=delta,
        )
    xq = x @ q
    rayleigh = q.T @ xq
    residual = float(np.linalg.norm(xq - q @ rayleigh))

    blocks = q.reshape(n, 3, 3)
    if np.linalg.det(blocks).sum() < 0.0:
        q = q.copy()
        q[:, 2] = -q[:, 2]
        blocks = q.reshape(n, 3, 3)
    rotations = project_to_so3_many(blocks)
    return SpectralResult(rotations, iterations, delta, residual)
