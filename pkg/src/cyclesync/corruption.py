"""Per-edge corruption estimation from cycle inconsistencies.

Each edge (i, j) carries a belief vector p_ij on the probability simplex over
its sampled cycle nodes; its corruption estimate is s_ij = p_ij . d_ij. The
beliefs minimize

    f(p) = sum_ij sum_{k in C_ij} p_ij(k) (s_ik + s_jk)

by projected gradient descent: a Riemannian (mean-removal) projection of the
gradient, a fixed step, then Euclidean projection back onto each simplex. All
edges update synchronously from the previous iterate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputFormatError, NumericalFailureError
from .viewgraph import CycleTable


@dataclass(frozen=True)
class PgdConfig:
    step_size: float = 0.01
    max_iters: int = 100
    record_trace: bool = False

    def validate(self):
        if not 0.0 < self.step_size <= 10.0:
            raise InputFormatError(f"step_size must be in (0, 10], got {self.step_size}")
        if self.max_iters < 1:
            raise InputFormatError(f"max_iters must be >= 1, got {self.max_iters}")


@dataclass
class BeliefState:
    """Beliefs p flattened over the cycle table's pairs plus per-edge s."""

    p: np.ndarray
    s: np.ndarray


@dataclass
class CorruptionEstimate:
    s_hat: np.ndarray
    iterations: int
    final_objective: float
    objective_trace: list[float] | None = None


def init_beliefs(table: CycleTable) -> BeliefState:
    """Uniform beliefs over each edge's cycles; s starts at the mean of d."""
    counts = table.counts()
    p = np.repeat(1.0 / counts, counts)
    return BeliefState(p, _segment_dot(table, p))


def _segment_dot(table: CycleTable, p: np.ndarray) -> np.ndarray:
    return np.bincount(table.pair_edge, weights=p * table.d,
                       minlength=table.n_edges)


def objective(state: BeliefState, table: CycleTable) -> float:
    """Objective value, accumulated per edge then summed exactly with fsum."""
    cross = state.s[table.edge_ik] + state.s[table.edge_jk]
    per_edge = np.bincount(table.pair_edge, weights=state.p * cross,
                           minlength=table.n_edges)
    return math.fsum(per_edge)


def gradient(state: BeliefState, table: CycleTable) -> np.ndarray:
    """Exact gradient of the objective over all beliefs, flattened.

    The entry for (edge ij, cycle node k) is

        s_ik + s_jk + a_ij * d_ijk,

    where a_ij accumulates every belief entry that references edge (i, j) as
    one of its cross edges. On a full cycle table a_ij reduces to
    sum_l (p_il(j) + p_jl(i)); with sampled cycles the reverse accumulation
    keeps the gradient exact for the restricted objective, and entries whose
    partner cycle was not sampled simply contribute nothing.
    """
    cross = state.s[table.edge_ik] + state.s[table.edge_jk]
    a = (np.bincount(table.edge_ik, weights=state.p, minlength=table.n_edges)
         + np.bincount(table.edge_jk, weights=state.p, minlength=table.n_edges))
    return cross + a[table.pair_edge] * table.d


def edge_gradient(state: BeliefState, table: CycleTable, e: int) -> np.ndarray:
    """Gradient restricted to one edge's belief vector."""
    g = gradient(state, table)
    return g[table.indptr[e]:table.indptr[e + 1]]


def riemannian_project(g: np.ndarray) -> np.ndarray:
    """Project a gradient onto the simplex's tangent space (remove the mean)."""
    g = np.asarray(g, dtype=float)
    return g - g.mean()


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex.

    Sorted-threshold construction: with u the coordinates sorted in
    decreasing order, the active set is the longest prefix on which
    u_r + (1 - cumsum(u)_r) / r stays positive, and the output is
    max(v - tau, 0) with tau chosen so the result sums to one.
    """
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    r = np.arange(1, len(v) + 1)
    rho = int(np.count_nonzero(u + (1.0 - css) / r > 0.0))
    tau = (css[rho - 1] - 1.0) / rho
    return np.maximum(v - tau, 0.0)


def _segment_buckets(table: CycleTable):
    """Group edges by cycle count for batched per-segment operations.

    Returns a list of (edge_ids, gather) where gather is a (B, m) index array
    into the flat pair arrays.
    """
    counts = table.counts()
    buckets = []
    for m in np.unique(counts):
        edge_ids = np.flatnonzero(counts == m)
        starts = table.indptr[edge_ids]
        gather = starts[:, None] + np.arange(m)[None, :]
        buckets.append((edge_ids, gather))
    return buckets


def _project_segments(ptil: np.ndarray, buckets) -> np.ndarray:
    out = np.empty_like(ptil)
    for _, gather in buckets:
        v = ptil[gather]
        m = v.shape[1]
        u = -np.sort(-v, axis=1)
        css = np.cumsum(u, axis=1)
        r = np.arange(1, m + 1)
        rho = np.count_nonzero(u + (1.0 - css) / r > 0.0, axis=1)
        tau = (css[np.arange(len(v)), rho - 1] - 1.0) / rho
        out[gather] = np.maximum(v - tau[:, None], 0.0)
    return out


def run_pgd(table: CycleTable, config: PgdConfig = PgdConfig(),
            on_iterate=None) -> CorruptionEstimate:
    """Minimize the corruption objective with fixed-step projected gradient.

    All belief vectors are updated synchronously (double-buffered) for a fixed
    number of iterations; the returned estimate is the final s.

    Args:
        table: sampled cycle table.
        config: step size and iteration count.
        on_iterate: optional callback (iteration, BeliefState, objective)
            invoked after every update, for tracing and invariant checks.

    Raises:
        NumericalFailureError: if beliefs or the objective go non-finite.
    """
    config.validate()
    state = init_beliefs(table)
    buckets = _segment_buckets(table)
    counts = table.counts()
    obj = objective(state, table)
    trace = [obj] if config.record_trace else []
    for t in range(1, config.max_iters + 1):
        g = gradient(state, table)
        means = np.bincount(table.pair_edge, weights=g,
                            minlength=table.n_edges) / counts
        g -= means[table.pair_edge]
        p = _project_segments(state.p - config.step_size * g, buckets)
        state = BeliefState(p, _segment_dot(table, p))
        obj = objective(state, table)
        if not (np.isfinite(obj) and np.all(np.isfinite(state.p))):
            raise NumericalFailureError("non-finite beliefs or objective", iteration=t)
        if config.record_trace:
            trace.append(obj)
        if on_iterate is not None:
            on_iterate(t, state, obj)
    return CorruptionEstimate(state.s.copy(), config.max_iters, obj,
                              trace if config.record_trace else None)
