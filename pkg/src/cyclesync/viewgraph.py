"""Measurement graphs of relative rotations and their sampled 3-cycle tables.

Edges are stored once in canonical orientation (i < j, lexicographically
sorted), with the measurement pointing i -> j; the reverse direction is the
transpose. All per-edge arrays throughout the package are aligned to this
edge order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_array
from scipy.sparse.csgraph import connected_components

from .errors import InputFormatError, UncoveredEdgeError
from .so3 import angular_distance_many, is_rotation, rotation_angle_many


@dataclass
class ViewGraph:
    """Undirected graph of pairwise rotation measurements.

    Attributes:
        n_nodes: number of nodes; ids are 0-based and consecutive.
        edges: (E, 2) int array, each row (i, j) with i < j, rows sorted.
        rotations: (E, 3, 3) measurements oriented i -> j.
    """

    n_nodes: int
    edges: np.ndarray
    rotations: np.ndarray
    adj_indptr: np.ndarray = field(init=False, repr=False)
    adj_nodes: np.ndarray = field(init=False, repr=False)
    adj_edges: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.edges = np.ascontiguousarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.rotations = np.ascontiguousarray(self.rotations, dtype=float).reshape(-1, 3, 3)
        self._validate()
        self._build_adjacency()

    def _validate(self):
        e = self.edges
        if len(e) != len(self.rotations):
            raise InputFormatError(
                f"{len(e)} edges but {len(self.rotations)} rotation measurements"
            )
        if len(e) and (e.min() < 0 or e.max() >= self.n_nodes):
            raise InputFormatError("edge endpoint out of range")
        if np.any(e[:, 0] >= e[:, 1]):
            bad = int(np.flatnonzero(e[:, 0] >= e[:, 1])[0])
            raise InputFormatError(f"edge {tuple(e[bad])} is not in canonical i<j order")
        order = np.lexsort((e[:, 1], e[:, 0]))
        if not np.array_equal(order, np.arange(len(e))):
            raise InputFormatError("edges are not lexicographically sorted")
        if len(e) > 1:
            dup = np.all(e[1:] == e[:-1], axis=1)
            if np.any(dup):
                raise InputFormatError(f"duplicate edge {tuple(e[1:][dup][0])}")
        for idx, r in enumerate(self.rotations):
            if not is_rotation(r):
                raise InputFormatError(
                    f"measurement for edge {tuple(e[idx])} is not a rotation"
                )

    def _build_adjacency(self):
        e = self.edges
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        eid = np.concatenate([np.arange(len(e)), np.arange(len(e))])
        order = np.lexsort((dst, src))
        src, dst, eid = src[order], dst[order], eid[order]
        self.adj_indptr = np.searchsorted(src, np.arange(self.n_nodes + 1))
        self.adj_nodes = dst
        self.adj_edges = eid

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, i: int) -> np.ndarray:
        """Sorted neighbor ids of node i."""
        return self.adj_nodes[self.adj_indptr[i]:self.adj_indptr[i + 1]]

    def incident_edges(self, i: int) -> np.ndarray:
        """Edge ids incident to node i, aligned with neighbors(i)."""
        return self.adj_edges[self.adj_indptr[i]:self.adj_indptr[i + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.adj_indptr)

    def is_connected(self) -> bool:
        if self.n_nodes <= 1:
            return True
        if self.n_edges == 0:
            return False
        m = coo_array(
            (np.ones(self.n_edges), (self.edges[:, 0], self.edges[:, 1])),
            shape=(self.n_nodes, self.n_nodes),
        )
        ncomp, _ = connected_components(m.tocsr(), directed=False)
        return ncomp == 1

    def component_count(self) -> int:
        if self.n_nodes <= 1:
            return self.n_nodes
        m = coo_array(
            (np.ones(max(self.n_edges, 1)),
             (self.edges[:, 0], self.edges[:, 1]) if self.n_edges else ([0], [0])),
            shape=(self.n_nodes, self.n_nodes),
        )
        ncomp, _ = connected_components(m.tocsr(), directed=False)
        return int(ncomp)


def make_view_graph(n_nodes: int, edge_list, rotation_list) -> ViewGraph:
    """Build a ViewGraph from possibly unordered edges.

    Edges given as (j, i) with j > i are flipped and their measurement
    transposed, then everything is sorted into canonical order.
    """
    edges = np.asarray(edge_list, dtype=np.int64).reshape(-1, 2)
    rots = np.asarray(rotation_list, dtype=float).reshape(-1, 3, 3)
    if len(edges) != len(rots):
        raise InputFormatError("edge and rotation counts differ")
    if np.any(edges[:, 0] == edges[:, 1]):
        bad = int(np.flatnonzero(edges[:, 0] == edges[:, 1])[0])
        raise InputFormatError(f"self-loop at node {edges[bad, 0]}")
    flip = edges[:, 0] > edges[:, 1]
    edges = np.where(flip[:, None], edges[:, ::-1], edges)
    rots = np.where(flip[:, None, None], np.swapaxes(rots, 1, 2), rots)
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    return ViewGraph(n_nodes, edges[order], rots[order])


@dataclass
class GroundTruth:
    """Reference rotations plus per-edge corruption levels for a ViewGraph.

    s_star[e] is the scaled distance between the measurement on edge e and the
    relative rotation implied by the reference rotations. labels marks edges
    known to have been corrupted (None when the truth came from a file and the
    generator's coin flips are unknown).
    """

    rotations: np.ndarray
    s_star: np.ndarray
    labels: np.ndarray | None = None


def ground_truth_for(graph: ViewGraph, rotations: np.ndarray,
                     labels: np.ndarray | None = None) -> GroundTruth:
    """Attach reference rotations to a graph, computing corruption levels."""
    rotations = np.ascontiguousarray(rotations, dtype=float).reshape(-1, 3, 3)
    if len(rotations) != graph.n_nodes:
        raise InputFormatError(
            f"{len(rotations)} reference rotations for {graph.n_nodes} nodes"
        )
    i, j = graph.edges[:, 0], graph.edges[:, 1]
    rel = rotations[i] @ np.swapaxes(rotations[j], 1, 2)
    s_star = angular_distance_many(graph.rotations, rel)
    return GroundTruth(rotations, s_star, labels)


# ---------------------------------------------------------------------------
# Text formats. EDGE i j r11 .. r33 (row-major) for measurements, NODE i
# r11 .. r33 for absolute rotations; '#' starts a comment, ids are 0-based.
# ---------------------------------------------------------------------------

def _format_matrix(r: np.ndarray) -> str:
    return " ".join(f"{x:.17g}" for x in np.asarray(r).reshape(9))


def write_view_graph(path, graph: ViewGraph) -> None:
    with open(path, "w") as fh:
        fh.write(f"# nodes: {graph.n_nodes}\n")
        for (i, j), r in zip(graph.edges, graph.rotations):
            fh.write(f"EDGE {i} {j} {_format_matrix(r)}\n")


def write_rotations(path, rotations: np.ndarray) -> None:
    rotations = np.asarray(rotations).reshape(-1, 3, 3)
    with open(path, "w") as fh:
        for i, r in enumerate(rotations):
            fh.write(f"NODE {i} {_format_matrix(r)}\n")


def _parse_records(path, keyword: str, id_fields: int):
    records = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] != keyword:
                raise InputFormatError(
                    f"{path}:{lineno}: expected {keyword} record, got {parts[0]!r}"
                )
            if len(parts) != 1 + id_fields + 9:
                raise InputFormatError(
                    f"{path}:{lineno}: expected {1 + id_fields + 9} fields, got {len(parts)}"
                )
            try:
                ids = [int(p) for p in parts[1:1 + id_fields]]
                vals = [float(p) for p in parts[1 + id_fields:]]
            except ValueError as exc:
                raise InputFormatError(f"{path}:{lineno}: {exc}") from None
            records.append((lineno, ids, np.array(vals).reshape(3, 3)))
    return records


def read_view_graph(path) -> ViewGraph:
    """Parse an EDGE file. Node count is inferred as max id + 1."""
    records = _parse_records(path, "EDGE", 2)
    if not records:
        raise InputFormatError(f"{path}: no EDGE records")
    edges, rots = [], []
    for lineno, (i, j), r in records:
        if i < 0 or j < 0:
            raise InputFormatError(f"{path}:{lineno}: negative node id")
        if i == j:
            raise InputFormatError(f"{path}:{lineno}: self-loop at node {i}")
        if not is_rotation(r):
            raise InputFormatError(f"{path}:{lineno}: matrix is not a rotation")
        edges.append((i, j))
        rots.append(r)
    n = int(np.max(edges)) + 1
    try:
        return make_view_graph(n, edges, rots)
    except InputFormatError as exc:
        raise InputFormatError(f"{path}: {exc}") from None


def read_rotations(path) -> np.ndarray:
    """Parse a NODE file into an (n, 3, 3) array indexed by node id."""
    records = _parse_records(path, "NODE", 1)
    if not records:
        raise InputFormatError(f"{path}: no NODE records")
    ids = [ids[0] for _, ids, _ in records]
    if sorted(ids) != list(range(len(ids))):
        raise InputFormatError(f"{path}: node ids are not 0..{len(ids) - 1} exactly once")
    out = np.empty((len(ids), 3, 3))
    for lineno, (i,), r in records:
        if not is_rotation(r):
            raise InputFormatError(f"{path}:{lineno}: matrix is not a rotation")
        out[i] = r
    return out


# ---------------------------------------------------------------------------
# 3-cycle tables.
# ---------------------------------------------------------------------------

@dataclass
class CycleTable:
    """Sampled 3-cycles per edge, flattened into CSR-style arrays.

    For edge e = (i, j), the pairs [indptr[e], indptr[e+1]) list the retained
    cycle nodes k (sorted), the cycle inconsistency d of i -> j -> k -> i, and
    the edge ids of the two cross edges (i, k) and (j, k).
    """

    indptr: np.ndarray
    nodes: np.ndarray
    d: np.ndarray
    edge_ik: np.ndarray
    edge_jk: np.ndarray
    pair_edge: np.ndarray
    budget: int
    full_counts: np.ndarray

    @property
    def n_edges(self) -> int:
        return len(self.indptr) - 1

    @property
    def n_pairs(self) -> int:
        return len(self.nodes)

    def counts(self) -> np.ndarray:
        return np.diff(self.indptr)

    def cycle_nodes(self, e: int) -> np.ndarray:
        return self.nodes[self.indptr[e]:self.indptr[e + 1]]

    def inconsistencies(self, e: int) -> np.ndarray:
        return self.d[self.indptr[e]:self.indptr[e + 1]]


def resolve_cycle_budget(full_counts: np.ndarray, divisor: int = 4, floor: int = 30) -> int:
    """Per-edge cycle cap: a quarter of the median count, but at least floor."""
    med = float(np.median(full_counts))
    return max(math.ceil(med / divisor), floor)


def oriented_rotations(graph: ViewGraph, edge_ids: np.ndarray,
                       transpose: np.ndarray) -> np.ndarray:
    """Gather measurements for edge_ids, transposing where transpose is True."""
    r = graph.rotations[edge_ids]
    return np.where(transpose[:, None, None], np.swapaxes(r, 1, 2), r)


def cycle_inconsistencies(graph: ViewGraph, pair_edge: np.ndarray,
                          nodes: np.ndarray, edge_ik: np.ndarray,
                          edge_jk: np.ndarray) -> np.ndarray:
    """Scaled distance of each 3-cycle product i -> j -> k -> i from identity."""
    i = graph.edges[pair_edge, 0]
    j = graph.edges[pair_edge, 1]
    a = graph.rotations[pair_edge]                       # i -> j, canonical
    b = oriented_rotations(graph, edge_jk, nodes < j)    # j -> k
    c = oriented_rotations(graph, edge_ik, i < nodes)    # k -> i
    return rotation_angle_many(a @ b @ c) / np.pi


def build_cycle_table(graph: ViewGraph, rng: np.random.Generator | None = None,
                      budget: int | None = None, divisor: int = 4,
                      floor: int = 30) -> CycleTable:
    """Enumerate common neighbors per edge and sample them down to a budget.

    Sampling is uniform without replacement; edges at or under the budget keep
    every cycle. Retained cycle nodes stay sorted by id.

    Args:
        graph: measurement graph.
        rng: generator used only when an edge exceeds the budget. Defaults to
            a fixed-seed generator so tables are reproducible by default.
        budget: explicit per-edge cap; None derives it from the median count.

    Raises:
        UncoveredEdgeError: if any edge has no 3-cycle at all.
    """
    if graph.n_edges == 0:
        raise InputFormatError("graph has no edges")
    commons, ik_ids, jk_ids = [], [], []
    for i, j in graph.edges:
        ni, nj = graph.neighbors(i), graph.neighbors(j)
        common, ia, ja = np.intersect1d(ni, nj, assume_unique=True, return_indices=True)
        commons.append(common)
        ik_ids.append(graph.incident_edges(i)[ia])
        jk_ids.append(graph.incident_edges(j)[ja])
    full_counts = np.array([len(c) for c in commons], dtype=np.int64)
    if np.any(full_counts == 0):
        raise UncoveredEdgeError(graph.edges[full_counts == 0])
    if budget is None:
        budget = resolve_cycle_budget(full_counts, divisor, floor)
    if budget < 1:
        raise InputFormatError(f"cycle budget must be >= 1, got {budget}")
    if rng is None:
        rng = np.random.default_rng(0)

    kept_nodes, kept_ik, kept_jk = [], [], []
    for common, eik, ejk in zip(commons, ik_ids, jk_ids):
        if len(common) > budget:
            sel = np.sort(rng.choice(len(common), size=budget, replace=False))
            common, eik, ejk = common[sel], eik[sel], ejk[sel]
        kept_nodes.append(common)
        kept_ik.append(eik)
        kept_jk.append(ejk)

    counts = np.array([len(c) for c in kept_nodes], dtype=np.int64)
    indptr = np.concatenate([[0], np.cumsum(counts)])
    nodes = np.concatenate(kept_nodes) if kept_nodes else np.empty(0, dtype=np.int64)
    edge_ik = np.concatenate(kept_ik).astype(np.int64)
    edge_jk = np.concatenate(kept_jk).astype(np.int64)
    pair_edge = np.repeat(np.arange(graph.n_edges), counts)
    d = cycle_inconsistencies(graph, pair_edge, nodes, edge_ik, edge_jk)
    return CycleTable(indptr, nodes, d, edge_ik, edge_jk, pair_edge,
                      int(budget), full_counts)


def stability_bound_violation(table: CycleTable, s_star: np.ndarray) -> float:
    """Largest violation of |d_ijk - s*_ij| <= s*_ik + s*_jk over the table.

    Non-positive output means every stored cycle satisfies the bound.
    """
    s_star = np.asarray(s_star, dtype=float)
    lhs = np.abs(table.d - s_star[table.pair_edge])
    rhs = s_star[table.edge_ik] + s_star[table.edge_jk]
    return float((lhs - rhs).max()) if table.n_pairs else 0.0


def stability_bound_check(table: CycleTable, s_star: np.ndarray,
                          tol: float = 1e-9) -> bool:
    """True if the corruption stability bound holds for every stored cycle."""
    return stability_bound_violation(table, s_star) <= tol


def prune_uncovered_edges(graph: ViewGraph) -> tuple[ViewGraph, np.ndarray]:
    """Drop edges with no 3-cycle, repeating until all survivors are covered.

    Returns the pruned graph and the (K, 2) array of removed edges.
    """
    removed = []
    while True:
        keep = np.ones(graph.n_edges, dtype=bool)
        for e, (i, j) in enumerate(graph.edges):
            common = np.intersect1d(graph.neighbors(i), graph.neighbors(j),
                                    assume_unique=True)
            if len(common) == 0:
                keep[e] = False
        if keep.all():
            break
        removed.append(graph.edges[~keep])
        graph = ViewGraph(graph.n_nodes, graph.edges[keep], graph.rotations[keep])
    removed_arr = (np.concatenate(removed) if removed
                   else np.empty((0, 2), dtype=np.int64))
    return graph, removed_arr
