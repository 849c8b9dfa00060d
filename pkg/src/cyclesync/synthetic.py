"""Synthetic uniform-corruption instances on Erdos-Renyi graphs.

Each (seed, q, sigma) triple owns four independent child generators (graph
topology, reference rotations, corruption, noise), derived from the triple by
a fixed hash, so regenerating any cell of a sweep reproduces it bit for bit
without touching the others.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import GenerationError, InputFormatError
from .so3 import sample_haar, wigner_perturb_many
from .viewgraph import GroundTruth, ViewGraph, ground_truth_for

log = logging.getLogger(__name__)

_STREAM_GRAPH = 0
_STREAM_TRUTH = 1
_STREAM_CORRUPTION = 2
_STREAM_NOISE = 3

_MAX_CONNECT_ATTEMPTS = 20


@dataclass(frozen=True)
class UcmParams:
    """Uniform corruption model parameters.

    An Erdos-Renyi graph G(n_nodes, edge_prob) is drawn, reference rotations
    are Haar-uniform, and each edge independently is corrupted with
    probability q (measurement replaced by a fresh Haar rotation) or else
    carries the true relative rotation perturbed by an additive iid Gaussian
    matrix of scale sigma and projected back to SO(3).
    """

    n_nodes: int
    edge_prob: float
    q: float
    sigma: float
    seed: int

    def validate(self):
        if self.n_nodes < 2:
            raise InputFormatError(f"n_nodes must be >= 2, got {self.n_nodes}")
        if not 0.0 < self.edge_prob <= 1.0:
            raise InputFormatError(f"edge_prob must be in (0, 1], got {self.edge_prob}")
        if not 0.0 <= self.q < 1.0:
            raise InputFormatError(f"q must be in [0, 1), got {self.q}")
        if self.sigma < 0.0:
            raise InputFormatError(f"sigma must be >= 0, got {self.sigma}")


def _child_rng(params: UcmParams, stream: int, attempt: int = 0) -> np.random.Generator:
    q_bits = int(np.float64(params.q).view(np.uint64))
    s_bits = int(np.float64(params.sigma).view(np.uint64))
    seq = np.random.SeedSequence([int(params.seed), q_bits, s_bits, stream, attempt])
    return np.random.default_rng(seq)


def _draw_edges(params: UcmParams, attempt: int) -> np.ndarray:
    rng = _child_rng(params, _STREAM_GRAPH, attempt)
    n = params.n_nodes
    iu, ju = np.triu_indices(n, k=1)
    mask = rng.random(len(iu)) < params.edge_prob
    return np.column_stack([iu[mask], ju[mask]])


def generate_ucm(params: UcmParams, strict_connectivity: bool = False
                 ) -> tuple[ViewGraph, GroundTruth]:
    """Draw one synthetic instance.

    A disconnected draw is regenerated with a fresh topology stream (up to 20
    attempts, logged) unless strict_connectivity is set, in which case it is
    an immediate error reporting the component count.

    Returns:
        (graph, truth) where truth.labels flags the corrupted edges.
    """
    params.validate()
    truth_rots = sample_haar(_child_rng(params, _STREAM_TRUTH), params.n_nodes)

    edges = None
    for attempt in range(_MAX_CONNECT_ATTEMPTS):
        cand = _draw_edges(params, attempt)
        probe = ViewGraph(params.n_nodes, cand,
                          np.broadcast_to(np.eye(3), (len(cand), 3, 3)))
        if probe.is_connected():
            edges = cand
            break
        if strict_connectivity:
            raise GenerationError(
                f"graph is disconnected ({probe.component_count()} components) "
                f"and strict connectivity was requested"
            )
        log.info("disconnected draw for %s (attempt %d), regenerating",
                 params, attempt + 1)
    if edges is None:
        raise GenerationError(
            f"no connected graph within {_MAX_CONNECT_ATTEMPTS} attempts for {params}"
        )

    i, j = edges[:, 0], edges[:, 1]
    rel = truth_rots[i] @ np.swapaxes(truth_rots[j], 1, 2)

    rng_corrupt = _child_rng(params, _STREAM_CORRUPTION)
    bad = rng_corrupt.random(len(edges)) < params.q
    measurements = rel.copy()
    n_bad = int(bad.sum())
    if n_bad:
        measurements[bad] = sample_haar(rng_corrupt, n_bad)
    good = ~bad
    if good.any():
        rng_noise = _child_rng(params, _STREAM_NOISE)
        measurements[good] = wigner_perturb_many(rel[good], params.sigma, rng_noise)

    graph = ViewGraph(params.n_nodes, edges, measurements)
    truth = ground_truth_for(graph, truth_rots, labels=bad)
    return graph, truth


def ucm_sweep(n_nodes: int, edge_prob: float, qs, sigmas, seeds,
              strict_connectivity: bool = False):
    """Yield (params, graph, truth) over the grid of q, sigma, and seeds.

    Cells are independent: each triple reseeds from scratch, so any subset of
    the grid can be regenerated in isolation.
    """
    for q in qs:
        for sigma in sigmas:
            for seed in seeds:
                params = UcmParams(n_nodes, edge_prob, float(q), float(sigma), int(seed))
                graph, truth = generate_ucm(params, strict_connectivity)
                yield params, graph, truth


def instance_manifest(params: UcmParams, graph: ViewGraph,
                      truth: GroundTruth) -> dict:
    """Manifest dict describing one generated instance."""
    return {
        "n": params.n_nodes,
        "p": params.edge_prob,
        "q": params.q,
        "sigma": params.sigma,
        "seed": params.seed,
        "num_edges": int(graph.n_edges),
        "num_corrupted": int(truth.labels.sum()) if truth.labels is not None else None,
    }
