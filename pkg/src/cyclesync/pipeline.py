"""End-to-end orchestration: cycles -> corruption estimates -> init -> refinement.

This is the programmatic API behind the CLI's run and sweep modes. One run
seed feeds named child streams (currently just cycle sampling), so a whole
pipeline is reproducible from a single integer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corruption import (BeliefState, CorruptionEstimate, PgdConfig,
                         init_beliefs, objective, run_pgd)
from .errors import InputFormatError
from .metrics import EvalReport, RotationErrorStats, corruption_error, rotation_error_stats
from .refine import RefineConfig, SyncSolution, irls_l12_config, refine_rotations
from .spectral import SpectralResult, build_weight_matrix, spectral_sync, uniform_weights
from .synthetic import UcmParams, generate_ucm
from .viewgraph import (CycleTable, GroundTruth, ViewGraph, build_cycle_table,
                        prune_uncovered_edges)

_STREAM_CYCLES = 17


def _cycle_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), _STREAM_CYCLES]))


@dataclass
class PipelineOptions:
    seed: int = 0
    pgd: PgdConfig = field(default_factory=PgdConfig)
    refine: RefineConfig = field(default_factory=RefineConfig)
    cycle_budget: int | None = None
    gcw_exponent: float = 1.5
    prune_uncovered: bool = False
    trace: bool = False


@dataclass
class PgdTraceRow:
    iteration: int
    objective: float
    mean_abs_err: float | None
    median_abs_err: float | None


@dataclass
class PipelineResult:
    graph: ViewGraph
    truth: GroundTruth | None
    pruned_edges: np.ndarray
    table: CycleTable
    estimate: CorruptionEstimate
    init: SpectralResult
    init_stats: RotationErrorStats | None
    solution: SyncSolution
    final_stats: RotationErrorStats | None
    report: EvalReport
    pgd_trace: list[PgdTraceRow] = field(default_factory=list)


def run_pipeline(graph: ViewGraph, truth: GroundTruth | None,
                 options: PipelineOptions = PipelineOptions()) -> PipelineResult:
    """Estimate corruption levels, initialize spectrally, and refine."""
    pruned = np.empty((0, 2), dtype=np.int64)
    if options.prune_uncovered:
        kept_before = graph.edges
        graph, pruned = prune_uncovered_edges(graph)
        if truth is not None and len(pruned):
            keep_mask = _row_membership(kept_before, graph.edges)
            truth = GroundTruth(
                truth.rotations, truth.s_star[keep_mask],
                None if truth.labels is None else truth.labels[keep_mask])
    _require_connected(graph, pruned_edges=len(pruned))

    table = build_cycle_table(graph, _cycle_rng(options.seed),
                              budget=options.cycle_budget)

    pgd_trace: list[PgdTraceRow] = []
    on_iterate = None
    if options.trace:
        s_star = truth.s_star if truth is not None else None

        def on_iterate(t: int, state: BeliefState, obj: float):
            pgd_trace.append(_trace_row(t, state.s, obj, s_star))

        init_state = init_beliefs(table)
        pgd_trace.append(_trace_row(0, init_state.s, objective(init_state, table),
                                    s_star))

    estimate = run_pgd(table, options.pgd, on_iterate=on_iterate)

    weights = build_weight_matrix(graph, estimate.s_hat,
                                  exponent=options.gcw_exponent)
    init = spectral_sync(weights)
    refine_cfg = options.refine
    if options.trace and not refine_cfg.record_trace:
        refine_cfg = RefineConfig(**{**refine_cfg.__dict__, "record_trace": True})
    solution = refine_rotations(graph, estimate.s_hat, init.rotations, refine_cfg)

    init_stats = final_stats = None
    report = EvalReport(graph.n_nodes, graph.n_edges)
    if truth is not None:
        mean_s, median_s = corruption_error(estimate.s_hat, truth.s_star)
        init_stats = rotation_error_stats(init.rotations, truth.rotations)
        final_stats = rotation_error_stats(solution.rotations, truth.rotations)
        report = EvalReport(
            graph.n_nodes, graph.n_edges,
            mean_corruption_err=mean_s, median_corruption_err=median_s,
            init_mean_err_deg=init_stats.mean_deg,
            init_median_err_deg=init_stats.median_deg,
            final_mean_err_deg=final_stats.mean_deg,
            final_median_err_deg=final_stats.median_deg,
        )
    return PipelineResult(graph, truth, pruned, table, estimate, init,
                          init_stats, solution, final_stats, report, pgd_trace)


def _trace_row(t: int, s: np.ndarray, obj: float,
               s_star: np.ndarray | None) -> PgdTraceRow:
    if s_star is None:
        return PgdTraceRow(t, obj, None, None)
    err = np.abs(s - s_star)
    return PgdTraceRow(t, obj, float(err.mean()), float(np.median(err)))


def _row_membership(all_rows: np.ndarray, kept_rows: np.ndarray) -> np.ndarray:
    kept = {(int(i), int(j)) for i, j in kept_rows}
    return np.array([(int(i), int(j)) in kept for i, j in all_rows])


def _require_connected(graph: ViewGraph, pruned_edges: int = 0) -> None:
    """Reject graphs the solvers cannot handle as one rigid problem.

    Estimates in different components would each carry an independent
    gauge, so a disconnected graph has no meaningful joint solution; it
    must be split and synchronized per component by the caller.
    """
    if graph.is_connected():
        return
    detail = f"{graph.component_count()} components"
    isolated = np.flatnonzero(graph.degrees() == 0)
    if isolated.size:
        shown = ", ".join(map(str, isolated[:5].tolist()))
        more = ", ..." if isolated.size > 5 else ""
        detail += f"; isolated nodes: {shown}{more}"
    prefix = ("graph is not connected after pruning uncovered edges"
              if pruned_edges else "graph is not connected")
    raise InputFormatError(
        f"{prefix} ({detail}); rotations cannot be aligned across components")


SWEEP_METHODS = ("refined", "init", "uniform_init", "irls_l12")


@dataclass
class MethodErrors:
    method: str
    mean_err_deg: float
    median_err_deg: float
    mean_s_err: float
    median_s_err: float


def evaluate_methods(graph: ViewGraph, truth: GroundTruth,
                     options: PipelineOptions,
                     methods=("refined",)) -> list[MethodErrors]:
    """Rotation/corruption errors for the requested methods on one instance.

    Methods: refined (corruption-weighted spectral init plus guided
    refinement), init (the spectral initialization alone), uniform_init
    (corruption-agnostic spectral), irls_l12 (residual-only reweighting from
    the uniform init). Corruption-error columns are NaN for the two methods
    that never estimate corruption.
    """
    unknown = set(methods) - set(SWEEP_METHODS)
    if unknown:
        raise ValueError(f"unknown methods: {sorted(unknown)}")
    _require_connected(graph)
    results: list[MethodErrors] = []

    need_qp = {"refined", "init"} & set(methods)
    need_uniform = {"uniform_init", "irls_l12"} & set(methods)

    s_hat = mean_s = median_s = None
    init = None
    if need_qp:
        table = build_cycle_table(graph, _cycle_rng(options.seed),
                                  budget=options.cycle_budget)
        estimate = run_pgd(table, options.pgd)
        s_hat = estimate.s_hat
        mean_s, median_s = corruption_error(s_hat, truth.s_star)
        init = spectral_sync(build_weight_matrix(graph, s_hat,
                                                 exponent=options.gcw_exponent))
    uniform_init = None
    if need_uniform:
        uniform_init = spectral_sync(uniform_weights(graph))

    for method in methods:
        if method == "refined":
            sol = refine_rotations(graph, s_hat, init.rotations, options.refine)
            stats = rotation_error_stats(sol.rotations, truth.rotations)
            results.append(MethodErrors(method, stats.mean_deg, stats.median_deg,
                                        mean_s, median_s))
        elif method == "init":
            stats = rotation_error_stats(init.rotations, truth.rotations)
            results.append(MethodErrors(method, stats.mean_deg, stats.median_deg,
                                        mean_s, median_s))
        elif method == "uniform_init":
            stats = rotation_error_stats(uniform_init.rotations, truth.rotations)
            results.append(MethodErrors(method, stats.mean_deg, stats.median_deg,
                                        float("nan"), float("nan")))
        elif method == "irls_l12":
            cfg = irls_l12_config(max_iters=options.refine.max_iters,
                                  step_tol=options.refine.step_tol,
                                  weight_exponent=options.refine.weight_exponent)
            sol = refine_rotations(graph, np.zeros(graph.n_edges),
                                   uniform_init.rotations, cfg)
            stats = rotation_error_stats(sol.rotations, truth.rotations)
            results.append(MethodErrors(method, stats.mean_deg, stats.median_deg,
                                        float("nan"), float("nan")))
    return results


def sweep_cell(params: UcmParams, options: PipelineOptions,
               methods=("refined",)) -> list[MethodErrors]:
    """Generate one synthetic cell and evaluate the requested methods on it."""
    graph, truth = generate_ucm(params)
    cell_options = PipelineOptions(
        seed=params.seed, pgd=options.pgd, refine=options.refine,
        cycle_budget=options.cycle_budget, gcw_exponent=options.gcw_exponent)
    return evaluate_methods(graph, truth, cell_options, methods)
