"""Command-line interface: generate | run | sweep | eval | plot-data.

Exit codes: 0 success, 2 input error, 4 edges without any 3-cycle,
3 solver/numerical failure. Failures print a one-line JSON object to stderr.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import math
import os
import sys

import numpy as np

from .corruption import PgdConfig
from .errors import (CycleSyncError, DegenerateInputError, GenerationError,
                     InputFormatError, NumericalFailureError,
                     SolverFailureError, UncoveredEdgeError)
from .metrics import EvalReport, corruption_error, rotation_error_stats
from .pipeline import (SWEEP_METHODS, PipelineOptions, run_pipeline, sweep_cell)
from .refine import RefineConfig
from .synthetic import UcmParams, generate_ucm, instance_manifest
from .viewgraph import (ViewGraph, ground_truth_for, read_rotations,
                        read_view_graph, write_rotations, write_view_graph)

EXIT_INPUT = 2
EXIT_SOLVER = 3
EXIT_UNCOVERED = 4

_PROFILES = {
    "synthetic": {"step": 0.01, "pgd_iters": 100},
    "large": {"step": 1.0, "pgd_iters": 30},
}


def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.17g}"


def _atomic_write(path: str, text: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(path: str, payload: dict) -> None:
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _parse_ucm_spec(spec: str) -> dict:
    fields = {}
    for item in spec.split(","):
        if "=" not in item:
            raise InputFormatError(f"bad --ucm item {item!r}, expected key=value")
        key, value = item.split("=", 1)
        fields[key.strip()] = value.strip()
    expected = {"n", "p", "q", "sigma"}
    if set(fields) != expected:
        raise InputFormatError(
            f"--ucm must define exactly {sorted(expected)}, got {sorted(fields)}"
        )
    try:
        return {"n": int(fields["n"]), "p": float(fields["p"]),
                "q": float(fields["q"]), "sigma": float(fields["sigma"])}
    except ValueError as exc:
        raise InputFormatError(f"bad --ucm value: {exc}") from None


def _parse_grid(spec: str) -> list[float]:
    """Either comma-separated values or an inclusive start:step:stop range."""
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise InputFormatError(f"bad grid {spec!r}, expected start:step:stop")
        start, step, stop = (float(p) for p in parts)
        if step <= 0:
            raise InputFormatError("grid step must be positive")
        count = int(round((stop - start) / step)) + 1
        vals = [round(start + k * step, 10) for k in range(count)]
        return [v for v in vals if v <= stop + 1e-9]
    try:
        return [round(float(p), 10) for p in spec.split(",") if p.strip() != ""]
    except ValueError as exc:
        raise InputFormatError(f"bad grid {spec!r}: {exc}") from None


def _pipeline_options(args) -> PipelineOptions:
    profile = _PROFILES[args.profile]
    step = args.step if args.step is not None else profile["step"]
    iters = args.pgd_iters if args.pgd_iters is not None else profile["pgd_iters"]
    return PipelineOptions(
        seed=args.seed,
        pgd=PgdConfig(step_size=step, max_iters=iters),
        refine=RefineConfig(max_iters=args.refine_iters, step_tol=args.refine_tol),
        cycle_budget=args.cycle_budget,
        gcw_exponent=args.weight_exponent,
        prune_uncovered=getattr(args, "prune_uncovered", False),
        trace=getattr(args, "trace", False),
    )


def _load_instance(args):
    if args.ucm and args.input:
        raise InputFormatError("--ucm and --input are mutually exclusive")
    if args.ucm:
        spec = _parse_ucm_spec(args.ucm)
        params = UcmParams(spec["n"], spec["p"], spec["q"], spec["sigma"], args.seed)
        graph, truth = generate_ucm(params)
        return graph, truth, params
    if args.input:
        graph = read_view_graph(args.input)
        truth = None
        if args.truth:
            truth = ground_truth_for(graph, read_rotations(args.truth))
        return graph, truth, None
    raise InputFormatError("one of --ucm or --input is required")


def _shat_csv(graph: ViewGraph, s_hat: np.ndarray, s_star=None) -> str:
    lines = ["edge_i,edge_j,s_hat" + (",s_star" if s_star is not None else "")]
    for e, (i, j) in enumerate(graph.edges):
        row = f"{i},{j},{_fmt(s_hat[e])}"
        if s_star is not None:
            row += f",{_fmt(s_star[e])}"
        lines.append(row)
    return "\n".join(lines) + "\n"


def _read_shat_csv(path: str, graph: ViewGraph) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"edge_i", "edge_j", "s_hat"} <= set(reader.fieldnames):
            raise InputFormatError(f"{path}: expected header edge_i,edge_j,s_hat")
        rows = {}
        for rec in reader:
            try:
                key = (int(rec["edge_i"]), int(rec["edge_j"]))
                rows[key] = float(rec["s_hat"])
            except (TypeError, ValueError) as exc:
                raise InputFormatError(f"{path}: bad row {rec}: {exc}") from None
    out = np.empty(graph.n_edges)
    for e, (i, j) in enumerate(graph.edges):
        key = (int(i), int(j))
        if key not in rows:
            raise InputFormatError(f"{path}: missing edge {key}")
        out[e] = rows[key]
    return out


def _cmd_generate(args) -> int:
    spec = _parse_ucm_spec(args.ucm)
    params = UcmParams(spec["n"], spec["p"], spec["q"], spec["sigma"], args.seed)
    graph, truth = generate_ucm(params, strict_connectivity=args.strict_connectivity)
    os.makedirs(args.out, exist_ok=True)
    write_view_graph(os.path.join(args.out, "graph.txt"), graph)
    write_rotations(os.path.join(args.out, "truth.txt"), truth.rotations)
    _write_json(os.path.join(args.out, "manifest.json"),
                instance_manifest(params, graph, truth))
    print(f"wrote {graph.n_edges} edges over {graph.n_nodes} nodes to {args.out}")
    return 0


def _cmd_run(args) -> int:
    graph, truth, params = _load_instance(args)
    options = _pipeline_options(args)
    result = run_pipeline(graph, truth, options)
    os.makedirs(args.out, exist_ok=True)

    s_star = truth.s_star if truth is not None else None
    _atomic_write(os.path.join(args.out, "s_hat.csv"),
                  _shat_csv(result.graph, result.estimate.s_hat, s_star))
    write_rotations(os.path.join(args.out, "rotations.txt"),
                    result.solution.rotations)
    if params is not None:
        _write_json(os.path.join(args.out, "manifest.json"),
                    instance_manifest(params, graph, truth))
    payload = {
        "config": {
            "seed": args.seed,
            "step_size": options.pgd.step_size,
            "pgd_iters": options.pgd.max_iters,
            "refine_iters": options.refine.max_iters,
            "refine_tol": options.refine.step_tol,
            "cycle_budget": result.table.budget,
            "weight_exponent": options.gcw_exponent,
            "profile": args.profile,
        },
        "pgd": {
            "iterations": result.estimate.iterations,
            "final_objective": result.estimate.final_objective,
        },
        "spectral": {
            "iterations": result.init.iterations,
            "rayleigh_residual": result.init.rayleigh_residual,
        },
        "refine": {
            "iterations": result.solution.iterations,
            "converged": result.solution.converged,
            "flagged_edges": result.solution.flagged_edges.tolist(),
        },
        "pruned_edges": result.pruned_edges.tolist(),
        "report": result.report.to_dict(),
    }
    _write_json(os.path.join(args.out, "report.json"), payload)

    if options.trace:
        rows = ["iteration,objective,mean_abs_err,median_abs_err"]
        rows += [f"{r.iteration},{_fmt(r.objective)},{_fmt(r.mean_abs_err)},"
                 f"{_fmt(r.median_abs_err)}" for r in result.pgd_trace]
        _atomic_write(os.path.join(args.out, "pgd_trace.csv"),
                      "\n".join(rows) + "\n")
        rows = ["iteration,max_step_norm,mean_residual,truncated_count"]
        rows += [f"{r.iteration},{_fmt(r.max_step_norm)},{_fmt(r.mean_residual)},"
                 f"{r.truncated_count}" for r in result.solution.trace]
        _atomic_write(os.path.join(args.out, "refine_trace.csv"),
                      "\n".join(rows) + "\n")

    rep = result.report
    if rep.final_mean_err_deg is not None:
        print(f"corruption err mean/median: {rep.mean_corruption_err:.6f}"
              f"/{rep.median_corruption_err:.6f}")
        print(f"init err deg mean/median: {rep.init_mean_err_deg:.4f}"
              f"/{rep.init_median_err_deg:.4f}")
        print(f"final err deg mean/median: {rep.final_mean_err_deg:.4f}"
              f"/{rep.final_median_err_deg:.4f}")
    else:
        print(f"solved {result.graph.n_nodes} nodes / {result.graph.n_edges} edges "
              f"(no ground truth given)")
    return 0


def _sweep_worker(task):
    (n, p, q, sigma, seed, methods, step, pgd_iters, refine_iters, refine_tol,
     cycle_budget, weight_exponent) = task
    params = UcmParams(n, p, q, sigma, seed)
    options = PipelineOptions(
        seed=seed,
        pgd=PgdConfig(step_size=step, max_iters=pgd_iters),
        refine=RefineConfig(max_iters=refine_iters, step_tol=refine_tol),
        cycle_budget=cycle_budget, gcw_exponent=weight_exponent)
    rows = []
    for me in sweep_cell(params, options, methods):
        rows.append((q, sigma, seed, me.method, me.mean_err_deg,
                     me.median_err_deg, me.mean_s_err, me.median_s_err))
    return rows


def _cmd_sweep(args) -> int:
    qs = _parse_grid(args.q)
    sigmas = _parse_grid(args.sigma)
    seeds = list(range(args.seeds))
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    unknown = set(methods) - set(SWEEP_METHODS)
    if unknown:
        raise InputFormatError(
            f"unknown methods {sorted(unknown)}; choose from {list(SWEEP_METHODS)}"
        )
    profile = _PROFILES[args.profile]
    step = args.step if args.step is not None else profile["step"]
    iters = args.pgd_iters if args.pgd_iters is not None else profile["pgd_iters"]

    tasks = [(args.n, args.p, q, sigma, seed, methods, step, iters,
              args.refine_iters, args.refine_tol, args.cycle_budget,
              args.weight_exponent)
             for q in qs for sigma in sigmas for seed in seeds]
    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            all_rows = [row for rows in pool.map(_sweep_worker, tasks)
                        for row in rows]
    else:
        all_rows = [row for task in tasks for row in _sweep_worker(task)]

    method_order = {m: k for k, m in enumerate(methods)}
    all_rows.sort(key=lambda r: (r[0], r[1], r[2], method_order[r[3]]))
    lines = ["q,sigma,seed,method,mean_err_deg,median_err_deg,mean_s_err,median_s_err"]
    for q, sigma, seed, method, a, b, c, d in all_rows:
        lines.append(f"{_fmt(q)},{_fmt(sigma)},{seed},{method},"
                     f"{_fmt(a)},{_fmt(b)},{_fmt(c)},{_fmt(d)}")
    os.makedirs(args.out, exist_ok=True)
    _atomic_write(os.path.join(args.out, "sweep.csv"), "\n".join(lines) + "\n")
    print(f"wrote {len(all_rows)} rows to {os.path.join(args.out, 'sweep.csv')}")
    return 0


def _cmd_eval(args) -> int:
    estimate = read_rotations(args.estimates)
    truth_rots = read_rotations(args.truth)
    if estimate.shape != truth_rots.shape:
        raise InputFormatError(
            f"estimate has {len(estimate)} nodes, truth has {len(truth_rots)}"
        )
    stats = rotation_error_stats(estimate, truth_rots)
    report = EvalReport(len(estimate), 0,
                        final_mean_err_deg=stats.mean_deg,
                        final_median_err_deg=stats.median_deg)
    if bool(args.graph) != bool(args.shat):
        raise InputFormatError("--graph and --shat must be given together")
    if args.graph:
        graph = read_view_graph(args.graph)
        truth = ground_truth_for(graph, truth_rots)
        s_hat = _read_shat_csv(args.shat, graph)
        mean_s, median_s = corruption_error(s_hat, truth.s_star)
        report = EvalReport(len(estimate), graph.n_edges,
                            mean_corruption_err=mean_s,
                            median_corruption_err=median_s,
                            final_mean_err_deg=stats.mean_deg,
                            final_median_err_deg=stats.median_deg)
    _write_json(args.out, report.to_dict())
    if args.per_node_csv:
        lines = ["node,err_deg"]
        lines += [f"{i},{_fmt(e)}" for i, e in enumerate(stats.per_node_deg)]
        _atomic_write(args.per_node_csv, "\n".join(lines) + "\n")
    print(f"mean/median rotation error: {stats.mean_deg:.4f}/{stats.median_deg:.4f} deg")
    return 0


def _cmd_plot_data(args) -> int:
    qs = _parse_grid(args.q)
    sigmas = _parse_grid(args.sigma)
    seeds = list(range(args.seeds))
    with open(args.sweep, newline="") as fh:
        reader = csv.DictReader(fh)
        needed = {"q", "sigma", "seed", "method", "mean_err_deg", "median_err_deg"}
        if reader.fieldnames is None or not needed <= set(reader.fieldnames):
            raise InputFormatError(f"{args.sweep}: missing columns {sorted(needed)}")
        rows = list(reader)

    values: dict = {}
    seen = set()
    for rec in rows:
        q = round(float(rec["q"]), 10)
        sigma = round(float(rec["sigma"]), 10)
        seed = int(rec["seed"])
        seen.add((q, sigma, seed))
        for stat in ("mean_err_deg", "median_err_deg"):
            values.setdefault((stat, sigma, q, rec["method"]), []).append(
                float(rec[stat]))

    missing = [(q, sigma, seed) for q in qs for sigma in sigmas for seed in seeds
               if (q, sigma, seed) not in seen]
    if missing:
        cells = "; ".join(f"q={q:g},sigma={s:g},seed={seed}"
                          for q, s, seed in missing)
        raise InputFormatError(
            f"{args.sweep}: {len(missing)} missing grid cells: {cells}"
        )

    os.makedirs(args.out, exist_ok=True)
    written = []
    for stat, name in (("mean_err_deg", "mean"), ("median_err_deg", "median")):
        for sigma in sigmas:
            methods = sorted({m for (st, sg, _, m) in values
                              if st == stat and sg == sigma})
            lines = ["q,method,value,log10_value"]
            for q in qs:
                for method in methods:
                    vals = values.get((stat, sigma, q, method))
                    if not vals:
                        continue
                    mean_val = sum(vals) / len(vals)
                    lines.append(f"{_fmt(q)},{method},{_fmt(mean_val)},"
                                 f"{_fmt(math.log10(mean_val)) if mean_val > 0 else '-inf'}")
            path = os.path.join(args.out, f"fig_{name}_err_sigma{sigma:g}.csv")
            _atomic_write(path, "\n".join(lines) + "\n")
            written.append(path)
    print("wrote " + ", ".join(written))
    return 0


def _add_solver_flags(sp):
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--profile", choices=sorted(_PROFILES), default="synthetic",
                    help="hyperparameter preset (step size / iteration count)")
    sp.add_argument("--step", type=float, default=None,
                    help="override the profile's gradient step size")
    sp.add_argument("--pgd-iters", type=int, default=None,
                    help="override the profile's iteration count")
    sp.add_argument("--refine-iters", type=int, default=100)
    sp.add_argument("--refine-tol", type=float, default=1e-3)
    sp.add_argument("--cycle-budget", type=int, default=None,
                    help="per-edge cycle cap (default: quarter of median, min 30)")
    sp.add_argument("--weight-exponent", type=float, default=1.5)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cyclesync",
        description="Rotation averaging guided by cycle-consistency corruption estimates")
    sub = parser.add_subparsers(dest="mode", required=True)

    sp = sub.add_parser("generate", help="write a synthetic instance to disk")
    sp.add_argument("--ucm", required=True,
                    help="instance spec, e.g. n=100,p=0.5,q=0.5,sigma=0")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--strict-connectivity", action="store_true")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=_cmd_generate)

    sp = sub.add_parser("run", help="full pipeline on one instance")
    sp.add_argument("--ucm", help="generate the instance, e.g. n=100,p=0.5,q=0.5,sigma=0")
    sp.add_argument("--input", help="EDGE file with measurements")
    sp.add_argument("--truth", help="NODE file with reference rotations")
    sp.add_argument("--prune-uncovered", action="store_true",
                    help="drop edges with no 3-cycle instead of failing")
    sp.add_argument("--trace", action="store_true",
                    help="write per-iteration trace CSVs")
    sp.add_argument("--out", required=True)
    _add_solver_flags(sp)
    sp.set_defaults(func=_cmd_run)

    sp = sub.add_parser("sweep", help="grid of synthetic instances")
    sp.add_argument("--n", type=int, default=100)
    sp.add_argument("--p", type=float, default=0.5)
    sp.add_argument("--q", default="0:0.1:0.8")
    sp.add_argument("--sigma", default="0,0.1")
    sp.add_argument("--seeds", type=int, default=10,
                    help="number of seeds per cell (0..N-1)")
    sp.add_argument("--methods", default="refined",
                    help=f"comma list from {','.join(SWEEP_METHODS)}")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--out", required=True)
    _add_solver_flags(sp)
    sp.set_defaults(func=_cmd_sweep)

    sp = sub.add_parser("eval", help="score rotation estimates against a truth file")
    sp.add_argument("--estimates", required=True, help="NODE file to score")
    sp.add_argument("--truth", required=True, help="NODE reference file")
    sp.add_argument("--graph", help="EDGE file (with --shat, adds corruption errors)")
    sp.add_argument("--shat", help="s_hat.csv from a run")
    sp.add_argument("--per-node-csv", help="also write per-node errors here")
    sp.add_argument("--out", required=True, help="report JSON path")
    sp.set_defaults(func=_cmd_eval)

    sp = sub.add_parser("plot-data", help="tidy per-figure CSVs from sweep.csv")
    sp.add_argument("--sweep", required=True)
    sp.add_argument("--q", default="0:0.1:0.8")
    sp.add_argument("--sigma", default="0,0.1")
    sp.add_argument("--seeds", type=int, default=10)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=_cmd_plot_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UncoveredEdgeError as exc:
        return _fail(exc, EXIT_UNCOVERED)
    except (SolverFailureError, NumericalFailureError, DegenerateInputError) as exc:
        return _fail(exc, EXIT_SOLVER)
    except (InputFormatError, GenerationError, OSError, ValueError) as exc:
        return _fail(exc, EXIT_INPUT)
    except CycleSyncError as exc:  # anything package-specific but unmapped
        return _fail(exc, EXIT_INPUT)


def _fail(exc: Exception, code: int) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(payload), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
