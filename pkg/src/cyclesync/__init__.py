"""Rotation averaging on SO(3) guided by cycle-consistency corruption estimates.

The pipeline: enumerate sampled 3-cycles per edge, estimate per-edge
corruption levels with a simplex-constrained quadratic program solved by
projected gradient descent, initialize absolute rotations spectrally with
corruption-driven weights, then refine them by reweighted tangent-space
least squares guided by the same estimates.
"""

from .corruption import (BeliefState, CorruptionEstimate, PgdConfig,
                         edge_gradient, gradient, init_beliefs, objective,
                         project_to_simplex, riemannian_project, run_pgd)
from .errors import (CycleSyncError, DegenerateInputError, GenerationError,
                     InputFormatError, NumericalFailureError,
                     SolverFailureError, UncoveredEdgeError)
from .metrics import (EvalReport, RotationErrorStats, align_rotations,
                      corruption_error, rotation_error_stats)
from .pipeline import (MethodErrors, PipelineOptions, PipelineResult,
                       evaluate_methods, run_pipeline, sweep_cell)
from .refine import (RefineConfig, SyncSolution, irls_l12_config,
                     refine_rotations, solve_tangent_ls,
                     tangent_residual_edges)
from .so3 import (angular_distance, angular_distance_many, hat, is_rotation,
                  project_to_so3, project_to_so3_many, rotation_angle,
                  rotation_angle_many, sample_haar, so3_exp, so3_exp_many,
                  so3_log, so3_log_many, vee, wigner_perturb,
                  wigner_perturb_many)
from .spectral import (SpectralResult, WeightedConnection,
                       build_weight_matrix, connection_matrix, spectral_sync,
                       uniform_weights)
from .synthetic import UcmParams, generate_ucm, instance_manifest, ucm_sweep
from .viewgraph import (CycleTable, GroundTruth, ViewGraph, build_cycle_table,
                        cycle_inconsistencies, ground_truth_for,
                        make_view_graph, prune_uncovered_edges,
                        read_rotations, read_view_graph, resolve_cycle_budget,
                        stability_bound_check, stability_bound_violation,
                        write_rotations, write_view_graph)

__version__ = "0.1.0"
