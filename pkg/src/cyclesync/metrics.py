"""Evaluation against ground truth: alignment, rotation errors, corruption errors.

Rotation errors are geodesic angles in degrees after a single global chordal
alignment of the estimate to the reference frame; corruption errors are plain
absolute deviations of the per-edge estimates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, InputFormatError
from .so3 import angular_distance_many, project_to_so3


def align_rotations(estimate: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Global rotation G minimizing sum_i ||R_i G - R_i*||_F^2.

    The minimizer is the SO(3) projection of sum_i R_i^T R_i*.

    Raises:
        DegenerateInputError: if the accumulated matrix is numerically of
            rank <= 1, where the optimal alignment is not unique.
    """
    estimate = np.asarray(estimate, dtype=float).reshape(-1, 3, 3)
    reference = np.asarray(reference, dtype=float).reshape(-1, 3, 3)
    if estimate.shape != reference.shape:
        raise InputFormatError("estimate and reference shapes differ")
    acc = np.einsum("nij,nik->jk", estimate, reference)
    return project_to_so3(acc)


@dataclass
class RotationErrorStats:
    mean_deg: float
    median_deg: float
    per_node_deg: np.ndarray
    alignment: np.ndarray


def rotation_error_stats(estimate: np.ndarray, reference: np.ndarray
                         ) -> RotationErrorStats:
    """Per-node geodesic errors in degrees after global chordal alignment."""
    g = align_rotations(estimate, reference)
    aligned = np.asarray(estimate, dtype=float).reshape(-1, 3, 3) @ g
    per_node = 180.0 * angular_distance_many(aligned, reference)
    return RotationErrorStats(float(per_node.mean()), float(np.median(per_node)),
                              per_node, g)


def corruption_error(s_hat: np.ndarray, s_star: np.ndarray) -> tuple[float, float]:
    """(mean, median) absolute deviation of corruption estimates."""
    s_hat = np.asarray(s_hat, dtype=float)
    s_star = np.asarray(s_star, dtype=float)
    if s_hat.shape != s_star.shape:
        raise InputFormatError(
            f"estimate/truth length mismatch: {s_hat.shape} vs {s_star.shape}"
        )
    err = np.abs(s_hat - s_star)
    return float(err.mean()), float(np.median(err))


@dataclass
class EvalReport:
    """Everything the CLI reports for one solved instance."""

    num_nodes: int
    num_edges: int
    mean_corruption_err: float | None = None
    median_corruption_err: float | None = None
    init_mean_err_deg: float | None = None
    init_median_err_deg: float | None = None
    final_mean_err_deg: float | None = None
    final_median_err_deg: float | None = None

    def to_dict(self) -> dict:
        return {
            "num_nodes": self.num_nodes,
            "num_edges": self.num_edges,
            "corruption": None if self.mean_corruption_err is None else {
                "mean_abs_err": self.mean_corruption_err,
                "median_abs_err": self.median_corruption_err,
            },
            "init_errors_deg": None if self.init_mean_err_deg is None else {
                "mean": self.init_mean_err_deg,
                "median": self.init_median_err_deg,
            },
            "final_errors_deg": None if self.final_mean_err_deg is None else {
                "mean": self.final_mean_err_deg,
                "median": self.final_median_err_deg,
            },
        }
