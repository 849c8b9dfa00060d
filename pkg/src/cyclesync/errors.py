"""Exception types shared across the package.

The CLI maps these onto process exit codes, so library code should raise the
most specific class that applies rather than bare ValueError for anything a
caller could plausibly want to catch.
"""

from __future__ import annotations


class CycleSyncError(Exception):
    """Base class for all package-specific failures."""


class InputFormatError(CycleSyncError):
    """Malformed graph/truth file or invalid parameter combination."""


class UncoveredEdgeError(CycleSyncError):
    """One or more edges participate in no 3-cycle, so their corruption
    level is unidentifiable from cycle information."""

    def __init__(self, edges):
        self.edges = [(int(i), int(j)) for i, j in edges]
        preview = ", ".join(f"({i},{j})" for i, j in self.edges[:8])
        more = "" if len(self.edges) <= 8 else f", ... ({len(self.edges)} total)"
        super().__init__(f"edges without any 3-cycle: {preview}{more}")


class DegenerateInputError(CycleSyncError):
    """Numerically rank-deficient input where a unique answer does not exist
    (e.g. projecting a rank<=1 matrix onto SO(3), or aligning collapsed
    rotation sets)."""


class SolverFailureError(CycleSyncError):
    """An iterative solver failed to reach its tolerance within its cap."""

    def __init__(self, message, residual=None):
        self.residual = residual
        if residual is not None:
            message = f"{message} (residual {residual:.3e})"
        super().__init__(message)


class NumericalFailureError(CycleSyncError):
    """Non-finite values appeared mid-iteration; carries the iteration index."""

    def __init__(self, message, iteration=None):
        self.iteration = iteration
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)


class GenerationError(CycleSyncError):
    """Synthetic instance generation failed (e.g. graph stayed disconnected)."""
