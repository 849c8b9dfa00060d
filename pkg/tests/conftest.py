"""Shared test helpers and the acceptance-criteria summary hook."""

import numpy as np
import pytest

# Populated by tests/test_acceptance.py; printed once at the end of the run so
# every criterion gets a single PASS/FAIL line regardless of pytest verbosity.
_criteria: dict[int, tuple[str, bool, str]] = {}


def record_criterion(num: int, label: str, passed: bool, detail: str = "") -> None:
    _criteria[num] = (label, passed, detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        label, passed, detail = _criteria[num]
        line = f"[{num:02d}] {label}: {'PASS' if passed else 'FAIL'}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Rotation from a random axis-angle, independent of the library's sampler."""
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, np.pi)
    return rotation_about(axis, angle)


def rotation_about(axis, angle: float) -> np.ndarray:
    """Rodrigues formula, written out directly so tests do not lean on so3_exp."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    k = np.array([
        [0.0, -axis[2], axis[1]],
        [axis[2], 0.0, -axis[0]],
        [-axis[1], axis[0], 0.0],
    ])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
