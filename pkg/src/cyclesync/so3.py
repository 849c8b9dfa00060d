"""SO(3) primitives: scaled bi-invariant metric, exp/log maps, projection, sampling.

Everything here is pure; random sampling takes an explicit numpy Generator
owned by the caller, so the module is safe to use from worker processes.
Rotations are plain (3, 3) float64 arrays, tangent vectors plain (3,) arrays.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateInputError

_SMALL_ANGLE = 1e-8
# Below this distance from pi the sin-based log loses the axis; switch to the
# symmetric-part extraction, which is stable exactly where the other is not.
_NEAR_PI = 1e-4


def hat(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix of a 3-vector."""
    v = np.asarray(v, dtype=float).reshape(3)
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def vee(m: np.ndarray) -> np.ndarray:
    """Inverse of hat: extract the 3-vector of a skew-symmetric matrix."""
    m = np.asarray(m, dtype=float)
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def rotation_angle(r: np.ndarray) -> float:
    """Rotation angle in [0, pi].

    Uses atan2 of (sin, cos) recovered from the matrix instead of
    arccos(trace), which keeps absolute error near machine precision for
    angles close to pi where arccos alone is ill-conditioned.
    """
    r = np.asarray(r, dtype=float)
    c = (np.trace(r) - 1.0) / 2.0
    w = vee(r - r.T) / 2.0  # sin(theta) * axis
    return float(np.arctan2(np.linalg.norm(w), c))


def angular_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Bi-invariant distance between two rotations, scaled to [0, 1].

    Equals arccos((trace(a b^T) - 1) / 2) / pi, the geodesic angle over pi.
    """
    return rotation_angle(np.asarray(a) @ np.asarray(b).T) / np.pi


def rotation_angle_many(r: np.ndarray) -> np.ndarray:
    """Rotation angles in [0, pi] for a stack of rotations, shape (..., 3, 3)."""
    r = np.asarray(r, dtype=float)
    c = (np.trace(r, axis1=-2, axis2=-1) - 1.0) / 2.0
    w0 = (r[..., 2, 1] - r[..., 1, 2]) / 2.0
    w1 = (r[..., 0, 2] - r[..., 2, 0]) / 2.0
    w2 = (r[..., 1, 0] - r[..., 0, 1]) / 2.0
    s = np.sqrt(w0 * w0 + w1 * w1 + w2 * w2)
    return np.arctan2(s, c)


def angular_distance_many(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Scaled bi-invariant distance for stacks of rotations, shape (..., 3, 3)."""
    prod = np.asarray(a) @ np.swapaxes(np.asarray(b), -1, -2)
    return rotation_angle_many(prod) / np.pi


def so3_exp(v: np.ndarray) -> np.ndarray:
    """Rodrigues exponential of a tangent 3-vector.

    The sin(t)/t and (1-cos(t))/t^2 coefficients switch to Taylor series for
    tiny angles, so the map is smooth through zero.
    """
    v = np.asarray(v, dtype=float).reshape(3)
    t2 = float(v @ v)
    t = np.sqrt(t2)
    if t < _SMALL_ANGLE:
        a = 1.0 - t2 / 6.0
        b = 0.5 - t2 / 24.0
    else:
        a = np.sin(t) / t
        b = (1.0 - np.cos(t)) / t2
    k = hat(v)
    return np.eye(3) + a * k + b * (k @ k)


def so3_exp_many(v: np.ndarray) -> np.ndarray:
    """Vectorized Rodrigues exponential for an (n, 3) stack of tangent vectors."""
    v = np.asarray(v, dtype=float).reshape(-1, 3)
    t2 = np.einsum("ij,ij->i", v, v)
    t = np.sqrt(t2)
    small = t < _SMALL_ANGLE
    ts = np.where(small, 1.0, t)  # placeholder to avoid 0/0; overwritten below
    a = np.where(small, 1.0 - t2 / 6.0, np.sin(ts) / ts)
    b = np.where(small, 0.5 - t2 / 24.0, (1.0 - np.cos(ts)) / np.where(small, 1.0, t2))
    k = np.zeros((len(v), 3, 3))
    k[:, 0, 1] = -v[:, 2]
    k[:, 0, 2] = v[:, 1]
    k[:, 1, 0] = v[:, 2]
    k[:, 1, 2] = -v[:, 0]
    k[:, 2, 0] = -v[:, 1]
    k[:, 2, 1] = v[:, 0]
    return np.eye(3) + a[:, None, None] * k + b[:, None, None] * (k @ k)


def _log_near_pi(r: np.ndarray, theta: float, sin_axis: np.ndarray) -> np.ndarray:
    """Principal log for angles within _NEAR_PI of pi.

    The symmetric part of r equals cos(t) I + (1 - cos(t)) a a^T, so the axis
    outer product can be recovered with a well-conditioned division by
    (1 - cos(t)) ~ 2. The sign of the axis is taken from the skew part while
    it carries information; at pi exactly (both signs valid) the component of
    largest magnitude is made positive so the choice is deterministic.
    """
    c = (np.trace(r) - 1.0) / 2.0
    sym = (r + r.T) / 2.0
    outer = (sym - c * np.eye(3)) / (1.0 - c)
    idx = int(np.argmax(np.diag(outer)))
    axis = outer[:, idx] / np.sqrt(outer[idx, idx])
    axis = axis / np.linalg.norm(axis)
    sign_info = float(sin_axis @ axis)
    if abs(sign_info) > 1e-12:
        if sign_info < 0.0:
            axis = -axis
    else:
        j = int(np.argmax(np.abs(axis)))
        if axis[j] < 0.0:
            axis = -axis
    return theta * axis


def so3_log(r: np.ndarray) -> np.ndarray:
    """Principal logarithm of a rotation as a tangent 3-vector, norm <= pi."""
    r = np.asarray(r, dtype=float)
    c = (np.trace(r) - 1.0) / 2.0
    w = vee(r - r.T) / 2.0  # sin(theta) * axis
    s = float(np.linalg.norm(w))
    theta = float(np.arctan2(s, c))
    if theta < _SMALL_ANGLE:
        return w * (1.0 + theta * theta / 6.0)
    if np.pi - theta < _NEAR_PI:
        return _log_near_pi(r, theta, w)
    return w * (theta / s)


def so3_log_many(r: np.ndarray) -> np.ndarray:
    """Vectorized principal log for an (n, 3, 3) stack of rotations."""
    r = np.asarray(r, dtype=float).reshape(-1, 3, 3)
    c = (np.trace(r, axis1=-2, axis2=-1) - 1.0) / 2.0
    w = np.stack([
        (r[:, 2, 1] - r[:, 1, 2]) / 2.0,
        (r[:, 0, 2] - r[:, 2, 0]) / 2.0,
        (r[:, 1, 0] - r[:, 0, 1]) / 2.0,
    ], axis=1)
    s = np.linalg.norm(w, axis=1)
    theta = np.arctan2(s, c)
    small = theta < _SMALL_ANGLE
    near_pi = (np.pi - theta) < _NEAR_PI
    mid = ~(small | near_pi)
    out = np.empty_like(w)
    out[small] = w[small] * (1.0 + theta[small, None] ** 2 / 6.0)
    out[mid] = w[mid] * (theta[mid] / s[mid])[:, None]
    for i in np.flatnonzero(near_pi):
        out[i] = _log_near_pi(r[i], float(theta[i]), w[i])
    return out


def project_to_so3(m: np.ndarray) -> np.ndarray:
    """Nearest rotation in Frobenius norm via SVD with determinant correction.

    Raises:
        DegenerateInputError: if the input is numerically of rank <= 1, where
            the nearest rotation is not unique.
    """
    m = np.asarray(m, dtype=float)
    u, sing, vt = np.linalg.svd(m)
    if sing[1] <= 1e-12 * max(1.0, sing[0]):
        raise DegenerateInputError(
            f"projection target is numerically rank<=1 (singular values {sing})"
        )
    d = np.sign(np.linalg.det(u @ vt))
    return (u * np.array([1.0, 1.0, d])) @ vt


def project_to_so3_many(m: np.ndarray) -> np.ndarray:
    """Blockwise nearest-rotation projection for an (n, 3, 3) stack."""
    m = np.asarray(m, dtype=float).reshape(-1, 3, 3)
    u, sing, vt = np.linalg.svd(m)
    if np.any(sing[:, 1] <= 1e-12 * np.maximum(1.0, sing[:, 0])):
        bad = np.flatnonzero(sing[:, 1] <= 1e-12 * np.maximum(1.0, sing[:, 0]))
        raise DegenerateInputError(
            f"{bad.size} projection targets are numerically rank<=1 (first at index {bad[0]})"
        )
    d = np.sign(np.linalg.det(u @ vt))
    u = u.copy()
    u[:, :, 2] *= d[:, None]
    return u @ vt


def sample_haar(rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Haar-uniform rotations from normalized 4-variate Gaussian quaternions.

    Args:
        rng: generator supplying the 4 iid normals per sample.
        size: number of samples; None returns a single (3, 3) matrix.

    Returns:
        (3, 3) array if size is None, else (size, 3, 3).
    """
    n = 1 if size is None else int(size)
    q = rng.standard_normal((n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    r = np.empty((n, 3, 3))
    r[:, 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    r[:, 0, 1] = 2.0 * (x * y - z * w)
    r[:, 0, 2] = 2.0 * (x * z + y * w)
    r[:, 1, 0] = 2.0 * (x * y + z * w)
    r[:, 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    r[:, 1, 2] = 2.0 * (y * z - x * w)
    r[:, 2, 0] = 2.0 * (x * z - y * w)
    r[:, 2, 1] = 2.0 * (y * z + x * w)
    r[:, 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return r[0] if size is None else r


def wigner_perturb(r: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Project r + sigma * W back onto SO(3), W a 3x3 iid standard normal matrix.

    sigma = 0 returns r unchanged (no generator draw), so noiseless
    measurements stay bitwise equal to the ground-truth relative rotation.
    """
    r = np.asarray(r, dtype=float)
    if sigma == 0.0:
        return r.copy()
    return project_to_so3(r + sigma * rng.standard_normal((3, 3)))


def wigner_perturb_many(r: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Vectorized wigner_perturb for an (n, 3, 3) stack of rotations."""
    r = np.asarray(r, dtype=float).reshape(-1, 3, 3)
    if sigma == 0.0:
        return r.copy()
    return project_to_so3_many(r + sigma * rng.standard_normal(r.shape))


def is_rotation(m: np.ndarray, tol: float = 1e-9) -> bool:
    """True if m is orthogonal with determinant +1 within tol."""
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        return False
    return (
        np.abs(m @ m.T - np.eye(3)).max() <= tol
        and abs(np.linalg.det(m) - 1.0) <= tol
    )
