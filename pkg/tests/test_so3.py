"""Rotation-group primitives: exp/log, the scaled metric, projection, sampling."""

import numpy as np
import pytest

from conftest import random_rotation, rotation_about
from cyclesync import (
    DegenerateInputError,
    angular_distance,
    angular_distance_many,
    hat,
    is_rotation,
    project_to_so3,
    project_to_so3_many,
    rotation_angle,
    rotation_angle_many,
    sample_haar,
    so3_exp,
    so3_exp_many,
    so3_log,
    so3_log_many,
    vee,
    wigner_perturb,
    wigner_perturb_many,
)

RZ_90 = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
RZ_180 = np.array([[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]])


def test_hat_vee_round_trip(rng):
    v = rng.standard_normal((20, 3))
    for row in v:
        m = hat(row)
        assert np.allclose(m, -m.T)
        assert np.allclose(vee(m), row)


def test_exp_of_quarter_turn_axis():
    assert np.allclose(so3_exp(np.array([0.0, 0.0, np.pi / 2])), RZ_90, atol=1e-15)


def test_exp_log_round_trip_below_cut_locus(rng):
    # angles up to pi - 1e-3; the principal log must invert exp to 1e-9
    axes = rng.standard_normal((500, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    angles = rng.uniform(1e-12, np.pi - 1e-3, size=500)
    v = axes * angles[:, None]
    r = so3_exp_many(v)
    back = so3_log_many(r)
    assert np.abs(back - v).max() < 1e-9


def test_log_single_matches_batch(rng):
    rots = np.array([random_rotation(rng) for _ in range(50)])
    batch = so3_log_many(rots)
    single = np.array([so3_log(r) for r in rots])
    assert np.allclose(batch, single, atol=1e-14)


def test_log_near_pi_recovers_axis():
    rng = np.random.default_rng(7)
    for _ in range(200):
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        angle = np.pi - 10.0 ** rng.uniform(-12, -5)
        r = rotation_about(axis, angle)
        v = so3_log(r)
        assert abs(np.linalg.norm(v) - angle) < 1e-7
        # direction agrees up to the sign ambiguity vanishing at pi
        cos = abs(v @ axis) / np.linalg.norm(v)
        assert cos > 1.0 - 1e-7


def test_log_at_exact_pi_is_valid_preimage():
    for axis in ([0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.6, -0.8, 0.0]):
        r = rotation_about(axis, np.pi)
        v = so3_log(r)
        assert abs(np.linalg.norm(v) - np.pi) < 1e-9
        assert np.abs(so3_exp(v) - r).max() < 1e-9


def test_rotation_angle_frozen_values():
    assert rotation_angle(np.eye(3)) == 0.0
    assert abs(rotation_angle(RZ_90) - np.pi / 2) < 1e-15
    assert abs(rotation_angle(RZ_180) - np.pi) < 1e-12


def test_scaled_distance_frozen_values():
    # d(I, Rz(pi)) = 1 and d(I, Rz(pi/2)) = 1/2 pin the 1/pi scaling
    assert abs(angular_distance(np.eye(3), RZ_180) - 1.0) < 1e-12
    assert abs(angular_distance(np.eye(3), RZ_90) - 0.5) < 1e-15


def test_distance_metric_axioms(rng):
    rots = [random_rotation(rng) for _ in range(8)]
    for a in rots:
        assert angular_distance(a, a) < 1e-12
        for b in rots:
            d_ab = angular_distance(a, b)
            assert abs(d_ab - angular_distance(b, a)) < 1e-10
            assert -1e-15 <= d_ab <= 1.0 + 1e-15
            for c in rots:
                assert d_ab <= angular_distance(a, c) + angular_distance(c, b) + 1e-10


def test_distance_bi_invariance(rng):
    for _ in range(30):
        a, b, g = (random_rotation(rng) for _ in range(3))
        d = angular_distance(a, b)
        assert abs(angular_distance(g @ a, g @ b) - d) < 1e-10
        assert abs(angular_distance(a @ g, b @ g) - d) < 1e-10


def test_angle_batch_matches_scalar(rng):
    rots = np.array([random_rotation(rng) for _ in range(40)])
    assert np.allclose(rotation_angle_many(rots),
                       [rotation_angle(r) for r in rots], atol=1e-14)
    other = np.array([random_rotation(rng) for _ in range(40)])
    assert np.allclose(angular_distance_many(rots, other),
                       [angular_distance(a, b) for a, b in zip(rots, other)],
                       atol=1e-14)


def test_angle_stable_for_tiny_and_near_pi_angles():
    # atan2 form keeps relative accuracy where acos(trace) loses digits
    for angle in (1e-9, 1e-7, np.pi - 1e-7, np.pi - 1e-9):
        r = rotation_about([0.0, 1.0, 0.0], angle)
        assert abs(rotation_angle(r) - angle) < 1e-12


def test_project_to_so3_fixes_noise(rng):
    for _ in range(50):
        r = random_rotation(rng)
        noisy = r + 1e-8 * rng.standard_normal((3, 3))
        p = project_to_so3(noisy)
        assert is_rotation(p)
        assert np.abs(p - r).max() < 1e-7


def test_project_to_so3_is_nearest_among_candidates(rng):
    # the projection must beat a dense sample of rotations in Frobenius norm
    m = rng.standard_normal((3, 3))
    p = project_to_so3(m)
    assert is_rotation(p)
    best = np.linalg.norm(m - p)
    for _ in range(2000):
        q = sample_haar(rng)
        assert np.linalg.norm(m - q) >= best - 1e-9


def test_project_to_so3_flips_reflections():
    refl = np.diag([1.0, 1.0, -1.0])
    p = project_to_so3(refl.copy())
    assert is_rotation(p)


def test_project_to_so3_rejects_rank_deficient():
    with pytest.raises(DegenerateInputError):
        project_to_so3(np.zeros((3, 3)))
    with pytest.raises(DegenerateInputError):
        project_to_so3(np.outer([1.0, 0.0, 0.0], [1.0, 0.0, 0.0]))


def test_project_batch_matches_scalar(rng):
    ms = rng.standard_normal((30, 3, 3))
    batch = project_to_so3_many(ms)
    for k in range(30):
        assert np.allclose(batch[k], project_to_so3(ms[k]), atol=1e-12)


def test_haar_sample_shape_and_validity(rng):
    one = sample_haar(rng)
    assert one.shape == (3, 3) and is_rotation(one)
    many = sample_haar(rng, 100)
    assert many.shape == (100, 3, 3)
    assert all(is_rotation(r) for r in many)


def test_haar_mean_trace_is_zero():
    # E[tr R] = 0 under the invariant measure; 1e5 draws, Var(tr) = 1
    rng = np.random.default_rng(42)
    traces = np.trace(sample_haar(rng, 100_000), axis1=1, axis2=2)
    assert abs(traces.mean()) < 0.02


def test_haar_mean_scaled_angle():
    # E[theta/pi] = 1/2 + 2/pi^2 for the Haar angle density (1-cos)/pi
    rng = np.random.default_rng(43)
    d = rotation_angle_many(sample_haar(rng, 100_000)) / np.pi
    expect = 0.5 + 2.0 / np.pi**2
    assert abs(d.mean() - expect) < 0.005


def test_wigner_zero_sigma_is_exact_copy(rng):
    r = random_rotation(rng)
    assert wigner_perturb(r, 0.0, rng) is not r
    assert np.array_equal(wigner_perturb(r, 0.0, rng), r)
    rots = np.array([random_rotation(rng) for _ in range(5)])
    assert np.array_equal(wigner_perturb_many(rots, 0.0, rng), rots)


def test_wigner_perturbation_grows_with_sigma():
    rng = np.random.default_rng(9)
    rots = np.array([random_rotation(rng) for _ in range(400)])
    mean_shift = []
    for sigma in (0.05, 0.1, 0.2):
        pert = wigner_perturb_many(rots, sigma, np.random.default_rng(10))
        assert all(is_rotation(r) for r in pert)
        mean_shift.append(angular_distance_many(pert, rots).mean())
    assert mean_shift[0] < mean_shift[1] < mean_shift[2]
    assert mean_shift[0] > 0.0


def test_is_rotation_rejects_non_rotations():
    assert not is_rotation(np.diag([1.0, 1.0, -1.0]))
    assert not is_rotation(2.0 * np.eye(3))
    assert is_rotation(np.eye(3))
