"""Simplex QP machinery: projections, objective, gradient, and the PGD loop."""

import itertools

import numpy as np
import pytest

from cyclesync import (
    BeliefState,
    NumericalFailureError,
    PgdConfig,
    UcmParams,
    ViewGraph,
    build_cycle_table,
    generate_ucm,
    gradient,
    ground_truth_for,
    init_beliefs,
    objective,
    project_to_simplex,
    riemannian_project,
    run_pgd,
    sample_haar,
)


def simplex_oracle(v):
    """Exact minimizer of ||p - v|| over the simplex via support enumeration.

    For each candidate support S the KKT point is v_S - (sum(v_S) - 1)/|S|;
    it is optimal iff it is nonnegative on S and the implied multiplier keeps
    the complement inactive. Checking all supports is exact for small m.
    """
    m = len(v)
    best, best_dist = None, np.inf
    for size in range(1, m + 1):
        for support in itertools.combinations(range(m), size):
            s = np.array(support)
            tau = (v[s].sum() - 1.0) / size
            cand = np.zeros(m)
            cand[s] = v[s] - tau
            if cand[s].min() < -1e-12:
                continue
            if ((v - tau)[np.setdiff1d(np.arange(m), s)] > 1e-12).any():
                continue
            dist = np.linalg.norm(cand - v)
            if dist < best_dist:
                best, best_dist = cand, dist
    return best


def triangle_table(d_values):
    """Cycle table of a 3-node graph with prescribed inconsistencies.

    One common neighbor per edge, so each belief vector is the scalar 1 and
    s equals d directly; useful for hand-checkable objective values.
    """
    rng = np.random.default_rng(0)
    rots = sample_haar(rng, 3)
    g = ViewGraph(3, np.array([(0, 1), (0, 2), (1, 2)]), rots)
    table = build_cycle_table(g, np.random.default_rng(0))
    table.d[:] = d_values
    return table


def test_simplex_frozen_examples():
    p = project_to_simplex(np.array([1.2, -0.3]))
    assert np.allclose(p, [1.0, 0.0], atol=1e-15)
    p = project_to_simplex(np.array([0.5, 0.5, 0.5]))
    assert np.allclose(p, [1 / 3, 1 / 3, 1 / 3], atol=1e-15)
    p = project_to_simplex(np.array([2.0, 1.0]))
    assert np.allclose(p, [1.0, 0.0], atol=1e-15)
    # already feasible input is a fixed point
    p = project_to_simplex(np.array([0.2, 0.3, 0.5]))
    assert np.allclose(p, [0.2, 0.3, 0.5], atol=1e-15)


def test_simplex_matches_support_enumeration(rng):
    for _ in range(300):
        m = rng.integers(1, 7)
        v = rng.uniform(-2, 2, size=m)
        p = project_to_simplex(v)
        q = simplex_oracle(v)
        assert abs(p.sum() - 1.0) < 1e-12
        assert p.min() >= 0.0
        assert np.abs(p - q).max() < 1e-10


def test_riemannian_projection_removes_mean():
    g = riemannian_project(np.array([1.0, 0.0]))
    assert np.allclose(g, [0.5, -0.5], atol=1e-15)
    out = riemannian_project(np.array([3.0, 3.0, 3.0]))
    assert np.allclose(out, 0.0, atol=1e-15)


def test_init_beliefs_uniform_and_mean():
    table = triangle_table([0.2, 0.4, 0.0])
    state = init_beliefs(table)
    assert np.allclose(state.p, 1.0)  # singleton segments
    assert np.allclose(state.s, [0.2, 0.4, 0.0])

    g, _ = generate_ucm(UcmParams(12, 0.9, 0.2, 0.1, 0))
    t = build_cycle_table(g, np.random.default_rng(0))
    st = init_beliefs(t)
    counts = t.counts()
    for e in range(t.n_edges):
        seg = st.p[t.indptr[e]:t.indptr[e + 1]]
        assert np.allclose(seg, 1.0 / counts[e])
        assert abs(st.s[e] - t.inconsistencies(e).mean()) < 1e-12


def test_triangle_objective_and_gradient_hand_values():
    # three edges, one cycle each: f = 2(x + y + z); each gradient entry is
    # the cross sum plus twice the own inconsistency
    x, y, z = 0.5, 0.5, 0.0
    table = triangle_table([x, y, z])
    state = init_beliefs(table)
    assert abs(objective(state, table) - 2.0) < 1e-14
    grad = gradient(state, table)
    assert abs(grad[0] - (y + z + 2 * x)) < 1e-14   # = 1.5
    assert abs(grad[1] - (x + z + 2 * y)) < 1e-14
    assert abs(grad[2] - (x + y + 2 * z)) < 1e-14


def test_gradient_matches_finite_differences(rng):
    g, _ = generate_ucm(UcmParams(14, 0.8, 0.3, 0.1, 5))
    table = build_cycle_table(g, np.random.default_rng(5))
    state = init_beliefs(table)
    grad = gradient(state, table)
    h = 1e-6

    def f(p):
        s = np.bincount(table.pair_edge, weights=p * table.d,
                        minlength=table.n_edges)
        return objective(BeliefState(p, s), table)

    for u in rng.choice(table.n_pairs, size=min(150, table.n_pairs),
                        replace=False):
        plus, minus = state.p.copy(), state.p.copy()
        plus[u] += h
        minus[u] -= h
        fd = (f(plus) - f(minus)) / (2 * h)
        assert abs(fd - grad[u]) <= 1e-6 * max(1.0, abs(fd), abs(grad[u]))


def test_pgd_iterates_stay_feasible_and_bounded():
    g, t = generate_ucm(UcmParams(20, 0.7, 0.3, 0.05, 2))
    gt = ground_truth_for(g, t.rotations)
    table = build_cycle_table(g, np.random.default_rng(2))
    seen = []

    def check(it, state, obj):
        counts = table.counts()
        sums = np.bincount(table.pair_edge, weights=state.p,
                           minlength=table.n_edges)
        assert np.abs(sums - 1.0).max() < 1e-9
        assert state.p.min() >= 0.0
        assert state.s.min() >= -1e-15 and state.s.max() <= 1.0 + 1e-12
        # cumulative error is bounded by the belief-weighted true cross sums
        v_star = gt.s_star[table.edge_ik] + gt.s_star[table.edge_jk]
        bound = float(state.p @ v_star)
        lhs = np.abs(state.s - gt.s_star).sum()
        assert lhs <= bound + 1e-8
        seen.append(obj)

    run_pgd(table, PgdConfig(step_size=0.01, max_iters=40), on_iterate=check)
    assert len(seen) == 40


def test_pgd_objective_decreases_overall():
    g, _ = generate_ucm(UcmParams(30, 0.5, 0.3, 0.0, 3))
    table = build_cycle_table(g, np.random.default_rng(3))
    est = run_pgd(table, PgdConfig(step_size=0.01, max_iters=100,
                                   record_trace=True))
    assert est.objective_trace[-1] < est.objective_trace[0]
    assert est.iterations == 100
    assert est.final_objective == est.objective_trace[-1]


def test_pgd_trace_off_by_default():
    table = triangle_table([0.1, 0.2, 0.3])
    est = run_pgd(table, PgdConfig(max_iters=5))
    assert est.objective_trace is None


def test_pgd_recovers_noiseless_triangle_exactly():
    # clean K3: d = 0 on every cycle, so s stays 0 and f stays 0
    table = triangle_table([0.0, 0.0, 0.0])
    est = run_pgd(table, PgdConfig(max_iters=10))
    assert est.final_objective == 0.0
    assert np.all(est.s_hat == 0.0)


def test_pgd_config_validation():
    with pytest.raises(Exception):
        PgdConfig(step_size=0.0).validate()
    with pytest.raises(Exception):
        PgdConfig(max_iters=0).validate()


def test_pgd_flags_non_finite_inputs():
    table = triangle_table([0.1, 0.2, 0.3])
    table.d[0] = np.nan
    with pytest.raises(NumericalFailureError) as exc:
        run_pgd(table, PgdConfig(max_iters=3))
    assert exc.value.iteration is not None
