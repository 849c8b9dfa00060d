"""Uniform-corruption generator: determinism, statistics, labeling."""

import numpy as np
import pytest

from cyclesync import (
    GenerationError,
    InputFormatError,
    UcmParams,
    generate_ucm,
    instance_manifest,
    ucm_sweep,
)


def test_params_validate():
    with pytest.raises(InputFormatError):
        UcmParams(1, 0.5, 0.0, 0.0, 0).validate()
    with pytest.raises(InputFormatError):
        UcmParams(10, 0.0, 0.0, 0.0, 0).validate()
    with pytest.raises(InputFormatError):
        UcmParams(10, 0.5, 1.0, 0.0, 0).validate()
    with pytest.raises(InputFormatError):
        UcmParams(10, 0.5, 0.0, -0.1, 0).validate()
    UcmParams(10, 0.5, 0.99, 0.0, 0).validate()


def test_same_params_same_instance():
    a_graph, a_truth = generate_ucm(UcmParams(40, 0.5, 0.3, 0.1, 7))
    b_graph, b_truth = generate_ucm(UcmParams(40, 0.5, 0.3, 0.1, 7))
    assert np.array_equal(a_graph.edges, b_graph.edges)
    assert np.array_equal(a_graph.rotations, b_graph.rotations)
    assert np.array_equal(a_truth.rotations, b_truth.rotations)
    assert np.array_equal(a_truth.labels, b_truth.labels)


def test_distinct_seeds_and_params_decorrelate():
    base = generate_ucm(UcmParams(40, 0.5, 0.3, 0.1, 7))[0]
    other_seed = generate_ucm(UcmParams(40, 0.5, 0.3, 0.1, 8))[0]
    assert not np.array_equal(base.rotations, other_seed.rotations)
    # changing q must not silently reuse the same graph stream draws
    other_q = generate_ucm(UcmParams(40, 0.5, 0.4, 0.1, 7))[0]
    assert not np.array_equal(base.edges, other_q.edges) or \
        not np.array_equal(base.rotations, other_q.rotations)


def test_edge_count_near_expectation():
    # E|E| = C(100,2) * 0.5 = 2475, sd = sqrt(4950 * 0.25) ~ 35.2
    g, _ = generate_ucm(UcmParams(100, 0.5, 0.0, 0.0, 3))
    assert abs(g.n_edges - 2475) < 4 * 35.2


def test_graph_is_connected():
    for seed in range(5):
        g, _ = generate_ucm(UcmParams(60, 0.2, 0.5, 0.1, seed))
        assert g.is_connected()


def test_noiseless_labels_match_levels_exactly():
    # sigma=0: clean measurements are bitwise equal to the truth ratio,
    # so s* > 0 holds exactly on corrupted edges and s* == 0 elsewhere
    g, t = generate_ucm(UcmParams(50, 0.5, 0.4, 0.0, 1))
    assert t.labels is not None
    assert np.array_equal(t.s_star > 0, t.labels)
    assert np.all(t.s_star[t.labels] > 1e-4)


def test_corrupted_fraction_tracks_q():
    g, t = generate_ucm(UcmParams(100, 0.5, 0.3, 0.0, 2))
    frac = t.labels.mean()
    assert abs(frac - 0.3) < 4 * np.sqrt(0.3 * 0.7 / g.n_edges)


def test_full_corruption_matches_haar_distance():
    # q=1 makes every edge Haar: mean s* -> E[theta/pi] = 1/2 + 2/pi^2
    gs = [generate_ucm(UcmParams(60, 0.5, 0.999999, 0.0, s)) for s in range(4)]
    s = np.concatenate([t.s_star for _, t in gs])
    assert abs(s.mean() - (0.5 + 2.0 / np.pi**2)) < 0.01


def test_noise_shows_up_in_clean_edges():
    g, t = generate_ucm(UcmParams(50, 0.5, 0.2, 0.1, 4))
    clean = ~t.labels
    assert t.s_star[clean].min() > 0.0
    assert t.s_star[clean].mean() < 0.2


def test_impossible_connectivity_raises():
    # p so small that 20 attempts at a connected draw must fail
    with pytest.raises(GenerationError):
        generate_ucm(UcmParams(200, 0.001, 0.0, 0.0, 0),
                     strict_connectivity=True)


def test_manifest_contents():
    params = UcmParams(30, 0.5, 0.25, 0.05, 9)
    g, t = generate_ucm(params)
    m = instance_manifest(params, g, t)
    assert m["n"] == 30 and m["p"] == 0.5 and m["seed"] == 9
    assert m["num_edges"] == g.n_edges
    assert m["num_corrupted"] == int(t.labels.sum())


def test_sweep_iterates_grid():
    cells = list(ucm_sweep(20, 0.6, [0.0, 0.2], [0.0], [0, 1]))
    assert len(cells) == 4
    qs = sorted({c[0].q for c in cells})
    assert qs == [0.0, 0.2]
