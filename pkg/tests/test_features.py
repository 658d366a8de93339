import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import path_graph
from qek.features import (LN2, EnergyDistribution, EnergyHistogram, QuantumEvolutionKernel,
                          ShortestPathKernel, bin_counts, global_binning, interaction_energy,
                          js_divergence, qek_matrix, qek_value, shot_energies, spk_matrix,
                          to_distribution)
from qek.graph_io import Graph


def random_dist(rng, n=100, sparsity=0.5):
    p = rng.random(n) * (rng.random(n) > sparsity)
    if p.sum() == 0:
        p[rng.integers(n)] = 1.0
    return p / p.sum()


def test_interaction_energy_cases():
    pos = [[0, 0], [5, 0], [10, 0]]
    assert interaction_energy("000", pos) == 0
    assert interaction_energy("11", [[0, 0], [6, 0]]) == pytest.approx(5.42e6 / 6**6)
    v = lambda d: 5.42e6 / d**6
    assert interaction_energy("111", pos) == pytest.approx(v(5) + v(5) + v(10))


def test_shot_energies_match_pairwise_sum(rng):
    pos = rng.uniform(0, 30, size=(5, 2))
    bits = rng.integers(0, 2, size=(40, 5))
    expected = [sum(5.42e6 / np.linalg.norm(pos[i] - pos[j]) ** 6
                    for i, j in itertools.combinations(range(5), 2) if b[i] and b[j]) for b in bits]
    np.testing.assert_allclose(shot_energies(bits, pos), expected, rtol=1e-12)


def test_global_binning_support():
    b = global_binning([np.array([0.0, 1, 2]), np.array([3.0, 4])])
    assert (b.e1, b.e2) == (0, 4)
    assert np.diff(b.edges) == pytest.approx(0.04)
    assert len(b.edges) == 101


def test_degenerate_support():
    b = global_binning([np.full(7, 2.5)])
    assert b.degenerate
    d = to_distribution(np.full(7, 2.5), b)
    assert d.probabilities[0] == 1 and d.probabilities[1:].sum() == 0


@settings(max_examples=50, deadline=None)
@given(st.lists(arrays(float, st.integers(1, 30), elements=st.floats(-1e3, 1e3)), min_size=1, max_size=4))
def test_binning_preserves_counts(samples):
    b = global_binning(samples)
    for s in samples:
        counts = bin_counts(s, b.edges)
        assert counts.sum() == len(s)
        if not b.degenerate:
            # brute-force recount: left-closed bins, last bin closed
            idx = np.minimum(np.searchsorted(b.edges, s, side="right") - 1, 99)
            np.testing.assert_array_equal(counts, np.bincount(idx, minlength=100))


def test_identical_values_one_bin():
    edges = np.linspace(0, 1, 101)
    d = to_distribution([0.333] * 9, edges)
    assert d.probabilities.max() == 1.0 and np.count_nonzero(d.probabilities) == 1


def test_uniform_fill():
    edges = np.linspace(0, 100, 101)
    d = to_distribution(np.arange(100) + 0.5, edges)
    np.testing.assert_allclose(d.probabilities, 0.01)


def test_out_of_support_rejected():
    with pytest.raises(ValueError, match="outside"):
        bin_counts([2.0], np.linspace(0, 1, 11))


def test_distribution_record_round_trip(rng):
    s = rng.uniform(0, 5, 200)
    d = to_distribution(s, np.linspace(0, 5, 101), graph_id=4)
    back = EnergyDistribution.from_record(d.to_record())
    np.testing.assert_array_equal(back.probabilities, d.probabilities)
    assert (back.e1, back.e2, back.graph_id) == (0, 5, 4)


def test_js_values():
    assert js_divergence([0.3, 0.7], [0.3, 0.7]) == 0
    assert js_divergence([1, 0], [0, 1]) == pytest.approx(LN2, abs=1e-15)
    # direct KL arithmetic against the mixture M = (3/4, 1/4)
    kl_p = math.log(1 / 0.75)
    kl_q = 0.5 * math.log(0.5 / 0.75) + 0.5 * math.log(0.5 / 0.25)
    expected = 0.5 * (kl_p + kl_q)
    assert js_divergence([1, 0], [0.5, 0.5]) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.2157, abs=1e-4)


def test_js_rejects_unnormalized():
    with pytest.raises(ValueError, match="normalized"):
        js_divergence([0.5, 0.4], [0.5, 0.5])


def test_js_matches_scipy(rng):
    from scipy.spatial.distance import jensenshannon

    for _ in range(20):
        p, q = random_dist(rng), random_dist(rng)
        assert js_divergence(p, q) == pytest.approx(jensenshannon(p, q) ** 2, abs=1e-12)


@pytest.mark.parametrize("mu", [0.5, 1.0, 3.0, 20.0])
def test_qek_extremes(mu):
    assert qek_value([0.2, 0.8], [0.2, 0.8], mu) == 1.0
    assert qek_value([1, 0], [0, 1], mu) == pytest.approx(2.0 ** -mu, rel=1e-15)


def test_qek_matrix_identical():
    np.testing.assert_array_equal(qek_matrix([[0.5, 0.5], [0.5, 0.5]]), np.ones((2, 2)))


def test_qek_matrix_psd_and_consistent(rng):
    dists = [random_dist(rng) for _ in range(30)]
    K = qek_matrix(dists)
    np.testing.assert_allclose(K, K.T)
    assert np.linalg.eigvalsh(K).min() >= -1e-8
    assert K[3, 7] == pytest.approx(qek_value(dists[3], dists[7]), abs=1e-14)


def _floyd(graph):
    n = graph.n_nodes
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0)
    for u, v in graph.edges:
        d[u, v] = d[v, u] = 1
    for k in range(n):
        d = np.minimum(d, d[:, [k]] + d[[k], :])
    return [int(x) for i, j in itertools.combinations(range(n), 2) if np.isfinite(x := d[i, j])]


def _spk_oracle(a, b):
    la, lb = _floyd(a), _floyd(b)
    raw = lambda x, y: sum(p == q for p in x for q in y)
    return raw(la, lb) / math.sqrt(raw(la, la) * raw(lb, lb))


def test_spk_paths():
    K = spk_matrix([path_graph(2), path_graph(2, gid=2), path_graph(3, gid=3)])
    assert K[0, 1] == 1
    assert K[0, 2] == pytest.approx(2 / math.sqrt(5))
    np.testing.assert_array_equal(np.diag(K), 1)


def test_spk_matches_oracle(rng):
    graphs = []
    for gid in range(8):
        n = int(rng.integers(2, 8))
        pairs = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < 0.4]
        graphs.append(Graph(gid, n, tuple(pairs) or ((0, 1),), 1))
    K = spk_matrix(graphs)
    for i, j in itertools.combinations(range(8), 2):
        assert K[i, j] == pytest.approx(_spk_oracle(graphs[i], graphs[j]), abs=1e-12)
    np.testing.assert_allclose(K, K.T)


def test_estimators(rng):
    samples = [rng.normal(i, 1, size=200) for i in range(4)]
    hist = EnergyHistogram().fit(samples)
    P = hist.transform(samples)
    assert P.shape == (4, 100)
    np.testing.assert_allclose(P.sum(axis=1), 1)
    qek = QuantumEvolutionKernel(mu=2.0).fit(P[:3])
    rows = qek.transform(P[3:])
    assert rows.shape == (1, 3)
    assert qek.get_params() == {"mu": 2.0}
    spk = ShortestPathKernel().fit([path_graph(3)])
    assert spk.transform([path_graph(3)])[0, 0] == pytest.approx(1.0)
