import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import complete_edges, make_graph
from oracles import csfp_degree_pmf, csfp_lambda
from sirg.generator import generate_finite
from sirg.kernels import ConstantKernel, Csfp, Girg, Threshold
from sirg.neighborhoods import NeighborhoodHistogram
from sirg.stats import (UNREACHABLE, DegreeHistogram, RunningMoments, StatsError,
                        clustering_from_samples, clustering_function, clustering_report,
                        critical_constant, degree_histogram, degree_tail_expectation,
                        distance_threshold_fraction, global_clustering,
                        limit_clustering_estimates, local_clustering, mixed_poisson_pmf,
                        mixing_parameter, root_clustering_samples, tv_distance,
                        typical_distances, wedge_triangle_counts)
from sirg.weights import Constant, Pareto, Uniform01

K4_MINUS = [e for e in complete_edges(4) if e != (2, 3)]


# degrees

def test_degree_histogram_examples():
    h = degree_histogram(make_graph(3, complete_edges(3)))
    assert h.counts[2] == 3 and h.mean == 2.0
    assert degree_histogram(make_graph(4, [])).counts[0] == 4
    star = degree_histogram(make_graph(4, [(0, 1), (0, 2), (0, 3)]))
    assert star.counts[3] == 1 and star.counts[1] == 3 and star.mean == 1.5
    assert star.second_factorial_moment == pytest.approx(6 / 4)


def test_degree_histogram_merge():
    a = DegreeHistogram.from_degrees([0, 1, 1])
    b = DegreeHistogram.from_degrees([3])
    m = a.merge(b)
    assert m.counts.tolist() == [1, 2, 0, 1] and m.n == 4


def test_running_moments_merge():
    x = np.arange(10.0)
    a, b, c = RunningMoments(), RunningMoments(), RunningMoments()
    a.add(x[:4])
    b.add(x[4:])
    c.add(x)
    m = a.merge(b)
    assert m.mean == pytest.approx(c.mean) and m.stderr == pytest.approx(c.stderr)
    assert m.stderr == pytest.approx(x.std(ddof=1) / math.sqrt(10))


def test_degree_tail_expectation_examples():
    tri = make_graph(3, complete_edges(3))
    assert degree_tail_expectation([tri], [1, 2, 0]) == {1: 2.0, 2: 0.0, 0: 2.0}
    assert degree_tail_expectation(np.array([1, 2, 3]), [5]) == {5: 0.0}


# mixing parameter and degree law

def test_mixing_parameter_threshold():
    assert mixing_parameter(Threshold(r0=1.3), 1.0, Pareto(2.0)).value == pytest.approx(2.6, rel=1e-9)


def test_mixing_parameter_girg_constant_weights():
    m = mixing_parameter(Girg(alpha_g=2.0, d=1), 1.0, Constant(1.0), mean_weight=1.0)
    assert m.value == pytest.approx(4.0, rel=1e-6)
    assert m.tail_bound <= 1e-6 * m.value


def test_mixing_parameter_zero_kernel():
    assert mixing_parameter(ConstantKernel(p=0.0), 1.0, Constant(1.0), alpha=5.0).value == 0.0


def test_mixing_parameter_in_two_dimensions():
    # threshold in d=2: the area of the disk
    assert mixing_parameter(Threshold(r0=1.0), 1.0, Constant(1.0), d=2).value == pytest.approx(math.pi, rel=1e-8)


def test_mixing_parameter_csfp_matches_closed_form():
    rng = np.random.default_rng(0)
    for w0 in (1.0, 5.0, 40.0):
        m = mixing_parameter(Csfp(lam=1.0, alpha=3.0), w0, Pareto(2.0), rng=rng, samples=20_000)
        assert m.value == pytest.approx(float(csfp_lambda(w0, 1.0, 3.0, 2.0)), rel=0.01)


def test_mixing_parameter_refuses_divergent_integral():
    with pytest.raises(StatsError):
        mixing_parameter(Csfp(lam=1.0, alpha=0.8), 1.0, Constant(1.0))
    with pytest.raises(StatsError):
        mixing_parameter(Csfp(alpha=3.0), 1.0, Pareto(2.0))  # inner MC without an rng


def test_mixed_poisson_threshold_is_exact_poisson():
    res = mixed_poisson_pmf(Threshold(r0=1.0), Pareto(2.0), np.arange(15), 50, np.random.default_rng(0))
    from scipy import stats
    assert np.allclose(res.pmf, stats.poisson.pmf(np.arange(15), 2.0), atol=1e-8)
    assert res.pmf[0] == pytest.approx(math.exp(-2), abs=1e-8)


def test_mixed_poisson_zero_kernel():
    res = mixed_poisson_pmf(ConstantKernel(p=0.0), Constant(1.0), [0, 1], 10, np.random.default_rng(0),
                            alpha=5.0)
    assert res.pmf.tolist() == [1.0, 0.0]


def test_mixed_poisson_csfp_matches_quadrature_oracle():
    res = mixed_poisson_pmf(Csfp(lam=1.0, alpha=3.0), Pareto(2.0), np.arange(20), 20_000,
                            np.random.default_rng(1), samples=5000)
    exact = csfp_degree_pmf(19, 1.0, 3.0, 2.0)
    assert np.all(np.abs(res.pmf - exact) <= 4 * res.stderr + 2e-3)
    assert res.pmf.sum() <= 1.0 + 1e-9


def test_mixed_poisson_p0_agrees_with_limit_ball():
    from sirg.generator import sample_limit_ball
    kernel, law = Csfp(lam=1.0, alpha=3.0), Pareto(2.0)
    res = mixed_poisson_pmf(kernel, law, [0], 5000, np.random.default_rng(2), samples=5000)
    rng = np.random.default_rng(3)
    N = 3000
    iso = np.array([sample_limit_ball(kernel, law, 60.0, 1, rng).degrees()[0] == 0 for _ in range(N)])
    joint = math.hypot(res.stderr[0], iso.std(ddof=1) / math.sqrt(N))
    assert abs(iso.mean() - res.pmf[0]) <= 3 * joint


# clustering

def test_wedges_and_triangles():
    assert wedge_triangle_counts(make_graph(3, complete_edges(3))) == (6, 6)
    assert wedge_triangle_counts(make_graph(3, [(0, 1), (1, 2)])) == (2, 0)
    assert wedge_triangle_counts(make_graph(4, complete_edges(4))) == (24, 24)


def test_global_clustering_examples():
    assert global_clustering(make_graph(3, complete_edges(3))) == 1.0
    assert global_clustering(make_graph(3, [(0, 1), (1, 2)])) == 0.0
    assert global_clustering(make_graph(4, K4_MINUS)) == pytest.approx(0.75)
    assert global_clustering(make_graph(3, [])) == 0.0


def test_local_clustering_examples():
    assert local_clustering(make_graph(3, complete_edges(3))) == 1.0
    assert clustering_function(make_graph(3, complete_edges(3)), 2) == 1.0
    assert local_clustering(make_graph(4, [(0, 1), (0, 2), (0, 3)])) == 0.0
    # vertices of degree 3 close 2 of 3 neighbor pairs, those of degree 2 close their only pair
    assert local_clustering(make_graph(4, K4_MINUS)) == pytest.approx((2 / 3 + 2 / 3 + 1 + 1) / 4)
    assert clustering_function(make_graph(4, K4_MINUS), 0) == 0.0
    assert clustering_function(make_graph(4, K4_MINUS), 7) == 0.0


def test_clustering_function_on_disjoint_triangles():
    edges = complete_edges(3) + [(a + 3, b + 3) for a, b in complete_edges(3)]
    assert clustering_function(make_graph(6, edges), 2) == 1.0


def brute_triangles(n, edges):
    es = set(edges)
    return sum(1 for a in range(n) for b in range(a + 1, n) for c in range(b + 1, n)
               if (a, b) in es and (a, c) in es and (b, c) in es)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 12), st.floats(0.05, 0.95), st.integers(0, 2 ** 32 - 1))
def test_clustering_invariants(n, p, seed):
    rng = np.random.default_rng(seed)
    edges = [(i, j) for i, j in complete_edges(n) if rng.random() < p]
    G = make_graph(n, edges)
    W, T = wedge_triangle_counts(G)
    deg = G.degrees()
    assert W == int(np.sum(deg * (deg - 1)))
    assert T == 6 * brute_triangles(n, edges)
    assert T <= W
    rep = clustering_report(G, ks=(2, 3, 4))
    for v in [rep.global_cc, rep.local_cc, *rep.by_degree.values()]:
        assert 0.0 <= v <= 1.0
    perm = rng.permutation(n)
    H = make_graph(n, [(int(perm[a]), int(perm[b])) for a, b in edges])
    assert wedge_triangle_counts(H) == (W, T)


def test_limit_clustering_zero_kernel():
    lim = limit_clustering_estimates(ConstantKernel(p=0.0), Constant(1.0), 3.0, 50, 1,
                                     np.random.default_rng(0))
    assert lim.delta.mean == 0 and lim.wedge.mean == 0 and lim.local.mean == 0
    assert lim.global_ratio.mean == 0


def test_limit_clustering_threshold_quadrature_targets():
    lim = limit_clustering_estimates(Threshold(r0=1.0), Constant(1.0), 3.0, 20_000, 1,
                                     np.random.default_rng(1))
    assert abs(lim.delta.mean - 3.0) <= 3 * lim.delta.stderr
    assert abs(lim.wedge.mean - 4.0) <= 3 * lim.wedge.stderr
    assert abs(lim.global_ratio.mean - 0.75) <= 3 * lim.global_ratio.stderr


def test_clustering_from_samples_flags_rare_degrees():
    D = np.array([2, 2, 3, 0, 1])
    T = np.array([2, 0, 6, 0, 0])
    lim = clustering_from_samples(D, T, ks=(2, 3))
    assert lim.by_degree[2].value == pytest.approx(0.5)
    assert lim.by_degree[3].value == pytest.approx(1.0)
    assert lim.by_degree[2].low_confidence


def test_root_clustering_counts_twice_triangles():
    D, T = root_clustering_samples(ConstantKernel(p=1.0), Constant(1.0), 1.0, 20, 1,
                                   np.random.default_rng(2))
    # complete limit ball: the root closes every pair of neighbors
    assert np.array_equal(T, D * (D - 1))


# distances

def test_distances_on_complete_and_empty_graphs():
    rng = np.random.default_rng(0)
    assert np.all(typical_distances(make_graph(6, complete_edges(6)), 50, rng) == 1)
    assert np.all(typical_distances(make_graph(6, []), 50, rng) == UNREACHABLE)


def test_distances_on_path():
    G = make_graph(4, [(0, 1), (1, 2), (2, 3)])
    d = typical_distances(G, 500, np.random.default_rng(1))
    assert set(d.tolist()) <= {1, 2, 3}
    assert np.mean(d == 3) == pytest.approx(2 / 12, abs=0.05)


def test_distances_satisfy_triangle_inequality():
    from scipy.sparse.csgraph import shortest_path
    G = generate_finite(300, 1, Csfp(lam=2.0, alpha=2.5), Pareto(2.0), np.random.default_rng(2))
    D = shortest_path(G.to_csr(), unweighted=True, directed=False)
    rng = np.random.default_rng(3)
    for _ in range(500):
        a, b, c = rng.integers(0, 300, 3)
        assert D[a, c] <= D[a, b] + D[b, c]
        assert D[a, a] == 0


def test_critical_constant():
    assert critical_constant(2.0, 1.0) == pytest.approx(1 / math.log(2))
    assert critical_constant(3.0, 1.0) == pytest.approx(2.466, abs=1e-3)
    with pytest.raises(StatsError):
        critical_constant(1.0, 1.0)


def test_threshold_fraction_examples():
    assert distance_threshold_fraction([UNREACHABLE] * 5, 100, 1.0, 3.0, 1).fraction == 1.0
    ex = distance_threshold_fraction([3] * 10, 10_000, 1.0, 3.0, 1)
    assert ex.threshold == pytest.approx(math.log(math.log(10_000)))
    assert ex.fraction == 1.0 and ex.finite_mean == 3.0
    with pytest.raises(StatsError):
        distance_threshold_fraction([1], 10, 1.0, 3.0, 1)


# total variation

def test_tv_examples():
    assert tv_distance({"a": 0.5, "b": 0.5}, {"a": 0.5, "b": 0.5}) == 0.0
    assert tv_distance({"a": 1.0}, {"b": 1.0}) == 1.0
    assert tv_distance({"a": 0.5, "b": 0.5}, {"a": 1.0}) == 0.5


def test_tv_requires_matching_tags():
    with pytest.raises(StatsError):
        tv_distance(NeighborhoodHistogram(1, "graph"), NeighborhoodHistogram(2, "graph"))
    with pytest.raises(StatsError):
        tv_distance(NeighborhoodHistogram(1, "graph"), {0: 1.0})


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_tv_is_a_metric(seed):
    rng = np.random.default_rng(seed)
    p, q, r = (rng.dirichlet(np.ones(6)) for _ in range(3))
    assert tv_distance(p, q) == pytest.approx(tv_distance(q, p))
    assert tv_distance(p, r) <= tv_distance(p, q) + tv_distance(q, r) + 1e-12
    assert 0.0 <= tv_distance(p, q) <= 1.0


def test_tv_of_degree_histogram_against_uniform_law():
    h = DegreeHistogram.from_degrees([0, 1, 1, 2])
    assert tv_distance(h, [0.25, 0.5, 0.25]) == pytest.approx(0.0)
    assert Uniform01().mean() == 0.5
