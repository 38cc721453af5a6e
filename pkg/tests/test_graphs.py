import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coevo.graphs import (
    BUILTIN_PATTERNS,
    C3,
    K2,
    P3,
    VERTEX,
    Graph,
    Multigraphon,
    MultiplexGraph,
    StepGraphon,
    cut_norm_estimate,
    empirical_graphon,
    empirical_multigraphon,
    exclusive_decomposition,
    hom_density_graph,
    hom_density_graphon,
    hom_density_multigraphon,
    hom_density_multiplex,
    layer_intersection,
    limit_multigraphon_density,
    pattern_multiplex,
    scaled_lambda2,
)
from coevo.kernels import constant_kernel, joint_presence_probability, logistic_kernel
from coevo.meanfield import ReferenceMeasure
from coevo.rng import RngStream


def random_graph(rng, n, p=0.5):
    a = np.triu(rng.random((n, n)) < p, 1)
    return Graph.from_adjacency(a | a.T)


def random_multiplex(rng, n, layers=2, p=0.5):
    a = np.triu(rng.random((layers, n, n)) < p, 1)
    return MultiplexGraph.from_adjacency(a | np.swapaxes(a, 1, 2))


def brute_hom(H_edges, k, adj_for_edge, n):
    count = 0
    for phi in itertools.product(range(n), repeat=k):
        if all(adj_for_edge(e)[phi[e[0]], phi[e[1]]] for e in H_edges):
            count += 1
    return count / n**k


def brute_cut(D):
    n = D.shape[0]
    best = 0.0
    for S in itertools.product((0, 1), repeat=n):
        for T in itertools.product((0, 1), repeat=n):
            best = max(best, abs(np.array(S) @ D @ np.array(T)))
    return best / n**2


TRIANGLE = Graph(3, [(0, 1), (1, 2), (0, 2)])
EXAMPLE = MultiplexGraph(3, [[(0, 1), (0, 2)], [(0, 1), (1, 2)]])


class TestGraphTypes:
    def test_diagonal_stripped(self):
        g = Graph.from_adjacency(np.ones((4, 4), dtype=bool))
        assert not g.adjacency.diagonal().any()
        assert len(g.edges) == 6

    def test_rejects_bad_edges(self):
        with pytest.raises(ValueError):
            Graph(3, [(0, 0)])
        with pytest.raises(ValueError):
            Graph(3, [(0, 3)])
        with pytest.raises(ValueError):
            Graph.from_adjacency(np.triu(np.ones((3, 3), dtype=bool)))

    def test_step_graphon_validation(self):
        with pytest.raises(ValueError):
            StepGraphon(np.array([[0.0, 1.0], [0.5, 0.0]]))
        with pytest.raises(ValueError):
            StepGraphon(np.array([[1.5]]))

    def test_step_graphon_pointwise(self):
        W = StepGraphon(np.array([[0.1, 0.2], [0.2, 0.3]]))
        assert W(0.25, 0.75) == 0.2
        assert W(0.5, 0.5) == 0.1
        assert W(1.0, 1.0) == 0.3


class TestLayers:
    def test_intersection(self):
        assert layer_intersection(EXAMPLE, {0, 1}).edges == {(0, 1)}
        assert layer_intersection(EXAMPLE, {1}).edges == {(0, 1), (1, 2)}
        with pytest.raises(ValueError):
            layer_intersection(EXAMPLE, set())
        with pytest.raises(ValueError):
            layer_intersection(EXAMPLE, {2})

    def test_identical_layers(self):
        M = MultiplexGraph(4, [[(0, 1), (2, 3)]] * 3)
        assert layer_intersection(M, {0, 1, 2}).edges == {(0, 1), (2, 3)}

    def test_exclusive_decomposition_example(self):
        cells = exclusive_decomposition(EXAMPLE)
        assert cells == {frozenset({0, 1}): {(0, 1)}, frozenset({0}): {(0, 2)},
                         frozenset({1}): {(1, 2)}}

    def test_single_layer_decomposition(self):
        M = MultiplexGraph(4, [[(0, 1), (1, 3)]])
        assert exclusive_decomposition(M) == {frozenset({0}): {(0, 1), (1, 3)}}


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_decomposition_partitions_union(n, L, seed):
    M = random_multiplex(np.random.default_rng(seed), n, L)
    cells = exclusive_decomposition(M)
    union = set().union(*M.layers)
    seen = set()
    for S, edges in cells.items():
        assert not (seen & edges)
        seen |= edges
        for s in range(L):
            assert (edges <= M.layers[s]) == (s in S) or not edges
    assert seen == union


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 10), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_multigraphon_monotone(n, L, seed):
    W = empirical_multigraphon(random_multiplex(np.random.default_rng(seed), n, L))
    subsets = list(W.subsets())
    for S, S2 in itertools.combinations(subsets, 2):
        joint = W.component(S | S2).block_values
        assert np.all(joint <= np.minimum(W.component(S).block_values,
                                          W.component(S2).block_values))


class TestGraphDensities:
    def test_vertex_pattern(self):
        assert hom_density_graph(VERTEX, TRIANGLE) == 1.0
        assert hom_density_graph(VERTEX, Graph(5)) == 1.0

    def test_edge_in_triangle(self):
        assert hom_density_graph(K2, TRIANGLE) == pytest.approx(2 / 3, abs=1e-15)
        assert hom_density_graph(K2, TRIANGLE, "enumerate") == pytest.approx(2 / 3, abs=1e-15)

    @pytest.mark.parametrize("n", [3, 4, 7])
    def test_triangle_in_complete_graph(self, n):
        Kn = Graph.from_adjacency(np.ones((n, n), dtype=bool))
        expect = n * (n - 1) * (n - 2) / n**3
        assert hom_density_graph(C3, Kn) == pytest.approx(expect, abs=1e-15)
        assert hom_density_graph(C3, Kn, "enumerate") == pytest.approx(expect, abs=1e-15)

    def test_enumeration_against_brute_force(self):
        rng = np.random.default_rng(0)
        star = Graph(4, [(0, 1), (0, 2), (0, 3)])
        c4 = Graph(4, [(0, 1), (1, 2), (2, 3), (0, 3)])
        for _ in range(10):
            G = random_graph(rng, rng.integers(2, 7))
            for H in (*BUILTIN_PATTERNS.values(), star, c4, Graph(3, [(0, 1)])):
                expect = brute_hom(H.edges, H.vertex_count, lambda e: G.adjacency, G.vertex_count)
                assert hom_density_graph(H, G) == pytest.approx(expect, abs=1e-15)

    def test_pattern_too_large(self):
        with pytest.raises(ValueError):
            hom_density_graph(Graph(6, [(0, 1)]), TRIANGLE)


class TestGraphonDensities:
    def test_constant_graphon(self):
        W = StepGraphon.constant(0.3, 4)
        for H in BUILTIN_PATTERNS.values():
            assert hom_density_graphon(H, W) == pytest.approx(0.3 ** len(H.edges), abs=1e-15)

    def test_bipartite_blocks(self):
        W = StepGraphon(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert hom_density_graphon(K2, W) == 0.5
        assert hom_density_graphon(C3, W) == 0.0

    def test_empirical_graphon_of_triangle(self):
        W = empirical_graphon(TRIANGLE)
        np.testing.assert_array_equal(W.block_values, 1 - np.eye(3))
        np.testing.assert_array_equal(empirical_graphon(Graph(4)).block_values, np.zeros((4, 4)))

    def test_graph_graphon_identity(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            G = random_graph(rng, rng.integers(1, 31))
            W = empirical_graphon(G)
            for H in BUILTIN_PATTERNS.values():
                assert abs(hom_density_graph(H, G) - hom_density_graphon(H, W)) <= 1e-12


class TestMultiplexDensities:
    def test_empty_pattern(self):
        H = MultiplexGraph(3, [[], []])
        assert hom_density_multiplex(H, EXAMPLE) == 1.0

    def test_single_layer_reduces_to_graph(self):
        rng = np.random.default_rng(2)
        G = random_graph(rng, 9)
        M = MultiplexGraph.from_adjacency(G.adjacency[None])
        for H in BUILTIN_PATTERNS.values():
            Hm = pattern_multiplex(H, [0], 1)
            assert hom_density_multiplex(Hm, M) == pytest.approx(hom_density_graph(H, G), abs=1e-15)

    def test_shared_edge_example(self):
        H = MultiplexGraph(2, [[(0, 1)], [(0, 1)]])
        assert hom_density_multiplex(H, EXAMPLE) == pytest.approx(2 / 9, abs=1e-15)
        assert hom_density_multiplex(H, EXAMPLE, "enumerate") == pytest.approx(2 / 9, abs=1e-15)

    def test_mixed_layers_against_brute_force(self):
        rng = np.random.default_rng(3)
        H = MultiplexGraph(3, [[(0, 1), (1, 2)], [(1, 2), (0, 2)], [(0, 1)]])
        layers_of = {}
        for s, E in enumerate(H.layers):
            for e in E:
                layers_of.setdefault(e, []).append(s)
        for _ in range(5):
            M = random_multiplex(rng, 6, 3, p=0.7)
            expect = brute_hom(list(layers_of), 3,
                               lambda e: np.logical_and.reduce(M.adjacency[layers_of[e]]), 6)
            assert hom_density_multiplex(H, M) == pytest.approx(expect, abs=1e-15)

    def test_layer_count_mismatch(self):
        with pytest.raises(ValueError):
            hom_density_multiplex(MultiplexGraph(2, [[(0, 1)]]), EXAMPLE)


class TestMultigraphonDensities:
    def test_single_edge_is_average(self):
        rng = np.random.default_rng(4)
        vals = rng.random((5, 5))
        vals = (vals + vals.T) / 2
        W = Multigraphon(1, {frozenset({0}): StepGraphon(vals)})
        H = MultiplexGraph(2, [[(0, 1)]])
        assert hom_density_multigraphon(H, W) == pytest.approx(vals.mean(), abs=1e-15)

    def test_constant_components(self):
        p = {frozenset({0}): 0.6, frozenset({1}): 0.5, frozenset({0, 1}): 0.2}
        W = Multigraphon.constant(2, p)
        H = MultiplexGraph(3, [[(0, 1), (1, 2)], [(0, 1), (0, 2)]])
        # cells: {0,1} -> 01, {0} -> 12, {1} -> 02
        assert hom_density_multigraphon(H, W) == pytest.approx(0.2 * 0.6 * 0.5, abs=1e-15)

    def test_multiplex_multigraphon_identity(self):
        rng = np.random.default_rng(5)
        patterns = [pattern_multiplex(H, S, 2) for H in BUILTIN_PATTERNS.values()
                    for S in ({0}, {1}, {0, 1})]
        patterns.append(MultiplexGraph(3, [[(0, 1), (1, 2)], [(1, 2), (0, 2)]]))
        for _ in range(100):
            M = random_multiplex(rng, rng.integers(1, 31), 2)
            W = empirical_multigraphon(M)
            for H in patterns:
                assert abs(hom_density_multiplex(H, M) - hom_density_multigraphon(H, W)) <= 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 15), st.integers(0, 2**32 - 1))
def test_relabeling_invariance(n, seed):
    rng = np.random.default_rng(seed)
    G = random_graph(rng, n)
    perm = rng.permutation(n)
    Gp = Graph.from_adjacency(G.adjacency[np.ix_(perm, perm)])
    for H in BUILTIN_PATTERNS.values():
        assert hom_density_graph(H, G) == hom_density_graph(H, Gp)
    M = random_multiplex(rng, n, 2)
    Mp = MultiplexGraph.from_adjacency(M.adjacency[:, perm][:, :, perm])
    H = MultiplexGraph(3, [[(0, 1), (1, 2)], [(0, 1)]])
    assert hom_density_multiplex(H, M) == hom_density_multiplex(H, Mp)


class TestLimitDensity:
    def test_constant_kernel_single_edge(self):
        ref = ReferenceMeasure(np.random.default_rng(6).normal(size=(50, 4, 2)))
        for s in range(4):
            H = pattern_multiplex(K2, [s], 4)
            est, se = limit_multigraphon_density(H, ref, constant_kernel(0.35), 500, RngStream(1))
            assert est == pytest.approx(0.35, abs=1e-15)
            assert se == pytest.approx(0.0, abs=1e-15)

    def test_vertex_pattern(self):
        ref = ReferenceMeasure(np.zeros((3, 2, 1)))
        H = pattern_multiplex(VERTEX, [0], 2)
        assert limit_multigraphon_density(H, ref, logistic_kernel(), 10, RngStream(0)) == (1.0, 0.0)

    def test_single_reference_path_is_exact_product(self):
        rng = np.random.default_rng(7)
        path = rng.normal(size=(1, 4, 2))
        ref = ReferenceMeasure(path)
        H = pattern_multiplex(P3, [1, 3], 4)
        est, _ = limit_multigraphon_density(H, ref, logistic_kernel(), 1, RngStream(0))
        single = float(joint_presence_probability(logistic_kernel(), path[0], path[0], [1, 3]))
        assert est == pytest.approx(single**2, abs=1e-15)

    def test_against_explicit_average(self):
        rng = np.random.default_rng(8)
        ref = ReferenceMeasure(rng.normal(size=(4, 3, 2)))
        H = pattern_multiplex(K2, [1, 2], 3)
        est, se = limit_multigraphon_density(H, ref, logistic_kernel(), 200_000, RngStream(2))
        pairs = [float(joint_presence_probability(logistic_kernel(), a, b, [1, 2]))
                 for a in ref.samples for b in ref.samples]
        assert abs(est - np.mean(pairs)) <= 4 * se

    def test_horizon_check(self):
        ref = ReferenceMeasure(np.zeros((3, 2, 1)))
        with pytest.raises(ValueError):
            limit_multigraphon_density(pattern_multiplex(K2, [3], 4), ref, logistic_kernel(), 5,
                                       RngStream(0))


class TestCutNorm:
    def test_trivial_cases(self):
        rng = np.random.default_rng(9)
        vals = rng.random((6, 6))
        W = StepGraphon((vals + vals.T) / 2)
        assert cut_norm_estimate(W, W, "exact_small") == 0.0
        assert cut_norm_estimate(W, W) == 0.0
        ones, zeros = StepGraphon.constant(1.0, 5), StepGraphon.constant(0.0, 5)
        assert cut_norm_estimate(ones, zeros, "exact_small") == 1.0
        assert cut_norm_estimate(ones, zeros) == 1.0

    def test_exact_against_brute_force(self):
        rng = np.random.default_rng(10)
        for _ in range(10):
            n = rng.integers(1, 6)
            a, b = rng.random((2, n, n))
            W1, W2 = StepGraphon((a + a.T) / 2), StepGraphon((b + b.T) / 2)
            expect = brute_cut(W1.block_values - W2.block_values)
            assert cut_norm_estimate(W1, W2, "exact_small") == pytest.approx(expect, abs=1e-14)

    def test_heuristic_is_lower_bound_and_usually_exact(self):
        rng = np.random.default_rng(11)
        hits = 0
        for trial in range(100):
            a, b = rng.random((2, 10, 10))
            W1, W2 = StepGraphon((a + a.T) / 2), StepGraphon((b + b.T) / 2)
            exact = cut_norm_estimate(W1, W2, "exact_small")
            heur = cut_norm_estimate(W1, W2, "heuristic", seed=trial)
            assert heur >= 0 and heur <= exact + 1e-12
            hits += abs(heur - exact) <= 1e-12
        assert hits >= 90

    def test_triangle_inequality(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            Ws = []
            for _ in range(3):
                a = rng.random((8, 8))
                Ws.append(StepGraphon((a + a.T) / 2))
            d12 = cut_norm_estimate(Ws[0], Ws[1], "exact_small")
            d23 = cut_norm_estimate(Ws[1], Ws[2], "exact_small")
            d13 = cut_norm_estimate(Ws[0], Ws[2], "exact_small")
            assert d13 <= d12 + d23 + 1e-12

    def test_exact_size_limit(self):
        W = StepGraphon.constant(0.5, 15)
        with pytest.raises(ValueError):
            cut_norm_estimate(W, StepGraphon.constant(0.2, 15), "exact_small")


class TestLambda2:
    def test_trivial_cases(self):
        for n in (2, 5, 40):
            assert scaled_lambda2(np.ones((n, n), dtype=bool)) == 0.0
            assert scaled_lambda2(np.eye(n, dtype=bool)) == 1 / n

    def test_against_dense_oracle(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            a = np.triu(rng.random((8, 8)) < 0.5)
            a = a | a.T
            lam = np.sort(np.linalg.eigvals(a.astype(float)).real)[-2]
            assert abs(scaled_lambda2(a) - lam / 8) <= 1e-9

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            scaled_lambda2(np.triu(np.ones((4, 4))))

    def test_deterministic(self):
        rng = np.random.default_rng(14)
        a = np.triu(rng.random((200, 200)) < 0.4)
        a = a | a.T
        assert scaled_lambda2(a) == scaled_lambda2(a.copy())
