import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relform import (
    NoValidWeights,
    SensingGraph,
    assemble_laplacian,
    build_directed_edges,
    incidence,
    node_submatrix,
    stress_weights,
    verify_weights,
)
from relform.graph import stress_matrix_of_weights

from conftest import BENCH_LINKS, BENCH_TARGET, K4_LINKS, K4_TARGET, bench_graph


def random_connected_graph(rng, n):
    links = {(int(min(a, b)) + 1, int(max(a, b)) + 1) for a, b in
             ((i, rng.integers(0, i)) for i in range(1, n))}
    extra = rng.integers(0, n)
    for _ in range(extra):
        a, b = rng.choice(n, size=2, replace=False)
        links.add((int(min(a, b)) + 1, int(max(a, b)) + 1))
    return SensingGraph(n, sorted(links))


class TestSensingGraph:
    def test_rejects_self_loop(self):
        with pytest.raises(ValueError, match="self-loop"):
            SensingGraph(3, [(1, 1)])

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError, match="outside"):
            SensingGraph(3, [(1, 4)])

    def test_rejects_disconnected(self):
        with pytest.raises(ValueError, match="disconnected"):
            SensingGraph(4, [(1, 2), (3, 4)])

    def test_rejects_incomplete_leader_clique(self):
        with pytest.raises(ValueError, match="complete"):
            SensingGraph(3, [(1, 2), (2, 3)], leader_set=(1, 2, 3))

    def test_duplicate_links_collapse(self):
        g = SensingGraph(2, [(1, 2), (2, 1)])
        assert g.links == ((1, 2),)


class TestDirectedEdges:
    def test_two_nodes(self):
        edges = build_directed_edges(SensingGraph(2, [(1, 2)]))
        assert edges.edges == ((1, 2), (2, 1))

    def test_three_node_path(self):
        edges = build_directed_edges(SensingGraph(3, [(1, 2), (2, 3)]))
        assert edges.edges == ((1, 2), (2, 1), (2, 3), (3, 2))

    def test_bench_graph_grouping(self):
        g = bench_graph()
        edges = build_directed_edges(g)
        assert edges.count == 2 * len(BENCH_LINKS) == 60
        # Enumerate the expected order independently: for each head in node
        # order, its sorted neighbors.
        adj = {v: set() for v in range(1, 11)}
        for i, j in BENCH_LINKS:
            adj[i].add(j)
            adj[j].add(i)
        expected = [(h, t) for h in range(1, 11) for t in sorted(adj[h])]
        assert list(edges.edges) == expected
        first_group = [e for e in edges.edges if e[0] == 1]
        assert edges.edges[: len(first_group)] == tuple(first_group)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(min_value=2, max_value=12), st.integers(min_value=0, max_value=2**31))
    def test_ordering_is_bijective_and_stable(self, n, seed):
        g = random_connected_graph(np.random.default_rng(seed), n)
        edges = build_directed_edges(g)
        assert edges.count == 2 * len(g.links)
        assert len(set(edges.edges)) == edges.count
        heads = [e[0] for e in edges.edges]
        assert heads == sorted(heads)
        for i in range(1, n + 1):
            group = [t for h, t in edges.edges if h == i]
            assert group == sorted(group)
        # Stable: rebuilding yields the identical tuple.
        assert build_directed_edges(g).edges == edges.edges


class TestIncidence:
    def test_two_node_matrix(self):
        edges = build_directed_edges(SensingGraph(2, [(1, 2)]))
        op = incidence(edges, 2, 1)
        assert np.array_equal(op.matrix, np.array([[1.0, -1.0], [-1.0, 1.0]]))
        assert np.array_equal(op.matrix.T @ op.matrix, np.array([[2.0, -2.0], [-2.0, 2.0]]))

    def test_columns_sum_to_zero(self):
        for seed in range(5):
            g = random_connected_graph(np.random.default_rng(seed), 8)
            op = incidence(build_directed_edges(g), 8, 2)
            assert np.array_equal(op.matrix.T @ np.ones(8), np.zeros(op.edges.count))

    def test_edge_differences_match_lifted_product(self):
        rng = np.random.default_rng(11)
        g = bench_graph()
        op = incidence(build_directed_edges(g), 10, 2)
        z = rng.normal(size=(10, 2))
        direct = np.array([z[i - 1] - z[j - 1] for i, j in op.edges.edges])
        assert np.array_equal(op.edge_differences(z), direct)
        lifted = np.kron(op.matrix.T, np.eye(2)) @ z.reshape(-1)
        assert np.allclose(op.edge_differences(z).reshape(-1), lifted, atol=1e-14)


class TestNodeSubmatrix:
    def test_two_node_single_column(self):
        op = incidence(build_directed_edges(SensingGraph(2, [(1, 2)])), 2, 1)
        sub = node_submatrix(op, 1)
        assert np.array_equal(sub, np.array([[1.0], [-1.0]]))

    def test_path_graph_center(self):
        op = incidence(build_directed_edges(SensingGraph(3, [(1, 2), (2, 3)])), 3, 2)
        sub = node_submatrix(op, 2)
        assert sub.shape == (3, 2)
        assert np.array_equal(sub[1], np.array([1.0, 1.0]))

    def test_blocks_partition_columns(self):
        g = bench_graph()
        op = incidence(build_directed_edges(g), 10, 2)
        stacked = np.hstack([node_submatrix(op, i) for i in range(1, 11)])
        assert np.array_equal(stacked, op.matrix)


class TestStressWeights:
    def test_two_agents_symmetric_zero_stress(self):
        g = SensingGraph(2, [(1, 2)])
        target = np.array([[0.0], [1.0]])
        w = stress_weights(g, target)
        assert w[(1, 2)] == w[(2, 1)]
        assert verify_weights(g, target, w) == 0.0

    def test_translation_invariant_residual(self):
        g = SensingGraph(4, K4_LINKS)
        w = stress_weights(g, K4_TARGET)
        res0 = np.linalg.norm(assemble_laplacian(w, 4) @ K4_TARGET)
        shifted = K4_TARGET + np.array([3.0, -7.0])
        res1 = np.linalg.norm(assemble_laplacian(w, 4) @ shifted)
        assert res1 == pytest.approx(res0, abs=1e-12)

    def test_k4_square_against_nullspace_oracle(self):
        g = SensingGraph(4, K4_LINKS)
        w = stress_weights(g, K4_TARGET)
        lap = assemble_laplacian(w, 4)
        assert np.linalg.norm(lap @ K4_TARGET) < 1e-9 * np.linalg.norm(K4_TARGET)
        # Oracle: the lifted Laplacian's null space (SVD) must contain the
        # target configuration and both translations.
        lifted = np.kron(lap, np.eye(2))
        _, svals, vt = np.linalg.svd(lifted)
        rank = int(np.sum(svals > 1e-9 * svals[0]))
        null = vt[rank:]
        for vec in [K4_TARGET.reshape(-1), np.kron(np.ones(4), [1.0, 0.0]), np.kron(np.ones(4), [0.0, 1.0])]:
            unit = vec / np.linalg.norm(vec)
            proj = null.T @ (null @ unit)
            assert np.linalg.norm(proj - unit) < 1e-9

    def test_translations_always_annihilated(self):
        g = bench_graph()
        w = stress_weights(g, BENCH_TARGET)
        lap = np.kron(assemble_laplacian(w, 10), np.eye(2))
        for c in (np.array([1.0, 0.0]), np.array([0.3, -2.0])):
            assert np.linalg.norm(lap @ np.kron(np.ones(10), c)) < 1e-12

    def test_bench_stress_is_psd_with_expected_rank(self):
        g = bench_graph()
        w = stress_weights(g, BENCH_TARGET, scale=1.0)
        eigvals = np.linalg.eigvalsh(stress_matrix_of_weights(w, 10))
        assert eigvals[0] > -1e-9
        assert np.sum(eigvals > 1e-9) == 10 - 2 - 1
        # Normalization: smallest nonzero eigenvalue equals the scale.
        assert eigvals[3] == pytest.approx(1.0, rel=1e-9)
        w5 = stress_weights(g, BENCH_TARGET, scale=5.0)
        eig5 = np.linalg.eigvalsh(stress_matrix_of_weights(w5, 10))
        assert eig5[3] == pytest.approx(5.0, rel=1e-9)

    def test_rejects_coincident_targets(self):
        g = SensingGraph(3, [(1, 2), (2, 3), (1, 3)])
        with pytest.raises(ValueError, match="coincident"):
            stress_weights(g, np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]]))

    def test_bad_explicit_weights_raise_with_residual(self):
        g = SensingGraph(2, [(1, 2)])
        target = np.array([[0.0], [1.0]])
        bad = {(1, 2): 1.0, (2, 1): 1.0}
        with pytest.raises(NoValidWeights, match="residual"):
            verify_weights(g, target, bad)
