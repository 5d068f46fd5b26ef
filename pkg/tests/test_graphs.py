import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gclpr.errors import NoConvergence, UnknownNode
from gclpr.graphs import Graph, betweenness, bfs_hops, degree, diffuse, nearest_node, pagerank
from oracles import brute_betweenness, dense_pagerank, floyd_warshall, random_graph


def int_graph(n, edges, weights=None):
    names = [str(i) for i in range(n)]
    E = [(str(a), str(b)) if weights is None else (str(a), str(b), weights[k]) for k, (a, b) in enumerate(edges)]
    return Graph(names, E)


PATH = Graph(["a", "b", "c"], [("a", "b"), ("b", "c")])


def test_bfs_path_hand():
    assert bfs_hops(PATH, ["a"]) == {"a": {"a": 0.0, "b": 1.0, "c": 2.0}}


def test_bfs_unreachable_and_unknown():
    g = Graph(["a", "b", "c"], [("a", "b")])
    assert bfs_hops(g, ["a"])["a"]["c"] == math.inf
    with pytest.raises(UnknownNode):
        bfs_hops(g, ["zz"])


def test_graph_rejects_bad_edges():
    with pytest.raises(ValueError):
        Graph(["a"], [("a", "a")])
    with pytest.raises(ValueError):
        Graph(["a", "b"], [("a", "b", 0.0)])
    with pytest.raises(ValueError):
        Graph(["a", "b"], [("a", "b"), ("b", "a")])
    with pytest.raises(UnknownNode):
        Graph(["a"], [("a", "b")])
    g = Graph(["a", "b"], [("a", "b", 1.0), ("b", "a", 2.0)], merge_duplicates=True)
    assert g.edges() == [("a", "b", 3.0)]


def test_bfs_matches_floyd_warshall_up_to_12_nodes():
    rng = np.random.default_rng(7)
    for _ in range(300):
        n, edges = random_graph(rng, n_max=12)
        g = int_graph(n, edges)
        np.testing.assert_array_equal(g.all_pairs_hops(), floyd_warshall(n, edges))


@given(st.integers(0, 2**32 - 1))
def test_hop_triangle_inequality_and_symmetry(seed):
    rng = np.random.default_rng(seed)
    n, edges = random_graph(rng, n_max=10)
    D = int_graph(n, edges).all_pairs_hops()
    assert np.array_equal(D, D.T)
    assert np.all(np.diag(D) == 0)
    for i, j, k in rng.integers(0, n, (20, 3)):
        assert D[i, k] <= D[i, j] + D[j, k]


def test_pagerank_symmetric_examples():
    pr = pagerank(Graph(["a", "b"], [("a", "b")]))
    assert pr["a"] == pytest.approx(0.5, abs=1e-12) and pr["b"] == pytest.approx(0.5, abs=1e-12)
    k4 = Graph(list("abcd"), [(x, y) for i, x in enumerate("abcd") for y in "abcd"[i + 1 :]])
    assert all(v == pytest.approx(0.25, abs=1e-12) for v in pagerank(k4).values())


def test_pagerank_star():
    star = Graph(["c", "1", "2", "3"], [("c", "1"), ("c", "2"), ("c", "3")])
    pr = pagerank(star)
    assert all(pr["c"] > pr[x] for x in "123")
    assert sum(pr.values()) == pytest.approx(1.0, abs=1e-12)


def test_pagerank_matches_dense_solve():
    rng = np.random.default_rng(3)
    for _ in range(100):
        n, edges = random_graph(rng, n_max=9)
        w = rng.uniform(0.5, 5.0, len(edges))
        pr = pagerank(int_graph(n, edges, w.tolist()), tol=1e-14, max_iter=2000)
        np.testing.assert_allclose([pr[str(i)] for i in range(n)], dense_pagerank(n, edges, w), atol=1e-9)


def test_pagerank_unweighted_option():
    g = Graph(["a", "b", "c"], [("a", "b", 10.0), ("b", "c", 1.0)])
    u = pagerank(g, weighted=False)
    ref = dense_pagerank(3, [(0, 1), (1, 2)])
    np.testing.assert_allclose([u[x] for x in "abc"], ref, atol=1e-9)


def test_pagerank_no_convergence_warns():
    g = Graph(["a", "b", "c"], [("a", "b")])
    with pytest.warns(NoConvergence):
        pagerank(g, max_iter=1, tol=1e-300)


def test_betweenness_examples():
    assert betweenness(PATH) == {"a": 0.0, "b": 1.0, "c": 0.0}
    k = 5
    star = Graph(["c"] + [f"l{i}" for i in range(k)], [("c", f"l{i}") for i in range(k)])
    assert betweenness(star)["c"] == k * (k - 1) / 2
    k4 = Graph(list("abcd"), [(x, y) for i, x in enumerate("abcd") for y in "abcd"[i + 1 :]])
    assert all(v == 0 for v in betweenness(k4).values())


def test_betweenness_matches_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(200):
        n, edges = random_graph(rng, n_max=9)
        bw = betweenness(int_graph(n, edges))
        np.testing.assert_allclose([bw[str(i)] for i in range(n)], brute_betweenness(n, edges), atol=1e-12)


def test_degree():
    assert degree(PATH) == {"a": 1, "b": 2, "c": 1}


def test_diffuse_examples():
    g = Graph(["a", "b"], [("a", "b")])
    np.testing.assert_allclose(diffuse(g, {"a": 1.0, "b": 0.0}, steps=1), [0.7, 0.3], rtol=0, atol=1e-15)
    np.testing.assert_array_equal(diffuse(g, np.array([1.0, 0.0]), steps=0), [1.0, 0.0])
    np.testing.assert_allclose(diffuse(PATH, np.full(3, 4.2), steps=9), 4.2, rtol=1e-14)
    with pytest.raises(ValueError):
        diffuse(g, np.zeros(2), retain=0.5, mix=0.3)


def test_diffuse_isolated_node_keeps_value():
    g = Graph(["a", "b", "c"], [("a", "b")])
    y = diffuse(g, np.array([0.0, 1.0, 5.0]), steps=4)
    assert y[2] == pytest.approx(5.0, rel=1e-14)


@given(st.integers(0, 2**32 - 1), st.integers(0, 12))
def test_diffuse_stays_in_range(seed, steps):
    rng = np.random.default_rng(seed)
    n, edges = random_graph(rng, n_max=10)
    g = int_graph(n, edges, rng.uniform(1, 100, len(edges)).tolist())
    base = rng.standard_normal(n)
    y = diffuse(g, base, steps=steps)
    assert y.min() >= base.min() - 1e-12 and y.max() <= base.max() + 1e-12


def test_transition_matrix_rows_sum_to_one():
    g = Graph(["a", "b", "c", "d"], [("a", "b", 2.0), ("a", "c", 6.0)])
    T = g.transition_matrix().toarray()
    np.testing.assert_allclose(T.sum(axis=1), 1.0)
    np.testing.assert_allclose(T[0], [0.0, 0.25, 0.75, 0.0])
    assert T[3, 3] == 1.0


def test_csv_and_dict_roundtrip(tmp_path):
    g = Graph(["x", "y", "z"], [("x", "y", 2.5), ("y", "z")])
    g.write_csv(tmp_path / "e.csv")
    h = Graph.read_csv(tmp_path / "e.csv")
    assert h.edges() == g.edges()
    assert Graph.from_dict(g.to_dict()).edges() == g.edges()


def test_hop_cache_is_thread_safe():
    from concurrent.futures import ThreadPoolExecutor

    rng = np.random.default_rng(5)
    n, edges = random_graph(rng, n_max=12, p=0.4)
    g = int_graph(n, edges)
    with ThreadPoolExecutor(8) as ex:
        rows = list(ex.map(g.hops_from, [i % n for i in range(64)]))
    D = floyd_warshall(n, edges)
    for i, r in enumerate(rows):
        np.testing.assert_array_equal(r, D[i % n])


def test_nearest_node():
    nodes = np.array([[40.0, -74.0], [34.0, -118.0]])
    np.testing.assert_array_equal(nearest_node(nodes, [[41.0, -73.0], [33.0, -117.0]]), [0, 1])
