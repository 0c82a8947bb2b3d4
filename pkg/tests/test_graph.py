import numpy as np
import pytest
from scipy import sparse

from czsl.data import Pair
from czsl.errors import GraphError
from czsl.graph import CompGraph, GraphVariant, build_graph, normalize

from conftest import make_split, random_split


def brute_force_edges(split, variant):
    """Independent enumeration of the undirected edge set (incl. self-loops).

    Works directly from the variant definition, never from CompGraph.
    """
    n_s, n_o = len(split.states), len(split.objects)
    comps = split.all_pairs()
    base = n_s + n_o
    edges = set()
    for i in range(n_s + n_o):
        edges.add((i, i))
    if variant in (GraphVariant.PAIR_EDGES, GraphVariant.FULL):
        for c in range(len(comps)):
            edges.add((base + c, base + c))
    for c, pair in enumerate(comps):
        y = base + c
        edges.add(tuple(sorted((pair.state, y))))
        edges.add(tuple(sorted((n_s + pair.object, y))))
        if variant is GraphVariant.FULL:
            edges.add(tuple(sorted((pair.state, n_s + pair.object))))
    return edges


def adjacency_edges(graph):
    coo = graph.adjacency.tocoo()
    return {tuple(sorted((int(i), int(j)))) for i, j in zip(coo.row, coo.col)}


def nnz_from_edges(edges):
    return sum(1 if i == j else 2 for i, j in edges)


def test_full_graph_example(tiny_split):
    # K = 2 + 2 + 3 = 7; nnz = K + 6|Y| = 25.
    graph = build_graph(tiny_split, GraphVariant.FULL)
    assert graph.K == 7
    assert graph.adjacency.nnz == 25
    assert adjacency_edges(graph) == brute_force_edges(tiny_split, GraphVariant.FULL)


def test_no_self_loop_variant_example(tiny_split):
    # 4 primitive self-loops + 2 undirected edges per composition -> nnz 16.
    graph = build_graph(tiny_split, GraphVariant.PAIR_EDGES_NO_SELF_LOOP_ON_Y)
    assert graph.adjacency.nnz == 16
    assert adjacency_edges(graph) == brute_force_edges(
        tiny_split, GraphVariant.PAIR_EDGES_NO_SELF_LOOP_ON_Y
    )


@pytest.mark.parametrize("variant", [
    GraphVariant.PAIR_EDGES_NO_SELF_LOOP_ON_Y,
    GraphVariant.PAIR_EDGES,
    GraphVariant.FULL,
])
def test_random_vocabularies_match_oracle(variant):
    rng = np.random.default_rng(42)
    for _ in range(25):
        split = random_split(rng)
        graph = build_graph(split, variant)
        expected = brute_force_edges(split, variant)
        assert adjacency_edges(graph) == expected
        assert graph.adjacency.nnz == nnz_from_edges(expected)


def test_full_edge_count_formula():
    rng = np.random.default_rng(11)
    for _ in range(25):
        split = random_split(rng)
        graph = build_graph(split, GraphVariant.FULL)
        assert graph.adjacency.nnz == graph.K + 6 * len(graph.compositions)


def test_symmetry_all_variants():
    rng = np.random.default_rng(5)
    for variant in (GraphVariant.PAIR_EDGES_NO_SELF_LOOP_ON_Y, GraphVariant.PAIR_EDGES,
                    GraphVariant.FULL):
        split = random_split(rng)
        a = build_graph(split, variant).adjacency
        assert (a != a.T).nnz == 0
        assert set(np.unique(a.toarray())) <= {0.0, 1.0}


def test_variant_nesting():
    rng = np.random.default_rng(9)
    for _ in range(10):
        split = random_split(rng)
        e_b = adjacency_edges(build_graph(split, GraphVariant.PAIR_EDGES_NO_SELF_LOOP_ON_Y))
        e_c = adjacency_edges(build_graph(split, GraphVariant.PAIR_EDGES))
        e_d = adjacency_edges(build_graph(split, GraphVariant.FULL))
        assert e_b < e_c < e_d
        # c adds only composition self-loops; d adds only primitive (s,o) edges.
        n_prim = len(split.states) + len(split.objects)
        assert all(i == j and i >= n_prim for i, j in e_c - e_b)
        assert all(i != j and max(i, j) < n_prim for i, j in e_d - e_c)


def test_node_ordering_deterministic(tiny_split):
    g1 = build_graph(tiny_split, GraphVariant.FULL)
    g2 = build_graph(tiny_split, GraphVariant.FULL)
    assert g1.compositions == g2.compositions
    np.testing.assert_array_equal(g1.adjacency.indptr, g2.adjacency.indptr)
    np.testing.assert_array_equal(g1.adjacency.indices, g2.adjacency.indices)
    np.testing.assert_array_equal(g1.adjacency.data, g2.adjacency.data)


def test_direct_embedding_builds_no_graph(tiny_split):
    with pytest.raises(GraphError, match="direct-embedding"):
        build_graph(tiny_split, GraphVariant.DIRECT_EMBEDDING)


def test_aux_nodes_grow_k(tmp_path, tiny_split):
    aux = tmp_path / "aux.txt"
    aux.write_text("#node\tanimal\nanimal\tdog\nanimal\tcar\n")
    base = build_graph(tiny_split, GraphVariant.FULL)
    graph = build_graph(tiny_split, GraphVariant.FULL_PLUS_AUX, aux)
    assert graph.K == base.K + 1
    assert graph.aux_names == ("animal",)
    # aux node: self-loop + 2 undirected edges.
    assert graph.adjacency.nnz == base.adjacency.nnz + 1 + 4
    deg = graph.degrees()
    assert deg[graph.K - 1] == 3


def test_aux_418_nodes_scale(tmp_path):
    # Hierarchy files may add hundreds of nodes (418 at full dataset scale).
    rng = np.random.default_rng(3)
    split = random_split(rng)
    lines = [f"#node\th{i}" for i in range(418)]
    lines += [f"h{i}\t{split.objects[i % len(split.objects)]}" for i in range(418)]
    aux = tmp_path / "aux.txt"
    aux.write_text("".join(ln + "\n" for ln in lines))
    base = build_graph(split, GraphVariant.FULL)
    graph = build_graph(split, GraphVariant.FULL_PLUS_AUX, aux)
    assert graph.K == base.K + 418


def test_aux_unknown_name(tmp_path, tiny_split):
    aux = tmp_path / "aux.txt"
    aux.write_text("ghost\tdog\n")
    with pytest.raises(GraphError, match="unknown node 'ghost'"):
        build_graph(tiny_split, GraphVariant.FULL_PLUS_AUX, aux)


def test_aux_requires_file(tiny_split):
    with pytest.raises(GraphError, match="requires an auxiliary edge file"):
        build_graph(tiny_split, GraphVariant.FULL_PLUS_AUX)


def test_aux_malformed(tmp_path, tiny_split):
    aux = tmp_path / "aux.txt"
    aux.write_text("a\tb\tc\n")
    with pytest.raises(GraphError, match="expected"):
        build_graph(tiny_split, GraphVariant.FULL_PLUS_AUX, aux)


def test_normalize_single_self_loop():
    split = make_split(("red",), ("car",), seen=[("red", "car")])
    graph = build_graph(split, GraphVariant.FULL)
    prop = normalize(graph, split)
    row = prop.matrix.toarray()[graph.comp_offset]
    # composition node: self + state + object -> three entries of 1/3
    np.testing.assert_allclose(row[row > 0], 1.0 / 3.0)


def test_normalize_uniform_row():
    # state "old" under variant c: self-loop plus its three compositions.
    split = make_split(
        ("old",), ("car", "dog", "cat"),
        seen=[("old", "car"), ("old", "dog"), ("old", "cat")],
    )
    graph = build_graph(split, GraphVariant.PAIR_EDGES)
    prop = normalize(graph, split).matrix.toarray()
    assert graph.degrees()[0] == 4
    np.testing.assert_allclose(prop[0][prop[0] > 0], 0.25)
    assert np.count_nonzero(prop[0]) == 4


def test_normalize_row_sums_oracle():
    rng = np.random.default_rng(21)
    for _ in range(10):
        split = random_split(rng)
        graph = build_graph(split, GraphVariant.FULL)
        prop = normalize(graph, split)
        sums = np.asarray(prop.matrix.sum(axis=1)).ravel()
        np.testing.assert_allclose(sums, 1.0, atol=1e-9)
        # sparsity pattern identical to L
        assert (prop.matrix != 0).nnz == graph.adjacency.nnz


def test_normalize_zero_degree_names_node(tiny_split):
    graph = build_graph(tiny_split, GraphVariant.FULL)
    a = graph.adjacency.tolil()
    a[0, :] = 0
    a[:, 0] = 0
    broken = CompGraph(
        variant=graph.variant,
        n_states=graph.n_states,
        n_objects=graph.n_objects,
        compositions=graph.compositions,
        aux_names=graph.aux_names,
        adjacency=sparse.csr_array(a.tocsr()),
    )
    with pytest.raises(GraphError, match="red"):
        normalize(broken, tiny_split)


def test_propagation_not_symmetric_in_general(tiny_split):
    graph = build_graph(tiny_split, GraphVariant.FULL)
    p = normalize(graph, tiny_split).matrix.toarray()
    assert not np.allclose(p, p.T)
