import numpy as np
import pytest

from czsl.embeddings import (
    EmbeddingTable,
    build_node_features,
    composition_features,
    concat_tables,
    embed_name,
    load_embeddings,
    write_embeddings,
)
from czsl.errors import EmbeddingError
from czsl.graph import GraphVariant, build_graph

from conftest import make_split, random_split


def vec_file(path, lines):
    path.write_text("".join(ln + "\n" for ln in lines))
    return path


def test_load_two_tokens(tmp_path):
    table = load_embeddings(vec_file(tmp_path / "v.txt", ["cat 1 0", "dog 0 1"]))
    assert table.dim == 2
    np.testing.assert_array_equal(table.vector("cat"), [1, 0])


def test_inconsistent_lengths(tmp_path):
    f = vec_file(tmp_path / "v.txt", ["cat 1 0 3", "dog 0 1 2 9"])
    with pytest.raises(EmbeddingError, match="length"):
        load_embeddings(f)


def test_header_autodetected(tmp_path):
    lines = ["2 300"]
    rng = np.random.default_rng(0)
    for tok in ("cat", "dog"):
        lines.append(tok + " " + " ".join(str(v) for v in rng.standard_normal(300)))
    table = load_embeddings(vec_file(tmp_path / "v.txt", lines))
    assert table.dim == 300
    assert len(table.vectors) == 2


def test_duplicate_token(tmp_path):
    f = vec_file(tmp_path / "v.txt", ["cat 1 0", "cat 0 1"])
    with pytest.raises(EmbeddingError, match="duplicate"):
        load_embeddings(f)


def test_empty_file(tmp_path):
    f = tmp_path / "v.txt"
    f.write_text("")
    with pytest.raises(EmbeddingError, match="empty"):
        load_embeddings(f)


def test_write_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    table = EmbeddingTable(
        dim=4,
        vectors={f"t{i}": rng.standard_normal(4) for i in range(5)},
        source_name="x",
    )
    path = tmp_path / "v.txt"
    write_embeddings(path, table)
    loaded = load_embeddings(path)
    assert loaded.dim == 4
    for tok, vec in table.vectors.items():
        np.testing.assert_array_equal(loaded.vector(tok), vec)


def make_table(dim, tokens, seed=0, name="src"):
    rng = np.random.default_rng(seed)
    return EmbeddingTable(
        dim=dim, vectors={t: rng.standard_normal(dim) for t in tokens}, source_name=name
    )


def test_concat_dims_add():
    # e.g. two 300-d sources concatenate to the 600-d setting.
    a = make_table(300, ["cat"], name="ft")
    b = make_table(300, ["cat"], seed=1, name="w2v")
    table = concat_tables([a, b])
    assert table.dim == 600
    np.testing.assert_array_equal(table.vector("cat"), np.concatenate([a.vector("cat"), b.vector("cat")]))


def test_concat_single_is_identity():
    a = make_table(3, ["cat", "dog"])
    table = concat_tables([a])
    assert table is a


def test_concat_missing_reports_source():
    a = make_table(2, ["cat", "dog"], name="first")
    b = make_table(2, ["cat"], name="second")
    table = concat_tables([a, b])
    np.testing.assert_array_equal(
        table.vector("cat"), np.concatenate([a.vector("cat"), b.vector("cat")])
    )
    with pytest.raises(EmbeddingError, match="second"):
        table.vector("dog")


def test_concat_needs_one():
    with pytest.raises(EmbeddingError):
        concat_tables([])


def test_embed_single_token():
    t = make_table(3, ["dog"])
    np.testing.assert_array_equal(embed_name(t, "dog"), t.vector("dog"))


def test_embed_multiword_mean():
    t = make_table(3, ["faux", "leather"])
    expected = (t.vector("faux") + t.vector("leather")) / 2
    np.testing.assert_allclose(embed_name(t, "faux leather"), expected)


def test_embed_missing_token():
    t = make_table(3, ["dog"])
    with pytest.raises(EmbeddingError, match="sliced"):
        embed_name(t, "sliced")


def test_embed_oov_seeded():
    t = make_table(3, ["dog"])
    v1 = embed_name(t, "sliced", oov_seed=5)
    v2 = embed_name(t, "sliced", oov_seed=5)
    v3 = embed_name(t, "sliced", oov_seed=6)
    np.testing.assert_array_equal(v1, v2)
    assert not np.array_equal(v1, v3)
    assert abs(np.linalg.norm(v1) - 1.0) < 1e-12


def test_node_features_mean_rule():
    split = make_split(("red",), ("car",), seen=[("red", "car")])
    table = EmbeddingTable(
        dim=2,
        vectors={"red": np.array([1.0, 0.0]), "car": np.array([0.0, 1.0])},
        source_name="toy",
    )
    graph = build_graph(split, GraphVariant.FULL)
    e = build_node_features(split, graph, table)
    np.testing.assert_array_equal(e[graph.comp_offset], [0.5, 0.5])
    # idempotence: identical primitive vectors keep the composition row equal
    table2 = EmbeddingTable(
        dim=2,
        vectors={"red": np.array([2.0, 3.0]), "car": np.array([2.0, 3.0])},
        source_name="toy",
    )
    e2 = build_node_features(split, graph, table2)
    np.testing.assert_array_equal(e2[graph.comp_offset], [2.0, 3.0])


def test_node_features_recomputation_oracle():
    rng = np.random.default_rng(13)
    for _ in range(10):
        split = random_split(rng)
        tokens = list(split.states) + list(split.objects)
        table = make_table(5, tokens, seed=int(rng.integers(1000)))
        graph = build_graph(split, GraphVariant.FULL)
        e = build_node_features(split, graph, table)
        for c, pair in enumerate(graph.compositions):
            expected = 0.5 * (
                table.vector(split.states[pair.state]) + table.vector(split.objects[pair.object])
            )
            np.testing.assert_allclose(e[graph.comp_offset + c], expected, atol=1e-12)
        # row order matches node_index: primitive rows are their own vectors
        for i, name in enumerate(split.states):
            np.testing.assert_array_equal(e[i], table.vector(name))


def test_node_features_scaling_linearity(tiny_split):
    tokens = list(tiny_split.states) + list(tiny_split.objects)
    table = make_table(4, tokens)
    scaled = EmbeddingTable(
        dim=4, vectors={t: 3.0 * v for t, v in table.vectors.items()}, source_name="s"
    )
    graph = build_graph(tiny_split, GraphVariant.FULL)
    np.testing.assert_array_equal(
        build_node_features(tiny_split, graph, scaled),
        3.0 * build_node_features(tiny_split, graph, table),
    )


def test_node_features_aux_rows(tmp_path, tiny_split):
    aux = tmp_path / "aux.txt"
    aux.write_text("#node\tanimal\nanimal\tdog\n")
    tokens = list(tiny_split.states) + list(tiny_split.objects) + ["animal"]
    table = make_table(4, tokens)
    graph = build_graph(tiny_split, GraphVariant.FULL_PLUS_AUX, aux)
    e = build_node_features(tiny_split, graph, table)
    np.testing.assert_array_equal(e[graph.K - 1], table.vector("animal"))


def test_composition_features_match_graph_rows(tiny_split):
    tokens = list(tiny_split.states) + list(tiny_split.objects)
    table = make_table(4, tokens)
    graph = build_graph(tiny_split, GraphVariant.FULL)
    e = build_node_features(tiny_split, graph, table)
    comp = composition_features(tiny_split, table)
    np.testing.assert_allclose(comp, e[graph.comp_rows])


def test_determinism(tiny_split):
    tokens = list(tiny_split.states) + list(tiny_split.objects)
    table = make_table(4, tokens)
    graph = build_graph(tiny_split, GraphVariant.FULL)
    e1 = build_node_features(tiny_split, graph, table)
    e2 = build_node_features(tiny_split, graph, table)
    np.testing.assert_array_equal(e1, e2)
