import numpy as np
import pytest

from gatefuse.data import (
    UNLABELED,
    DatasetBundle,
    infer_n,
    load_edges,
    load_labels,
    load_texts,
    take_nodes,
    uniform_subsample,
    write_edges,
    write_labels,
    write_texts,
    read_embedding_matrix,
    write_embedding_matrix,
)
from gatefuse.graph import IngestionError, build_graph


def test_load_edges_two_relations(tmp_path):
    p = tmp_path / "edges.tsv"
    p.write_text("0\t1\tfollow\n1\t2\tlike\n2\t0\tfollow\n")
    g = load_edges(p, n=3)
    assert len(g.relations) == 4  # 2 forward + 2 reverse
    assert set(g.relation_names) == {"follow", "follow_rev", "like", "like_rev"}


def test_load_edges_id_out_of_range(tmp_path):
    p = tmp_path / "edges.tsv"
    p.write_text("0\t1\tfollow\n5\t1\tfollow\n")
    with pytest.raises(IngestionError, match=":2:"):
        load_edges(p, n=3)


def test_load_edges_malformed_line_number(tmp_path):
    p = tmp_path / "edges.tsv"
    p.write_text("0\t1\tfollow\nbroken line\n")
    with pytest.raises(IngestionError, match=":2:"):
        load_edges(p, n=3)


def test_load_edges_unknown_relation_lists_declared(tmp_path):
    p = tmp_path / "edges.tsv"
    p.write_text("0\t1\tblock\n")
    with pytest.raises(IngestionError, match="follow"):
        load_edges(p, n=2, relations=["follow"])


def test_edges_roundtrip_preserves_multiset(tmp_path):
    edges = [(0, 1, "a"), (1, 2, "b"), (2, 0, "a"), (0, 2, "b")]
    g = build_graph(edges, n=3)
    p = tmp_path / "edges.tsv"
    write_edges(p, g)
    g2 = load_edges(p, n=3)
    want = sorted(edges)
    got = []
    for kind, adj in g2.relations:
        if kind.direction != "forward":
            continue
        coo = adj.tocoo()
        got.extend((int(r), int(c), kind.name) for r, c in zip(coo.row, coo.col))
    assert sorted(got) == want


def test_load_labels_empty_file_all_unlabeled(tmp_path):
    p = tmp_path / "labels.tsv"
    p.write_text("")
    labels, names = load_labels(p, n=4)
    assert np.all(labels == UNLABELED)
    assert names == []


def test_load_labels_conflicting_duplicate(tmp_path):
    p = tmp_path / "labels.tsv"
    p.write_text("0\tred\n0\tblue\n")
    with pytest.raises(IngestionError, match="both"):
        load_labels(p, n=2)


def test_load_labels_repeated_same_label_ok(tmp_path):
    p = tmp_path / "labels.tsv"
    p.write_text("0\tred\n0\tred\n1\tblue\n")
    labels, names = load_labels(p, n=2)
    assert names == ["blue", "red"]
    assert labels.tolist() == [1, 0]


def test_load_labels_unknown_class(tmp_path):
    p = tmp_path / "labels.tsv"
    p.write_text("0\tgreen\n")
    with pytest.raises(IngestionError, match="declared"):
        load_labels(p, n=1, classes=["red", "blue"])


def test_load_labels_counts_match_line_oracle(tmp_path):
    rng = np.random.default_rng(0)
    names = ["dem", "rep"]
    lines = []
    assignment: dict[int, str] = {}
    for node in range(50):
        if rng.random() < 0.6:
            assignment[node] = names[int(rng.integers(0, 2))]
            lines.append(f"{node}\t{assignment[node]}")
    p = tmp_path / "labels.tsv"
    p.write_text("\n".join(lines) + "\n")
    labels, got_names = load_labels(p, n=50, classes=names)
    for c, name in enumerate(names):
        file_count = sum(1 for v in assignment.values() if v == name)
        assert np.sum(labels == c) == file_count


def test_labels_roundtrip(tmp_path):
    labels = np.array([0, UNLABELED, 1, 1, UNLABELED])
    p = tmp_path / "labels.tsv"
    write_labels(p, labels, ["x", "y"])
    got, names = load_labels(p, n=5, classes=["x", "y"])
    assert np.array_equal(got, labels)


def test_load_texts_missing_user_empty(tmp_path):
    p = tmp_path / "texts.tsv"
    p.write_text("0\thello world\n2\tlast user\n")
    texts = load_texts(p, n=3)
    assert texts[0] == ["hello", "world"]
    assert texts[1] == []
    assert texts[2] == ["last", "user"]


def test_load_texts_concatenates_in_file_order(tmp_path):
    p = tmp_path / "texts.tsv"
    p.write_text("0\tfirst tweet\n1\tother\n0\tsecond tweet\n")
    texts = load_texts(p, n=2)
    assert texts[0] == ["first", "tweet", "second", "tweet"]


def test_load_texts_token_count_matches_whitespace_oracle(tmp_path):
    lines = ["0\tplain words only here", "1\tmore plain words",
             "1\tand some extra"]
    p = tmp_path / "texts.tsv"
    p.write_text("\n".join(lines) + "\n")
    texts = load_texts(p, n=2)
    # no URLs/mentions involved, so token counts equal whitespace counts
    oracle = {0: 0, 1: 0}
    for line in lines:
        node, body = line.split("\t", 1)
        oracle[int(node)] += len(body.split())
    assert len(texts[0]) == oracle[0]
    assert len(texts[1]) == oracle[1]


def test_load_texts_invalid_encoding_reports_offset(tmp_path):
    p = tmp_path / "texts.tsv"
    p.write_bytes(b"0\tok\n1\tbad \xff\xfe text\n")
    with pytest.raises(IngestionError, match="byte offset 11"):
        load_texts(p, n=2)


def test_texts_roundtrip(tmp_path):
    p = tmp_path / "texts.tsv"
    write_texts(p, ["alpha beta", "", "gamma"])
    texts = load_texts(p, n=3)
    assert texts == [["alpha", "beta"], [], ["gamma"]]


# ---------------------------------------------------------------------------
# embedding matrix format
# ---------------------------------------------------------------------------


def test_embedding_matrix_one_by_one(tmp_path):
    p = tmp_path / "m.tsv"
    write_embedding_matrix(p, np.array([[0.5]]))
    assert np.array_equal(read_embedding_matrix(p), [[0.5]])


def test_embedding_matrix_header_mismatch(tmp_path):
    p = tmp_path / "m.tsv"
    p.write_text("2 3\n1 2 3\n")
    with pytest.raises(IngestionError, match="row 1"):
        read_embedding_matrix(p)


def test_embedding_matrix_extra_rows_rejected(tmp_path):
    p = tmp_path / "m.tsv"
    p.write_text("1 2\n1 2\n3 4\n")
    with pytest.raises(IngestionError, match="more rows"):
        read_embedding_matrix(p)


def test_embedding_matrix_random_roundtrip_bit_identical(tmp_path):
    rng = np.random.default_rng(1)
    mat = rng.normal(size=(10, 4)) * 10.0 ** rng.integers(-8, 8, size=(10, 4))
    p = tmp_path / "m.tsv"
    write_embedding_matrix(p, mat)
    assert np.array_equal(read_embedding_matrix(p), mat)


# ---------------------------------------------------------------------------
# bundle utilities
# ---------------------------------------------------------------------------


def test_bundle_rejects_inconsistent_n():
    g = build_graph([(0, 1, "a")], n=3)
    with pytest.raises(IngestionError, match="labels"):
        DatasetBundle(graph=g, texts=None, features=None,
                      labels=np.array([0, 1]), class_names=["x", "y"],
                      relation_names=["a"])


def test_infer_n_from_edge_and_label_files(tmp_path):
    e = tmp_path / "edges.tsv"
    e.write_text("0\t7\ta\n")
    l = tmp_path / "labels.tsv"
    l.write_text("3\tred\n")
    assert infer_n(e, l) == 8


def test_uniform_subsample_and_take_nodes():
    labels = np.array([0, 1, UNLABELED, 0, UNLABELED, 1, UNLABELED, 0])
    keep = uniform_subsample(labels, n_labeled=3, n_unlabeled=2, seed=0)
    assert keep.size == 5
    assert np.sum(labels[keep] != UNLABELED) == 3

    g = build_graph([(0, 1, "a"), (3, 5, "a"), (5, 7, "a")], n=8)
    bundle = DatasetBundle(graph=g, texts=[[f"t{i}"] for i in range(8)],
                           features=np.arange(16.0).reshape(8, 2),
                           labels=labels, class_names=["x", "y"],
                           relation_names=["a"])
    sub = take_nodes(bundle, keep)
    assert sub.graph.n == 5
    assert np.array_equal(sub.labels, labels[keep])
    assert sub.texts == [[f"t{i}"] for i in keep]
    assert np.array_equal(sub.features, bundle.features[keep])


def test_uniform_subsample_rejects_oversize():
    labels = np.array([0, 1, UNLABELED])
    with pytest.raises(ValueError):
        uniform_subsample(labels, n_labeled=5, n_unlabeled=0)
