import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fclg.graphs import DatasetError, Graph, GraphSet, batch_graphs, canonical_edges, load_tu_dataset, make_batches, write_tu_dataset
from fclg.synthetic import make_graph_set


def write_tiny(tmp_path, name="TINY", node_labels=True, attrs=False):
    d = tmp_path / name
    d.mkdir()
    # graph 1: path 1-2-3, graph 2: edge 4-5
    (d / f"{name}_A.txt").write_text("1, 2\n2, 1\n2, 3\n3, 2\n4, 5\n5, 4\n")
    (d / f"{name}_graph_indicator.txt").write_text("1\n1\n1\n2\n2\n")
    (d / f"{name}_graph_labels.txt").write_text("1\n2\n")
    if node_labels:
        (d / f"{name}_node_labels.txt").write_text("0\n3\n0\n3\n3\n")
    if attrs:
        (d / f"{name}_node_attributes.txt").write_text("0.5, 1.0\n1.5, 2.0\n2.5, 3.0\n3.5, 4.0\n4.5, 5.0\n")
    return tmp_path


def test_tiny_fixture(tmp_path):
    gs = load_tu_dataset(write_tiny(tmp_path), "TINY")
    assert len(gs) == 2
    assert gs.num_classes == 2
    assert list(gs.labels) == [0, 1]
    assert [g.num_nodes for g in gs] == [3, 2]
    assert gs[0].edges.tolist() == [[0, 1], [1, 2]]
    assert gs[1].edges.tolist() == [[0, 1]]
    # node labels {0, 3} one-hot encoded
    assert gs.feature_dim == 2
    np.testing.assert_array_equal(gs[0].node_features, [[1, 0], [0, 1], [1, 0]])


def test_feature_policy_attributes_then_degree(tmp_path):
    gs = load_tu_dataset(write_tiny(tmp_path, node_labels=False, attrs=True), "TINY")
    np.testing.assert_array_equal(gs[1].node_features, [[3.5, 4.0], [4.5, 5.0]])

    d = tmp_path / "deg"
    d.mkdir()
    gs = load_tu_dataset(write_tiny(d, node_labels=False), "TINY")
    # max degree 2 -> width 3; middle of the path has degree 2
    assert gs.feature_dim == 3
    np.testing.assert_array_equal(gs[0].node_features, [[0, 1, 0], [0, 0, 1], [0, 1, 0]])


def test_files_directly_in_data_dir(tmp_path):
    write_tiny(tmp_path)
    gs = load_tu_dataset(tmp_path / "TINY", "TINY")
    assert len(gs) == 2


def test_missing_file_named(tmp_path):
    root = write_tiny(tmp_path)
    (root / "TINY" / "TINY_graph_labels.txt").unlink()
    with pytest.raises(DatasetError, match="TINY_graph_labels.txt"):
        load_tu_dataset(root, "TINY")


def test_dangling_node_reports_line(tmp_path):
    root = write_tiny(tmp_path)
    (root / "TINY" / "TINY_A.txt").write_text("1, 2\n2, 9\n")
    with pytest.raises(DatasetError, match=r"TINY_A.txt:2"):
        load_tu_dataset(root, "TINY")


def test_dangling_graph_reports_line(tmp_path):
    root = write_tiny(tmp_path)
    (root / "TINY" / "TINY_graph_indicator.txt").write_text("1\n1\n1\n2\n7\n")
    with pytest.raises(DatasetError, match=r"graph_indicator.txt:5"):
        load_tu_dataset(root, "TINY")


def test_cross_graph_edge_rejected(tmp_path):
    root = write_tiny(tmp_path)
    (root / "TINY" / "TINY_A.txt").write_text("1, 2\n3, 4\n")
    with pytest.raises(DatasetError, match=r"TINY_A.txt:2"):
        load_tu_dataset(root, "TINY")


def test_canonical_edges():
    e = canonical_edges([[2, 1], [1, 2], [0, 0], [0, 3], [3, 0]])
    assert e.tolist() == [[0, 3], [1, 2]]


def test_graph_invariants():
    with pytest.raises(ValueError):
        Graph(0, 2, [[0, 2]], np.zeros((2, 1)), 0)
    with pytest.raises(ValueError):
        Graph(0, 1, [], [[np.nan]], 0)
    g = Graph(0, 3, [[0, 1], [1, 2]], np.eye(3), 0)
    a = g.adjacency()
    np.testing.assert_array_equal(a, a.T)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_tu_round_trip(tmp_path_factory, seed):
    gs, node_labels = make_graph_set((3, 4), seed=seed, return_node_labels=True)
    root = tmp_path_factory.mktemp("rt")
    write_tu_dataset(gs, root, "RT", node_labels=node_labels)
    back = load_tu_dataset(root, "RT")
    assert len(back) == len(gs)
    for a, b in zip(gs, back):
        assert a.num_nodes == b.num_nodes and a.label == b.label
        assert {tuple(e) for e in a.edges} == {tuple(e) for e in b.edges}


def test_round_trip_attributes(tmp_path):
    gs = make_graph_set((2, 2), seed=5)
    write_tu_dataset(gs, tmp_path, "ATTR")
    back = load_tu_dataset(tmp_path, "ATTR")
    for a, b in zip(gs, back):
        np.testing.assert_array_equal(a.node_features, b.node_features)


def test_batch_sizes_and_remainder():
    gs = make_graph_set((3, 2), seed=0)
    batches = make_batches(gs, 2, np.random.default_rng(0))
    assert [b.batch_size for b in batches] == [2, 2, 1]
    seen = np.concatenate([b.graph_ids for b in batches])
    assert sorted(seen) == list(range(5))


def test_single_batch_membership():
    gs = make_graph_set((2, 2), seed=0)
    (b,) = make_batches(gs, 4, np.random.default_rng(0))
    assert len(b.membership) == sum(g.num_nodes for g in gs)
    assert b.num_nodes == b.features.shape[0]


def test_batches_deterministic():
    gs = make_graph_set((5, 5), seed=0)
    a = [b.graph_ids.tolist() for b in make_batches(gs, 3, np.random.default_rng(7))]
    b = [b.graph_ids.tolist() for b in make_batches(gs, 3, np.random.default_rng(7))]
    assert a == b


def test_batch_errors():
    gs = make_graph_set((2, 2), seed=0)
    with pytest.raises(ValueError):
        make_batches(gs, 0)
    with pytest.raises(ValueError):
        make_batches(GraphSet([], 1), 2)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 1000), st.integers(1, 7))
def test_batch_offsets_reconstruct_features(seed, batch_size):
    gs = make_graph_set((4, 3), seed=seed)
    for b in make_batches(gs, batch_size, np.random.default_rng(seed), alpha=0.2):
        assert np.all(np.diff(b.node_offsets) > 0)
        assert b.num_nodes == sum(gs[i].num_nodes for i in b.graph_ids)
        parts = [gs[i].node_features for i in b.graph_ids]
        np.testing.assert_array_equal(np.concatenate(parts), b.features)
        for g, (start, size) in enumerate(zip(b.node_offsets, b.sizes)):
            assert np.all(b.membership[start:start + size] == g)
        op = b.operator("original").toarray()
        for g, i in enumerate(b.graph_ids):
            s, n = b.node_offsets[g], gs[i].num_nodes
            np.testing.assert_array_equal(op[s:s + n, s:s + n], gs[i].adjacency())
        assert b.operator("diffused").shape == op.shape


def test_graphset_feature_dim_mismatch():
    with pytest.raises(ValueError):
        GraphSet([Graph(0, 1, [], np.ones((1, 2)), 0), Graph(1, 1, [], np.ones((1, 3)), 0)], 1)


def test_batch_without_diffusion_raises():
    gs = make_graph_set((2, 2), seed=0)
    b = batch_graphs(list(gs))
    with pytest.raises(ValueError):
        b.operator("diffused")
