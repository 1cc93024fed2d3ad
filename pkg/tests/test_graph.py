from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rcw import Graph, IntegrityError, ParameterError, Witness, subtract, witness_view
from rcw.graph import load_graph, load_graph_tsv, normalize_pair, save_graph


def test_edges_canonicalized_and_deduplicated():
    g = Graph(3, [(1, 0), (0, 1), (2, 1)], np.zeros((3, 2)))
    assert g.edges == ((0, 1), (1, 2))
    assert g.has_edge(1, 0)


def test_self_loop_rejected():
    with pytest.raises(ParameterError):
        Graph(3, [(1, 1)], np.zeros((3, 1)))


def test_edge_out_of_range_rejected():
    with pytest.raises(IntegrityError):
        Graph(3, [(0, 5)], np.zeros((3, 1)))


def test_feature_shape_checked():
    with pytest.raises(ParameterError):
        Graph(3, [], np.zeros((2, 2)))


def test_label_bounds_checked():
    with pytest.raises(ParameterError):
        Graph(2, [], np.zeros((2, 1)), labels=[0, 5], num_classes=2)


def test_subtract_triangle(triangle):
    w = Witness.build(triangle, [0, 1], [(0, 1)])
    left = subtract(triangle, w)
    assert left.edges == ((0, 2), (1, 2))
    assert left.num_nodes == 3


def test_subtract_whole_edge_set(triangle):
    w = Witness.build(triangle, range(3), triangle.edges)
    left = subtract(triangle, w)
    assert left.edges == ()
    assert left.num_nodes == 3


def test_subtract_path_disconnects(path4):
    w = Witness.build(path4, [1, 2], [(1, 2)])
    left = subtract(path4, w)
    assert left.edges == ((0, 1), (2, 3))


def test_subtract_foreign_edge_rejected(triangle, path4):
    w = Witness.build(path4, [2, 3], [(2, 3)])
    with pytest.raises(IntegrityError):
        subtract(triangle, w)


def test_witness_view_keeps_all_nodes(path4):
    w = Witness.build(path4, [0, 1], [(0, 1)])
    view = witness_view(path4, w)
    assert view.num_nodes == 4
    assert view.edges == ((0, 1),)


def test_witness_edges_must_exist(path4):
    with pytest.raises(IntegrityError):
        Witness.build(path4, [0, 2], [(0, 2)])


def test_checksum_distinguishes_graphs(triangle, path4):
    assert triangle.checksum() != path4.checksum()
    clone = Graph(3, [(0, 1), (1, 2), (0, 2)], np.eye(3), num_classes=3)
    assert clone.checksum() == triangle.checksum()


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 8), st.data())
def test_subtract_then_readd_round_trips(n, data):
    pair_pool = [(u, v) for u in range(n) for v in range(u + 1, n)]
    edges = data.draw(st.sets(st.sampled_from(pair_pool), min_size=1))
    g = Graph(n, edges, np.zeros((n, 1)))
    sub_edges = data.draw(st.sets(st.sampled_from(sorted(edges))))
    w = Witness.build(g, [], sub_edges)
    left = subtract(g, w)
    restored = left.with_edges(set(left.edges) | set(w.edges))
    assert restored.edges == g.edges


def test_graph_json_round_trip(tmp_path, triangle):
    p = tmp_path / "g.json"
    save_graph(triangle, p)
    g2 = load_graph(p)
    assert g2.edges == triangle.edges
    assert g2.checksum() == triangle.checksum()


def test_tsv_loader(tmp_path):
    (tmp_path / "edges.tsv").write_text("0\t1\n1\t2\n")
    (tmp_path / "feat.tsv").write_text("1.0\n2.0\n3.0\n")
    (tmp_path / "lab.tsv").write_text("0\n1\n0\n")
    g = load_graph_tsv(tmp_path / "edges.tsv", tmp_path / "feat.tsv",
                       tmp_path / "lab.tsv")
    assert g.num_nodes == 3
    assert g.edges == ((0, 1), (1, 2))
    assert g.labels is not None and list(g.labels) == [0, 1, 0]


def test_normalize_pair_orders():
    assert normalize_pair(5, 2) == (2, 5)
    with pytest.raises(ParameterError):
        normalize_pair(3, 3)
