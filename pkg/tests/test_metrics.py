from __future__ import annotations

import numpy as np
import pytest

from rcw import (
    APPNP,
    ChecksumMismatch,
    Disturbance,
    GnnModel,
    Graph,
    ParameterError,
    Witness,
    fidelity_minus,
    fidelity_plus,
    generate_bahouse,
    inject_disturbance,
    normalized_ged,
)
from rcw.bahouse import motif_nodes
from rcw.bitmap import AdjacencyBitmap, apply_disturbance
from rcw.metrics import evaluate


def host():
    edges = [(1, 2), (2, 3), (0, 1), (0, 3)]
    return Graph(4, edges, np.zeros((4, 2)))


# -- normalized GED ----------------------------------------------------------


def test_ged_identical_zero():
    g = host()
    w = Witness.build(g, [0, 1], [(0, 1)])
    assert normalized_ged(w, w) == 0.0


def test_ged_hand_computed_example():
    g = host()
    w1 = Witness.build(g, [1, 2, 3], [(1, 2), (2, 3)])  # size 5
    w2 = Witness.build(g, [1, 2], [(1, 2)])             # size 3
    # symmetric differences: nodes {3}, edges {(2,3)} -> GED 2; 2/5 = 0.4
    assert normalized_ged(w1, w2) == pytest.approx(0.4)
    assert normalized_ged(w2, w1) == pytest.approx(0.4)


def test_ged_edge_disjoint_equal_size():
    g = host()
    w1 = Witness.build(g, [0, 1, 2, 3], [(0, 1), (1, 2)])
    w2 = Witness.build(g, [0, 1, 2, 3], [(0, 3), (2, 3)])
    # shared nodes, disjoint edges: GED = 4, sizes 6 and 6
    assert normalized_ged(w1, w2) == pytest.approx(4 / 6)


def test_ged_bounded_by_two():
    g = host()
    w1 = Witness.build(g, [0], [])
    w2 = Witness.build(g, [1, 2], [(1, 2)])
    val = normalized_ged(w1, w2)
    assert 0.0 <= val <= 2.0


def test_ged_rejects_different_hosts():
    g1 = host()
    g2 = Graph(4, [(0, 1)], np.ones((4, 2)))
    w1 = Witness.build(g1, [0, 1], [(0, 1)])
    w2 = Witness.build(g2, [0, 1], [(0, 1)])
    with pytest.raises(ChecksumMismatch):
        normalized_ged(w1, w2)
    assert normalized_ged(w1, w2, require_same_host=False) == 0.0


# -- fidelity ----------------------------------------------------------------


def fidelity_fixture():
    # node 0 and node 2 are labeled by their strong neighbors 1 and 3
    x = np.array([[0.6, 0.5], [0.0, 9.0], [0.5, 0.6], [9.0, 0.0]])
    g = Graph(4, [(0, 1), (2, 3), (1, 3)], x, num_classes=2)
    m = GnnModel(kind=APPNP, theta=np.eye(2), alpha=0.3)
    return g, m


def test_fidelity_plus_all_flip():
    g, m = fidelity_fixture()
    w = Witness.build(g, [0, 2], [(0, 1), (2, 3)])
    assert fidelity_plus(g, w, [0, 2], m) == 1.0


def test_fidelity_plus_none_flip():
    g, m = fidelity_fixture()
    w = Witness.build(g, [1, 3], [(1, 3)])
    assert fidelity_plus(g, w, [1, 3], m) == 0.0


def test_fidelity_plus_half():
    g, m = fidelity_fixture()
    w = Witness.build(g, [0, 1, 2], [(0, 1)])
    assert fidelity_plus(g, w, [0, 2], m) == 0.5


def test_fidelity_minus_factual_witness_zero():
    g, m = fidelity_fixture()
    w = Witness.build(g, [0, 2], [(0, 1), (2, 3)])
    assert fidelity_minus(g, w, [0, 2], m) == 0.0


def test_fidelity_minus_all_lost():
    g, m = fidelity_fixture()
    w = Witness.build(g, [0, 2])  # no edges: isolated nodes revert
    assert fidelity_minus(g, w, [0, 2], m) == 1.0


def test_fidelity_requires_test_nodes():
    g, m = fidelity_fixture()
    w = Witness.build(g, [0], [(0, 1)])
    with pytest.raises(ParameterError):
        fidelity_plus(g, w, [], m)


def test_evaluate_report_fields():
    g, m = fidelity_fixture()
    w = Witness.build(g, [0, 2], [(0, 1), (2, 3)])
    rep = evaluate(g, w, [0, 2], m, other=w)
    assert rep.fidelity_plus == 1.0
    assert rep.fidelity_minus == 0.0
    assert rep.normalized_ged == 0.0
    assert rep.witness_size == len(w.nodes) + len(w.edges)


# -- disturbance injection ---------------------------------------------------


def test_inject_pure_removal():
    g = host()
    disturbed, d = inject_disturbance(g, 3, removal_bias=1.0, seed=1)
    assert len(d.flips) == 3
    assert all(p in g.edge_set for p in d.flips)
    assert disturbed.num_edges == g.num_edges - 3


def test_inject_zero_is_identity():
    g = host()
    disturbed, d = inject_disturbance(g, 0, seed=5)
    assert d.flips == frozenset()
    assert disturbed.edges == g.edges


def test_inject_deterministic_and_replayable():
    g = host()
    a_graph, a = inject_disturbance(g, 2, seed=9)
    b_graph, b = inject_disturbance(g, 2, seed=9)
    assert a.flips == b.flips
    assert a_graph.edges == b_graph.edges
    bm = AdjacencyBitmap(g)
    apply_disturbance(bm, a)
    assert bm.current_graph().edges == a_graph.edges


def test_inject_infeasible_k():
    g = host()
    with pytest.raises(ParameterError):
        inject_disturbance(g, 100)
    with pytest.raises(ParameterError):
        inject_disturbance(g, g.num_edges + 1, removal_bias=1.0, seed=0)


# -- synthetic benchmark graphs ----------------------------------------------


def test_bahouse_default_scale():
    g = generate_bahouse(seed=0)
    assert g.num_nodes == 300
    assert abs(g.num_edges - 1500) <= 150


def test_bahouse_label_multiset():
    g = generate_bahouse(num_base_nodes=50, num_motifs=7, ba_attachment=3,
                         seed=2)
    assert g.num_nodes == 50 + 5 * 7
    counts = np.bincount(g.labels, minlength=4)
    assert counts[1] == 7
    assert counts[2] == 2 * 7
    assert counts[3] == 2 * 7
    assert counts[0] == 50


def test_bahouse_no_motifs_all_base():
    g = generate_bahouse(num_base_nodes=40, num_motifs=0, ba_attachment=3,
                         seed=1)
    assert g.num_nodes == 40
    assert set(g.labels.tolist()) == {0}


def test_bahouse_motifs_are_houses():
    base_n, motifs = 60, 5
    g = generate_bahouse(base_n, motifs, 3, seed=4)
    for apex, m1, m2, g1, g2 in motif_nodes(base_n, motifs):
        expect = {(apex, m1), (apex, m2), (m1, m2), (m1, g1), (m2, g2),
                  (g1, g2)}
        internal = {e for e in g.edges
                    if e[0] >= base_n and e[1] >= base_n
                    and apex <= e[0] <= g2 and apex <= e[1] <= g2}
        assert internal == expect
        # roof triangle plus floor: apex degree 2 inside the motif, one
        # anchor edge leaves from the first ground node
        anchors = [e for e in g.edges if g1 in e and min(e) < base_n]
        assert len(anchors) == 1
        assert g.labels[apex] == 1
        assert list(g.labels[[m1, m2]]) == [2, 2]
        assert list(g.labels[[g1, g2]]) == [3, 3]


def test_bahouse_deterministic():
    a = generate_bahouse(seed=7)
    b = generate_bahouse(seed=7)
    assert a.edges == b.edges
    assert a.checksum() == b.checksum()


def test_bahouse_degree_bucket_features():
    g = generate_bahouse(num_base_nodes=30, num_motifs=2, ba_attachment=2,
                         seed=3)
    assert g.F == 8
    rows = np.asarray(g.features)
    assert np.all(rows.sum(axis=1) == 1.0)
    adj = g.adjacency()
    for v in range(g.num_nodes):
        deg = int(adj.indptr[v + 1] - adj.indptr[v])
        assert rows[v, min(deg, 7)] == 1.0
