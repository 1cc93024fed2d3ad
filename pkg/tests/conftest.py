from __future__ import annotations

import sys
from itertools import combinations
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rcw import APPNP, GCN, GcnLayer, GnnModel, Graph, Witness


@pytest.fixture
def triangle():
    return Graph(3, [(0, 1), (1, 2), (0, 2)], np.eye(3), num_classes=3)


@pytest.fixture
def path4():
    return Graph(4, [(0, 1), (1, 2), (2, 3)], np.eye(4), num_classes=4)


def make_star_instance(n_extra=5, seed=0, alpha=0.2, p_edge=0.8):
    """Instance family with a certifiable non-trivial robust witness.

    Node 0 is the test node: its label depends on three strongly-typed
    anchor neighbors (class 1) reachable only over the star edges, while
    the remaining nodes form a class-0 background cluster. Removing the
    star flips the label, and the per-node budget keeps flip sets from
    overpowering the anchors.
    """
    rng = np.random.default_rng(seed)
    n = 4 + n_extra
    edges = [(0, 1), (0, 2), (0, 3)]
    for p in combinations(range(4, n), 2):
        if rng.random() < p_edge:
            edges.append(p)
    features = np.zeros((n, 2))
    features[0] = [1.0, 0.8]
    for i in (1, 2, 3):
        features[i] = [0.0, 6.0 + rng.random()]
    for i in range(4, n):
        features[i] = [3.0 + rng.random(), 0.0]
    g = Graph(n, edges, features, num_classes=2)
    m = GnnModel(kind=APPNP, theta=np.eye(2), alpha=alpha)
    star = Witness.build(g, [0], [(0, 1), (0, 2), (0, 3)])
    return g, m, star


def make_gcn_star_instance(n_extra=4, seed=0):
    """GCN variant of the star family: one layer, identity weights."""
    rng = np.random.default_rng(seed)
    n = 4 + n_extra
    edges = [(0, 1), (0, 2), (0, 3)]
    for p in combinations(range(4, n), 2):
        if rng.random() < 0.7:
            edges.append(p)
    features = np.zeros((n, 2))
    features[0] = [1.0, 0.8]
    for i in (1, 2, 3):
        features[i] = [0.0, 6.0 + rng.random()]
    for i in range(4, n):
        features[i] = [3.0 + rng.random(), 0.0]
    g = Graph(n, edges, features, num_classes=2)
    m = GnnModel(kind=GCN, layers=(
        GcnLayer(weight=np.eye(2), activation="identity"),
    ))
    star = Witness.build(g, [0], [(0, 1), (0, 2), (0, 3)])
    return g, m, star


def random_appnp_instance(rng, n_range=(6, 11), with_anchors=True):
    """Random small APPNP instance; anchors bias it toward verifiable CWs."""
    n = int(rng.integers(*n_range))
    n_anchor = int(rng.integers(2, 4))
    anchors = list(range(1, 1 + n_anchor))
    others = list(range(1 + n_anchor, n))
    edges = [(0, a) for a in anchors]
    for p in combinations(others, 2):
        if rng.random() < 0.5:
            edges.append(p)
    for a in anchors:
        for o in others:
            if rng.random() < 0.15:
                edges.append((min(a, o), max(a, o)))
    num_f = int(rng.integers(2, 4))
    num_c = int(rng.integers(2, 4))
    features = rng.normal(size=(n, num_f))
    if with_anchors:
        features[0] *= 0.3
        for a in anchors:
            features[a] *= 3.0
        for o in others:
            features[o] *= 0.4
    theta = rng.normal(size=(num_f, num_c))
    alpha = float(rng.uniform(0.15, 0.5))
    g = Graph(n, edges, features, num_classes=num_c)
    m = GnnModel(kind=APPNP, theta=theta, alpha=alpha)
    witness = Witness.build(g, [0], [(0, a) for a in anchors])
    return g, m, witness
