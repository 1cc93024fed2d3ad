"""Independent naive re-implementations used as test oracles.

Everything here goes through dense numpy matrices and explicit inverses,
deliberately avoiding the package's sparse/CSR code paths so that
agreement between the two is meaningful.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np


def dense_adjacency(num_nodes, edges):
    a = np.zeros((num_nodes, num_nodes))
    for u, v in edges:
        a[u, v] = a[v, u] = 1.0
    return a


def gcn_logits(num_nodes, edges, features, layer_weights, activations):
    """Layer-wise propagation via dense matrices; last layer raw."""
    a_hat = dense_adjacency(num_nodes, edges) + np.eye(num_nodes)
    d = a_hat.sum(axis=1)
    prop = a_hat / np.sqrt(np.outer(d, d))
    x = np.asarray(features, dtype=float)
    last = len(layer_weights) - 1
    for i, (w, act) in enumerate(zip(layer_weights, activations)):
        x = prop @ x @ np.asarray(w)
        if i != last and act == "relu":
            x = np.maximum(x, 0.0)
    return x


def appnp_pi(num_nodes, edges, alpha):
    a_hat = dense_adjacency(num_nodes, edges) + np.eye(num_nodes)
    p = a_hat / a_hat.sum(axis=1, keepdims=True)
    return (1.0 - alpha) * np.linalg.inv(np.eye(num_nodes) - alpha * p)


def appnp_logits(num_nodes, edges, features, theta, alpha):
    return appnp_pi(num_nodes, edges, alpha) @ (
        np.asarray(features, dtype=float) @ np.asarray(theta)
    )


def appnp_label(num_nodes, edges, features, theta, alpha, v):
    return int(np.argmax(appnp_logits(num_nodes, edges, features, theta, alpha)[v]))


def flip_edges(edges, pairs):
    es = {tuple(sorted(e)) for e in edges}
    for p in pairs:
        p = tuple(sorted(p))
        if p in es:
            es.remove(p)
        else:
            es.add(p)
    return es


def kb_flip_sets(universe, k, b=None):
    """Every flip set of size 1..k over the universe, per-node budget b."""
    for j in range(1, k + 1):
        for combo in combinations(sorted(universe), j):
            if b is not None:
                touch = {}
                ok = True
                for u, v in combo:
                    touch[u] = touch.get(u, 0) + 1
                    touch[v] = touch.get(v, 0) + 1
                    if touch[u] > b or touch[v] > b:
                        ok = False
                        break
                if not ok:
                    continue
            yield combo


def cw_break(num_nodes, edges, features, theta, alpha, test_nodes,
             witness_edges, k, b):
    """First (k,b) flip set outside the witness that breaks the
    counterfactual-witness property for any test node, or None."""
    wedges = {tuple(sorted(e)) for e in witness_edges}
    labels = {
        v: appnp_label(num_nodes, edges, features, theta, alpha, v)
        for v in test_nodes
    }
    universe = [p for p in combinations(range(num_nodes), 2) if p not in wedges]
    for combo in kb_flip_sets(universe, k, b):
        disturbed = flip_edges(edges, combo)
        remainder = disturbed - wedges
        for v in test_nodes:
            if appnp_label(num_nodes, disturbed, features, theta, alpha,
                           v) != labels[v]:
                return combo, v, "label"
            if appnp_label(num_nodes, remainder, features, theta, alpha,
                           v) == labels[v]:
                return combo, v, "removal"
    return None
