"""Synthetic benchmark graphs: a preferential-attachment base decorated
with five-node house motifs.

Each house is an apex over a roof triangle sitting on two mutually
connected ground nodes; one ground node attaches the house to a random
base node. Motif roles are labeled 1 (roof apex), 2 (middle), 3 (ground);
base nodes are labeled 0. When no external features exist, nodes get
one-hot degree buckets.
"""

from __future__ import annotations

import networkx as nx
import numpy as np

from .errors import ParameterError
from .graph import Graph

DEGREE_BUCKETS = 8

# Defaults sized to the 300-node / ~1500-edge benchmark configuration:
# 200 base nodes at attachment 7 plus 20 motifs of 5 nodes and 7 edges.
DEFAULT_BASE_NODES = 200
DEFAULT_MOTIFS = 20
DEFAULT_ATTACHMENT = 7

ROOF, MIDDLE, GROUND = 1, 2, 3


def generate_bahouse(num_base_nodes: int = DEFAULT_BASE_NODES,
                     num_motifs: int = DEFAULT_MOTIFS,
                     ba_attachment: int = DEFAULT_ATTACHMENT,
                     seed: int = 0) -> Graph:
    if num_base_nodes <= ba_attachment:
        raise ParameterError("base graph needs more nodes than the "
                             "attachment count")
    if num_motifs < 0 or ba_attachment < 1:
        raise ParameterError("motif and attachment counts must be positive")

    base = nx.barabasi_albert_graph(num_base_nodes, ba_attachment, seed=seed)
    edges = [tuple(sorted(e)) for e in base.edges()]
    labels = [0] * num_base_nodes

    rng = np.random.default_rng(seed)
    next_node = num_base_nodes
    for _ in range(num_motifs):
        apex = next_node
        m1, m2 = next_node + 1, next_node + 2
        g1, g2 = next_node + 3, next_node + 4
        next_node += 5
        edges.extend([
            (apex, m1), (apex, m2), (m1, m2),   # roof triangle
            (m1, g1), (m2, g2), (g1, g2),       # walls and floor
        ])
        anchor = int(rng.integers(num_base_nodes))
        edges.append(tuple(sorted((g1, anchor))))
        labels.extend([ROOF, MIDDLE, MIDDLE, GROUND, GROUND])

    num_nodes = next_node
    degree = np.zeros(num_nodes, dtype=np.int64)
    for u, v in edges:
        degree[u] += 1
        degree[v] += 1
    buckets = np.minimum(degree, DEGREE_BUCKETS - 1)
    features = np.zeros((num_nodes, DEGREE_BUCKETS))
    features[np.arange(num_nodes), buckets] = 1.0

    return Graph(num_nodes, edges, features, labels, num_classes=4)


def motif_nodes(num_base_nodes: int, num_motifs: int):
    """Node ids of each motif as (apex, middle1, middle2, ground1, ground2)."""
    out = []
    for i in range(num_motifs):
        start = num_base_nodes + 5 * i
        out.append(tuple(range(start, start + 5)))
    return out
