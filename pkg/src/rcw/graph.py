"""Immutable attributed graphs, witnesses, and disturbances.

A graph stores an undirected simple edge set (no self loops, pairs kept as
``(u, v)`` with ``u < v``), a dense feature matrix, and optional node labels.
Witnesses identify a subgraph of a fixed host graph and carry a checksum of
that host so cross-graph mixups fail loudly instead of silently.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import IntegrityError, ParameterError

Pair = tuple[int, int]


def normalize_pair(u: int, v: int) -> Pair:
    """Return the unordered pair as (min, max); self-pairs are rejected."""
    if u == v:
        raise ParameterError(f"self-pair ({u},{v}) is not a valid node pair")
    return (u, v) if u < v else (v, u)


class Graph:
    """Undirected attributed graph with CSR adjacency and dense features.

    Instances are immutable after construction and safe for concurrent
    reads. Derived views (edge subsets, disturbed overlays) share the
    feature matrix instead of copying it.
    """

    __slots__ = (
        "num_nodes", "edges", "edge_set", "features", "labels",
        "num_classes", "_adj", "_checksum", "_solver_cache",
    )

    def __init__(
        self,
        num_nodes: int,
        edges,
        features,
        labels=None,
        num_classes: int | None = None,
    ):
        if num_nodes <= 0:
            raise ParameterError("graph needs at least one node")
        canon = set()
        for u, v in edges:
            p = normalize_pair(int(u), int(v))
            if p[1] >= num_nodes:
                raise IntegrityError(f"edge {p} endpoint out of range (n={num_nodes})")
            canon.add(p)
        self.num_nodes = num_nodes
        self.edges: tuple[Pair, ...] = tuple(sorted(canon))
        self.edge_set: frozenset[Pair] = frozenset(canon)

        feats = np.asarray(features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] != num_nodes:
            raise ParameterError(
                f"feature matrix must be [num_nodes x F], got {feats.shape}"
            )
        feats = np.ascontiguousarray(feats)
        feats.setflags(write=False)
        self.features = feats

        if labels is not None:
            lab = np.asarray(labels, dtype=np.int64)
            if lab.shape != (num_nodes,):
                raise ParameterError("labels must be one entry per node")
            lab.setflags(write=False)
        else:
            lab = None
        self.labels = lab

        if num_classes is None:
            num_classes = int(lab.max()) + 1 if lab is not None and lab.size else 2
        if lab is not None and lab.size and int(lab.max()) >= num_classes:
            raise ParameterError("label value exceeds num_classes")
        self.num_classes = num_classes

        self._adj = None
        self._checksum = None
        self._solver_cache = {}

    @property
    def F(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency in CSR form (no self loops), cached."""
        if self._adj is None:
            n = self.num_nodes
            if self.edges:
                arr = np.asarray(self.edges, dtype=np.int64)
                rows = np.concatenate([arr[:, 0], arr[:, 1]])
                cols = np.concatenate([arr[:, 1], arr[:, 0]])
                data = np.ones(rows.shape[0], dtype=np.float64)
                adj = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
            else:
                adj = sp.csr_matrix((n, n), dtype=np.float64)
            self._adj = adj
        return self._adj

    def neighbors(self, v: int) -> np.ndarray:
        adj = self.adjacency()
        return adj.indices[adj.indptr[v]:adj.indptr[v + 1]]

    def degree(self, v: int) -> int:
        adj = self.adjacency()
        return int(adj.indptr[v + 1] - adj.indptr[v])

    def has_edge(self, u: int, v: int) -> bool:
        return normalize_pair(u, v) in self.edge_set

    def _view_from_canonical(self, edge_set) -> "Graph":
        """Internal: build a view from already-canonical (u < v) pairs."""
        g = Graph.__new__(Graph)
        g.num_nodes = self.num_nodes
        g.edges = tuple(sorted(edge_set))
        g.edge_set = frozenset(edge_set)
        g.features = self.features
        g.labels = self.labels
        g.num_classes = self.num_classes
        g._adj = None
        g._checksum = None
        g._solver_cache = {}
        return g

    def with_edges(self, edges) -> "Graph":
        """View of this graph with a different edge set, sharing features."""
        canon = set()
        for u, v in edges:
            p = normalize_pair(int(u), int(v))
            if p[1] >= self.num_nodes:
                raise IntegrityError(f"edge {p} endpoint out of range")
            canon.add(p)
        return self._view_from_canonical(canon)

    def flipped(self, pairs) -> "Graph":
        """View with every listed pair toggled (insert if absent, else remove)."""
        delta = set()
        for u, v in pairs:
            p = normalize_pair(int(u), int(v))
            if p[1] >= self.num_nodes:
                raise IntegrityError(f"pair {p} endpoint out of range")
            delta.add(p)
        return self._view_from_canonical(self.edge_set.symmetric_difference(delta))

    def checksum(self) -> str:
        """Stable digest of structure, features, and labels."""
        if self._checksum is None:
            h = hashlib.blake2b(digest_size=8)
            h.update(str(self.num_nodes).encode())
            h.update(str(self.num_classes).encode())
            h.update(np.asarray(self.edges, dtype=np.int64).tobytes())
            h.update(self.features.tobytes())
            if self.labels is not None:
                h.update(self.labels.tobytes())
            self._checksum = h.hexdigest()
        return self._checksum

    def __reduce__(self):
        # Solver factorizations and CSR caches are process-local; rebuild
        # from the canonical fields on unpickle.
        labels = None if self.labels is None else np.asarray(self.labels)
        return (
            Graph,
            (self.num_nodes, self.edges, np.asarray(self.features),
             labels, self.num_classes),
        )

    def all_pairs(self):
        """All unordered node pairs in lexicographic order."""
        n = self.num_nodes
        for u in range(n):
            for v in range(u + 1, n):
                yield (u, v)

    def __repr__(self):
        return (
            f"Graph(n={self.num_nodes}, m={self.num_edges}, "
            f"F={self.F}, classes={self.num_classes})"
        )


@dataclass(frozen=True)
class Witness:
    """A subgraph of a host graph: node set, edge subset, host digest."""

    nodes: tuple[int, ...]
    edges: tuple[Pair, ...]
    host_checksum: str

    @staticmethod
    def build(g: Graph, nodes, edges=()) -> "Witness":
        node_set = {int(v) for v in nodes}
        edge_set = set()
        for u, v in edges:
            p = normalize_pair(int(u), int(v))
            if p not in g.edge_set:
                raise IntegrityError(f"witness edge {p} not in host graph")
            edge_set.add(p)
            node_set.add(p[0])
            node_set.add(p[1])
        for v in node_set:
            if not 0 <= v < g.num_nodes:
                raise ParameterError(f"witness node {v} out of range")
        return Witness(
            nodes=tuple(sorted(node_set)),
            edges=tuple(sorted(edge_set)),
            host_checksum=g.checksum(),
        )

    @staticmethod
    def whole(g: Graph) -> "Witness":
        return Witness.build(g, range(g.num_nodes), g.edges)

    def validate_against(self, g: Graph) -> None:
        if self.host_checksum != g.checksum():
            raise IntegrityError(
                "witness host checksum does not match the supplied graph"
            )
        for p in self.edges:
            if p not in g.edge_set:
                raise IntegrityError(f"witness edge {p} not in host graph")

    def is_whole_graph(self, g: Graph) -> bool:
        return (
            len(self.nodes) == g.num_nodes
            and frozenset(self.edges) == g.edge_set
        )

    @property
    def size(self) -> int:
        """Size as node count plus edge count."""
        return len(self.nodes) + len(self.edges)

    def with_additions(self, g: Graph, nodes=(), edges=()) -> "Witness":
        return Witness.build(
            g, set(self.nodes) | set(nodes), set(self.edges) | set(edges)
        )


@dataclass(frozen=True)
class Disturbance:
    """A set of node pairs to flip, with its global and local budgets."""

    flips: frozenset[Pair]
    k: int
    b: int | None = None

    @staticmethod
    def build(pairs, k: int | None = None, b: int | None = None) -> "Disturbance":
        canon = frozenset(normalize_pair(int(u), int(v)) for u, v in pairs)
        if k is None:
            k = len(canon)
        d = Disturbance(flips=canon, k=k, b=b)
        d.validate()
        return d

    def validate(self) -> None:
        from .errors import BudgetError

        if len(self.flips) > self.k:
            raise BudgetError(f"{len(self.flips)} flips exceed budget k={self.k}")
        if self.b is not None:
            if self.b < 1:
                raise ParameterError("local budget b must be >= 1")
            touch: dict[int, int] = {}
            for u, v in self.flips:
                touch[u] = touch.get(u, 0) + 1
                touch[v] = touch.get(v, 0) + 1
            worst = max(touch.values(), default=0)
            if worst > self.b:
                raise BudgetError(
                    f"a node appears in {worst} flips, exceeding local budget b={self.b}"
                )

    def sorted_flips(self) -> tuple[Pair, ...]:
        return tuple(sorted(self.flips))


def subtract(g: Graph, w: Witness) -> Graph:
    """Remove the witness edges from the graph, keeping every node."""
    w.validate_against(g)
    return g._view_from_canonical(g.edge_set - set(w.edges))


def witness_view(g: Graph, w: Witness) -> Graph:
    """Keep every node, restrict edges to the witness edge set."""
    w.validate_against(g)
    return g._view_from_canonical(set(w.edges))


# ---------------------------------------------------------------------------
# File formats


def graph_to_dict(g: Graph) -> dict:
    d = {
        "num_nodes": g.num_nodes,
        "edges": [list(e) for e in g.edges],
        "features": g.features.tolist(),
        "num_classes": g.num_classes,
    }
    if g.labels is not None:
        d["labels"] = g.labels.tolist()
    return d


def graph_from_dict(d: dict) -> Graph:
    return Graph(
        num_nodes=int(d["num_nodes"]),
        edges=d.get("edges", []),
        features=d["features"],
        labels=d.get("labels"),
        num_classes=d.get("num_classes"),
    )


def save_graph(g: Graph, path) -> None:
    Path(path).write_text(json.dumps(graph_to_dict(g), sort_keys=True) + "\n")


def load_graph(path) -> Graph:
    return graph_from_dict(json.loads(Path(path).read_text()))


def load_graph_tsv(edge_path, feature_path=None, label_path=None,
                   num_nodes: int | None = None,
                   num_classes: int | None = None) -> Graph:
    """Edge-list loader for bulk input: one ``u<TAB>v`` pair per line.

    Features and labels come from separate TSVs (one row per node); when no
    feature file is given every node gets a single constant feature.
    """
    edges = []
    max_node = -1
    for line in Path(edge_path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        u_s, v_s = line.split("\t")
        u, v = int(u_s), int(v_s)
        edges.append((u, v))
        max_node = max(max_node, u, v)
    if num_nodes is None:
        num_nodes = max_node + 1
    if feature_path is not None:
        features = np.loadtxt(feature_path, delimiter="\t", ndmin=2)
    else:
        features = np.ones((num_nodes, 1))
    labels = None
    if label_path is not None:
        labels = np.loadtxt(label_path, delimiter="\t", dtype=np.int64)
    return Graph(num_nodes, edges, features, labels, num_classes)
