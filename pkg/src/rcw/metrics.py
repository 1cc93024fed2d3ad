"""Evaluation metrics and the removal-biased disturbance injector.

Witnesses live inside one host graph, so node identities are shared and
graph edit distance reduces to exact set symmetric differences; no
correspondence search is needed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ChecksumMismatch, ParameterError
from .graph import Disturbance, Graph, Witness, subtract, witness_view
from .models import GnnModel, infer_all


@dataclass(frozen=True)
class EvalReport:
    fidelity_plus: float
    fidelity_minus: float
    witness_size: int
    normalized_ged: float | None = None
    per_node_detail: tuple = ()

    def to_dict(self) -> dict:
        d = {
            "fidelity_plus": self.fidelity_plus,
            "fidelity_minus": self.fidelity_minus,
            "witness_size": self.witness_size,
            "per_node_detail": [dict(item) for item in self.per_node_detail],
        }
        if self.normalized_ged is not None:
            d["normalized_ged"] = self.normalized_ged
        return d


def normalized_ged(w1: Witness, w2: Witness, *,
                   require_same_host: bool = True) -> float:
    """Edit distance between two witnesses of the same host graph, scaled
    by the larger witness size (nodes plus edges).

    Witnesses of different hosts are rejected unless the caller vouches for
    shared node identities (``require_same_host=False``), as when comparing
    a witness against its counterpart from a disturbed copy of the graph.
    """
    if require_same_host and w1.host_checksum != w2.host_checksum:
        raise ChecksumMismatch(
            "witnesses come from different host graphs; GED under shared "
            "node identity is undefined"
        )
    node_diff = len(set(w1.nodes) ^ set(w2.nodes))
    edge_diff = len(set(w1.edges) ^ set(w2.edges))
    ged = node_diff + edge_diff
    if ged == 0:
        return 0.0
    return ged / max(w1.size, w2.size)


def _fidelity(g: Graph, ws: Witness, test_nodes, m: GnnModel,
              view: Graph) -> tuple[float, list[dict]]:
    test_nodes = tuple(int(v) for v in test_nodes)
    if not test_nodes:
        raise ParameterError("fidelity needs at least one test node")
    base = infer_all(m, test_nodes, g)
    changed = infer_all(m, test_nodes, view)
    total = 0.0
    detail = []
    for v in test_nodes:
        same_before = 1.0  # by definition of the reference label
        same_after = 1.0 if changed[v] == base[v] else 0.0
        total += same_before - same_after
        detail.append({"node": v, "label": base[v], "view_label": changed[v]})
    return total / len(test_nodes), detail


def fidelity_plus(g: Graph, ws: Witness, test_nodes, m: GnnModel) -> float:
    """Fraction of test nodes whose label flips when the witness edges are
    removed from the graph; 1.0 means a perfectly counterfactual witness."""
    score, _ = _fidelity(g, ws, test_nodes, m, subtract(g, ws))
    return score


def fidelity_minus(g: Graph, ws: Witness, test_nodes, m: GnnModel) -> float:
    """Fraction of test nodes whose label flips when inference runs on the
    witness view alone; 0.0 means a perfectly factual witness."""
    score, _ = _fidelity(g, ws, test_nodes, m, witness_view(g, ws))
    return score


def evaluate(g: Graph, ws: Witness, test_nodes, m: GnnModel,
             other: Witness | None = None) -> EvalReport:
    plus, detail = _fidelity(g, ws, test_nodes, m, subtract(g, ws))
    minus, _ = _fidelity(g, ws, test_nodes, m, witness_view(g, ws))
    ged = normalized_ged(ws, other) if other is not None else None
    return EvalReport(
        fidelity_plus=plus,
        fidelity_minus=minus,
        witness_size=ws.size,
        normalized_ged=ged,
        per_node_detail=tuple(tuple(d.items()) for d in detail),
    )


def inject_disturbance(g: Graph, k: int, removal_bias: float = 0.9,
                       seed: int = 0) -> tuple[Graph, Disturbance]:
    """Sample k distinct flips, preferring removals of existing edges.

    Each draw picks an existing edge with probability ``removal_bias`` and
    a non-edge otherwise; when the preferred pool is empty the draw falls
    back to the other pool unless the bias forces the empty one.
    """
    if not 0.0 <= removal_bias <= 1.0:
        raise ParameterError("removal_bias must lie in [0, 1]")
    n_pairs = g.num_nodes * (g.num_nodes - 1) // 2
    if k < 0 or k > n_pairs:
        raise ParameterError(f"cannot sample {k} distinct flips from "
                             f"{n_pairs} pairs")
    rng = np.random.default_rng(seed)
    chosen: set = set()
    edges = sorted(g.edge_set)
    non_edges = [p for p in g.all_pairs() if p not in g.edge_set]
    for _ in range(k):
        remove = rng.random() < removal_bias
        pool = edges if remove else non_edges
        if not pool:
            if remove and removal_bias >= 1.0:
                raise ParameterError(
                    "removal_bias forces deletions but no edges remain"
                )
            if not remove and removal_bias <= 0.0:
                raise ParameterError(
                    "removal_bias forces insertions but no non-edges remain"
                )
            pool = non_edges if remove else edges
        idx = int(rng.integers(len(pool)))
        pair = pool.pop(idx)
        chosen.add(pair)
    disturbance = Disturbance(flips=frozenset(chosen), k=k, b=None)
    return g.flipped(chosen), disturbance
