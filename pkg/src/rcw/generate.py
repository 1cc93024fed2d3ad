"""Expand-verify generation of robust counterfactual witnesses.

Generation starts from the bare test-node set, walks the test nodes in
insertion order, and for each one augments the witness with the node pairs
whose flips most threaten its label, re-verifying the grown witness after
every augmentation. Any verification failure falls back to the trivial
answer (the whole graph) instead of backtracking, which keeps the worst
case bounded.

Pairs selected by the threat search that are not edges of the host graph
cannot become witness edges; they are tracked as protected pairs, removed
from the adversary's universe, and serialized alongside the witness.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .graph import Graph, Pair, Witness
from .models import APPNP, GnnModel, forward, infer_all
from .verify import (
    Configuration,
    NodeAttackPlan,
    PriRunOutcome,
    Status,
    VerifyOutcome,
    build_attack_plan,
    decide_node,
    is_kb_valid,
    run_pri_job,
    select_hit,
    verify_rcw_appnp,
    verify_rcw_bruteforce,
)

THREAT_TOL = 1e-12
# Expansion keeps absorbing threat batches until the node verifies or no
# new pair arrives; this cap bounds wall time on large instances where
# counterfactuality is unreachable (the outer verification then falls back
# to the trivial answer).
EXPAND_MAX_ROUNDS = 32


@dataclass
class GenerationResult:
    """A generated witness plus run statistics.

    ``stats`` carries only counters that are identical for every execution
    backend (expansions, verifications); volatile run data such as wall time
    and parallel round counts live in ``volatile`` so serialized witnesses
    stay byte-stable across runs and worker counts.
    """

    witness: Witness
    protected: frozenset[Pair]
    trivial: bool
    k: int
    b: int | None
    stats: dict = field(default_factory=dict)
    volatile: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "nodes": list(self.witness.nodes),
            "edges": [list(e) for e in self.witness.edges],
            "protected_pairs": [list(p) for p in sorted(self.protected)],
            "k": self.k,
            "b": self.b,
            "trivial": self.trivial,
            "host_checksum": self.witness.host_checksum,
            "stats": {key: self.stats[key] for key in sorted(self.stats)},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def save_witness(res: GenerationResult, path) -> None:
    Path(path).write_text(res.to_json())


def load_witness(path, g: Graph):
    """Read a witness file back as (witness, protected, k, b, trivial)."""
    d = json.loads(Path(path).read_text())
    w = Witness(
        nodes=tuple(int(v) for v in d["nodes"]),
        edges=tuple(tuple(int(x) for x in e) for e in d["edges"]),
        host_checksum=d["host_checksum"],
    )
    w.validate_against(g)
    protected = frozenset(tuple(int(x) for x in p)
                          for p in d.get("protected_pairs", []))
    return w, protected, d.get("k"), d.get("b"), d.get("trivial", False)


class SerialBackend:
    """Default in-process execution of attack plans and candidate scans."""

    workers = 1

    def __init__(self):
        self.volatile: dict = {}

    def map_pri_jobs(self, c: Configuration,
                     plan: NodeAttackPlan) -> list[PriRunOutcome]:
        """Run jobs in plan order; within a (side, class) group, later
        restart seeds are skipped once a budget-valid flipping attack
        appeared, which cannot change the fold result."""
        outcomes: list[PriRunOutcome] = []
        done_groups: set[tuple[str, int]] = set()
        for job in plan.jobs:
            key = (job.side, job.cls)
            if key in done_groups:
                continue
            out = run_pri_job(c, plan, job)
            outcomes.append(out)
            self.volatile["disturbances_checked"] = (
                self.volatile.get("disturbances_checked", 0)
                + len(out.result.checked)
            )
            if out.result.flipped and is_kb_valid(out.result.flips, c.k, c.b):
                done_groups.add(key)
        return outcomes

    def node_runner(self, c: Configuration, plan: NodeAttackPlan) -> VerifyOutcome:
        return decide_node(c, plan, self.map_pri_jobs(c, plan))

    def scanner(self, c: Configuration, universe):
        checked = 0
        from .bitmap import enumerate_disturbances
        from .verify import check_disturbance

        for j in range(1, c.k + 1):
            for d in enumerate_disturbances(universe, j, c.b):
                checked += 1
                failing = check_disturbance(c, d)
                if failing is not None:
                    self.volatile["disturbances_checked"] = (
                        self.volatile.get("disturbances_checked", 0) + checked
                    )
                    return d, failing
        self.volatile["disturbances_checked"] = (
            self.volatile.get("disturbances_checked", 0) + checked
        )
        return None


def node_threats(c: Configuration, plan: NodeAttackPlan,
                 outcomes, *, force_label_attack: bool = False) -> set[Pair]:
    """Pairs whose flips the verifier would reject the witness over.

    Mirrors the rejection logic of the node verdict: flipping attacks
    contribute their flip sets, and so do label-side optima that fail the
    margin test or did not converge. When the removal side cannot be
    certified, the strongest pull-back attack per class is contributed as
    well. With ``force_label_attack`` the margin-minimizing attack is
    contributed even when it certifies safety, which drives growth toward
    counterfactual-ness while the witness is still incomplete.
    """
    by_group: dict[tuple[str, int], list[PriRunOutcome]] = {}
    for out in outcomes:
        by_group.setdefault((out.job.side, out.job.cls), []).append(out)
    for group in by_group.values():
        group.sort(key=lambda o: o.job.seed_index)

    threats: set[Pair] = set()
    label_reps: list[tuple[float, int, frozenset]] = []
    hit_groups: set[tuple[str, int]] = set()
    for (side, cls), group in sorted(by_group.items()):
        hit = select_hit(group, c.k, c.b)
        if hit is not None:
            hit_groups.add((side, cls))
            threats |= set(hit.result.flips)
            continue
        best = min(group, key=lambda o: (-o.result.objective,
                                         o.job.seed_index))
        res = best.result
        if side == "label":
            label_reps.append((-res.objective, cls, res.flips))
            if not res.converged or -res.objective <= THREAT_TOL:
                threats |= set(res.flips)

    if force_label_attack and label_reps:
        # The attack achieving the worst (smallest) margin across classes.
        label_reps.sort()
        threats |= set(label_reps[0][2])

    # Certify the removal side only when no removal attack already broke
    # through; hit groups may have been cut short by the backend and are
    # fully covered by their contributed flips above.
    removal_classes = sorted(cls for side, cls in by_group
                             if side == "removal"
                             and (side, cls) not in hit_groups)
    any_removal_hit = any(side == "removal" for side, _ in hit_groups)
    if removal_classes and not any_removal_hit:
        blocked = any(
            (best := min(by_group[("removal", cls)],
                         key=lambda o: (-o.result.objective,
                                        o.job.seed_index))).result.converged
            and best.result.objective <= -THREAT_TOL
            for cls in removal_classes
        )
        if not blocked:
            for cls in removal_classes:
                best = min(by_group[("removal", cls)],
                           key=lambda o: (-o.result.objective,
                                          o.job.seed_index))
                threats |= set(best.result.flips)
    return threats


def _single_flip_threats(c: Configuration, v: int) -> set[Pair]:
    """Generic threat probe: score every candidate pair by the logit-margin
    drop its single flip causes, keep the top-k positive drops.

    This is a heuristic stand-in for models without a margin certificate;
    exact robustness still comes from the verification step.
    """
    g, m = c.graph, c.model
    l = c.base_labels()[v]
    logits = forward(m, g)
    other = [cls for cls in range(g.num_classes) if cls != l]
    margin0 = logits[v, l] - max(logits[v, cls] for cls in other)
    scored: list[tuple[float, Pair]] = []
    for p in c.universe():
        lg = forward(m, g.flipped([p]))
        margin = lg[v, l] - max(lg[v, cls] for cls in other)
        drop = margin0 - margin
        if drop > THREAT_TOL:
            scored.append((drop, p))
    scored.sort(key=lambda t: (-t[0], t[1]))
    return {p for _, p in scored[: c.k]}


def _cw_holds_for(c: Configuration, v: int) -> bool:
    """Counterfactual-witness property restricted to one node."""
    from .graph import subtract, witness_view

    if not c.witness.edges:
        return False
    l = c.base_labels()[v]
    on_view = infer_all(c.model, (v,), witness_view(c.graph, c.witness))[v]
    if on_view != l:
        return False
    if c.witness.is_whole_graph(c.graph):
        return True
    on_rem = infer_all(c.model, (v,), subtract(c.graph, c.witness))[v]
    return on_rem != l


def expand(v: int, ws: Witness, c: Configuration,
           backend: SerialBackend | None = None) -> tuple[Witness, frozenset[Pair]]:
    """Grow the witness by the pairs that most threaten node v's label.

    Batches of threat pairs are absorbed until the node's witness both
    holds counterfactually and verifies robust, or until no new threat
    emerges; growth is strictly monotone and bounded by the pair universe,
    so the loop always terminates. Threat pairs that are edges of the host
    graph join the witness (with their endpoints); non-edges join the
    protected set, removing them from the adversary's universe.
    """
    if frozenset(ws.edges) != frozenset(c.witness.edges) or \
            frozenset(ws.nodes) != frozenset(c.witness.nodes):
        c = c.replace_witness(ws, c.protected)
    if backend is None:
        backend = SerialBackend()

    appnp_path = c.model.kind == APPNP and c.b is not None
    max_rounds = min(EXPAND_MAX_ROUNDS, c.graph.num_nodes + c.graph.num_edges)
    for _ in range(max_rounds):
        if appnp_path:
            cw_ok = _cw_holds_for(c, v)
            plan = build_attack_plan(c, v)
            outcomes = backend.map_pri_jobs(c, plan)
            if cw_ok and decide_node(c, plan, outcomes).robust:
                break
            threats = node_threats(c, plan, outcomes,
                                   force_label_attack=not cw_ok)
        else:
            if _cw_holds_for(c, v):
                break
            threats = _single_flip_threats(c, v)
        new_edges = {p for p in threats if p in c.graph.edge_set}
        new_protected = {p for p in threats if p not in c.graph.edge_set}
        grew_edges = new_edges - set(c.witness.edges)
        grew_protected = new_protected - set(c.protected)
        if not grew_edges and not grew_protected:
            break
        witness = c.witness.with_additions(c.graph, edges=new_edges)
        c = c.replace_witness(witness, c.protected | frozenset(new_protected))
    return c.witness, c.protected


def _gen_verify(c: Configuration, backend: SerialBackend,
                stats: dict) -> VerifyOutcome:
    stats["verifications"] += 1
    if not c.witness.edges:
        # The bare node set is the trivial counterfactual witness; there is
        # nothing to verify until the first edge arrives.
        return VerifyOutcome(Status.ROBUST)
    if c.model.kind == APPNP and c.b is not None:
        return verify_rcw_appnp(c, node_runner=backend.node_runner)
    return verify_rcw_bruteforce(c, scanner=backend.scanner)


def robo_gexp(g: Graph, test_nodes, m: GnnModel, k: int,
              b: int | None = None, *, enumeration_cap: int | None = None,
              backend: SerialBackend | None = None) -> GenerationResult:
    """Generate a k-robust counterfactual witness for the test nodes.

    Returns the trivial whole-graph result whenever any intermediate
    verification fails or no edge ever enters the witness; otherwise the
    final witness is verified robust for every test node.
    """
    if k < 1:
        raise ParameterError("generation requires k >= 1")
    test_nodes = tuple(int(v) for v in test_nodes)
    if not test_nodes:
        raise ParameterError("generation requires at least one test node")
    for v in test_nodes:
        if not 0 <= v < g.num_nodes:
            raise ParameterError(f"test node {v} out of range")
    if backend is None:
        backend = SerialBackend()

    start = time.perf_counter()
    stats = {"expansions": 0, "verifications": 0}

    def finish(witness: Witness, protected: frozenset[Pair],
               trivial: bool) -> GenerationResult:
        volatile = dict(backend.volatile)
        volatile["wall_time_s"] = time.perf_counter() - start
        volatile["workers"] = backend.workers
        return GenerationResult(
            witness=witness, protected=protected, trivial=trivial,
            k=k, b=b, stats=stats, volatile=volatile,
        )

    def trivial_result() -> GenerationResult:
        return finish(Witness.whole(g), frozenset(), True)

    ws = Witness.build(g, test_nodes)
    protected: frozenset[Pair] = frozenset()

    def config_for(witness: Witness, prot: frozenset[Pair]) -> Configuration:
        cfg = Configuration(
            graph=g, witness=witness, test_nodes=test_nodes, model=m,
            k=k, b=b, protected=prot,
        )
        if enumeration_cap is not None:
            cfg.enumeration_cap = enumeration_cap
        return cfg

    for v in test_nodes:
        cfg = config_for(ws, protected)
        if not _gen_verify(cfg, backend, stats).robust:
            return trivial_result()
        stats["expansions"] += 1
        ws_next, protected_next = expand(v, ws, cfg, backend=backend)
        cfg_next = config_for(ws_next, protected_next)
        if not _gen_verify(cfg_next, backend, stats).robust:
            return trivial_result()
        ws, protected = ws_next, protected_next

    if not ws.edges or ws.is_whole_graph(g):
        return trivial_result()
    return finish(ws, protected, False)
