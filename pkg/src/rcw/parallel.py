"""Coordinator/worker parallel generation.

The coordinator replays exactly the sequential generation algorithm; the
worker pool only pre-computes pieces of each verification round, so the
generated witness is byte-identical to the sequential output for every
worker count.

Work is split two ways. Policy-iteration attack runs (the APPNP path) are
independent jobs distributed round-robin over the pool and merged in a
fixed order. Exhaustive candidate scans (the brute-force path) follow the
graph partition: each worker owns the candidate pairs whose endpoints fall
inside its fragment plus replicated halo, scans flip sets drawn entirely
from its own pairs, and the coordinator completes the round with the
cross-fragment candidates, skipping everything a worker already verified.
A disproof found inside any fragment disproves the whole instance, so the
coordinator aborts the rest of the round as soon as one arrives.

Workers receive immutable snapshots and return immutable results; the only
shared mutable state is the coordinator's SyncState.
"""

from __future__ import annotations

import multiprocessing as mp
from dataclasses import dataclass, field

import numpy as np

from .bitmap import enumerate_disturbances
from .errors import ParameterError, WorkerFailure
from .generate import GenerationResult, SerialBackend, robo_gexp
from .graph import Disturbance, Graph, Pair, Witness
from .models import GnnModel, infer_all
from .partition import Partition, partition_graph
from .verify import (
    Configuration,
    NodeAttackPlan,
    PriRunOutcome,
    Status,
    VerifyOutcome,
    build_attack_plan,
    check_disturbance,
    decide_node,
    flips_digest,
    run_pri_job,
)

# Worker context is installed by the pool initializer: under the fork start
# method the parent's objects are inherited, under spawn they are shipped
# once per worker.
_CTX: tuple[Graph, GnnModel] | None = None
_LABEL_CACHE: dict = {}

# Workers return full digest lists only for rounds this small; larger
# rounds report counts to keep result payloads bounded.
DIGEST_RETURN_LIMIT = 4096


def _init_ctx(graph: Graph, model: GnnModel) -> None:
    global _CTX, _LABEL_CACHE
    _CTX = (graph, model)
    _LABEL_CACHE = {}


@dataclass(frozen=True)
class WorkerTask:
    """One fragment-scoped brute-force scan assignment."""

    fragment_id: int
    witness_nodes: tuple[int, ...]
    witness_edges: tuple[Pair, ...]
    protected: tuple[Pair, ...]
    test_nodes: tuple[int, ...]
    k: int
    b: int | None
    j: int
    pairs: tuple[Pair, ...]


@dataclass
class SyncState:
    """Coordinator-side record of verified disturbances.

    Digest sets are cumulative per test-node round and keyed by the witness
    under verification, because a disturbance verdict is only reusable
    against the same witness.
    """

    worker_digests: dict = field(default_factory=dict)
    per_worker_deltas: list = field(default_factory=list)
    coordinator_verified: int = 0
    rounds: int = 0
    early_exits: int = 0

    def record_worker(self, key, fragment_id: int, digests) -> None:
        if digests is None:
            return
        store = self.worker_digests.setdefault(key, set())
        store.update(digests)
        self.per_worker_deltas.append((key, fragment_id, frozenset(digests)))

    def seen_by_worker(self, key, digest: int) -> bool:
        return digest in self.worker_digests.get(key, ())


def _rebuild_config(witness_nodes, witness_edges, protected, test_nodes,
                    k, b) -> Configuration:
    graph, model = _CTX
    witness = Witness.build(graph, witness_nodes, witness_edges)
    cfg = Configuration(
        graph=graph, witness=witness, test_nodes=tuple(test_nodes),
        model=model, k=k, b=b, protected=frozenset(protected),
    )
    cache_key = tuple(test_nodes)
    if cache_key not in _LABEL_CACHE:
        _LABEL_CACHE[cache_key] = infer_all(model, test_nodes, graph)
    cfg._base_labels = _LABEL_CACHE[cache_key]
    return cfg


def _pri_worker(payload) -> list[PriRunOutcome]:
    """Rebuild the (deterministic) attack plan locally and run a job slice.

    Only the witness snapshot and job indices travel over the wire; the
    plan itself is recomputed from the shared graph and model, which is
    cheaper than shipping six-figure pair universes.
    """
    (witness_nodes, witness_edges, protected, test_nodes, k, b,
     v, job_indices) = payload
    cfg = _rebuild_config(witness_nodes, witness_edges, protected,
                          test_nodes, k, b)
    plan = build_attack_plan(cfg, v)
    return [run_pri_job(cfg, plan, plan.jobs[i]) for i in job_indices]


def para_verify_rcw(task: WorkerTask, c: Configuration | None = None):
    """Fragment-local exhaustive scan executed on a worker.

    Checks every j-flip set drawn from the fragment's pair universe against
    the full graph (each worker holds the whole adjacency, so a local
    disproof is a global disproof). Returns the verdict, the first breaking
    disturbance if any, the number of candidates checked, and their digests
    when the round is small enough to ship them.
    """
    if c is None:
        c = _rebuild_config(task.witness_nodes, task.witness_edges,
                            task.protected, task.test_nodes, task.k, task.b)
    checked = 0
    digests: list[int] | None = []
    first_break = None
    for d in enumerate_disturbances(task.pairs, task.j, task.b):
        checked += 1
        if digests is not None:
            digests.append(flips_digest(d.flips))
            if len(digests) > DIGEST_RETURN_LIMIT:
                digests = None
        failing = check_disturbance(c, d)
        if failing is not None:
            first_break = (d.sorted_flips(), failing)
            break
    verdict = Status.ROBUST if first_break is None else Status.NOT_ROBUST
    return verdict, first_break, checked, digests


def _brute_worker(payload):
    task = WorkerTask(**payload)
    verdict, first_break, checked, digests = para_verify_rcw(task)
    return task.fragment_id, verdict, first_break, checked, digests


def _pair_owners(partition: Partition, pairs) -> dict[int, list[Pair]]:
    """Assign each pair to the lowest-index fragment containing both
    endpoints locally; unassignable pairs stay with the coordinator."""
    locals_ = [partition.local_nodes(i) for i in range(partition.num_fragments)]
    owned: dict[int, list[Pair]] = {i: [] for i in range(partition.num_fragments)}
    owned[-1] = []  # coordinator residue
    for p in pairs:
        for i, ln in enumerate(locals_):
            if p[0] in ln and p[1] in ln:
                owned[i].append(p)
                break
        else:
            owned[-1].append(p)
    return owned


class ProcessBackend(SerialBackend):
    """Execution backend that fans work out to a fixed process pool."""

    def __init__(self, graph: Graph, model: GnnModel, workers: int,
                 partition: Partition):
        super().__init__()
        if workers < 1:
            raise ParameterError("workers must be >= 1")
        self.workers = workers
        self.partition = partition
        self.sync = SyncState()
        _init_ctx(graph, model)
        try:
            ctx = mp.get_context("fork")
        except ValueError:
            ctx = mp.get_context("spawn")
        self._pool = ctx.Pool(workers, initializer=_init_ctx,
                              initargs=(graph, model))

    def close(self) -> None:
        self._pool.close()
        self._pool.join()

    def _snapshot(self, c: Configuration):
        return (c.witness.nodes, c.witness.edges, tuple(sorted(c.protected)),
                c.test_nodes, c.k, c.b)

    # -- policy-iteration path ---------------------------------------------

    def map_pri_jobs(self, c: Configuration,
                     plan: NodeAttackPlan) -> list[PriRunOutcome]:
        wit_nodes, wit_edges, protected, test_nodes, k, b = self._snapshot(c)
        chunks: list[list[int]] = [[] for _ in range(self.workers)]
        for idx in range(len(plan.jobs)):
            chunks[idx % self.workers].append(idx)
        payloads = [
            (wit_nodes, wit_edges, protected, test_nodes, k, b,
             plan.v, tuple(chunk))
            for chunk in chunks if chunk
        ]
        self.sync.rounds += 1
        try:
            results = self._pool.map(_pri_worker, payloads)
        except Exception as exc:  # noqa: BLE001 - re-raise with diagnostics
            raise WorkerFailure(
                f"attack-plan round for node {plan.v} failed: {exc!r}"
            ) from exc
        outcomes: list[PriRunOutcome] = []
        key = (c.witness.edges, plan.v)
        for fragment_id, chunk_result in enumerate(results):
            digests = []
            for out in chunk_result:
                outcomes.append(out)
                digests.extend(flips_digest(f) for f, _ in out.result.checked)
                self.volatile["disturbances_checked"] = (
                    self.volatile.get("disturbances_checked", 0)
                    + len(out.result.checked)
                )
            self.sync.record_worker(key, fragment_id, digests)
        self.volatile["rounds"] = self.sync.rounds
        self.volatile["coordinator_verified"] = self.sync.coordinator_verified
        return outcomes

    def node_runner(self, c: Configuration,
                    plan: NodeAttackPlan) -> VerifyOutcome:
        return decide_node(c, plan, self.map_pri_jobs(c, plan))

    # -- exhaustive path -----------------------------------------------------

    def scanner(self, c: Configuration, universe):
        wit_nodes, wit_edges, protected, test_nodes, k, b = self._snapshot(c)
        owned = _pair_owners(self.partition, universe)
        key = (c.witness.edges, c.test_nodes)
        for j in range(1, c.k + 1):
            self.sync.rounds += 1
            payloads = []
            for i in range(self.partition.num_fragments):
                if not owned[i]:
                    continue
                payloads.append(dict(
                    fragment_id=i, witness_nodes=wit_nodes,
                    witness_edges=wit_edges, protected=protected,
                    test_nodes=test_nodes, k=k, b=b, j=j,
                    pairs=tuple(owned[i]),
                ))
            breaks = []
            if payloads:
                try:
                    results = self._pool.map(_brute_worker, payloads)
                except Exception as exc:  # noqa: BLE001
                    raise WorkerFailure(
                        f"scan round j={j} failed: {exc!r}"
                    ) from exc
                for fragment_id, verdict, first_break, checked, digests in results:
                    self.volatile["disturbances_checked"] = (
                        self.volatile.get("disturbances_checked", 0) + checked
                    )
                    self.sync.record_worker(key, fragment_id, digests)
                    if verdict is Status.NOT_ROBUST:
                        flips, failing = first_break
                        breaks.append((tuple(sorted(flips)), failing))
            if breaks:
                # A fragment-local disproof is a global disproof: abort the
                # coordinator share of this round.
                self.sync.early_exits += 1
                self.volatile["early_exits"] = self.sync.early_exits
                self.volatile["rounds"] = self.sync.rounds
                flips, failing = min(breaks)
                return Disturbance.build(flips, k=c.k, b=c.b), failing
            # Coordinator completes the round: subsets spanning fragments.
            owner_sets = {i: frozenset(owned[i])
                          for i in range(self.partition.num_fragments)}
            for d in enumerate_disturbances(tuple(universe), j, c.b):
                if any(d.flips <= s for s in owner_sets.values()):
                    continue
                self.sync.coordinator_verified += 1
                self.volatile["disturbances_checked"] = (
                    self.volatile.get("disturbances_checked", 0) + 1
                )
                failing = check_disturbance(c, d)
                if failing is not None:
                    self.volatile["rounds"] = self.sync.rounds
                    self.volatile["coordinator_verified"] = (
                        self.sync.coordinator_verified
                    )
                    return d, failing
            self.volatile["coordinator_verified"] = self.sync.coordinator_verified
        self.volatile["rounds"] = self.sync.rounds
        return None


def para_robo_gexp(g: Graph, test_nodes, m: GnnModel, k: int,
                   b: int | None = None, workers: int = 1, seed: int = 0,
                   *, enumeration_cap: int | None = None) -> GenerationResult:
    """Parallel generation; output is identical to ``robo_gexp``.

    The graph is partitioned with a halo wide enough for both the model's
    receptive field and the flip budget; with one worker the sequential
    engine runs unchanged.
    """
    if workers < 1:
        raise ParameterError("workers must be >= 1")
    if workers == 1:
        res = robo_gexp(g, test_nodes, m, k, b,
                        enumeration_cap=enumeration_cap)
        res.volatile.setdefault("rounds", 0)
        res.volatile.setdefault("coordinator_verified", 0)
        return res
    hop_radius = max(m.L, k)
    partition = partition_graph(g, min(workers, g.num_nodes), hop_radius, seed)
    backend = ProcessBackend(g, m, workers, partition)
    try:
        res = robo_gexp(g, test_nodes, m, k, b,
                        enumeration_cap=enumeration_cap, backend=backend)
    finally:
        backend.close()
    res.volatile.setdefault("rounds", backend.sync.rounds)
    res.volatile.setdefault("coordinator_verified",
                            backend.sync.coordinator_verified)
    return res
