"""Bit-level adjacency overlays and disturbance enumeration.

The bitmap keeps one bit per unordered node pair in a triangular layout and
records every flip in a dirty log, so a batch of flips can be undone in O(1)
per flip without touching the rest of the matrix. A single bitmap must only
ever be mutated by one task at a time; concurrent searches take one bitmap
each.
"""

from __future__ import annotations

import math
from itertools import combinations
from typing import Iterable, Iterator

import numpy as np

from .errors import BudgetError, CapacityError, ParameterError
from .graph import Disturbance, Graph, Pair, Witness, normalize_pair

DEFAULT_ENUMERATION_CAP = 10_000_000


def pair_index(u: int, v: int, n: int) -> int:
    """Index of pair (u, v), u < v, in the row-major upper triangle."""
    return u * n - (u * (u + 1)) // 2 + (v - u - 1)


class AdjacencyBitmap:
    """Mutable bit overlay of a host graph's adjacency matrix."""

    __slots__ = ("graph", "n", "_bits", "_dirty", "_overlay")

    def __init__(self, graph: Graph):
        self.graph = graph
        self.n = graph.num_nodes
        n_pairs = self.n * (self.n - 1) // 2
        self._bits = np.zeros((n_pairs + 7) // 8, dtype=np.uint8)
        for u, v in graph.edges:
            self._set(pair_index(u, v, self.n))
        self._dirty: list[Pair] = []
        # pairs currently differing from the host graph
        self._overlay: set[Pair] = set()

    def _set(self, idx: int) -> None:
        self._bits[idx >> 3] |= 1 << (idx & 7)

    def _toggle(self, idx: int) -> None:
        self._bits[idx >> 3] ^= 1 << (idx & 7)

    def _get(self, idx: int) -> bool:
        return bool((self._bits[idx >> 3] >> (idx & 7)) & 1)

    def edge_present(self, u: int, v: int) -> bool:
        a, b = normalize_pair(u, v)
        return self._get(pair_index(a, b, self.n))

    def flip(self, pair: Pair) -> None:
        p = normalize_pair(*pair)
        self._toggle(pair_index(p[0], p[1], self.n))
        self._dirty.append(p)
        if p in self._overlay:
            self._overlay.remove(p)
        else:
            self._overlay.add(p)

    def checkpoint(self) -> int:
        return len(self._dirty)

    def restore(self, token: int = 0) -> None:
        """Undo flips back to the given checkpoint (default: pristine)."""
        while len(self._dirty) > token:
            p = self._dirty.pop()
            self._toggle(pair_index(p[0], p[1], self.n))
            if p in self._overlay:
                self._overlay.remove(p)
            else:
                self._overlay.add(p)

    def overlay_pairs(self) -> frozenset[Pair]:
        return frozenset(self._overlay)

    def current_graph(self) -> Graph:
        """Materialize the overlaid adjacency as a graph view."""
        if not self._overlay:
            return self.graph
        return self.graph.flipped(self._overlay)


def apply_disturbance(bitmap: AdjacencyBitmap, d: Disturbance,
                      frozen_edges: Iterable[Pair] = ()) -> int:
    """Flip every pair of the disturbance; returns a restore token.

    Budgets and collisions with frozen witness edges are rejected before any
    bit is touched, so a failed call leaves the bitmap untouched.
    """
    d.validate()
    frozen = set(frozen_edges)
    for p in d.flips:
        if p in frozen:
            raise BudgetError(f"flip {p} collides with a frozen witness edge")
    token = bitmap.checkpoint()
    for p in sorted(d.flips):
        bitmap.flip(p)
    return token


def disturbance_universe(g: Graph, witness: Witness | None = None,
                         protected: Iterable[Pair] = ()) -> tuple[Pair, ...]:
    """Candidate pairs an adversary may flip: everything outside the witness.

    Insertions are allowed, so the universe covers all unordered node pairs,
    minus witness edges and explicitly protected pairs.
    """
    excluded = {normalize_pair(*p) for p in protected}
    if witness is not None:
        excluded.update(witness.edges)
    return tuple(p for p in g.all_pairs() if p not in excluded)


def count_disturbances(universe_size: int, k: int) -> int:
    """Upper bound on the number of disturbances of size 1..k."""
    return sum(math.comb(universe_size, j) for j in range(1, k + 1))


def enumerate_disturbances(universe: tuple[Pair, ...], j: int,
                           b: int | None = None) -> Iterator[Disturbance]:
    """Yield every size-j flip set over the universe, lexicographically.

    With a local budget b, combinations touching any node more than b times
    are filtered out. The stream is empty when the universe is smaller
    than j.
    """
    if j < 1:
        raise ParameterError("disturbance size j must be >= 1")
    if b is not None and b < 1:
        raise ParameterError("local budget b must be >= 1")
    for combo in combinations(universe, j):
        if b is not None and j > 1:
            touch: dict[int, int] = {}
            ok = True
            for u, v in combo:
                tu = touch.get(u, 0) + 1
                tv = touch.get(v, 0) + 1
                if tu > b or tv > b:
                    ok = False
                    break
                touch[u] = tu
                touch[v] = tv
            if not ok:
                continue
        yield Disturbance(flips=frozenset(combo), k=j, b=b)


def guard_enumeration(universe_size: int, k: int,
                      cap: int = DEFAULT_ENUMERATION_CAP) -> None:
    total = count_disturbances(universe_size, k)
    if total > cap:
        raise CapacityError(
            f"enumerating {total} disturbances exceeds the cap of {cap}; "
            "raise the cap explicitly for larger instances"
        )
