"""Adjacency storage and alpha-diversity edge selection.

The table is one pre-allocated ``uint32`` block of shape ``(N, R + 1)``:
column 0 is the degree, columns ``1..R`` the neighbor ids with unused
entries zero. That is byte-for-byte the on-disk slot layout.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from . import _kernels


class GraphInvariantError(RuntimeError):
    """Raised when an operation would break (or finds broken) table invariants."""


class Candidate(NamedTuple):
    node_id: int
    dist: int


@dataclass(frozen=True)
class BuildParams:
    m: int = 32
    ef_c: int = 128
    alpha: float = 1.2
    threads: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.ef_c < 1:
            raise ValueError("ef_c must be >= 1")
        if not self.alpha >= 1.0:
            raise ValueError("alpha must be >= 1.0")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    @property
    def max_degree(self) -> int:
        return 2 * self.m

    @property
    def alpha_milli(self) -> int:
        # pruning compares 1000*d(c,t) <= alpha_milli*d(c,s) in exact integers
        return int(round(self.alpha * 1000))


def alpha_to_milli(alpha: float) -> int:
    return int(round(alpha * 1000))


class AdjacencyTable:
    """Fixed-slot neighbor lists with one spin lock per slot."""

    def __init__(self, num_nodes: int, max_degree: int, slots: np.ndarray | None = None):
        if num_nodes < 0 or max_degree < 1:
            raise ValueError("invalid table shape")
        if slots is None:
            slots = np.zeros((num_nodes, max_degree + 1), dtype=np.uint32)
        elif slots.shape != (num_nodes, max_degree + 1) or slots.dtype != np.uint32:
            raise ValueError("slot array has the wrong shape or dtype")
        self.slots = slots
        self.locks = np.zeros(num_nodes, dtype=np.int32)

    @property
    def num_nodes(self) -> int:
        return self.slots.shape[0]

    @property
    def max_degree(self) -> int:
        return self.slots.shape[1] - 1

    def _check(self, node: int) -> int:
        node = int(node)
        if not 0 <= node < self.num_nodes:
            raise GraphInvariantError(f"unknown node id {node}")
        return node

    def degree(self, node: int) -> int:
        return int(self.slots[self._check(node), 0])

    def degrees(self) -> np.ndarray:
        return self.slots[:, 0].astype(np.int64)

    def neighbors(self, node: int) -> np.ndarray:
        node = self._check(node)
        deg = int(self.slots[node, 0])
        return self.slots[node, 1 : 1 + deg].astype(np.int64)

    @contextmanager
    def locked(self, node: int):
        node = self._check(node)
        _kernels.lock_slot(self.locks, node)
        try:
            yield
        finally:
            _kernels.unlock_slot(self.locks, node)

    def set_neighbors(self, node: int, ids: Sequence[int]) -> None:
        """Overwrite a slot. Caller must hold the slot's lock."""
        node = self._check(node)
        ids = [int(i) for i in ids]
        if len(ids) > self.max_degree:
            raise GraphInvariantError(f"degree {len(ids)} exceeds cap {self.max_degree}")
        for i in ids:
            self._check(i)
        self.slots[node, 1:] = 0
        self.slots[node, 1 : 1 + len(ids)] = ids
        self.slots[node, 0] = len(ids)

    def edges(self) -> Iterable[tuple[int, int]]:
        for u in range(self.num_nodes):
            for v in self.neighbors(u):
                yield u, int(v)

    def check_invariants(self) -> list[str]:
        """Exhaustive scan; returns a list of human-readable violations."""
        problems = []
        R = self.max_degree
        for u in range(self.num_nodes):
            deg = int(self.slots[u, 0])
            if deg > R:
                problems.append(f"node {u}: degree {deg} > {R}")
                continue
            nbrs = self.slots[u, 1 : 1 + deg].astype(np.int64)
            if np.any(nbrs >= self.num_nodes):
                problems.append(f"node {u}: neighbor id out of range")
            if np.any(nbrs == u):
                problems.append(f"node {u}: self-loop")
            if len(np.unique(nbrs)) != deg:
                problems.append(f"node {u}: duplicate neighbor")
            if np.any(self.slots[u, 1 + deg :] != 0):
                problems.append(f"node {u}: unused entries not zeroed")
        return problems

    def reachable_from(self, start: int) -> int:
        """Number of nodes reached by breadth-first traversal from ``start``."""
        seen = np.zeros(self.num_nodes, dtype=bool)
        seen[start] = True
        frontier = np.array([start], dtype=np.int64)
        while frontier.size:
            rows = self.slots[frontier]
            mask = np.arange(1, rows.shape[1]) <= rows[:, :1]
            nxt = np.unique(rows[:, 1:][mask].astype(np.int64))
            nxt = nxt[~seen[nxt]]
            seen[nxt] = True
            frontier = nxt
        return int(seen.sum())


def robust_prune(
    candidates: Iterable[Candidate],
    dist_fn: Callable[[int, int], int],
    R: int,
    alpha: float,
) -> list[int]:
    """Greedy alpha-diversity selection.

    Candidates are visited in ascending ``(dist, node_id)`` order. A candidate
    ``c`` is kept when ``dist(c, target) <= alpha * dist_fn(c, s)`` holds for
    every already kept ``s``; selection stops after ``R`` picks.

    Args:
        candidates: ``Candidate`` items whose ``dist`` is the distance to the target.
        dist_fn: Pairwise distance between two candidate ids.
        R: Maximum number of selections.
        alpha: Relaxation factor, at least 1. Compared at milli precision.

    Returns:
        Selected node ids in selection order.
    """
    alpha_milli = alpha_to_milli(alpha)
    ordered = sorted((int(c.dist), int(c.node_id)) for c in candidates)
    selected: list[int] = []
    for d_ct, c in ordered:
        if len(selected) == R:
            break
        if all(1000 * d_ct <= alpha_milli * dist_fn(c, s) for s in selected):
            selected.append(c)
    return selected


def insert_bidirectional(
    node: int,
    pruned_neighbors: Sequence[int],
    table: AdjacencyTable,
    dist_fn: Callable[[int, int], int],
    params: BuildParams,
    events: list | None = None,
) -> None:
    """Write ``node``'s forward edges, then offer the reverse edge to each neighbor.

    A neighbor already at the degree cap is re-pruned over its current list
    plus ``node``. Locks are taken one slot at a time. When ``events`` is
    given, one ``(neighbor, node, outcome, removed)`` tuple is appended per
    offer; outcome is ``"present"``, ``"appended"``, ``"repruned"`` or
    ``"dropped"`` (re-pruned without keeping ``node``) and ``removed`` lists
    the ids a re-prune cut from the neighbor's slot.
    """
    table._check(node)
    R = table.max_degree
    with table.locked(node):
        table.set_neighbors(node, pruned_neighbors)
    for b in pruned_neighbors:
        b = int(b)
        with table.locked(b):
            current = [int(x) for x in table.neighbors(b)]
            removed: tuple = ()
            if node in current:
                outcome = "present"
            elif len(current) < R:
                table.set_neighbors(b, current + [node])
                outcome = "appended"
            else:
                pool = [Candidate(c, dist_fn(c, b)) for c in current + [node]]
                kept = robust_prune(pool, dist_fn, R, params.alpha)
                table.set_neighbors(b, kept)
                outcome = "repruned" if node in kept else "dropped"
                removed = tuple(sorted(set(current + [node]) - set(kept)))
        if events is not None:
            events.append((b, int(node), outcome, removed))
