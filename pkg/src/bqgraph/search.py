"""Query path: SM2 beam search over the graph, then exact rerank of the pool."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .builder import Index, normalize_rows
from .encoding import BQSignature, encode_sm2_batch
from .graph import Candidate


@dataclass(frozen=True)
class SearchParams:
    ef: int = 64
    k: int = 10

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.ef < self.k:
            raise ValueError("ef must be >= k")


@dataclass(frozen=True, eq=False)
class SearchResult:
    ids: np.ndarray
    scores: np.ndarray

    def __eq__(self, other):
        return (
            isinstance(other, SearchResult)
            and np.array_equal(self.ids, other.ids)
            and np.array_equal(self.scores, other.scores)
        )

    def __len__(self):
        return len(self.ids)


class VisitedTable:
    """Epoch-stamped visit marks; one per searcher, reused across queries."""

    def __init__(self, n: int):
        self.marks = np.zeros(n, dtype=np.uint32)
        self.epoch = np.uint32(0)

    def advance(self) -> np.uint32:
        self.epoch = _kernels.next_epoch(self.marks, self.epoch)
        return self.epoch


def _sig_row(query_sig) -> np.ndarray:
    if isinstance(query_sig, BQSignature):
        return query_sig.words()[None, :]
    row = np.asarray(query_sig, dtype=np.uint64)
    return np.ascontiguousarray(row.reshape(1, -1))


def beam_search(
    index: Index,
    query_sig,
    ef: int,
    entry: int | None = None,
    visited: VisitedTable | None = None,
    exclude: int = -1,
    return_expanded: bool = False,
):
    """Best-first search with symmetric SM2 distances.

    Args:
        index: A built (or partially built) index.
        query_sig: A ``BQSignature`` or a raw ``[pos | strong]`` word row.
        ef: Pool size.
        entry: Start node; defaults to the index entry point.
        visited: Reusable visit marks; a fresh table is made if omitted.
        exclude: Node that may be traversed but never returned.
        return_expanded: Also return every node whose neighbors were
            examined, in ascending ``(dist, node_id)`` order. This superset of
            the final pool is what graph construction prunes over.

    Returns:
        At most ``ef`` candidates in ascending ``(dist, node_id)`` order, or a
        ``(pool, expanded)`` pair when ``return_expanded`` is set.
    """
    q = _sig_row(query_sig)
    if isinstance(query_sig, BQSignature) and query_sig.dim != index.dim:
        raise ValueError("query dimension does not match the index")
    if q.shape[1] != index.signatures.shape[1]:
        raise ValueError("query signature width does not match the index")
    entry = index.entry_point if entry is None else int(entry)
    visited = visited or VisitedTable(index.num_nodes)
    pool = np.empty(ef, dtype=np.int64)
    done = np.zeros(ef, dtype=np.uint8)
    trail = np.empty(index.num_nodes if return_expanded else 0, dtype=np.int64)
    size, _, n_expanded = _kernels.beam_search_kernel(
        index.signatures, index.adjacency.slots, index.words, q, entry, ef,
        int(exclude), visited.marks, visited.advance(), pool, done, trail,
    )
    result = _as_candidates(pool[:size])
    if return_expanded:
        return result, _as_candidates(np.sort(trail[:n_expanded]))
    return result


def _as_candidates(keys) -> list[Candidate]:
    return [Candidate(int(key & 0xFFFFFFFF), int(key >> 32)) for key in keys]


def rerank(index: Index, candidates, query_float, k: int) -> SearchResult:
    """Exact cosine rerank; reads cold rows for the given candidates only."""
    ids = np.array([int(c.node_id) if isinstance(c, Candidate) else int(c) for c in candidates],
                   dtype=np.int64)
    if ids.size == 0:
        return SearchResult(ids, np.zeros(0))
    rows = np.asarray(index.cold_vectors[ids], dtype=np.float64)
    scores = np.clip(rows @ np.asarray(query_float, dtype=np.float64), -1.0, 1.0)
    order = np.lexsort((ids, -scores))[:k]
    return SearchResult(ids[order], scores[order])


def prepare_queries(queries, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Normalize and encode a batch of queries once."""
    Q = np.asarray(queries, dtype=np.float64)
    if Q.ndim == 1:
        Q = Q[None, :]
    if Q.shape[1] != dim:
        raise ValueError(f"query dimension {Q.shape[1]} != index dimension {dim}")
    Qn = normalize_rows(Q)
    return encode_sm2_batch(Qn)[0], Qn


class Searcher:
    """Private per-thread search state over a finished index."""

    def __init__(self, index: Index):
        self.index = index
        self.visited = VisitedTable(index.num_nodes)
        self._cold = np.asarray(index.cold_vectors)

    def search_prepared(self, qsigs, qfloats, params: SearchParams):
        n = qsigs.shape[0]
        ids = np.full((n, params.k), -1, dtype=np.int64)
        scores = np.full((n, params.k), np.nan)
        counts = np.zeros(n, dtype=np.int64)
        touched = np.zeros(n, dtype=np.int64)
        idx = self.index
        self.visited.epoch = _kernels.query_batch_kernel(
            idx.signatures, idx.adjacency.slots, self._cold, idx.words, idx.entry_point,
            qsigs, qfloats, params.ef, params.k, self.visited.marks, self.visited.epoch,
            ids, scores, counts, touched,
        )
        return ids, scores, counts, touched

    def query(self, query_float, params: SearchParams) -> SearchResult:
        qsigs, qn = prepare_queries(query_float, self.index.dim)
        ids, scores, counts, _ = self.search_prepared(qsigs, qn, params)
        return SearchResult(ids[0, : counts[0]], scores[0, : counts[0]])


def query(index: Index, query_float, params: SearchParams) -> SearchResult:
    """Normalize, encode once, beam search with ``ef``, rerank to ``k``."""
    return Searcher(index).query(query_float, params)


@dataclass
class BatchResult:
    ids: np.ndarray
    scores: np.ndarray
    cold_accesses: np.ndarray


def search_batch(index: Index, queries, params: SearchParams, threads: int = 1,
                 prepared=None) -> BatchResult:
    """Run a query batch split evenly over ``threads`` searchers."""
    qsigs, qn = prepared if prepared is not None else prepare_queries(queries, index.dim)
    n = qsigs.shape[0]
    ids = np.full((n, params.k), -1, dtype=np.int64)
    scores = np.full((n, params.k), np.nan)
    touched = np.zeros(n, dtype=np.int64)
    bounds = np.linspace(0, n, min(threads, max(n, 1)) + 1).astype(int)

    def run(part):
        lo, hi = bounds[part], bounds[part + 1]
        if lo == hi:
            return
        i, s, _, t = Searcher(index).search_prepared(qsigs[lo:hi], qn[lo:hi], params)
        ids[lo:hi], scores[lo:hi], touched[lo:hi] = i, s, t

    parts = range(len(bounds) - 1)
    if len(bounds) - 1 <= 1:
        for p in parts:
            run(p)
    else:
        with ThreadPoolExecutor(len(bounds) - 1) as pool:
            list(pool.map(run, parts))
    return BatchResult(ids, scores, touched)
