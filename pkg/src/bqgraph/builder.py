"""Two-stage batch construction.

Stage 0 encodes every vector, fills the normalized float32 store and
allocates the whole adjacency table at once. Stage 1 links nodes in chunks;
worker threads pull chunk numbers from a shared counter and run the
compiled linker, which releases the GIL.
"""

from __future__ import annotations

import itertools
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .encoding import BQSignature, compute_threshold, encode_sm2_batch, n_words
from .graph import AdjacencyTable, BuildParams, Candidate, insert_bidirectional, robust_prune

log = logging.getLogger(__name__)

CHUNK_SIZE = 1000
_ENCODE_BLOCK = 8192


@dataclass
class Index:
    params: BuildParams
    entry_point: int
    adjacency: AdjacencyTable
    signatures: np.ndarray
    cold_vectors: np.ndarray
    dim: int
    build_seconds: float = field(default=0.0, compare=False)

    @property
    def num_nodes(self) -> int:
        return self.signatures.shape[0]

    @property
    def words(self) -> int:
        return n_words(self.dim)

    def signature(self, node: int) -> BQSignature:
        W = self.words
        row = self.signatures[node]
        return BQSignature(
            row[:W].copy(), row[W:].copy(), compute_threshold(self.cold_vectors[node]), self.dim
        )

    def sm2(self, a: int, b: int) -> int:
        return int(_kernels.sm2_rows(self.signatures, int(a), self.signatures, int(b), self.words))


class BuildError(ValueError):
    pass


def normalize_rows(vectors) -> np.ndarray:
    """L2-normalize rows in float64; rejects empty input, NaN/Inf and zero rows."""
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2:
        raise BuildError("expected a 2-d array of vectors")
    if X.shape[0] == 0:
        raise BuildError("no vectors")
    if X.shape[1] == 0:
        raise BuildError("zero-dimensional vectors")
    if not np.all(np.isfinite(X)):
        raise BuildError("vectors contain NaN or Inf")
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0):
        raise BuildError(f"zero-norm vector at row {int(np.argmin(norms))}")
    return X / norms[:, None]


def _as_matrix(vectors) -> np.ndarray:
    if isinstance(vectors, np.ndarray):
        return vectors
    rows = [np.asarray(v, dtype=np.float64).ravel() for v in vectors]
    if rows and len({r.shape[0] for r in rows}) != 1:
        raise BuildError("inconsistent vector dimensions")
    return np.array(rows)


def select_entry_point(cold: np.ndarray) -> int:
    """Row with the largest dot product against the normalized centroid (first on ties)."""
    centroid = np.asarray(cold, dtype=np.float64).mean(axis=0)
    norm = np.linalg.norm(centroid)
    if norm > 0:
        centroid /= norm
    return int(np.argmax(np.asarray(cold, dtype=np.float64) @ centroid))


def stage0_preinstall(vectors, params: BuildParams):
    """Encode, normalize and allocate.

    Returns:
        ``(signatures, cold, table, entry_point)``; every slot has degree 0.
    """
    X = _as_matrix(vectors)
    if X.ndim != 2 or X.shape[0] == 0:
        raise BuildError("no vectors")
    N, D = X.shape
    W = n_words(D)
    sigs = np.empty((N, 2 * W), dtype=np.uint64)
    cold = np.empty((N, D), dtype=np.float32)

    def encode_block(start):
        block = normalize_rows(X[start : start + _ENCODE_BLOCK])
        cold[start : start + len(block)] = block
        sigs[start : start + len(block)] = encode_sm2_batch(block)[0]

    starts = range(0, N, _ENCODE_BLOCK)
    if params.threads > 1 and N > _ENCODE_BLOCK:
        with ThreadPoolExecutor(params.threads) as pool:
            list(pool.map(encode_block, starts))
    else:
        for s in starts:
            encode_block(s)

    table = AdjacencyTable(N, params.max_degree)
    return sigs, cold, table, select_entry_point(cold)


def insertion_order(n: int, entry_point: int, seed: int) -> np.ndarray:
    """Seeded permutation of all ids with the entry point moved to the front."""
    order = np.random.default_rng(seed).permutation(n).astype(np.int64)
    order = order[order != entry_point]
    return np.concatenate([[entry_point], order]).astype(np.int64)


def _link_all(index: Index, order: np.ndarray, params: BuildParams) -> None:
    sigs, slots, locks = index.signatures, index.adjacency.slots, index.adjacency.locks
    W, entry, N = index.words, index.entry_point, index.num_nodes

    # the entry point is linked alone so every later search starts from a linked node
    marks = np.zeros(N, dtype=np.uint32)
    _kernels.link_chunk_kernel(
        order[:1], sigs, slots, locks, W, entry, params.ef_c, params.alpha_milli, marks, np.uint32(0)
    )
    rest = order[1:]
    n_chunks = (len(rest) + CHUNK_SIZE - 1) // CHUNK_SIZE
    counter = itertools.count()
    counter_lock = threading.Lock()

    def worker():
        visited = np.zeros(N, dtype=np.uint32)
        epoch = np.uint32(0)
        while True:
            with counter_lock:
                c = next(counter)
            if c >= n_chunks:
                return
            chunk = rest[c * CHUNK_SIZE : (c + 1) * CHUNK_SIZE]
            epoch = _kernels.link_chunk_kernel(
                chunk, sigs, slots, locks, W, entry, params.ef_c, params.alpha_milli, visited, epoch
            )

    n_workers = min(params.threads, max(n_chunks, 1))
    if n_workers == 1:
        worker()
    else:
        with ThreadPoolExecutor(n_workers) as pool:
            for f in [pool.submit(worker) for _ in range(n_workers)]:
                f.result()


def build_index(vectors, params: BuildParams | None = None, order=None) -> Index:
    """Build a graph index over ``vectors``.

    Args:
        vectors: ``(N, D)`` array or sequence of equal-length vectors.
        params: Build parameters; defaults to ``BuildParams()``.
        order: Optional explicit insertion order (a permutation of ``range(N)``).
            By default a ``params.seed`` permutation with the entry point first.
    """
    params = params or BuildParams()
    t0 = time.perf_counter()
    sigs, cold, table, entry = stage0_preinstall(vectors, params)
    N, D = cold.shape
    index = Index(params, entry, table, sigs, cold, D)
    if order is None:
        order = insertion_order(N, entry, params.seed)
    else:
        order = np.asarray(order, dtype=np.int64)
        if sorted(order.tolist()) != list(range(N)):
            raise BuildError("order must be a permutation of range(N)")
    _link_all(index, order, params)
    index.build_seconds = time.perf_counter() - t0
    log.info("built %d nodes (D=%d) in %.2fs", N, D, index.build_seconds)
    return index


def link_node(node: int, index: Index, params: BuildParams, events: list | None = None) -> list[int]:
    """Reference (uncompiled control flow) linking of one node.

    Runs the construction beam search from the entry point excluding ``node``,
    prunes over every node the search expanded and inserts edges in both
    directions.

    Returns:
        The ids written to ``node``'s slot.
    """
    from .search import VisitedTable, beam_search

    visited = VisitedTable(index.num_nodes)
    _, expanded = beam_search(
        index, index.signatures[node], params.ef_c, index.entry_point, visited,
        exclude=node, return_expanded=True,
    )
    pruned = robust_prune(expanded, index.sm2, params.max_degree, params.alpha)
    insert_bidirectional(node, pruned, index.adjacency, index.sm2, params, events)
    return pruned


def build_index_reference(vectors, params: BuildParams | None = None, order=None, events=None) -> Index:
    """Single-threaded build through ``link_node``; slow, used for auditing."""
    params = params or BuildParams()
    sigs, cold, table, entry = stage0_preinstall(vectors, params)
    index = Index(params, entry, table, sigs, cold, cold.shape[1])
    if order is None:
        order = insertion_order(index.num_nodes, entry, params.seed)
    for u in order:
        link_node(int(u), index, params, events)
    return index


__all__ = [
    "Candidate",
    "Index",
    "BuildError",
    "build_index",
    "build_index_reference",
    "insertion_order",
    "link_node",
    "normalize_rows",
    "select_entry_point",
    "stage0_preinstall",
]
