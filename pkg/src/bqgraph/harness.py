"""Datasets, exact ground truth, recall and throughput evaluation."""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .builder import Index, normalize_rows
from .encoding import (
    EncodingDiagnostics,
    encode_sign1_batch,
    encode_sm2_batch,
    encode_sq2_batch,
    n_words,
    strong_bit_rate,
)
from .search import SearchParams, prepare_queries, search_batch
from .store import MemoryReport, memory_report

log = logging.getLogger(__name__)

SCORERS = ("float", "sm2", "sign1", "sq2")


# --------------------------------------------------------------------------
# generators
# --------------------------------------------------------------------------


def gen_random_sphere(n: int, d: int, seed: int = 42) -> np.ndarray:
    """Uniform unit vectors (normalized i.i.d. Gaussians), float32."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    X = np.random.default_rng(seed).standard_normal((n, d))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    return X.astype(np.float32)


def gen_synthetic_lr(
    n: int,
    d: int,
    seed: int = 42,
    clusters: int = 256,
    subdim: int = 64,
    eps: float = 0.05,
    zipf_s: float = 1.0,
    return_labels: bool = False,
):
    """Zipf-weighted clusters in a ``subdim``-d subspace, embedded orthonormally in ``d`` dims.

    Cluster centers are uniform on the ``subdim``-sphere; cluster ``r`` (0-based)
    is drawn with probability proportional to ``(r + 1) ** -zipf_s``. Gaussian
    noise of per-coordinate std ``eps`` is added inside the subspace before the
    embedding, and every output row is L2-normalized.
    """
    if subdim > d:
        raise ValueError("subdim must be <= d")
    if clusters < 1 or n < 1:
        raise ValueError("n and clusters must be >= 1")
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((clusters, subdim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    weights = np.arange(1, clusters + 1, dtype=np.float64) ** -zipf_s
    labels = rng.choice(clusters, size=n, p=weights / weights.sum())
    basis, _ = np.linalg.qr(rng.standard_normal((d, subdim)))
    X = np.empty((n, d), dtype=np.float32)
    for start in range(0, n, 16384):
        lab = labels[start : start + 16384]
        Z = centers[lab] + eps * rng.standard_normal((len(lab), subdim))
        block = Z @ basis.T
        X[start : start + len(lab)] = block / np.linalg.norm(block, axis=1, keepdims=True)
    return (X, labels) if return_labels else X


def generate(kind: str, n: int, d: int, seed: int = 42, **kwargs) -> np.ndarray:
    if kind == "sphere":
        return gen_random_sphere(n, d, seed)
    if kind == "lowrank":
        return gen_synthetic_lr(n, d, seed, **kwargs)
    raise ValueError(f"unknown dataset kind {kind!r}")


# --------------------------------------------------------------------------
# exact top-k
# --------------------------------------------------------------------------


def _topk_rows(scores: np.ndarray, k: int, ascending: bool, col_offset: int = 0):
    """Exact top-k per row with ties broken by ascending column id."""
    n, m = scores.shape
    k = min(k, m)
    keyed = scores if ascending else -scores
    out = np.empty((n, k), dtype=np.int64)
    kth = np.partition(keyed, k - 1, axis=1)[:, k - 1 : k]
    for r in range(n):
        cand = np.flatnonzero(keyed[r] <= kth[r, 0])
        order = np.lexsort((cand, keyed[r, cand]))[:k]
        out[r] = cand[order] + col_offset
    return out


def _merge_topk(ids_a, key_a, ids_b, key_b, k):
    ids = np.concatenate([ids_a, ids_b], axis=1)
    keys = np.concatenate([key_a, key_b], axis=1)
    out_ids = np.empty((ids.shape[0], k), dtype=np.int64)
    out_keys = np.empty((ids.shape[0], k), dtype=keys.dtype)
    for r in range(ids.shape[0]):
        o = np.lexsort((ids[r], keys[r]))[:k]
        out_ids[r], out_keys[r] = ids[r, o], keys[r, o]
    return out_ids, out_keys


def _encode_for(scorer: str, X: np.ndarray):
    if scorer == "sm2":
        return encode_sm2_batch(X)[0]
    if scorer == "sign1":
        return encode_sign1_batch(X)
    return encode_sq2_batch(X)


def _score_block(scorer, Qe, Be, D):
    out = np.empty((Qe.shape[0], Be.shape[0]), dtype=np.int64)
    if scorer == "sm2":
        _kernels.sm2_cross(Qe, Be, n_words(D), out)
    elif scorer == "sign1":
        _kernels.hamming_cross(Qe, Be, n_words(D), out)
    else:
        _kernels.sq2_cross(Qe, Be, D, out)
    return out


def brute_force_topk(base, queries, k: int, scorer: str = "float", exclude=None,
                     block: int = 20000) -> np.ndarray:
    """Exact linear scan.

    Args:
        base: ``(N, D)`` vectors.
        queries: ``(Q, D)`` vectors.
        k: Neighbors per query (capped at ``N``).
        scorer: ``"float"`` (cosine, descending) or one of ``"sm2"``,
            ``"sign1"``, ``"sq2"`` (quantized distance, ascending).
        exclude: Optional per-query base id to leave out (self-matches).

    Returns:
        ``(Q, k)`` int64 ids; ties go to the smaller id.
    """
    if scorer not in SCORERS:
        raise ValueError(f"unknown scorer {scorer!r}")
    B = np.asarray(base)
    Qv = np.asarray(queries)
    if B.ndim != 2 or Qv.ndim != 2 or B.shape[1] != Qv.shape[1]:
        raise ValueError("base and queries must be 2-d with equal dims")
    N, D = B.shape
    kk = min(k, N - (1 if exclude is not None else 0))
    if kk < 1:
        return np.zeros((Qv.shape[0], 0), dtype=np.int64)
    ascending = scorer != "float"
    if scorer == "float":
        Qe = normalize_rows(Qv)
    else:
        Qe = _encode_for(scorer, Qv)
    best_ids = best_keys = None
    for start in range(0, N, block):
        Bb = B[start : start + block]
        if scorer == "float":
            scores = Qe @ normalize_rows(Bb).T
        else:
            scores = _score_block(scorer, Qe, _encode_for(scorer, Bb), D).astype(np.float64)
        if exclude is not None:
            ex = np.asarray(exclude, dtype=np.int64) - start
            rows = np.flatnonzero((ex >= 0) & (ex < len(Bb)))
            scores[rows, ex[rows]] = np.inf if ascending else -np.inf
        ids = _topk_rows(scores, kk, ascending, start)
        keys = np.take_along_axis(scores, ids - start, axis=1)
        keys = keys if ascending else -keys
        if best_ids is None:
            best_ids, best_keys = ids, keys
        else:
            best_ids, best_keys = _merge_topk(best_ids, best_keys, ids, keys, kk)
    return best_ids


def recall_at_k(results, ground_truth, k: int) -> float:
    """Mean over queries of ``|results[:k] & truth[:k]| / k``."""
    results = [list(r) for r in results]
    ground_truth = [list(g) for g in ground_truth]
    if len(results) != len(ground_truth):
        raise ValueError("result and ground-truth query counts differ")
    if not results:
        return 0.0
    total = 0.0
    for r, g in zip(results, ground_truth):
        if len(g) < k:
            raise ValueError("ground truth row shorter than k")
        total += len(set(int(x) for x in r[:k] if x >= 0) & set(int(x) for x in g[:k])) / k
    return total / len(results)


# --------------------------------------------------------------------------
# compatibility probe and encoding ablation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ProbeReport:
    overlap_at_k: float
    sample_size: int
    k: int
    verdict: str
    encoding: str = "sm2"


def _probe_split(vectors, sample_size: int, n_queries: int, seed: int):
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least two vectors")
    rng = np.random.default_rng(seed)
    if X.shape[0] > sample_size:
        X = X[np.sort(rng.choice(X.shape[0], sample_size, replace=False))]
    Xn = normalize_rows(X)
    if np.all(Xn == Xn[0]):
        raise ValueError("degenerate sample: all vectors identical")
    nq = min(n_queries, Xn.shape[0])
    qidx = np.sort(rng.choice(Xn.shape[0], nq, replace=False))
    return Xn, qidx


def topk_overlap(vectors, encoding: str = "sm2", k: int = 10, sample_size: int = 10000,
                 n_queries: int = 1000, seed: int = 0) -> float:
    """Mean top-k overlap between quantized and float rankings, self-matches excluded."""
    Xn, qidx = _probe_split(vectors, sample_size, n_queries, seed)
    truth = brute_force_topk(Xn, Xn[qidx], k, "float", exclude=qidx)
    approx = brute_force_topk(Xn, Xn[qidx], k, encoding, exclude=qidx)
    return recall_at_k(approx, truth, k)


def encoding_ablation(vectors, k: int = 10, sample_size: int = 10000, n_queries: int = 1000,
                      seed: int = 0) -> dict[str, float]:
    """Top-k overlap of each quantized scorer against float ground truth."""
    Xn, qidx = _probe_split(vectors, sample_size, n_queries, seed)
    truth = brute_force_topk(Xn, Xn[qidx], k, "float", exclude=qidx)
    return {
        enc: recall_at_k(brute_force_topk(Xn, Xn[qidx], k, enc, exclude=qidx), truth, k)
        for enc in ("sign1", "sm2", "sq2")
    }


def compatibility_probe(vectors, sample_size: int = 10000, k: int = 10, encoding: str = "sm2",
                        n_queries: int = 1000, seed: int = 0) -> ProbeReport:
    """Go/no-go check: ``go`` iff quantized top-k overlap with float top-k exceeds 0.5."""
    n = np.asarray(vectors).shape[0]
    if n < 10000:
        warnings.warn(f"probe sample of {n} vectors is below the recommended 10000", stacklevel=2)
    overlap = topk_overlap(vectors, encoding, k, sample_size, n_queries, seed)
    return ProbeReport(
        overlap_at_k=overlap,
        sample_size=min(n, sample_size),
        k=k,
        verdict="go" if overlap > 0.5 else "no-go",
        encoding=encoding,
    )


# --------------------------------------------------------------------------
# benchmark sweep
# --------------------------------------------------------------------------


@dataclass
class EvalRow:
    ef: int
    recall_at_k: float
    qps_1t: float
    qps_mt: float
    mean_cold_accesses: float
    qps_by_threads: dict = field(default_factory=dict)


@dataclass
class EvalReport:
    rows: list[EvalRow]
    k: int
    build_seconds: float
    memory: MemoryReport
    diagnostics: EncodingDiagnostics | None

    def as_rows(self) -> list[dict]:
        return [asdict(r) for r in self.rows]

    def table(self) -> str:
        threads = sorted(self.rows[0].qps_by_threads) if self.rows else []
        head = f"{'ef':>6} {'R@' + str(self.k):>8} " + " ".join(f"{'QPS@' + str(t) + 'T':>10}" for t in threads)
        head += f" {'cold/q':>8}"
        lines = [head]
        for r in self.rows:
            line = f"{r.ef:>6} {100 * r.recall_at_k:>7.2f}% " + " ".join(
                f"{r.qps_by_threads[t]:>10.0f}" for t in threads
            )
            lines.append(line + f" {r.mean_cold_accesses:>8.1f}")
        return "\n".join(lines)


def bench_sweep(index: Index, queries, ground_truth, ef_list, thread_list=(1,), k: int = 10,
                runs: int = 3, diagnostics_sample: int = 10000) -> EvalReport:
    """Recall and batch-parallel QPS for each ``ef`` and thread count.

    QPS is wall-clock over the whole batch (encoding, search and rerank
    included), averaged over ``runs``.
    """
    ef_list = sorted(set(int(e) for e in ef_list))
    thread_list = sorted(set(int(t) for t in thread_list))
    nq = np.asarray(queries).shape[0]
    rows = []
    for ef in ef_list:
        params = SearchParams(ef=max(ef, k), k=k)
        recall = None
        touched = None
        qps = {}
        for t in thread_list:
            rates = []
            for _ in range(runs):
                t0 = time.perf_counter()
                res = search_batch(index, None, params, threads=t, prepared=prepare_queries(queries, index.dim))
                rates.append(nq / (time.perf_counter() - t0))
                r = recall_at_k(res.ids, ground_truth, k)
                if recall is not None and r != recall:
                    log.warning("recall changed between runs at ef=%d: %s vs %s", ef, recall, r)
                recall = r
                touched = res.cold_accesses
            qps[t] = float(np.mean(rates))
        rows.append(
            EvalRow(
                ef=ef,
                recall_at_k=float(recall),
                qps_1t=qps.get(1, qps[thread_list[0]]),
                qps_mt=qps[thread_list[-1]],
                mean_cold_accesses=float(np.mean(touched)),
                qps_by_threads=qps,
            )
        )
    cold = np.asarray(index.cold_vectors[: min(diagnostics_sample, index.num_nodes)])
    return EvalReport(
        rows=rows,
        k=k,
        build_seconds=index.build_seconds,
        memory=memory_report(index),
        diagnostics=strong_bit_rate(cold),
    )
