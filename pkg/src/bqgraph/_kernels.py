"""Compiled hot-path kernels.

Everything here runs under ``nogil`` so Python threads can drive it in
parallel. Signatures are rows of a ``uint64`` matrix laid out as
``[pos words | strong words]``; adjacency is a ``uint32`` matrix whose
column 0 holds the degree and columns ``1..R`` the neighbor ids.

Candidate pools store ``(dist << 32) | node_id`` in one ``int64`` so that a
plain integer comparison gives the ``(dist, id)`` total order.
"""

import numpy as np
from llvmlite import ir
from numba import njit, types
from numba.core import cgutils
from numba.extending import intrinsic

ID_MASK = np.int64(0xFFFFFFFF)
SPIN_BEFORE_YIELD = 64


# --------------------------------------------------------------------------
# intrinsics
# --------------------------------------------------------------------------


@intrinsic
def popcount(typingctx, x):
    if x != types.uint64:
        return None

    def codegen(context, builder, sig, args):
        return builder.ctpop(args[0])

    return types.uint64(types.uint64), codegen


_I64 = ir.IntType(64)
_V4 = ir.VectorType(_I64, 4)


def _is_u64_matrix(a):
    return isinstance(a, types.Array) and a.dtype == types.uint64 and a.ndim == 2


@intrinsic
def _sm2_blocks(typingctx, A, i, B, j, W, nblocks):
    """SM2 penalty over words ``0 .. 4 * nblocks`` using 4-lane vector popcounts.

    Lanes accumulate across blocks and are reduced once at the end.
    """
    if not (_is_u64_matrix(A) and _is_u64_matrix(B)):
        return None
    sig = types.uint64(A, types.intp, B, types.intp, types.intp, types.intp)

    def codegen(context, builder, sig, args):
        aty, _, bty, _, _, _ = sig.args
        a = context.make_array(aty)(context, builder, args[0])
        b = context.make_array(bty)(context, builder, args[2])
        i, j, W, nblocks = args[1], args[3], args[4], args[5]
        mod = builder.module
        ctpop = cgutils.get_or_insert_function(mod, ir.FunctionType(_V4, [_V4]), "llvm.ctpop.v4i64")
        reduce = cgutils.get_or_insert_function(
            mod, ir.FunctionType(_I64, [_V4]), "llvm.vector.reduce.add.v4i64"
        )
        one = ir.Constant(_V4, [ir.Constant(_I64, 1)] * 4)

        def load(ary, ty, row, col):
            if ty.layout == "C":
                ptr = cgutils.get_item_pointer(context, builder, ty, ary, [row, col])
                return builder.load(builder.bitcast(ptr, _V4.as_pointer()), align=8)
            # strided rows: gather the four words one by one
            vec = ir.Constant(_V4, ir.Undefined)
            for lane in range(4):
                col_l = builder.add(col, ir.Constant(col.type, lane))
                ptr = cgutils.get_item_pointer(context, builder, ty, ary, [row, col_l])
                vec = builder.insert_element(vec, builder.load(ptr), ir.Constant(ir.IntType(32), lane))
            return vec

        acc = cgutils.alloca_once_value(builder, ir.Constant(_V4, [ir.Constant(_I64, 0)] * 4))
        with cgutils.for_range(builder, nblocks) as loop:
            w = builder.shl(loop.index, ir.Constant(loop.index.type, 2))
            ws = builder.add(W, w)
            sa, sb = load(a, aty, i, ws), load(b, bty, j, ws)
            x = builder.xor(load(a, aty, i, w), load(b, bty, j, w))
            y = builder.and_(x, builder.or_(sa, sb))
            z = builder.and_(y, builder.and_(sa, sb))
            lanes = builder.add(
                builder.add(builder.call(ctpop, [x]), builder.call(ctpop, [y])),
                builder.shl(builder.call(ctpop, [z]), one),
            )
            builder.store(builder.add(builder.load(acc), lanes), acc)
        return builder.call(reduce, [builder.load(acc)])

    return sig, codegen


@intrinsic
def _cas_int32(typingctx, arr, idx, expected, desired):
    if not (isinstance(arr, types.Array) and arr.dtype == types.int32):
        return None
    sig = types.int32(arr, types.intp, types.int32, types.int32)

    def codegen(context, builder, sig, args):
        aryty = sig.args[0]
        ary = context.make_array(aryty)(context, builder, args[0])
        ptr = cgutils.get_item_pointer(context, builder, aryty, ary, [args[1]])
        res = builder.cmpxchg(ptr, args[2], args[3], "acquire", "monotonic")
        return builder.extract_value(res, 0)

    return sig, codegen


@intrinsic
def _store_release_int32(typingctx, arr, idx, value):
    if not (isinstance(arr, types.Array) and arr.dtype == types.int32):
        return None
    sig = types.void(arr, types.intp, types.int32)

    def codegen(context, builder, sig, args):
        aryty = sig.args[0]
        ary = context.make_array(aryty)(context, builder, args[0])
        ptr = cgutils.get_item_pointer(context, builder, aryty, ary, [args[1]])
        builder.atomic_rmw("xchg", ptr, args[2], "release")
        return context.get_dummy_value()

    return sig, codegen


@intrinsic
def _sched_yield(typingctx):
    sig = types.int32()

    def codegen(context, builder, sig, args):
        fnty = ir.FunctionType(ir.IntType(32), [])
        fn = cgutils.get_or_insert_function(builder.module, fnty, "sched_yield")
        return builder.call(fn, [])

    return sig, codegen


@njit(nogil=True, cache=True)
def lock_slot(locks, i):
    spins = 0
    while _cas_int32(locks, i, 0, 1) != 0:
        spins += 1
        # oversubscribed threads would otherwise burn the holder's timeslice
        if spins >= SPIN_BEFORE_YIELD:
            _sched_yield()
            spins = 0


@njit(nogil=True, cache=True)
def unlock_slot(locks, i):
    _store_release_int32(locks, i, 0)


# --------------------------------------------------------------------------
# distances
# --------------------------------------------------------------------------


# Per mismatched dimension the penalty is 1, 2 or 4 (zero, one or two strong
# bits). Writing it as 1 + [either strong] + 2 * [both strong] needs three
# popcounts per word: pc(x) + pc(x & (sa | sb)) + 2 * pc(x & sa & sb).
@njit(nogil=True, cache=True, inline="always")
def sm2_rows(A, i, B, j, W):
    blocks = W >> 2
    acc = _sm2_blocks(A, i, B, j, W, blocks)
    for w in range(blocks << 2, W):
        x = A[i, w] ^ B[j, w]
        sa = A[i, W + w]
        sb = B[j, W + w]
        y = x & (sa | sb)
        acc += popcount(x) + popcount(y) + (popcount(y & sa & sb) << np.uint64(1))
    return np.int64(acc)


@njit(nogil=True, cache=True, inline="always")
def hamming_rows(A, i, B, j, W):
    acc = np.uint64(0)
    for w in range(W):
        acc += popcount(A[i, w] ^ B[j, w])
    return np.int64(acc)


@njit(nogil=True, cache=True, inline="always")
def sq2_rows(A, i, B, j, D):
    acc = 0
    for t in range(D):
        acc += abs(np.int32(A[i, t]) - np.int32(B[j, t]))
    return np.int64(acc)


@njit(nogil=True, cache=True)
def sm2_one_to_many(q, sigs, W, out):
    for j in range(sigs.shape[0]):
        out[j] = sm2_rows(q, 0, sigs, j, W)


@njit(nogil=True, cache=True)
def hamming_one_to_many(q, bits, W, out):
    for j in range(bits.shape[0]):
        out[j] = hamming_rows(q, 0, bits, j, W)


@njit(nogil=True, cache=True)
def sq2_one_to_many(q, codes, D, out):
    for j in range(codes.shape[0]):
        out[j] = sq2_rows(q, 0, codes, j, D)


@njit(nogil=True, cache=True)
def sm2_cross(Q, sigs, W, out):
    for i in range(Q.shape[0]):
        for j in range(sigs.shape[0]):
            out[i, j] = sm2_rows(Q, i, sigs, j, W)


@njit(nogil=True, cache=True)
def hamming_cross(Q, bits, W, out):
    for i in range(Q.shape[0]):
        for j in range(bits.shape[0]):
            out[i, j] = hamming_rows(Q, i, bits, j, W)


@njit(nogil=True, cache=True)
def sq2_cross(Q, codes, D, out):
    for i in range(Q.shape[0]):
        for j in range(codes.shape[0]):
            out[i, j] = sq2_rows(Q, i, codes, j, D)


# --------------------------------------------------------------------------
# beam search
# --------------------------------------------------------------------------


@njit(nogil=True, cache=True, inline="always")
def _pool_insert(pool, done, size, cap, key):
    """Insert ``key`` into the sorted pool; returns (new size, position) or position -1."""
    if size == cap and key >= pool[size - 1]:
        return size, -1
    lo = 0
    hi = size
    while lo < hi:
        mid = (lo + hi) >> 1
        if pool[mid] < key:
            lo = mid + 1
        else:
            hi = mid
    last = size if size < cap else size - 1
    for t in range(last, lo, -1):
        pool[t] = pool[t - 1]
        done[t] = done[t - 1]
    pool[lo] = key
    done[lo] = 0
    if size < cap:
        size += 1
    return size, lo


@njit(nogil=True, cache=True)
def beam_search_kernel(sigs, adj, W, q, entry, ef, exclude, marks, epoch, pool, done, trail):
    """Best-first search over the graph with symmetric SM2 distances.

    Fills ``pool[:size]`` with ascending ``(dist << 32) | id`` keys and returns
    ``(size, n_scored, n_expanded)``. ``exclude`` (or -1) is traversed but
    never pooled. The key of every expanded node is appended to ``trail``
    while it has room; pass an empty array when the trail is not needed.
    """
    R = adj.shape[1] - 1
    size = 0
    scored = 0
    expanded = 0
    marks[entry] = epoch
    if entry != exclude:
        d = sm2_rows(q, 0, sigs, entry, W)
        scored += 1
        size, _ = _pool_insert(pool, done, size, ef, (d << 32) | entry)
    # the excluded entry is expanded up front so its neighbors seed the pool
    node = entry
    start = 0
    first = entry == exclude
    while True:
        if not first:
            cur = start
            while cur < size and done[cur] != 0:
                cur += 1
            if cur >= size:
                break
            done[cur] = 1
            if expanded < trail.shape[0]:
                trail[expanded] = pool[cur]
            expanded += 1
            node = pool[cur] & ID_MASK
            start = cur + 1
        first = False
        deg = min(np.int64(adj[node, 0]), R)
        for t in range(deg):
            nb = np.int64(adj[node, 1 + t])
            if marks[nb] == epoch:
                continue
            marks[nb] = epoch
            if nb == exclude:
                continue
            d = sm2_rows(q, 0, sigs, nb, W)
            scored += 1
            size, pos = _pool_insert(pool, done, size, ef, (d << 32) | nb)
            if pos >= 0 and pos < start:
                start = pos
    return size, scored, expanded


@njit(nogil=True, cache=True)
def next_epoch(marks, epoch):
    epoch += 1
    if epoch == 0xFFFFFFFF:
        marks[:] = 0
        epoch = 1
    return np.uint32(epoch)


@njit(nogil=True, cache=True)
def rerank_kernel(cold, qf, pool, n, k, out_ids, out_scores):
    """Exact dot-product rerank of ``pool[:n]``; returns number of results."""
    D = cold.shape[1]
    scores = np.empty(n, dtype=np.float64)
    ids = np.empty(n, dtype=np.int64)
    for c in range(n):
        node = pool[c] & ID_MASK
        ids[c] = node
        acc = 0.0
        for t in range(D):
            acc += np.float64(cold[node, t]) * np.float64(qf[t])
        scores[c] = min(1.0, max(-1.0, acc))
    # lexsort by (-score, id)
    order = np.argsort(ids, kind="mergesort")
    order = order[np.argsort(-scores[order], kind="mergesort")]
    m = min(k, n)
    for r in range(m):
        out_ids[r] = ids[order[r]]
        out_scores[r] = scores[order[r]]
    return m


@njit(nogil=True, cache=True)
def query_batch_kernel(
    sigs, adj, cold, W, entry, qsigs, qfloats, ef, k, marks, epoch,
    out_ids, out_scores, out_counts, cold_touched,
):
    """Two-stage search for a batch of already-encoded, normalized queries."""
    pool = np.empty(ef, dtype=np.int64)
    done = np.zeros(ef, dtype=np.uint8)
    no_trail = np.empty(0, dtype=np.int64)
    for qi in range(qsigs.shape[0]):
        epoch = next_epoch(marks, epoch)
        size, _, _ = beam_search_kernel(
            sigs, adj, W, qsigs[qi : qi + 1], entry, ef, -1, marks, epoch, pool, done, no_trail
        )
        cold_touched[qi] = size
        out_counts[qi] = rerank_kernel(
            cold, qfloats[qi], pool, size, k, out_ids[qi], out_scores[qi]
        )
    return epoch


# --------------------------------------------------------------------------
# pruning and linking
# --------------------------------------------------------------------------


@njit(nogil=True, cache=True)
def robust_prune_kernel(sigs, W, keys, n, R, alpha_milli, out):
    """Alpha-diversity selection over ``keys[:n]`` (ascending order required).

    A candidate ``c`` is kept iff ``1000 * d(c, t) <= alpha_milli * d(c, s)``
    for every already selected ``s``. Returns the number selected into ``out``.
    """
    sel = 0
    for a in range(n):
        c = keys[a] & ID_MASK
        dct = (keys[a] >> 32) * 1000
        ok = True
        for b in range(sel):
            if dct > alpha_milli * sm2_rows(sigs, c, sigs, out[b], W):
                ok = False
                break
        if ok:
            out[sel] = c
            sel += 1
            if sel == R:
                break
    return sel


@njit(nogil=True, cache=True)
def _add_reverse(sigs, adj, W, b, u, alpha_milli, keys, chosen):
    """Offer edge b -> u; re-prune b on overflow. Caller holds b's lock.

    Returns 0 if u was already present, 1 if appended, 2 if b was re-pruned.
    """
    R = adj.shape[1] - 1
    deg = np.int64(adj[b, 0])
    for t in range(deg):
        if np.int64(adj[b, 1 + t]) == u:
            return 0
    if deg < R:
        adj[b, 1 + deg] = u
        adj[b, 0] = deg + 1
        return 1
    for t in range(deg):
        nb = np.int64(adj[b, 1 + t])
        keys[t] = (sm2_rows(sigs, nb, sigs, b, W) << 32) | nb
    keys[deg] = (sm2_rows(sigs, u, sigs, b, W) << 32) | u
    keys[: deg + 1].sort()
    sel = robust_prune_kernel(sigs, W, keys, deg + 1, R, alpha_milli, chosen)
    for t in range(sel):
        adj[b, 1 + t] = chosen[t]
    for t in range(sel, R):
        adj[b, 1 + t] = 0
    adj[b, 0] = sel
    return 2


@njit(nogil=True, cache=True)
def link_chunk_kernel(nodes, sigs, adj, locks, W, entry, efc, alpha_milli, marks, epoch):
    """Beam search + prune + bidirectional insert for every node in ``nodes``.

    The prune runs over every node the search expanded, not only the final
    pool: the early, far hops on the path are what yield long-range edges.
    """
    R = adj.shape[1] - 1
    pool = np.empty(efc, dtype=np.int64)
    done = np.zeros(efc, dtype=np.uint8)
    trail = np.empty(adj.shape[0], dtype=np.int64)
    chosen = np.empty(R, dtype=np.int64)
    scratch = np.empty(R, dtype=np.int64)
    keys = np.empty(R + 1, dtype=np.int64)
    for p in range(nodes.shape[0]):
        u = np.int64(nodes[p])
        epoch = next_epoch(marks, epoch)
        _, _, n = beam_search_kernel(
            sigs, adj, W, sigs[u : u + 1], entry, efc, u, marks, epoch, pool, done, trail
        )
        trail[:n].sort()
        sel = robust_prune_kernel(sigs, W, trail, n, R, alpha_milli, chosen)

        lock_slot(locks, u)
        for t in range(sel):
            adj[u, 1 + t] = chosen[t]
        for t in range(sel, R):
            adj[u, 1 + t] = 0
        adj[u, 0] = sel
        unlock_slot(locks, u)

        for t in range(sel):
            b = chosen[t]
            lock_slot(locks, b)
            _add_reverse(sigs, adj, W, b, u, alpha_milli, keys, scratch)
            unlock_slot(locks, b)
    return epoch
