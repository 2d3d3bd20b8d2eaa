"""Command-line entry point: gen, gt, build, search, bench, probe."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time

from .builder import build_index
from .graph import BuildParams
from .harness import bench_sweep, brute_force_topk, compatibility_probe, generate, recall_at_k
from .search import SearchParams, search_batch
from .store import load_index, memory_report, read_fvecs, read_ivecs, save_index, write_fvecs, write_ivecs


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def cmd_gen(args) -> int:
    kwargs = {}
    if args.kind == "lowrank":
        kwargs = dict(clusters=args.clusters, subdim=args.subdim, eps=args.eps, zipf_s=args.zipf)
    X = generate(args.kind, args.n, args.d, args.seed, **kwargs)
    write_fvecs(args.out, X)
    print(f"wrote {X.shape[0]} x {X.shape[1]} {args.kind} vectors to {args.out}")
    return 0


def cmd_gt(args) -> int:
    base = read_fvecs(args.base)
    queries = read_fvecs(args.queries)
    t0 = time.perf_counter()
    ids = brute_force_topk(base, queries, args.k, "float")
    write_ivecs(args.out, ids)
    print(f"ground truth for {len(queries)} queries (k={args.k}) in {time.perf_counter() - t0:.1f}s -> {args.out}")
    return 0


def cmd_build(args) -> int:
    vectors = read_fvecs(args.input)
    params = BuildParams(m=args.m, ef_c=args.efc, alpha=args.alpha, threads=args.threads, seed=args.seed)
    index = build_index(vectors, params)
    save_index(index, args.out)
    mem = memory_report(index)
    print(f"built {index.num_nodes} nodes, D={index.dim}, in {index.build_seconds:.1f}s")
    print(f"entry point {index.entry_point}, mean degree {index.adjacency.degrees().mean():.1f}")
    print(
        f"hot: signatures {mem.hot_signatures_bytes} B, adjacency {mem.hot_adjacency_bytes} B; "
        f"cold: {mem.cold_vector_bytes} B"
    )
    return 0


def cmd_search(args) -> int:
    index = load_index(args.index, cold_mode=args.cold)
    queries = read_fvecs(args.queries)
    params = SearchParams(ef=args.ef, k=args.k)
    t0 = time.perf_counter()
    res = search_batch(index, queries, params, threads=args.threads)
    elapsed = time.perf_counter() - t0
    shown = min(args.show, len(queries))
    for q in range(shown):
        ids = " ".join(str(i) for i in res.ids[q])
        print(f"q{q:<6} {ids}")
    if shown < len(queries):
        print(f"... ({len(queries) - shown} more queries)")
    print(f"{len(queries)} queries, ef={args.ef}, k={args.k}, {len(queries) / elapsed:.0f} QPS "
          f"({args.threads} threads, cold={args.cold})")
    if args.gt:
        gt = read_ivecs(args.gt)
        print(f"Recall@{args.k}: {100 * recall_at_k(res.ids, gt, args.k):.2f}%")
    if args.out:
        write_ivecs(args.out, res.ids)
    return 0


def cmd_bench(args) -> int:
    index = load_index(args.index, cold_mode=args.cold)
    queries = read_fvecs(args.queries)
    gt = read_ivecs(args.gt)
    report = bench_sweep(index, queries, gt, args.ef, args.threads, k=args.k, runs=args.runs)
    print(report.table())
    d = report.diagnostics
    print(f"p_s={d.p_s:.3f} nu2={d.nu2:.2f} (sample {d.sample_size})")
    if args.json:
        with open(args.json, "w") as f:
            json.dump(report.as_rows(), f, indent=2)
    return 0


def cmd_probe(args) -> int:
    vectors = read_fvecs(args.input)
    report = compatibility_probe(vectors, sample_size=args.sample, k=args.k, encoding=args.encoding)
    print(f"encoding     {report.encoding}")
    print(f"sample       {report.sample_size}")
    print(f"top-{report.k} overlap {100 * report.overlap_at_k:.2f}%")
    print(f"verdict      {report.verdict}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bqgraph", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    g.add_argument("--kind", choices=["sphere", "lowrank"], required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--clusters", type=int, default=256)
    g.add_argument("--subdim", type=int, default=64)
    g.add_argument("--eps", type=float, default=0.05)
    g.add_argument("--zipf", type=float, default=1.0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("gt", help="exact cosine ground truth")
    t.add_argument("--base", required=True)
    t.add_argument("--queries", required=True)
    t.add_argument("--k", type=int, required=True)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_gt)

    b = sub.add_parser("build", help="build and save an index")
    b.add_argument("--input", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--m", type=int, default=32)
    b.add_argument("--efc", type=int, default=128)
    b.add_argument("--alpha", type=float, default=1.2)
    b.add_argument("--threads", type=int, default=1)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_build)

    s = sub.add_parser("search", help="query a saved index")
    s.add_argument("--index", required=True)
    s.add_argument("--queries", required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--ef", type=int, required=True)
    s.add_argument("--gt")
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--cold", choices=["eager", "mapped"], default="eager")
    s.add_argument("--show", type=int, default=10, help="result rows to print")
    s.add_argument("--out", help="write result ids as ivecs")
    s.set_defaults(func=cmd_search)

    r = sub.add_parser("bench", help="recall/QPS sweep")
    r.add_argument("--index", required=True)
    r.add_argument("--queries", required=True)
    r.add_argument("--gt", required=True)
    r.add_argument("--k", type=int, required=True)
    r.add_argument("--ef", type=_int_list, default=[32, 64, 128, 256, 512, 1024])
    r.add_argument("--threads", type=_int_list, default=[1, 8])
    r.add_argument("--runs", type=int, default=3)
    r.add_argument("--cold", choices=["eager", "mapped"], default="eager")
    r.add_argument("--json")
    r.set_defaults(func=cmd_bench)

    pr = sub.add_parser("probe", help="BQ compatibility probe")
    pr.add_argument("--input", required=True)
    pr.add_argument("--sample", type=int, default=10000)
    pr.add_argument("--k", type=int, default=10)
    pr.add_argument("--encoding", choices=["sm2", "sign1", "sq2"], default="sm2")
    pr.set_defaults(func=cmd_probe)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
