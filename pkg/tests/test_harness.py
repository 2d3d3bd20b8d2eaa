import json
import warnings

import numpy as np
import pytest

from bqgraph import (
    BuildParams,
    EvalReport,
    SearchParams,
    bench_sweep,
    brute_force_topk,
    build_index,
    compatibility_probe,
    encode_sm2,
    encoding_ablation,
    gen_random_sphere,
    gen_synthetic_lr,
    read_fvecs,
    read_ivecs,
    recall_at_k,
    search_batch,
    sm2_distance,
)
from bqgraph.cli import main
from bqgraph.harness import generate


# -- generators ---------------------------------------------------------------


def test_sphere_norms_and_determinism():
    a = gen_random_sphere(500, 64, seed=42)
    np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1.0, atol=1e-6)
    assert a.dtype == np.float32
    assert a.tobytes() == gen_random_sphere(500, 64, seed=42).tobytes()
    assert not np.array_equal(a, gen_random_sphere(500, 64, seed=43))


def test_sphere_angles_concentrate_at_right_angle():
    X = gen_random_sphere(10000, 768, seed=42).astype(np.float64)
    cos = np.einsum("ij,ij->i", X[:5000], X[5000:])
    deg = np.degrees(np.arccos(np.clip(cos, -1, 1)))
    assert abs(deg.mean() - 90) < 1
    assert deg.std() < 4


def test_lowrank_norms_and_rank():
    X = gen_synthetic_lr(10000, 768, seed=42)
    np.testing.assert_allclose(np.linalg.norm(X, axis=1), 1.0, atol=1e-6)
    Xc = X.astype(np.float64) - X.mean(axis=0)
    s = np.linalg.svd(Xc, compute_uv=False) ** 2
    assert s[:64].sum() / s.sum() >= 0.95


def test_lowrank_zipf_skew():
    _, labels = gen_synthetic_lr(100_000, 96, seed=42, subdim=16, return_labels=True)
    counts = np.sort(np.bincount(labels, minlength=256))[::-1]
    assert counts[0] > counts[9]
    assert counts[0] > 5 * counts[-1]


def test_lowrank_errors_and_dispatch():
    with pytest.raises(ValueError):
        gen_synthetic_lr(10, 32, subdim=64)
    with pytest.raises(ValueError):
        generate("cube", 10, 8)
    assert generate("lowrank", 20, 64, subdim=8, clusters=4).shape == (20, 64)


# -- exact top-k and recall ---------------------------------------------------


def independent_float_topk(base, queries, k):
    out = []
    for q in queries:
        s = base.astype(np.float64) @ q.astype(np.float64)
        out.append(sorted(range(len(base)), key=lambda i: (-s[i], i))[:k])
    return np.array(out)


def test_float_oracle_agrees_with_independent_scan():
    X = gen_synthetic_lr(10000, 128, seed=3, subdim=16)
    Q = gen_synthetic_lr(100, 128, seed=4, subdim=16)
    got = brute_force_topk(X, Q, 10, "float", block=3000)
    for qi in range(0, 100, 10):
        np.testing.assert_array_equal(got[qi], independent_float_topk(X, Q[qi : qi + 1], 10)[0])
    # full check against a plain argsort with id tie-break
    S = X.astype(np.float64) @ Q.T.astype(np.float64)
    ref = np.array([np.lexsort((np.arange(len(X)), -S[:, q]))[:10] for q in range(100)])
    np.testing.assert_array_equal(got, ref)


def test_self_query_first_and_full_ranking():
    X = gen_random_sphere(50, 16, seed=1)
    ids = brute_force_topk(X, X[7:8], 50, "float")
    assert ids[0, 0] == 7
    assert sorted(ids[0].tolist()) == list(range(50))


def test_sm2_scorer_matches_independent_distances():
    X = gen_random_sphere(200, 100, seed=5)
    Q = gen_random_sphere(5, 100, seed=6)
    ids = brute_force_topk(X, Q, 15, "sm2")
    sigs = [encode_sm2(x) for x in X]
    for qi, q in enumerate(Q):
        qs = encode_sm2(q)
        d = [sm2_distance(qs, s) for s in sigs]
        assert ids[qi].tolist() == sorted(range(200), key=lambda i: (d[i], i))[:15]


def test_exclude_removes_self():
    X = gen_random_sphere(30, 8, seed=2)
    ids = brute_force_topk(X, X[:3], 5, "sign1", exclude=[0, 1, 2])
    for q in range(3):
        assert q not in ids[q]


def test_recall_examples():
    gt = [[1, 2, 3, 4], [5, 6, 7, 8]]
    assert recall_at_k(gt, gt, 4) == 1.0
    assert recall_at_k([[9, 10, 11, 12], [13, 14, 15, 16]], gt, 4) == 0.0
    assert recall_at_k([[1, 2, 0, 0], [5, 6, 9, 9]], gt, 4) == 0.5
    with pytest.raises(ValueError):
        recall_at_k(gt[:1], gt, 4)


# -- probe and ablation -------------------------------------------------------


def test_probe_sphere_no_go():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = compatibility_probe(gen_random_sphere(3000, 256, seed=42), n_queries=200)
    assert rep.verdict == "no-go"
    assert rep.overlap_at_k < 0.5
    assert rep.sample_size == 3000 and rep.k == 10


def test_probe_warns_on_small_sample():
    with pytest.warns(UserWarning, match="below"):
        compatibility_probe(gen_synthetic_lr(500, 64, subdim=8, clusters=8), n_queries=50)


def test_probe_degenerate_sample():
    with pytest.raises(ValueError, match="degenerate"):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            compatibility_probe(np.ones((200, 16)))


def test_probe_verdict_threshold():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = compatibility_probe(gen_synthetic_lr(3000, 256, seed=1, subdim=8, clusters=16),
                                  n_queries=200)
    assert (rep.verdict == "go") == (rep.overlap_at_k > 0.5)


def test_ablation_keys_and_bounds():
    res = encoding_ablation(gen_synthetic_lr(2000, 128, seed=2, subdim=16), n_queries=100)
    assert set(res) == {"sign1", "sm2", "sq2"}
    assert all(0 <= v <= 1 for v in res.values())


# -- benchmark ----------------------------------------------------------------


@pytest.fixture(scope="module")
def bench_setup():
    X = gen_synthetic_lr(4000, 128, seed=9, subdim=16, clusters=32)
    base, Q = X[:3800], X[3800:]
    idx = build_index(base, BuildParams(m=8, ef_c=48))
    gt = brute_force_topk(base, Q, 10)
    return idx, Q, gt


def test_bench_sweep_rows(bench_setup):
    idx, Q, gt = bench_setup
    rep = bench_sweep(idx, Q, gt, [16, 128, 1024], thread_list=(1, 2), k=10, runs=3)
    assert isinstance(rep, EvalReport)
    efs = [r.ef for r in rep.rows]
    assert efs == sorted(set(efs))
    rec = [r.recall_at_k for r in rep.rows]
    assert all(b >= a - 0.003 for a, b in zip(rec, rec[1:]))
    qps = [r.qps_1t for r in rep.rows]
    assert qps[0] > qps[-1]
    for r in rep.rows:
        assert 0 <= r.recall_at_k <= 1
        assert r.mean_cold_accesses <= r.ef
        assert set(r.qps_by_threads) == {1, 2}
    assert rep.memory.hot_adjacency_bytes == idx.adjacency.slots.nbytes
    assert rep.diagnostics.sample_size == idx.num_nodes
    assert "R@10" in rep.table()
    json.dumps(rep.as_rows())


def test_bench_recall_deterministic(bench_setup):
    idx, Q, gt = bench_setup
    a = bench_sweep(idx, Q, gt, [32], runs=1)
    b = bench_sweep(idx, Q, gt, [32], runs=2)
    assert a.rows[0].recall_at_k == b.rows[0].recall_at_k
    direct = search_batch(idx, Q, SearchParams(ef=32, k=10))
    assert a.rows[0].recall_at_k == recall_at_k(direct.ids, gt, 10)


# -- command line -------------------------------------------------------------


def test_cli_end_to_end(tmp_path, capsys):
    base = tmp_path / "base.fvecs"
    qs = tmp_path / "q.fvecs"
    gt = tmp_path / "gt.ivecs"
    idx = tmp_path / "idx.qivr"
    out = tmp_path / "res.ivecs"
    rep = tmp_path / "bench.json"
    assert main(["gen", "--kind", "lowrank", "--n", "2000", "--d", "96", "--seed", "1",
                 "--subdim", "12", "--clusters", "16", "--out", str(base)]) == 0
    assert main(["gen", "--kind", "lowrank", "--n", "50", "--d", "96", "--seed", "1",
                 "--subdim", "12", "--clusters", "16", "--out", str(qs)]) == 0
    assert read_fvecs(base).shape == (2000, 96)
    assert main(["gt", "--base", str(base), "--queries", str(qs), "--k", "10", "--out", str(gt)]) == 0
    assert read_ivecs(gt).shape == (50, 10)
    assert main(["build", "--input", str(base), "--out", str(idx), "--m", "8", "--efc", "32",
                 "--alpha", "1.2", "--threads", "2", "--seed", "3"]) == 0
    assert main(["search", "--index", str(idx), "--queries", str(qs), "--k", "10", "--ef", "64",
                 "--gt", str(gt), "--cold", "mapped", "--out", str(out)]) == 0
    assert read_ivecs(out).shape == (50, 10)
    assert main(["bench", "--index", str(idx), "--queries", str(qs), "--gt", str(gt), "--k", "10",
                 "--ef", "16,64", "--threads", "1,2", "--runs", "1", "--json", str(rep)]) == 0
    rows = json.loads(rep.read_text())
    assert [r["ef"] for r in rows] == [16, 64]
    with pytest.warns(UserWarning, match="below the recommended"):
        assert main(["probe", "--input", str(base), "--sample", "1000", "--encoding", "sq2"]) == 0
    text = capsys.readouterr().out
    assert "Recall@10" in text and "verdict" in text and "QPS" in text


def test_cli_reports_errors(tmp_path, capsys):
    assert main(["build", "--input", str(tmp_path / "missing.fvecs"), "--out", str(tmp_path / "x")]) == 1
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["bench", "--index", "x", "--queries", "y", "--gt", "z", "--k", "10", "--ef", "1,a"])
