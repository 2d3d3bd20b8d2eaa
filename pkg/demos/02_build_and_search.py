"""
Building a graph and searching it
=================================

The index is a fixed-degree proximity graph whose edges are chosen with
sign-magnitude distances only. Queries walk the graph on codes, then the
surviving candidates are reranked with the stored float vectors.
"""

import numpy as np

import bqgraph as bq

# Low-rank clustered data: 256 clusters in a 64-d subspace of 768-d space.
X = bq.gen_synthetic_lr(21_000, 768, seed=42)
base, queries = X[:20_000], X[20_000:]

# Exact cosine neighbors serve as ground truth.
truth = bq.brute_force_topk(base, queries, k=10)

# Defaults: out-degree cap 2m = 64, construction beam 128, alpha 1.2.
index = bq.build_index(base, bq.BuildParams(m=32, ef_c=128, alpha=1.2, threads=4))
print(f"built {index.num_nodes} nodes in {index.build_seconds:.1f}s, "
      f"mean degree {index.adjacency.degrees().mean():.1f}")

# A single query: encode once, beam search with ef candidates, rerank to k.
res = bq.query(index, queries[0], bq.SearchParams(ef=64, k=5))
print("ids   ", res.ids)
print("scores", res.scores.round(4))

# Recall grows with the candidate budget ef; each query reads at most ef
# float vectors from the cold store.
for ef in (16, 32, 64, 128, 256):
    batch = bq.search_batch(index, queries, bq.SearchParams(ef=ef, k=10))
    r = bq.recall_at_k(batch.ids, truth, 10)
    print(f"ef={ef:<4} recall@10={100 * r:6.2f}%  cold reads/query={batch.cold_accesses.mean():6.1f}")
