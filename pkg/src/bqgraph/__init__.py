"""Graph ANN index whose construction and navigation run on 2-bit sign-magnitude codes."""

from .builder import (
    BuildError,
    Index,
    build_index,
    build_index_reference,
    link_node,
    select_entry_point,
    stage0_preinstall,
)
from .encoding import (
    BQSignature,
    EncodingDiagnostics,
    EncodingError,
    SignBits,
    SQ2Code,
    compute_threshold,
    encode_sign1,
    encode_sm2,
    encode_sq2,
    hamming_distance,
    sm2_distance,
    sq2_distance,
    strong_bit_rate,
)
from .graph import (
    AdjacencyTable,
    BuildParams,
    Candidate,
    GraphInvariantError,
    insert_bidirectional,
    robust_prune,
)
from .harness import (
    EvalReport,
    ProbeReport,
    bench_sweep,
    brute_force_topk,
    compatibility_probe,
    encoding_ablation,
    gen_random_sphere,
    gen_synthetic_lr,
    recall_at_k,
)
from .search import (
    SearchParams,
    SearchResult,
    Searcher,
    VisitedTable,
    beam_search,
    query,
    rerank,
    search_batch,
)
from .store import (
    IndexFormatError,
    MemoryReport,
    load_index,
    memory_report,
    read_fvecs,
    read_ivecs,
    save_index,
    write_fvecs,
    write_ivecs,
)

__version__ = "0.1.0"
