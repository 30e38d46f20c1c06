"""Dynamic semantic splitting for KV-cache compression.

Attention-derived delimiter weights drive a length-regularised segmentation
of the token stream; each variable-length block is digested into a fixed
min/max box over its keys, and per-step token selection, sparse attention
and cross-step KV reuse run on top of those digests.
"""

from .core import (
    MISTRAL_7B_DELIMITERS,
    AttentionTensor,
    DelimiterTable,
    DynSplitError,
    NegativeEntry,
    NonCausalEntry,
    RowNotNormalized,
    SegmentPlan,
    SelectionResult,
    TokenSequence,
    read_atn1,
    read_token_stream,
    seeded_rng,
    validate_attention,
    write_atn1,
    write_token_stream,
)
from .harness import (
    RunMetrics,
    SyntheticSpec,
    account_memory,
    gen_synthetic,
    run_passkey,
    run_reversal_ablation,
)
from .pipeline import KvCache, ReusePlan, decode_loop, dense_attention, plan_reuse, select_step, sparse_attention
from .scoring import DelimiterScore, ScoringConfig, build_table, candidate_positions, score_positions
from .segment import SegmentConfig, segment, segment_incremental
from .v2f import BlockDigest, build_digests, map_block_to_tokens, score_blocks, select_blocks

__version__ = "0.1.0"
