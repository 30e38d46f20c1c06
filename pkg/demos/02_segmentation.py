"""Cut a token stream into blocks that end on strong delimiters.

Compare fixed-size chunks with DD-Select's delimiter-aware cuts, then grow
the stream and extend the plan incrementally.
"""

import numpy as np

from dynsplit_kv import MISTRAL_7B_DELIMITERS, SegmentConfig, SegmentPlan, segment, segment_incremental
from dynsplit_kv.core import seeded_rng

rng = seeded_rng(3)
ids = np.array(list(MISTRAL_7B_DELIMITERS))
tokens = rng.integers(1000, 28000, size=400)
mask = rng.random(400) < 0.1
tokens[mask] = rng.choice(ids, size=int(mask.sum()))

cfg = SegmentConfig(chunk_size=64, max_deviation=14, mix=0.5)
plan = segment(tokens, MISTRAL_7B_DELIMITERS, cfg)
print("fixed:   ", SegmentPlan.fixed(400, 64).lengths.tolist())
print("ddselect:", plan.lengths.tolist())
for a, b in plan.spans[:-1]:
    w = MISTRAL_7B_DELIMITERS.get(int(tokens[b - 1]))
    print(f"  block [{a:3d}, {b:3d}) ends on token {tokens[b - 1]:5d} weight={w}")

# decode appends tokens; only the tail of the plan is recomputed
more = np.concatenate([tokens, rng.integers(1000, 28000, size=150)])
grown = segment_incremental(plan, more, MISTRAL_7B_DELIMITERS, cfg)
print("extended:", grown.lengths.tolist())
assert grown.spans == segment(more, MISTRAL_7B_DELIMITERS, cfg).spans
