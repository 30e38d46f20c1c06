"""Score variable-length blocks from min/max digests and map them to tokens.

The box bound never under-estimates the best token in a block, so the block
holding the strongest key is always ranked at least as high as it deserves.
"""

import numpy as np

from dynsplit_kv import SegmentPlan, build_digests, map_block_to_tokens, score_blocks, select_blocks
from dynsplit_kv.core import seeded_rng

rng = seeded_rng(11)
S, d = 120, 8
keys = rng.standard_normal((S, d))
plan = SegmentPlan(((0, 17), (17, 40), (40, 52), (52, 81), (81, 99), (99, 120)))
q = rng.standard_normal(d)
keys[60] = 4 * q / np.linalg.norm(q)  # one very relevant token in block 3

(digests,) = build_digests(keys, plan)
bound = score_blocks(q, digests)
exact = np.maximum.reduceat(keys @ q, plan.starts)
for i, (a, b) in enumerate(plan.spans):
    print(f"block {i} [{a:3d}, {b:3d})  bound={bound[i]:7.3f}  best token={exact[i]:7.3f}")

chosen = select_blocks(bound, 3)
tokens, exhausted = map_block_to_tokens(chosen, bound, plan, token_budget=32)
print("blocks kept:", chosen.tolist())
print("tokens kept:", tokens.tolist(), "exhausted" if exhausted else "")
assert 60 in tokens
