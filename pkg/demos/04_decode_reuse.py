"""Run a decode loop over a drifting query and count K/V loads.

Consecutive queries select mostly the same tokens, so carrying the overlap
over cuts fresh loads while leaving every attention output unchanged.
"""

import numpy as np

from dynsplit_kv import KvCache, decode_loop
from dynsplit_kv.core import seeded_rng
from dynsplit_kv.harness import SYNTH_TABLE, random_walk_queries, sentence_stream
from dynsplit_kv.segment import SegmentConfig, segment

rng = seeded_rng(5)
H, S, d, budget = 4, 2048, 32, 128
plan = segment(sentence_stream(rng, S), SYNTH_TABLE, SegmentConfig(32))
cache = KvCache.build(rng.standard_normal((H, S, d)), rng.standard_normal((H, S, d)), plan)
queries = random_walk_queries(rng, rng.standard_normal((H, d)), 50)

out_on, stats_on = decode_loop(cache, queries, budget, reuse=True)
out_off, stats_off = decode_loop(cache, queries, budget, reuse=False)
print("outputs identical:", np.array_equal(out_on, out_off))
print("fresh loads without reuse:", sum(s.fresh for s in stats_off))
print("fresh loads with reuse:   ", sum(s.fresh for s in stats_on))
for s in stats_on[:5]:
    print(" ", s.as_dict())
