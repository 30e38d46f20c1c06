"""Score delimiter positions on synthetic attention and turn them into weights.

Two delimiter types are planted. Text after a "." keeps looking at the
recent window, so cutting there loses little. Text after a "(" reaches back
to the start of the document, so a cut there would drop context the next
tokens still need. The scores, and the resulting weights, reflect that.
"""

import numpy as np

from dynsplit_kv import DelimiterTable, ScoringConfig, TokenSequence, build_table, candidate_positions, score_positions
from dynsplit_kv.core import AttentionTensor, seeded_rng

S, PERIOD, PAREN = 256, 28723, 28732
W, R = 8, 32
rng = seeded_rng(7)

tokens = rng.integers(1000, 28000, size=S)
periods = np.arange(48, S - W, 40)
parens = periods + 20
tokens[periods] = PERIOD
tokens[parens] = PAREN

dist = np.subtract.outer(np.arange(S), np.arange(S))
logits = -0.1 * dist + 0.3 * rng.standard_normal((1, 2, S, S))
for p in parens:
    logits[..., p + 1 : p + W + 1, :4] = 1.5  # long-range look-back
logits = np.where(dist >= 0, logits, -np.inf)
probs = np.exp(logits - logits.max(axis=-1, keepdims=True))
attn = AttentionTensor(probs / probs.sum(axis=-1, keepdims=True))

scores = score_positions(attn, candidate_positions(tokens, [PERIOD, PAREN]), ScoringConfig(W, R, 1.0))
for s in scores[:6]:
    kind = "." if tokens[s.position] == PERIOD else "("
    print(f"pos {s.position:4d} '{kind}'  overlap={s.overlap_mass:.3f} drop={s.drop_mass:.3f} score={s.score:+.3f}")

table = build_table(scores, TokenSequence(tokens))
print("weights:", dict(table))
print("round-trip ok:", DelimiterTable.from_json(table.to_json()) == table)
