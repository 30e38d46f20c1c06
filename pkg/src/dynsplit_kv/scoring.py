"""Attention-dependency importance scores for candidate delimiter positions.

A position ``i`` is a good split point when the next few queries attend to
the recent context ``O_i = [i-R+1, i]`` and not to the older context
``D_i = [0, i-R]`` that a split there would let us drop::

    s_i = overlap_mass - penalty * drop_mass

Both masses are averaged over layers, heads and the queries of the future
window ``F_i = [i+1, i+W]`` (clipped to the sequence).
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Literal, Sequence

import numpy as np

from .core import AttentionTensor, DelimiterTable, DynSplitError, as_tokens

log = logging.getLogger(__name__)


class CandidateOutOfRange(DynSplitError):
    pass


class EmptyInput(DynSplitError):
    pass


@dataclass(frozen=True)
class ScoringConfig:
    window: int = 8
    overlap: int = 128
    penalty: float = 1.0

    def __post_init__(self):
        if self.window < 1 or self.overlap < 1:
            raise ValueError("window and overlap must be >= 1")
        if not self.penalty >= 0:
            raise ValueError("penalty must be >= 0")


@dataclass(frozen=True)
class DelimiterScore:
    position: int
    score: float | None
    overlap_mass: float | None
    drop_mass: float | None

    @property
    def valid(self) -> bool:
        return self.score is not None


def score_positions(
    attn: AttentionTensor, candidates: Iterable[int], cfg: ScoringConfig = ScoringConfig()
) -> list[DelimiterScore]:
    """Score each candidate position; results follow the input order.

    The last position has no future window and comes back with ``valid``
    false rather than a zero score.
    """
    S = attn.seq_len
    cand = [int(i) for i in candidates]
    for i in cand:
        if not 0 <= i < S:
            raise CandidateOutOfRange(f"candidate {i} outside [0, {S})")
    if not cand:
        return []

    # mean over (layer, head) of the row-wise prefix sums: cum[q, k] = sum_{k' <= k} A[q, k']
    cum = np.cumsum(attn.values, axis=-1).mean(axis=(0, 1))

    out = []
    for i in cand:
        q_hi = min(i + cfg.window, S - 1)
        if q_hi <= i:
            out.append(DelimiterScore(i, None, None, None))
            continue
        rows = cum[i + 1 : q_hi + 1]
        upto_i = rows[:, i]
        if i >= cfg.overlap:
            dropped = rows[:, i - cfg.overlap]
        else:
            dropped = np.zeros_like(upto_i)
        overlap_mass = float(np.mean(upto_i - dropped))
        drop_mass = float(np.mean(dropped))
        score = overlap_mass - cfg.penalty * drop_mass
        out.append(DelimiterScore(i, score, overlap_mass, drop_mass))
    return out


def candidate_positions(tokens, candidate_ids: Iterable[int]) -> np.ndarray:
    """Positions whose token id is one of ``candidate_ids``."""
    toks = as_tokens(tokens).tokens
    return np.flatnonzero(np.isin(toks, np.fromiter(candidate_ids, dtype=np.int64)))


def build_table(
    scores: Sequence[DelimiterScore],
    tokens,
    normalization: Literal["minmax", "clamp"] = "minmax",
    decimals: int | None = 1,
) -> DelimiterTable:
    """Aggregate per-position scores into per-token weights.

    Valid scores are averaged per token id and mapped into [0, 1], either by
    min-max over the token ids present (a single id, or all-equal means, map
    to 1.0) or by clamping. ``decimals=None`` disables rounding.
    """
    toks = as_tokens(tokens).tokens
    grouped: dict[int, list[float]] = defaultdict(list)
    for sc in scores:
        if not 0 <= sc.position < len(toks):
            raise CandidateOutOfRange(f"score position {sc.position} outside the sequence")
        if sc.valid:
            grouped[int(toks[sc.position])].append(sc.score)
    if not grouped:
        raise EmptyInput("no valid scores to aggregate")

    ids = sorted(grouped)
    means = np.array([np.mean(grouped[t]) for t in ids])
    if normalization == "minmax":
        lo, hi = means.min(), means.max()
        weights = (means - lo) / (hi - lo) if hi > lo else np.ones_like(means)
    elif normalization == "clamp":
        weights = np.clip(means, 0.0, 1.0)
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    if decimals is not None:
        weights = np.round(weights, decimals)
    log.debug("built delimiter table over %d token ids", len(ids))
    return DelimiterTable(dict(zip(ids, weights.tolist())))
