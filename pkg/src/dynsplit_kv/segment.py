"""Length-regularised greedy segmentation over weighted delimiters.

Starting at ``s_c`` the ideal cut is ``s_e = s_c + C``. Every delimiter ``e``
within ``max_deviation`` of ``s_e`` is scored as

    mix * w_e + (1 - mix) * (1 - |e - s_e| / (max_deviation + 1))

and the best one closes the chunk. With no delimiter in range the chunk is
cut at ``s_e``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .core import DelimiterTable, DynSplitError, SegmentPlan, as_tokens


class EmptySequence(DynSplitError):
    pass


class PlanMismatch(DynSplitError):
    pass


@dataclass(frozen=True)
class SegmentConfig:
    chunk_size: int
    max_deviation: int = 14
    mix: float = 0.5
    # "after": the delimiter is the last token of the chunk it closes.
    # "before": the chunk is [s_c, e*) and the delimiter opens the next one.
    boundary_side: Literal["after", "before"] = "after"

    def __post_init__(self):
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        if not 0 <= self.max_deviation < self.chunk_size:
            raise ValueError("max_deviation must satisfy 0 <= max_deviation < chunk_size")
        if not 0.0 <= self.mix <= 1.0:
            raise ValueError("mix must lie in [0, 1]")
        if self.boundary_side not in ("after", "before"):
            raise ValueError(f"unknown boundary_side {self.boundary_side!r}")

    @property
    def _after(self) -> bool:
        return self.boundary_side == "after"

    def frozen_reach(self) -> int:
        """Tokens past a block's start that its cut decision can look at."""
        return self.chunk_size + self.max_deviation + (0 if self._after else 1)


def proximity(pos: np.ndarray, ideal: int, max_deviation: int) -> np.ndarray:
    return 1.0 - np.abs(pos - ideal) / (max_deviation + 1)


def _extend(spans: list, start: int, L: int, delim_pos: np.ndarray, delim_w: np.ndarray, cfg: SegmentConfig):
    C, dev, mix = cfg.chunk_size, cfg.max_deviation, cfg.mix
    # a delimiter at e ends the chunk at e + 1, so keep e + 1 <= s_e + dev
    top = dev - 1 if cfg._after else dev
    s_c = start
    while s_c < L:
        s_e = s_c + C
        if s_e >= L:
            spans.append((s_c, L))
            break
        lo = max(s_e - dev, s_c + 1)
        hi = min(s_e + top, L - 1)
        a, b = np.searchsorted(delim_pos, [lo, hi + 1])
        if a == b:
            end = s_e
        else:
            pos = delim_pos[a:b]
            combined = mix * delim_w[a:b] + (1.0 - mix) * proximity(pos, s_e, dev)
            best = int(pos[np.argmax(combined)])  # first max = smallest position
            end = best + 1 if cfg._after else best
        spans.append((s_c, end))
        s_c = end
    return spans


def _delimiters(tokens: np.ndarray, table: DelimiterTable):
    w = table.weights_for(tokens)
    pos = np.flatnonzero(~np.isnan(w))
    return pos, w[pos]


def segment(seq, table: DelimiterTable, cfg: SegmentConfig) -> SegmentPlan:
    toks = as_tokens(seq).tokens
    if toks.size == 0:
        raise EmptySequence("cannot segment an empty sequence")
    pos, w = _delimiters(toks, table)
    spans = _extend([], 0, toks.size, pos, w, cfg)
    return SegmentPlan(tuple(spans), cfg.chunk_size, cfg.max_deviation)


def segment_incremental(
    prev_plan: SegmentPlan, seq_extended, table: DelimiterTable, cfg: SegmentConfig
) -> SegmentPlan:
    """Re-segment after the sequence grew, keeping every settled block.

    A block is settled once the whole window its cut depends on lies inside
    the old sequence, so the result always equals ``segment`` on the full
    sequence.
    """
    toks = as_tokens(seq_extended).tokens
    old_len = prev_plan.length
    if toks.size == 0:
        raise EmptySequence("cannot segment an empty sequence")
    if (prev_plan.chunk_size, prev_plan.max_deviation) != (cfg.chunk_size, cfg.max_deviation):
        raise PlanMismatch("plan was built with a different chunk size or deviation")
    if old_len > toks.size:
        raise PlanMismatch(f"plan covers {old_len} tokens but the sequence has {toks.size}")
    try:
        prev_plan.validate(old_len)
    except DynSplitError as exc:
        raise PlanMismatch(str(exc)) from exc
    if old_len == toks.size:
        return prev_plan

    reach = cfg.frozen_reach()
    kept = []
    for a, b in prev_plan.spans:
        if a + reach > old_len:
            break
        kept.append((a, b))
    start = kept[-1][1] if kept else 0
    pos, w = _delimiters(toks, table)
    spans = _extend(kept, start, toks.size, pos, w, cfg)
    return SegmentPlan(tuple(spans), cfg.chunk_size, cfg.max_deviation)
