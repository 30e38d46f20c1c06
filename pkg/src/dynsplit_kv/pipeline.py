"""Per-step KV selection, attention over the selection, and cross-step reuse."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .core import DynSplitError, SegmentPlan, SelectionResult
from .v2f import DigestKind, HeadDigests, blocks_to_cover, build_digests, rank_tokens, score_blocks, select_blocks

log = logging.getLogger(__name__)


class EmptySelection(DynSplitError):
    pass


class ShapeMismatch(DynSplitError):
    pass


@dataclass(frozen=True)
class KvCache:
    """Keys and values of shape (H, S, d) with a plan and per-head digests."""

    keys: np.ndarray
    values: np.ndarray
    plan: SegmentPlan | None = None
    digests: tuple[HeadDigests, ...] = ()
    kind: DigestKind = "minmax"

    def __post_init__(self):
        k = np.asarray(self.keys, dtype=np.float64)
        v = np.asarray(self.values, dtype=np.float64)
        if k.ndim != 3 or k.shape != v.shape:
            raise ShapeMismatch(f"keys {k.shape} and values {v.shape} must both be (H, S, d)")
        k.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "keys", k)
        object.__setattr__(self, "values", v)
        if self.plan is not None and self.digests:
            if len(self.digests) != k.shape[0]:
                raise ShapeMismatch("need one digest list per head")
            for hd in self.digests:
                if len(hd) != len(self.plan) or not np.array_equal(hd.spans, np.array(self.plan.spans)):
                    raise ShapeMismatch("digest spans do not match the plan")

    @classmethod
    def build(cls, keys, values, plan: SegmentPlan, kind: DigestKind = "minmax") -> "KvCache":
        return cls(keys, values, plan, tuple(build_digests(keys, plan, kind)), kind)

    def with_plan(self, plan: SegmentPlan, kind: DigestKind | None = None) -> "KvCache":
        return KvCache.build(self.keys, self.values, plan, kind or self.kind)

    @property
    def heads(self) -> int:
        return self.keys.shape[0]

    @property
    def seq_len(self) -> int:
        return self.keys.shape[1]

    @property
    def head_dim(self) -> int:
        return self.keys.shape[2]


def _check_query(query, cache: KvCache) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64)
    if q.shape != (cache.heads, cache.head_dim):
        raise ShapeMismatch(f"query shape {q.shape}, cache expects {(cache.heads, cache.head_dim)}")
    return q


def select_step(
    query: np.ndarray,
    cache: KvCache,
    token_budget: int,
    *,
    k: int | None = None,
    pool: Literal["selected", "global"] = "selected",
    cut_side: Literal["head", "tail"] = "head",
    keep_recent: int = 0,
) -> SelectionResult:
    """Pick ``token_budget`` tokens per head for one decode step.

    Blocks are scored from their digests, the top ``k`` survive (by default
    just enough to cover the budget, plus one) and their tokens are ranked by
    inherited block score. ``pool="global"`` ranks tokens of every block.
    ``keep_recent`` reserves part of the budget for the newest tokens.
    """
    if not cache.digests:
        raise DynSplitError("cache has no digests; build it with a plan first")
    q = _check_query(query, cache)
    S = cache.seq_len
    lengths = cache.plan.lengths
    recent = np.arange(max(S - keep_recent, 0), S) if keep_recent else None

    indices, all_scores, short = [], [], []
    for h, hd in enumerate(cache.digests):
        scores = score_blocks(q[h], hd, cache.kind)
        if pool == "global":
            chosen = np.arange(len(hd))
        else:
            chosen = select_blocks(scores, k if k is not None else blocks_to_cover(scores, lengths, token_budget))
        ranked = rank_tokens(chosen, scores, cache.plan, cut_side)
        if recent is not None:
            ranked = np.concatenate([recent, ranked[~np.isin(ranked, recent)]])
        want = min(token_budget, S)
        indices.append(np.sort(ranked[:want]))
        all_scores.append(scores)
        short.append(ranked.size < want)
    return SelectionResult(tuple(indices), tuple(all_scores), int(token_budget), tuple(short))


def _softmax_weights(logits: np.ndarray) -> np.ndarray:
    z = np.exp(logits - logits.max())
    return z / z.sum()


def dense_attention(query: np.ndarray, cache: KvCache, scale: float | None = None) -> np.ndarray:
    """Scaled dot-product attention of one query per head over all tokens."""
    q = _check_query(query, cache)
    scale = 1.0 / np.sqrt(cache.head_dim) if scale is None else scale
    out = np.empty_like(q)
    for h in range(cache.heads):
        w = _softmax_weights(cache.keys[h] @ q[h] * scale)
        out[h] = w @ cache.values[h]
    return out


def _attend(q: np.ndarray, keys: np.ndarray, values: np.ndarray, scale: float) -> np.ndarray:
    return _softmax_weights(keys @ q * scale) @ values


def sparse_attention(
    query: np.ndarray, cache: KvCache, selection: SelectionResult, scale: float | None = None
) -> np.ndarray:
    """Attention restricted to each head's selected tokens."""
    q = _check_query(query, cache)
    if selection.heads != cache.heads:
        raise ShapeMismatch("selection and cache disagree on head count")
    scale = 1.0 / np.sqrt(cache.head_dim) if scale is None else scale
    out = np.empty_like(q)
    for h, idx in enumerate(selection.indices):
        if idx.size == 0:
            raise EmptySelection(f"head {h} has no selected tokens")
        out[h] = _attend(q[h], cache.keys[h, idx], cache.values[h, idx], scale)
    return out


@dataclass(frozen=True)
class ReusePlan:
    reused: tuple[np.ndarray, ...]
    fresh: tuple[np.ndarray, ...]
    reuse_len: int


def plan_reuse(prev: SelectionResult, nxt: SelectionResult) -> ReusePlan:
    """Split the next selection into carried-over and freshly loaded tokens.

    The overlap with the previous step is cut to the same length on every
    head (the smallest overlap), keeping the lowest indices.
    """
    if prev.heads != nxt.heads:
        raise ShapeMismatch(f"{prev.heads} heads before, {nxt.heads} now")
    common = [np.intersect1d(a, b, assume_unique=True) for a, b in zip(prev.indices, nxt.indices)]
    reuse_len = min((c.size for c in common), default=0)
    reused = tuple(c[:reuse_len] for c in common)
    fresh = tuple(np.setdiff1d(n, r, assume_unique=True) for n, r in zip(nxt.indices, reused))
    return ReusePlan(reused, fresh, reuse_len)


@dataclass
class StepStats:
    step: int
    fresh: int
    reused: int
    blocks_scored: int

    def as_dict(self) -> dict:
        return {"step": self.step, "fresh": self.fresh, "reused": self.reused, "blocks_scored": self.blocks_scored}


@dataclass
class _Resident:
    """Per-head K/V rows currently held in fast memory, keyed by token index."""

    index: list[np.ndarray] = field(default_factory=list)
    keys: list[np.ndarray] = field(default_factory=list)
    values: list[np.ndarray] = field(default_factory=list)

    def take(self, h: int, wanted: np.ndarray):
        pos = np.searchsorted(self.index[h], wanted)
        return self.keys[h][pos], self.values[h][pos]


def decode_loop(
    cache: KvCache,
    queries: np.ndarray,
    token_budget: int,
    reuse: bool = False,
    scale: float | None = None,
    **select_kw,
) -> tuple[np.ndarray, list[StepStats]]:
    """Run select -> (reuse) -> attend for each query in ``queries`` (T, H, d).

    With ``reuse`` the K/V rows shared with the previous step are taken from
    the previous working set instead of the cache; only the load counters
    change, never the outputs.
    """
    queries = np.asarray(queries, dtype=np.float64)
    scale = 1.0 / np.sqrt(cache.head_dim) if scale is None else scale
    outputs = np.empty_like(queries)
    stats: list[StepStats] = []
    prev: SelectionResult | None = None
    resident = _Resident()
    blocks_scored = cache.heads * len(cache.plan)

    for t, q in enumerate(queries):
        sel = select_step(q, cache, token_budget, **select_kw)
        if reuse and prev is not None:
            rp = plan_reuse(prev, sel)
        else:
            rp = ReusePlan(tuple(np.zeros(0, dtype=np.int64) for _ in sel.indices), sel.indices, 0)

        new_resident = _Resident()
        for h, idx in enumerate(sel.indices):
            if idx.size == 0:
                raise EmptySelection(f"head {h} has no selected tokens")
            k_rows = np.empty((idx.size, cache.head_dim))
            v_rows = np.empty_like(k_rows)
            slot_old = np.searchsorted(idx, rp.reused[h])
            slot_new = np.searchsorted(idx, rp.fresh[h])
            if rp.reused[h].size:
                k_rows[slot_old], v_rows[slot_old] = resident.take(h, rp.reused[h])
            k_rows[slot_new] = cache.keys[h, rp.fresh[h]]
            v_rows[slot_new] = cache.values[h, rp.fresh[h]]
            outputs[t, h] = _attend(q[h], k_rows, v_rows, scale)
            new_resident.index.append(idx)
            new_resident.keys.append(k_rows)
            new_resident.values.append(v_rows)

        fresh = max(f.size for f in rp.fresh)
        stats.append(StepStats(t, int(fresh), int(rp.reuse_len), blocks_scored))
        prev, resident = sel, new_resident

    log.debug("decode loop: %d steps, %d fresh loads", len(stats), sum(s.fresh for s in stats))
    return outputs, stats
