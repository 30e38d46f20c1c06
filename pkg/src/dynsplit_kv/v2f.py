"""Variable-length blocks -> fixed-size digests -> token selection.

Each block of the segment plan is summarised by the element-wise max and
min of its keys (or their mean). A query scores a block from the digest
alone; the best blocks' scores are then copied onto their tokens so a
plain token top-k can run over blocks of any length.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .core import DynSplitError, SegmentPlan

DigestKind = Literal["minmax", "mean"]


class PlanCoverageMismatch(DynSplitError):
    pass


class DimensionMismatch(DynSplitError):
    pass


@dataclass(frozen=True)
class BlockDigest:
    span: tuple[int, int]
    key_max: np.ndarray | None
    key_min: np.ndarray | None
    key_mean: np.ndarray | None = None
    head: int = 0


@dataclass(frozen=True)
class HeadDigests:
    """All block digests of one head, stored as stacked (blocks, d) arrays."""

    kind: DigestKind
    spans: np.ndarray
    key_max: np.ndarray | None
    key_min: np.ndarray | None
    key_mean: np.ndarray | None
    head: int = 0

    def __len__(self) -> int:
        return len(self.spans)

    def __getitem__(self, i: int) -> BlockDigest:
        pick = lambda a: None if a is None else a[i]  # noqa: E731
        a, b = self.spans[i]
        return BlockDigest((int(a), int(b)), pick(self.key_max), pick(self.key_min), pick(self.key_mean), self.head)

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def dim(self) -> int:
        ref = self.key_mean if self.kind == "mean" else self.key_max
        return ref.shape[1]

    @classmethod
    def stack(cls, digests: Sequence[BlockDigest], kind: DigestKind) -> "HeadDigests":
        if isinstance(digests, HeadDigests):
            return digests
        spans = np.array([d.span for d in digests], dtype=np.int64).reshape(-1, 2)
        grab = lambda attr: np.array([getattr(d, attr) for d in digests], dtype=np.float64)  # noqa: E731
        if kind == "minmax":
            return cls(kind, spans, grab("key_max"), grab("key_min"), None)
        return cls(kind, spans, None, None, grab("key_mean"))


def build_digests(keys: np.ndarray, plan: SegmentPlan, kind: DigestKind = "minmax") -> list[HeadDigests]:
    """Digest every block of ``plan`` for each head of ``keys`` (H, S, d).

    A single (S, d) matrix is treated as one head.
    """
    keys = np.asarray(keys, dtype=np.float64)
    if keys.ndim == 2:
        keys = keys[None]
    S = keys.shape[1]
    if plan.length != S or not len(plan):
        raise PlanCoverageMismatch(f"plan covers {plan.length} tokens, keys have {S}")
    spans = np.array(plan.spans, dtype=np.int64)
    starts = spans[:, 0]
    out = []
    for h, k in enumerate(keys):
        if kind == "minmax":
            hd = HeadDigests(kind, spans, np.maximum.reduceat(k, starts, axis=0), np.minimum.reduceat(k, starts, axis=0), None, h)
        elif kind == "mean":
            sums = np.add.reduceat(k, starts, axis=0)
            hd = HeadDigests(kind, spans, None, None, sums / (spans[:, 1] - spans[:, 0])[:, None], h)
        else:
            raise ValueError(f"unknown digest kind {kind!r}")
        out.append(hd)
    return out


def score_blocks(query: np.ndarray, digests: Sequence[BlockDigest], kind: DigestKind = "minmax") -> np.ndarray:
    """Score every block against ``query``; entry i belongs to block i.

    For minmax this is the tightest bound on ``q . k`` over the block's box,
    so it is never below the best real token in the block.
    """
    hd = HeadDigests.stack(digests, kind)
    q = np.asarray(query, dtype=np.float64)
    if not len(hd):
        return np.zeros(0)
    if q.shape != (hd.dim,):
        raise DimensionMismatch(f"query has shape {q.shape}, digests have dim {hd.dim}")
    if kind == "minmax":
        return np.maximum(hd.key_max * q, hd.key_min * q).sum(axis=1)
    return hd.key_mean @ q


def select_blocks(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` best blocks (lower index wins ties), ascending."""
    if k < 1:
        raise ValueError("k must be >= 1")
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
    return np.sort(order[:k])


def blocks_to_cover(scores: np.ndarray, lengths: np.ndarray, token_budget: int) -> int:
    """Smallest top-block count holding ``token_budget`` tokens, plus one."""
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
    filled = np.cumsum(np.asarray(lengths)[order])
    need = int(np.searchsorted(filled, token_budget)) + 1
    return min(need + 1, len(order))


def rank_tokens(
    selected: np.ndarray, scores: np.ndarray, plan: SegmentPlan, cut_side: Literal["head", "tail"] = "head"
) -> np.ndarray:
    """Tokens of the selected blocks in priority order.

    Every token carries its block's score. Higher scores come first; among
    equal scores lower token indices come first ("head") or higher ones
    ("tail").
    """
    sel = np.asarray(selected, dtype=np.int64)
    if not sel.size:
        return np.zeros(0, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    # blocks by descending score; tied blocks ordered by position, which
    # keeps tied tokens in index order because blocks are contiguous
    block_order = sel[np.lexsort((sel if cut_side == "head" else -sel, -scores[sel]))]
    spans = plan.spans
    if cut_side == "head":
        parts = [np.arange(*spans[b]) for b in block_order]
    else:
        parts = [np.arange(spans[b][1] - 1, spans[b][0] - 1, -1) for b in block_order]
    return np.concatenate(parts)


def map_block_to_tokens(
    selected: np.ndarray,
    scores: np.ndarray,
    plan: SegmentPlan,
    token_budget: int,
    cut_side: Literal["head", "tail"] = "head",
) -> tuple[np.ndarray, bool]:
    """Top ``token_budget`` tokens by inherited block score, ascending.

    Returns ``(indices, exhausted)``; ``exhausted`` is set when the selected
    blocks hold fewer tokens than the budget, in which case all of them are
    returned.
    """
    if token_budget < 1:
        raise ValueError("token_budget must be >= 1")
    ranked = rank_tokens(selected, scores, plan, cut_side)
    exhausted = token_budget > ranked.size
    return np.sort(ranked[:token_budget]), exhausted
