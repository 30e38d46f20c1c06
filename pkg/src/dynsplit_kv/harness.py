"""Synthetic workloads and experiment runners.

Filler keys and values are isotropic unit Gaussians. A planted span gets keys
aligned with the query, ``c * q/|q| + N(0, 0.01 I)``, so dense attention
concentrates on it; this stands in for a passkey hidden in long filler text.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from typing import Iterable, Literal, Sequence

import numpy as np

from .core import AttentionTensor, DelimiterTable, SegmentPlan, seeded_rng
from .pipeline import KvCache, decode_loop, dense_attention, select_step
from .segment import SegmentConfig, segment
from .v2f import DigestKind

log = logging.getLogger(__name__)

PERIOD, COMMA, PAREN = 28723, 28725, 28732
# sentence-final / mid-sentence / distractor weights, as in the Mistral table
SYNTH_TABLE = DelimiterTable({PERIOD: 1.0, COMMA: 0.6, PAREN: 0.5})
FILLER_IDS = (1000, 28000)  # id range that never collides with the table
PASSKEY_BUDGETS = (36, 64, 128, 256, 512)
PLANT_NOISE_STD = 0.1


@dataclass(frozen=True)
class SyntheticSpec:
    seq_len: int = 10240
    head_dim: int = 16
    heads: int = 2
    planted: tuple[tuple[float, float], ...] = ((0.5, 10.0),)  # (depth fraction, strength c)
    span_len: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.span_len < 1 or self.span_len > self.seq_len:
            raise ValueError("span_len must be in [1, seq_len]")
        for depth, c in self.planted:
            if not 0.0 <= depth <= 1.0:
                raise ValueError(f"depth {depth} outside [0, 1]")
            if not np.isfinite(c) or c < 0:
                raise ValueError(f"strength {c} must be finite and >= 0")

    def span_starts(self) -> list[int]:
        return [int(round(depth * (self.seq_len - self.span_len))) for depth, _ in self.planted]


@dataclass(frozen=True)
class SyntheticInstance:
    keys: np.ndarray  # (H, S, d)
    values: np.ndarray  # (H, S, d)
    query: np.ndarray  # (H, d)
    planted: tuple[np.ndarray, ...]  # token indices of each planted span

    def cache(self, plan: SegmentPlan | None = None, kind: DigestKind = "minmax") -> KvCache:
        if plan is None:
            return KvCache(self.keys, self.values)
        return KvCache.build(self.keys, self.values, plan, kind)

    @property
    def planted_indices(self) -> np.ndarray:
        if not self.planted:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(self.planted))


def gen_synthetic(spec: SyntheticSpec) -> SyntheticInstance:
    rng = seeded_rng(spec.seed)
    H, S, d = spec.heads, spec.seq_len, spec.head_dim
    query = rng.standard_normal((H, d))
    keys = rng.standard_normal((H, S, d))
    values = rng.standard_normal((H, S, d))
    unit = query / np.linalg.norm(query, axis=1, keepdims=True)
    planted = []
    for start, (_, c) in zip(spec.span_starts(), spec.planted):
        idx = np.arange(start, start + spec.span_len)
        noise = PLANT_NOISE_STD * rng.standard_normal((H, spec.span_len, d))
        keys[:, idx] = c * unit[:, None, :] + noise
        planted.append(idx)
    return SyntheticInstance(keys, values, query, tuple(planted))


def random_walk_queries(rng: np.random.Generator, start: np.ndarray, steps: int, step_std: float = 0.05) -> np.ndarray:
    """``steps`` queries drifting from ``start`` by Gaussian increments."""
    incr = step_std * rng.standard_normal((steps, *start.shape))
    incr[0] = 0.0
    return start + np.cumsum(incr, axis=0)


def random_attention(rng: np.random.Generator, layers: int, heads: int, seq_len: int, temperature: float = 1.0):
    """Causal attention maps from softmax over Gaussian logits."""
    logits = temperature * rng.standard_normal((layers, heads, seq_len, seq_len))
    return AttentionTensor(_causal_softmax(logits))


def decaying_attention(
    rng: np.random.Generator, layers: int, heads: int, seq_len: int, decay: float = 0.02, noise: float = 0.5
) -> AttentionTensor:
    """Causal maps whose logits fall off linearly with query-key distance.

    The logit distribution depends only on distance, so every query row
    sees the same statistics wherever it sits in the sequence.
    """
    dist = np.subtract.outer(np.arange(seq_len), np.arange(seq_len)).astype(np.float64)
    logits = -decay * dist + noise * rng.standard_normal((layers, heads, seq_len, seq_len))
    return AttentionTensor(_causal_softmax(logits))


def _causal_softmax(logits: np.ndarray) -> np.ndarray:
    S = logits.shape[-1]
    logits = np.where(np.tri(S, dtype=bool), logits, -np.inf)
    z = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


# -- synthetic token streams --------------------------------------------------


def sentence_stream(
    rng: np.random.Generator,
    length: int,
    sentence_len: tuple[int, int] = (8, 24),
    comma_rate: float = 0.08,
    keep_whole: Sequence[tuple[int, int]] = (),
) -> np.ndarray:
    """Filler tokens broken into sentences ending in a period.

    Each ``[start, end)`` in ``keep_whole`` becomes a sentence of its own:
    a period just before ``start``, one at ``end - 1``, none in between.
    """
    toks = rng.integers(*FILLER_IDS, size=length)
    toks[rng.random(length) < comma_rate] = COMMA
    pos = -1
    while True:
        pos += int(rng.integers(sentence_len[0], sentence_len[1] + 1))
        if pos >= length:
            break
        toks[pos] = PERIOD
    for start, end in keep_whole:
        toks[start:end] = rng.integers(*FILLER_IDS, size=end - start)
        if start > 0:
            toks[start - 1] = PERIOD
        toks[end - 1] = PERIOD
    return toks


@dataclass(frozen=True)
class BoundaryDoc:
    tokens: np.ndarray
    boundaries: np.ndarray  # cut positions (token index that starts a new unit)


def boundary_corpus(
    rng: np.random.Generator,
    n_docs: int,
    cfg: SegmentConfig,
    sentences_per_doc: int = 12,
    distractor_rate: float = 0.15,
    distractors: Sequence[int] = (COMMA, PAREN),
) -> list[BoundaryDoc]:
    """Documents whose true boundaries sit after periods spaced near ``C``.

    Gaps are drawn from ``C +/- max_deviation // 2`` so each search window
    holds exactly one period; the other delimiters are distractors.
    """
    C, half = cfg.chunk_size, cfg.max_deviation // 2
    docs = []
    for _ in range(n_docs):
        gaps = rng.integers(max(C - half, 2), C + half + 1, size=sentences_per_doc)
        ends = np.cumsum(gaps)
        L = int(ends[-1])
        toks = rng.integers(*FILLER_IDS, size=L)
        mask = rng.random(L) < distractor_rate
        if len(distractors):
            toks[mask] = rng.choice(np.asarray(distractors), size=int(mask.sum()))
        toks[ends - 1] = PERIOD
        docs.append(BoundaryDoc(toks, ends[:-1].astype(np.int64)))
    return docs


def boundary_matches(pred: np.ndarray, truth: np.ndarray, tol: int = 2) -> int:
    """Greedy one-to-one matches between sorted cut lists within ``tol``."""
    i = j = hits = 0
    while i < len(pred) and j < len(truth):
        if abs(int(pred[i]) - int(truth[j])) <= tol:
            hits += 1
            i += 1
            j += 1
        elif pred[i] < truth[j]:
            i += 1
        else:
            j += 1
    return hits


def f1_score(tp: int, n_pred: int, n_truth: int) -> float:
    if n_pred == 0 and n_truth == 0:
        return 1.0
    if tp == 0:
        return 0.0
    p, r = tp / n_pred, tp / n_truth
    return 2 * p * r / (p + r)


def corpus_boundary_f1(docs: Iterable[BoundaryDoc], table: DelimiterTable, cfg: SegmentConfig, tol: int = 2) -> float:
    """Micro-averaged boundary F1 of ``segment`` over a corpus."""
    tp = n_pred = n_truth = 0
    for doc in docs:
        cuts = segment(doc.tokens, table, cfg).starts[1:]
        tp += boundary_matches(cuts, doc.boundaries, tol)
        n_pred += len(cuts)
        n_truth += len(doc.boundaries)
    return f1_score(tp, n_pred, n_truth)


def run_reversal_ablation(
    corpus: Sequence[BoundaryDoc], table: DelimiterTable, cfg: SegmentConfig, tol: int = 2
) -> tuple[float, float]:
    """Boundary F1 with ``table`` and with its importance order reversed."""
    if not corpus:
        raise ValueError("corpus is empty")
    return corpus_boundary_f1(corpus, table, cfg, tol), corpus_boundary_f1(corpus, table.reversed(), cfg, tol)


# -- metrics -------------------------------------------------------------------


@dataclass
class RunMetrics:
    token_budget: int
    recall_at_budget: float = 0.0
    mass_recall: float = 0.0
    passkey_hit: bool = False
    kv_usage_rate: float = 0.0
    digest_overhead_bytes: int = 0
    resident_bytes_full: int = 0
    resident_bytes_compressed: int = 0
    boundary_f1: float | None = None


def memory_footprint(
    heads: int,
    seq_len: int,
    head_dim: int,
    blocks: int,
    token_budget: int,
    kind: DigestKind = "minmax",
    bytes_per_elem: int = 4,
) -> dict:
    vectors = 2 if kind == "minmax" else 1
    full = 2 * heads * seq_len * head_dim * bytes_per_elem
    overhead = heads * blocks * vectors * head_dim * bytes_per_elem
    kept = min(token_budget, seq_len)
    compressed = 2 * heads * kept * head_dim * bytes_per_elem + overhead
    return {
        "resident_bytes_full": full,
        "resident_bytes_compressed": compressed,
        "digest_overhead_bytes": overhead,
        "kv_usage_rate": kept / seq_len,
    }


def account_memory(cache: KvCache, token_budget: int, bytes_per_elem: int = 4) -> dict:
    """Bytes resident with the full cache vs. a budgeted selection plus digests."""
    blocks = len(cache.plan) if cache.plan is not None else 0
    return memory_footprint(cache.heads, cache.seq_len, cache.head_dim, blocks, token_budget, cache.kind, bytes_per_elem)


def dense_top_tokens(query: np.ndarray, cache: KvCache, budget: int, scale: float | None = None) -> list[np.ndarray]:
    """Per head, the ``budget`` tokens with the most dense attention mass."""
    scale = 1.0 / np.sqrt(cache.head_dim) if scale is None else scale
    out = []
    for h in range(cache.heads):
        logits = cache.keys[h] @ query[h] * scale
        out.append(np.sort(np.argsort(-logits, kind="stable")[:budget]))
    return out


def dense_mass(query: np.ndarray, cache: KvCache, scale: float | None = None) -> np.ndarray:
    """Dense attention probabilities, shape (H, S)."""
    scale = 1.0 / np.sqrt(cache.head_dim) if scale is None else scale
    logits = np.einsum("hsd,hd->hs", cache.keys, query) * scale
    z = np.exp(logits - logits.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


def selection_recall(query: np.ndarray, cache: KvCache, indices: Sequence[np.ndarray], budget: int) -> tuple[float, float]:
    """(set recall against the dense top-``budget`` tokens, dense mass captured).

    Both are averaged over heads.
    """
    top = dense_top_tokens(query, cache, min(budget, cache.seq_len))
    mass = dense_mass(query, cache)
    set_r = np.mean([np.intersect1d(t, s).size / t.size for t, s in zip(top, indices)])
    mass_r = np.mean([mass[h, s].sum() for h, s in enumerate(indices)])
    return float(set_r), float(mass_r)


# -- passkey --------------------------------------------------------------------


def passkey_plan(
    spec: SyntheticSpec,
    inst: SyntheticInstance,
    plan_source: Literal["fixed", "ddselect"],
    cfg: SegmentConfig,
    table: DelimiterTable = SYNTH_TABLE,
) -> SegmentPlan:
    if plan_source == "fixed":
        return SegmentPlan.fixed(spec.seq_len, cfg.chunk_size)
    if plan_source != "ddselect":
        raise ValueError(f"unknown plan source {plan_source!r}")
    rng = seeded_rng(spec.seed + 0x5EED_0000)
    spans = [(int(ix[0]), int(ix[-1]) + 1) for ix in inst.planted]
    toks = sentence_stream(rng, spec.seq_len, keep_whole=spans)
    return segment(toks, table, cfg)


def run_passkey(
    spec: SyntheticSpec,
    plan_source: Literal["fixed", "ddselect"] = "ddselect",
    budgets: Sequence[int] = PASSKEY_BUDGETS,
    cfg: SegmentConfig = SegmentConfig(32),
    kind: DigestKind = "minmax",
    bytes_per_elem: int = 4,
) -> list[RunMetrics]:
    """Select at each budget and check whether every planted token survived on every head."""
    inst = gen_synthetic(spec)
    cache = inst.cache(passkey_plan(spec, inst, plan_source, cfg), kind)
    planted = inst.planted_indices
    out = []
    for b in budgets:
        sel = select_step(inst.query, cache, b)
        hit = all(np.isin(planted, idx).all() for idx in sel.indices)
        set_r, mass_r = selection_recall(inst.query, cache, sel.indices, b)
        mem = account_memory(cache, b, bytes_per_elem)
        out.append(RunMetrics(b, set_r, mass_r, bool(hit), **mem))
    return out


def passkey_hit_rates(
    seeds: Iterable[int],
    plan_source: Literal["fixed", "ddselect"] = "ddselect",
    budgets: Sequence[int] = PASSKEY_BUDGETS,
    cfg: SegmentConfig = SegmentConfig(32),
    kind: DigestKind = "minmax",
    strength: float = 10.0,
    **spec_kw,
) -> dict[int, float]:
    """Fraction of seeds with a passkey hit, per budget (depth drawn per seed)."""
    hits = dict.fromkeys(budgets, 0)
    n = 0
    for seed in seeds:
        depth = float(seeded_rng(seed + 0xDE97_0000).random())
        spec = SyntheticSpec(planted=((depth, strength),), seed=seed, **spec_kw)
        for m in run_passkey(spec, plan_source, budgets, cfg, kind):
            hits[m.token_budget] += m.passkey_hit
        n += 1
    return {b: hits[b] / n for b in budgets}


# -- bench ------------------------------------------------------------------------

BENCH_HEADER = (
    "seed,S,H,d,C,delta,mix,variant,plan,budget,recall,hit,"
    "fresh_loads,reused_loads,resident_full,resident_compressed"
).split(",")


@dataclass(frozen=True)
class BenchConfig:
    seq_len: int = 2048
    heads: int = 2
    head_dim: int = 16
    chunk_size: int = 32
    max_deviation: int = 14
    mix: float = 0.5
    budgets: tuple[int, ...] = PASSKEY_BUDGETS
    plans: tuple[str, ...] = ("fixed", "ddselect")
    variants: tuple[str, ...] = ("minmax", "mean")
    decode_steps: int = 16
    strength: float = 10.0
    bytes_per_elem: int = 4


def bench_rows(seeds: Iterable[int], cfg: BenchConfig = BenchConfig()) -> list[list]:
    seg_cfg = SegmentConfig(cfg.chunk_size, cfg.max_deviation, cfg.mix)
    rows = []
    for seed in seeds:
        depth = float(seeded_rng(seed + 0xDE97_0000).random())
        spec = SyntheticSpec(cfg.seq_len, cfg.head_dim, cfg.heads, ((depth, cfg.strength),), seed=seed)
        inst = gen_synthetic(spec)
        queries = random_walk_queries(seeded_rng(seed + 0x0A1C_0000), inst.query, cfg.decode_steps)
        for plan_source in cfg.plans:
            plan = passkey_plan(spec, inst, plan_source, seg_cfg)
            for kind in cfg.variants:
                cache = inst.cache(plan, kind)
                for b in cfg.budgets:
                    sel = select_step(inst.query, cache, b)
                    hit = all(np.isin(inst.planted_indices, idx).all() for idx in sel.indices)
                    recall, _ = selection_recall(inst.query, cache, sel.indices, b)
                    _, stats = decode_loop(cache, queries, b, reuse=True)
                    mem = account_memory(cache, b, cfg.bytes_per_elem)
                    rows.append([
                        seed, cfg.seq_len, cfg.heads, cfg.head_dim, cfg.chunk_size, cfg.max_deviation,
                        cfg.mix, kind, plan_source, b, f"{recall:.6f}", int(hit),
                        sum(s.fresh for s in stats), sum(s.reused for s in stats),
                        mem["resident_bytes_full"], mem["resident_bytes_compressed"],
                    ])
    # canonical order regardless of how cells were produced
    rows.sort(key=lambda r: (r[0], r[8], r[7], r[9]))
    return rows


def bench_csv(seeds: Iterable[int], cfg: BenchConfig = BenchConfig()) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(BENCH_HEADER)
    writer.writerows(bench_rows(seeds, cfg))
    return buf.getvalue()
