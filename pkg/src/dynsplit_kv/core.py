"""Shared domain types, validation and file formats.

Library arithmetic is float64 throughout. On-disk attention tensors are
float32 and are widened to float64 when read.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

ATN1_MAGIC = b"ATN1"
ROW_SUM_TOL = 1e-5


class DynSplitError(Exception):
    """Base class for all library errors."""


class AttentionError(DynSplitError):
    pass


class RowNotNormalized(AttentionError):
    def __init__(self, layer: int, head: int, query: int, total: float):
        self.layer, self.head, self.query, self.total = layer, head, query, total
        super().__init__(
            f"row (l={layer}, h={head}, q={query}) sums to {total!r}, expected 1"
        )


class NonCausalEntry(AttentionError):
    def __init__(self, layer: int, head: int, query: int, key: int):
        self.layer, self.head, self.query, self.key = layer, head, query, key
        super().__init__(f"non-zero entry above the diagonal at (l={layer}, h={head}, q={query}, k={key})")


class NegativeEntry(AttentionError):
    def __init__(self, index: tuple[int, ...]):
        self.index = index
        super().__init__(f"negative attention probability at {index}")


class InvalidPlan(DynSplitError):
    pass


# -- PRNG ---------------------------------------------------------------------


def seeded_rng(seed: int) -> np.random.Generator:
    """Return a numpy Generator backed by PCG64 (XSL-RR 128/64).

    PCG64 is pinned explicitly rather than relying on ``default_rng`` so the
    bit stream stays fixed if numpy ever changes its default.
    """
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFF_FFFF_FFFF_FFFF))


# -- token sequences ----------------------------------------------------------


@dataclass(frozen=True)
class TokenSequence:
    tokens: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.tokens, dtype=np.int64).reshape(-1)
        if arr.size and arr.min() < 0:
            raise ValueError("token ids must be non-negative")
        arr.setflags(write=False)
        object.__setattr__(self, "tokens", arr)

    def __len__(self) -> int:
        return int(self.tokens.size)

    def __getitem__(self, idx):
        return self.tokens[idx]

    def prefix(self, n: int) -> "TokenSequence":
        return TokenSequence(self.tokens[:n])


def as_tokens(seq) -> TokenSequence:
    return seq if isinstance(seq, TokenSequence) else TokenSequence(seq)


def read_token_stream(path) -> list[TokenSequence]:
    """Read a JSON-lines token stream, one ``{"tokens": [...]}`` per line."""
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(TokenSequence(json.loads(line)["tokens"]))
    return out


def write_token_stream(path, seqs: Iterable) -> None:
    with open(path, "w") as fh:
        for seq in seqs:
            fh.write(json.dumps({"tokens": [int(t) for t in as_tokens(seq).tokens]}) + "\n")


# -- delimiter tables ---------------------------------------------------------


@dataclass(frozen=True)
class DelimiterTable(Mapping[int, float]):
    """Token id -> boundary importance weight in [0, 1]."""

    entries: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for tok, w in dict(self.entries).items():
            tok, w = int(tok), float(w)
            if tok < 0:
                raise ValueError(f"negative token id {tok}")
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"weight {w!r} for token {tok} outside [0, 1]")
            if tok in clean:
                raise ValueError(f"duplicate token id {tok}")
            clean[tok] = w
        object.__setattr__(self, "entries", dict(sorted(clean.items())))

    def __getitem__(self, tok: int) -> float:
        return self.entries[int(tok)]

    def __iter__(self) -> Iterator[int]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def weights_for(self, tokens: np.ndarray) -> np.ndarray:
        """Per-position weights, NaN where the token is not a delimiter."""
        out = np.full(len(tokens), np.nan)
        for tok, w in self.entries.items():
            out[tokens == tok] = w
        return out

    def reversed(self) -> "DelimiterTable":
        """Invert the importance order (w -> 1 - w)."""
        return DelimiterTable({t: 1.0 - w for t, w in self.entries.items()})

    def to_json(self) -> str:
        return json.dumps({str(t): w for t, w in self.entries.items()})

    @classmethod
    def from_json(cls, text: str) -> "DelimiterTable":
        raw = json.loads(text)
        if not isinstance(raw, dict):
            raise ValueError("delimiter table must be a JSON object")
        keys = [int(k) for k in raw]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate token id in delimiter table")
        return cls({int(k): v for k, v in raw.items()})

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "DelimiterTable":
        return cls.from_json(Path(path).read_text())


# Mistral-7B-Instruct-v0.2 punctuation weights.
MISTRAL_7B_DELIMITERS = DelimiterTable(
    {
        28723: 1.0,  # .
        609: 1.0,  # !
        28804: 0.9,  # ?
        1101: 1.0,  # ...
        28745: 0.7,  # ;
        28747: 0.7,  # :
        28725: 0.6,  # ,
        28742: 0.5,  # '
        28808: 0.9,  # "
        28732: 0.5,  # (
        557: 0.6,  # )
        28792: 0.5,  # [
        28793: 0.5,  # ]
    }
)


# -- attention tensors --------------------------------------------------------


@dataclass(frozen=True)
class AttentionTensor:
    """Causal attention probabilities, shape (layers, heads, S, S)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 4 or v.shape[2] != v.shape[3]:
            raise ValueError(f"expected (layers, heads, S, S), got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def layers(self) -> int:
        return self.values.shape[0]

    @property
    def heads(self) -> int:
        return self.values.shape[1]

    @property
    def seq_len(self) -> int:
        return self.values.shape[2]

    def save(self, path) -> None:
        write_atn1(path, self)

    @classmethod
    def load(cls, path) -> "AttentionTensor":
        return read_atn1(path)


def validate_attention(t: AttentionTensor) -> None:
    """Raise if ``t`` is not a causal, row-stochastic, non-negative tensor."""
    v = t.values
    neg = np.argwhere(v < 0)
    if len(neg):
        raise NegativeEntry(tuple(int(i) for i in neg[0]))
    upper = np.triu(np.ones(v.shape[-2:], dtype=bool), k=1)
    bad = np.argwhere((v != 0) & upper)
    if len(bad):
        raise NonCausalEntry(*(int(i) for i in bad[0]))
    sums = v.sum(axis=-1)
    off = np.argwhere(np.abs(sums - 1.0) > ROW_SUM_TOL)
    if len(off):
        l, h, q = (int(i) for i in off[0])
        raise RowNotNormalized(l, h, q, float(sums[l, h, q]))


def write_atn1(path, t: AttentionTensor) -> None:
    nl, nh, s, _ = t.values.shape
    with open(path, "wb") as fh:
        fh.write(ATN1_MAGIC)
        fh.write(struct.pack("<4I", nl, nh, s, s))
        fh.write(t.values.astype("<f4").tobytes(order="C"))


def read_atn1(path) -> AttentionTensor:
    raw = Path(path).read_bytes()
    if raw[:4] != ATN1_MAGIC:
        raise ValueError(f"{path}: not an ATN1 file")
    nl, nh, s, s2 = struct.unpack("<4I", raw[4:20])
    if s != s2:
        raise ValueError(f"{path}: non-square attention maps ({s}x{s2})")
    n = nl * nh * s * s2
    body = np.frombuffer(raw, dtype="<f4", count=n, offset=20)
    if len(raw) != 20 + 4 * n:
        raise ValueError(f"{path}: expected {n} floats, file has {(len(raw) - 20) // 4}")
    return AttentionTensor(body.reshape(nl, nh, s, s2).astype(np.float64))


# -- segment plans ------------------------------------------------------------


@dataclass(frozen=True)
class SegmentPlan:
    """Gapless [start, end) tiling of a token sequence.

    ``chunk_size`` and ``max_deviation`` record the length law the plan was
    built under; ``None`` for plans that make no length promise.
    """

    spans: tuple[tuple[int, int], ...]
    chunk_size: int | None = None
    max_deviation: int | None = None

    def __post_init__(self):
        spans = tuple((int(a), int(b)) for a, b in self.spans)
        object.__setattr__(self, "spans", spans)

    def __len__(self) -> int:
        return len(self.spans)

    def __iter__(self):
        return iter(self.spans)

    @property
    def length(self) -> int:
        return self.spans[-1][1] if self.spans else 0

    @property
    def starts(self) -> np.ndarray:
        return np.array([a for a, _ in self.spans], dtype=np.int64)

    @property
    def lengths(self) -> np.ndarray:
        return np.array([b - a for a, b in self.spans], dtype=np.int64)

    def block_of(self) -> np.ndarray:
        """Block index of every token position."""
        return np.repeat(np.arange(len(self.spans)), self.lengths)

    def validate(self, length: int | None = None) -> None:
        pos = 0
        for a, b in self.spans:
            if a != pos:
                raise InvalidPlan(f"span [{a}, {b}) does not start at {pos}")
            if b <= a:
                raise InvalidPlan(f"empty span [{a}, {b})")
            pos = b
        if length is not None and pos != length:
            raise InvalidPlan(f"plan covers [0, {pos}), expected [0, {length})")
        if self.chunk_size is not None and self.max_deviation is not None:
            lo = self.chunk_size - self.max_deviation
            hi = self.chunk_size + self.max_deviation
            for a, b in self.spans[:-1]:
                if not lo <= b - a <= hi:
                    raise InvalidPlan(f"span [{a}, {b}) length {b - a} outside [{lo}, {hi}]")

    def to_json(self) -> str:
        return json.dumps({"spans": [[a, b] for a, b in self.spans]})

    @classmethod
    def fixed(cls, length: int, chunk_size: int) -> "SegmentPlan":
        spans = tuple((a, min(a + chunk_size, length)) for a in range(0, length, chunk_size))
        return cls(spans, chunk_size, 0)


# -- selections ---------------------------------------------------------------


@dataclass(frozen=True)
class SelectionResult:
    """Per-head token choices for one decode step."""

    indices: tuple[np.ndarray, ...]
    block_scores: tuple[np.ndarray, ...]
    token_budget: int
    exhausted: tuple[bool, ...] = ()

    @property
    def heads(self) -> int:
        return len(self.indices)

    def counts(self) -> list[int]:
        return [int(ix.size) for ix in self.indices]

