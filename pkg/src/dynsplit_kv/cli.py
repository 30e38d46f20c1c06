"""Command-line entry point: ``dynsplit-kv <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .core import DelimiterTable, DynSplitError, read_atn1, read_token_stream, seeded_rng, validate_attention
from .harness import (
    PASSKEY_BUDGETS,
    BenchConfig,
    SyntheticSpec,
    boundary_corpus,
    bench_csv,
    gen_synthetic,
    passkey_hit_rates,
    passkey_plan,
    random_walk_queries,
    run_reversal_ablation,
    SYNTH_TABLE,
)
from .pipeline import decode_loop
from .scoring import ScoringConfig, build_table, candidate_positions, score_positions
from .segment import SegmentConfig, segment

log = logging.getLogger("dynsplit_kv")


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _emit(text: str, out: str | None) -> None:
    # always "\n" line endings so outputs are byte-identical across platforms
    if out:
        Path(out).write_text(text, newline="")
        return
    buf = getattr(sys.stdout, "buffer", None)
    if buf is None:
        sys.stdout.write(text)
    else:
        sys.stdout.flush()
        buf.write(text.encode())
        buf.flush()


def _candidate_ids(arg: str) -> list[int]:
    path = Path(arg)
    raw = json.loads(path.read_text()) if path.exists() else json.loads(arg)
    if not isinstance(raw, list):
        raise ValueError("--candidates must be a JSON list of token ids")
    return [int(x) for x in raw]


def cmd_score_delimiters(args) -> int:
    attn = read_atn1(args.attn)
    validate_attention(attn)
    seqs = read_token_stream(args.tokens)
    if not seqs:
        raise ValueError(f"{args.tokens}: no token sequences")
    tokens = seqs[0]
    if len(tokens) != attn.seq_len:
        raise ValueError(f"token sequence has {len(tokens)} tokens, attention covers {attn.seq_len}")
    cfg = ScoringConfig(args.window, args.overlap, args.penalty)
    positions = candidate_positions(tokens, _candidate_ids(args.candidates))
    scores = score_positions(attn, positions, cfg)
    table = build_table(scores, tokens, args.norm, None if args.no_round else 1)
    _emit(table.to_json() + "\n", args.out)
    return 0


def _segment_cfg(args) -> SegmentConfig:
    return SegmentConfig(args.chunk, args.delta, args.mix, getattr(args, "boundary_side", "after"))


def cmd_segment(args) -> int:
    table = DelimiterTable.load(args.weights)
    cfg = _segment_cfg(args)
    lines = [segment(seq, table, cfg).to_json() for seq in read_token_stream(args.tokens)]
    _emit("".join(line + "\n" for line in lines), args.out)
    return 0


def _synthetic(args) -> tuple[SyntheticSpec, object]:
    depth = float(seeded_rng(args.seed + 0xDE97_0000).random())
    spec = SyntheticSpec(args.seq_len, args.dim, args.heads, ((depth, args.strength),), seed=args.seed)
    return spec, gen_synthetic(spec)


def cmd_simulate(args) -> int:
    spec, inst = _synthetic(args)
    plan = passkey_plan(spec, inst, args.plan, _segment_cfg(args))
    cache = inst.cache(plan, args.variant)
    queries = random_walk_queries(seeded_rng(args.seed + 0x0A1C_0000), inst.query, args.steps, args.drift)
    _, stats = decode_loop(
        cache, queries, args.budget, reuse=args.reuse, cut_side=args.cut_side, keep_recent=args.keep_recent
    )
    _emit("".join(json.dumps(s.as_dict()) + "\n" for s in stats), args.out)
    return 0


def cmd_passkey(args) -> int:
    rates = passkey_hit_rates(
        range(args.seeds), args.plan, args.budgets, _segment_cfg(args), args.variant,
        strength=args.strength, seq_len=args.seq_len, head_dim=args.dim, heads=args.heads,
    )
    lines = ["budget,hit_rate\n"] + [f"{b},{r:.4f}\n" for b, r in rates.items()]
    _emit("".join(lines), args.out)
    return 0


def cmd_bench(args) -> int:
    cfg = BenchConfig(
        seq_len=args.seq_len, heads=args.heads, head_dim=args.dim, chunk_size=args.chunk,
        max_deviation=args.delta, mix=args.mix, budgets=tuple(args.budgets),
        decode_steps=args.steps, strength=args.strength, bytes_per_elem=args.bytes_per_elem,
    )
    _emit(bench_csv(range(args.seeds), cfg), args.out)
    return 0


def cmd_ablate_reversal(args) -> int:
    cfg = SegmentConfig(args.chunk, args.delta, args.mix)
    table = DelimiterTable.load(args.weights) if args.weights else SYNTH_TABLE
    normal, reversed_ = [], []
    for seed in range(args.seeds):
        docs = boundary_corpus(seeded_rng(seed), args.docs, cfg)
        n, r = run_reversal_ablation(docs, table, cfg, args.tolerance)
        normal.append(n)
        reversed_.append(r)
    result = {
        "seeds": args.seeds,
        "f1_normal": round(float(np.mean(normal)), 6),
        "f1_reversed": round(float(np.mean(reversed_)), 6),
        "min_gap": round(float(np.min(np.subtract(normal, reversed_))), 6),
    }
    _emit(json.dumps(result) + "\n", args.out)
    return 0


def _add_segment_args(p, chunk=32, mix=0.5):
    p.add_argument("--chunk", type=int, default=chunk, help="base chunk size C")
    p.add_argument("--delta", type=int, default=14, help="maximum deviation from C")
    p.add_argument("--mix", type=float, default=mix, help="weight vs. proximity balance in [0, 1]")


def _add_synthetic_args(p, seq_len):
    p.add_argument("--seq-len", type=int, default=seq_len)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--strength", type=float, default=10.0, help="planted-span alignment c")
    p.add_argument("--variant", choices=("minmax", "mean"), default="minmax")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynsplit-kv", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("score-delimiters", help="derive a delimiter table from attention maps")
    p.add_argument("--attn", required=True, help="ATN1 attention file")
    p.add_argument("--tokens", required=True, help="JSON-lines token stream (first line is scored)")
    p.add_argument("--candidates", required=True, help="JSON list of token ids, inline or as a file")
    p.add_argument("--window", type=int, default=8)
    p.add_argument("--overlap", type=int, default=128)
    p.add_argument("--penalty", type=float, default=1.0)
    p.add_argument("--norm", choices=("minmax", "clamp"), default="minmax")
    p.add_argument("--no-round", action="store_true", help="keep full-precision weights")
    p.add_argument("--out")
    p.set_defaults(func=cmd_score_delimiters)

    p = sub.add_parser("segment", help="segment token sequences into semantic blocks")
    p.add_argument("--tokens", required=True)
    p.add_argument("--weights", required=True, help="delimiter table JSON")
    _add_segment_args(p, chunk=64)
    p.add_argument("--boundary-side", choices=("after", "before"), default="after")
    p.add_argument("--out")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("simulate", help="run a decode loop and stream per-step load stats")
    _add_synthetic_args(p, 4096)
    _add_segment_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--plan", choices=("fixed", "ddselect"), default="ddselect")
    p.add_argument("--budget", type=int, default=64)
    p.add_argument("--steps", type=int, default=32)
    p.add_argument("--drift", type=float, default=0.05, help="query random-walk step size")
    p.add_argument("--reuse", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--cut-side", choices=("head", "tail"), default="head")
    p.add_argument("--keep-recent", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("passkey", help="planted-span hit rate per budget")
    _add_synthetic_args(p, 10240)
    _add_segment_args(p)
    p.add_argument("--seeds", type=int, default=100)
    p.add_argument("--plan", choices=("fixed", "ddselect"), default="ddselect")
    p.add_argument("--budgets", type=_int_list, default=list(PASSKEY_BUDGETS))
    p.add_argument("--out")
    p.set_defaults(func=cmd_passkey)

    p = sub.add_parser("bench", help="budget x plan x digest sweep written as CSV")
    _add_synthetic_args(p, 2048)
    _add_segment_args(p)
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--budgets", type=_int_list, default=list(PASSKEY_BUDGETS))
    p.add_argument("--steps", type=int, default=16, help="decode steps for load counters")
    p.add_argument("--bytes-per-elem", type=int, default=4)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("ablate-reversal", help="boundary F1 with normal vs. reversed weights")
    _add_segment_args(p, mix=1.0)
    p.add_argument("--seeds", type=int, default=50)
    p.add_argument("--docs", type=int, default=20, help="documents per seed")
    p.add_argument("--tolerance", type=int, default=2)
    p.add_argument("--weights", help="delimiter table JSON (default: built-in synthetic table)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ablate_reversal)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except (DynSplitError, ValueError, OSError, KeyError) as exc:
        print(f"dynsplit-kv {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
