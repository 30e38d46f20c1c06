"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line via the ``report`` fixture; the lines are
printed together at the end of the pytest run.
"""

import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from dynsplit_kv.core import MISTRAL_7B_DELIMITERS, DelimiterTable, SegmentPlan, seeded_rng, validate_attention
from dynsplit_kv.harness import SYNTH_TABLE, boundary_corpus, memory_footprint, passkey_hit_rates, random_attention, run_reversal_ablation
from dynsplit_kv.pipeline import KvCache, decode_loop, dense_attention, select_step, sparse_attention
from dynsplit_kv.scoring import ScoringConfig, score_positions
from dynsplit_kv.segment import SegmentConfig, segment, segment_incremental
from dynsplit_kv.v2f import build_digests, map_block_to_tokens, score_blocks

from conftest import random_plan
from oracles import brute_delimiter_score, masked_dense_attention, materialized_token_topk

FIXTURES = Path(__file__).resolve().parents[1] / "docs" / "fixtures"


def random_table(rng, n_ids=6):
    ids = rng.choice(np.arange(1, 50), size=n_ids, replace=False)
    return DelimiterTable({int(i): float(w) for i, w in zip(ids, rng.random(n_ids).round(2))})


def random_tokens(rng, L, table, density):
    toks = rng.integers(100, 200, size=L)
    mask = rng.random(L) < density
    toks[mask] = rng.choice(np.array(list(table)), size=int(mask.sum()))
    return toks


def test_ac01_delimiter_score_oracle(report):
    rng = seeded_rng(101)
    t0 = time.perf_counter()
    worst, checked = 0.0, 0
    for _ in range(200):
        L_num, H, S = int(rng.integers(1, 5)), int(rng.integers(1, 5)), int(rng.integers(2, 129))
        attn = random_attention(rng, L_num, H, S, float(rng.uniform(0.2, 3.0)))
        validate_attention(attn)
        cfg = ScoringConfig(int(rng.integers(1, 12)), int(rng.integers(1, S + 1)), float(rng.uniform(0, 2)))
        cands = sorted(set(rng.integers(0, S, size=3).tolist()) | {S - 1})
        nested = attn.values.tolist()
        for got in score_positions(attn, cands, cfg):
            ref = brute_delimiter_score(nested, got.position, cfg.window, cfg.overlap, cfg.penalty)
            if ref is None:
                assert not got.valid
                continue
            worst = max(worst, abs(got.score - ref[0]), abs(got.overlap_mass - ref[1]), abs(got.drop_mass - ref[2]))
            checked += 1
    elapsed = time.perf_counter() - t0
    report("AC1 delimiter-score oracle", worst <= 1e-9 and elapsed < 30,
           f"200 tensors, {checked} scores, max err {worst:.1e}, {elapsed:.1f}s")


def test_ac02_weight_table_round_trip(report, tmp_path):
    path = tmp_path / "w.json"
    MISTRAL_7B_DELIMITERS.save(path)
    first = path.read_bytes()
    loaded = DelimiterTable.load(path)
    loaded.save(path)
    ok = (
        loaded == MISTRAL_7B_DELIMITERS
        and path.read_bytes() == first
        and (loaded[28723], loaded[28725], loaded[28732]) == (1.0, 0.6, 0.5)
        and len(loaded) == 13
    )
    report("AC2 weight-table round-trip", ok, f"{len(loaded)} entries, bytes identical={path.read_bytes() == first}")


def test_ac03_segmentation_length_law(report):
    rng = seeded_rng(303)
    violations = 0
    for _ in range(1000):
        C = int(rng.integers(8, 257))
        dev = int(rng.integers(0, C))
        mix = float(rng.random())
        side = "after" if rng.random() < 0.5 else "before"
        table = random_table(rng)
        L = int(rng.integers(1, 6 * C))
        plan = segment(random_tokens(rng, L, table, float(rng.uniform(0, 0.3))), table, SegmentConfig(C, dev, mix, side))
        tiles = plan.spans[0][0] == 0 and plan.spans[-1][1] == L and all(
            a[1] == b[0] for a, b in zip(plan.spans, plan.spans[1:])
        )
        law = all(C - dev <= b - a <= C + dev for a, b in plan.spans[:-1])
        violations += not (tiles and law)
    report("AC3 segmentation length law", violations == 0, f"1000 instances, {violations} violations")


def test_ac04_incremental_matches_scratch(report):
    rng = seeded_rng(404)
    mismatches = 0
    for _ in range(500):
        C = int(rng.integers(4, 80))
        cfg = SegmentConfig(C, int(rng.integers(0, C)), float(rng.random()))
        table = random_table(rng)
        full = random_tokens(rng, int(rng.integers(1, 8 * C)), table, 0.15)
        cut = int(rng.integers(1, len(full) + 1))
        plan = segment(full[:cut], table, cfg)
        for step in np.sort(rng.integers(cut, len(full) + 1, size=3)):
            plan = segment_incremental(plan, full[:step], table, cfg)
            mismatches += plan.spans != segment(full[:step], table, cfg).spans
    report("AC4 incremental == from-scratch", mismatches == 0, f"500 trials x 3 extensions, {mismatches} mismatches")


def test_ac05_digest_soundness(report):
    rng = seeded_rng(505)
    pairs = bound_fail = box_fail = 0
    for _ in range(40):
        S, d = int(rng.integers(200, 600)), int(rng.integers(1, 65))
        keys = rng.standard_normal((S, d)) * rng.uniform(0.1, 5)
        plan = random_plan(rng, S, 30)
        (hd,) = build_digests(keys, plan)
        blk = plan.block_of()
        box_fail += int(np.sum((keys > hd.key_max[blk]) | (keys < hd.key_min[blk])))
        for q in rng.standard_normal((100, d)):
            bound = score_blocks(q, hd)
            exact = np.maximum.reduceat(keys @ q, plan.starts)
            bound_fail += int(np.sum(bound < exact - 1e-12 * np.abs(exact).clip(1)))
            pairs += len(plan)
    ok = pairs >= 100_000 and bound_fail == 0 and box_fail == 0
    report("AC5 digest soundness", ok, f"{pairs} (query, block) pairs, {bound_fail} bound / {box_fail} box violations")


def test_ac06_mapping_oracle(report):
    rng = seeded_rng(606)
    mismatches = 0
    for _ in range(500):
        S = int(rng.integers(1, 300))
        plan = random_plan(rng, S, 25)
        n = len(plan)
        # coarse scores so that ties between blocks are common
        scores = rng.integers(0, 5, size=n).astype(float)
        sel = np.sort(rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False))
        budget = int(rng.integers(1, S + 5))
        got, _ = map_block_to_tokens(sel, scores, plan, budget)
        ref = materialized_token_topk(sel.tolist(), scores.tolist(), plan.spans, budget)
        mismatches += got.tolist() != ref
    report("AC6 block-to-token mapping oracle", mismatches == 0, f"500 instances, {mismatches} mismatches")


def test_ac07_full_budget_and_masked_equivalence(report):
    rng = seeded_rng(707)
    full_err = masked_err = 0.0
    for _ in range(200):
        H, S, d = int(rng.integers(1, 4)), int(rng.integers(1, 200)), int(rng.integers(1, 33))
        cache = KvCache.build(rng.standard_normal((H, S, d)), rng.standard_normal((H, S, d)), random_plan(rng, S, 24),
                              "minmax" if rng.random() < 0.5 else "mean")
        q = rng.standard_normal((H, d)) * 2
        full = sparse_attention(q, cache, select_step(q, cache, S))
        full_err = max(full_err, float(np.abs(full - dense_attention(q, cache)).max()))
        sel = select_step(q, cache, int(rng.integers(1, S + 1)))
        out = sparse_attention(q, cache, sel)
        for h in range(H):
            ref = masked_dense_attention(q[h], cache.keys[h], cache.values[h], sel.indices[h], 1 / np.sqrt(d))
            masked_err = max(masked_err, float(np.abs(out[h] - ref).max()))
    ok = full_err <= 1e-9 and masked_err <= 1e-9
    report("AC7 full-budget / masked-dense equivalence", ok,
           f"200 instances each, max err {full_err:.1e} / {masked_err:.1e}")


def test_ac08_reuse_transparency(report):
    from dynsplit_kv.harness import random_walk_queries

    differ = bad_counts = saved = 0
    for seed in range(20):
        rng = seeded_rng(800 + seed)
        H, S, d, budget = 2, 512, 16, 64
        cache = KvCache.build(rng.standard_normal((H, S, d)), rng.standard_normal((H, S, d)), random_plan(rng, S, 40))
        qs = random_walk_queries(rng, rng.standard_normal((H, d)), 100, 0.05)
        on, s_on = decode_loop(cache, qs, budget, reuse=True)
        off, s_off = decode_loop(cache, qs, budget, reuse=False)
        differ += not np.array_equal(on, off)
        bad_counts += sum(s.fresh + s.reused != budget for s in s_on)
        saved += sum(s.fresh for s in s_off) - sum(s.fresh for s in s_on)
    ok = differ == 0 and bad_counts == 0
    report("AC8 reuse transparency", ok,
           f"20 seeds x 100 steps, {differ} output mismatches, {bad_counts} count errors, {saved} loads saved")


def test_ac09_passkey_analogue(report):
    t0 = time.perf_counter()
    rates = passkey_hit_rates(range(100), "ddselect", seq_len=10240, strength=10.0)
    elapsed = time.perf_counter() - t0
    curve = list(rates.values())
    ok = rates[64] >= 0.95 and curve == sorted(curve) and curve[-1] == 1.0 and elapsed < 120
    report("AC9 passkey analogue", ok,
           "hit rates " + ", ".join(f"{b}:{r:.2f}" for b, r in rates.items()) + f" over 100 seeds, {elapsed:.1f}s")


def test_ac10_reversal_ablation(report):
    cfg = SegmentConfig(32, 14, 1.0)
    gaps, normal = [], []
    for seed in range(50):
        n, r = run_reversal_ablation(boundary_corpus(seeded_rng(seed), 20, cfg), SYNTH_TABLE, cfg)
        gaps.append(n - r)
        normal.append(n)
    ok = min(gaps) >= 0.15
    report("AC10 reversal ablation", ok,
           f"50 seeds, mean F1 {np.mean(normal):.3f} vs {np.mean(normal) - np.mean(gaps):.3f}, min gap {min(gaps):.3f}")


def test_ac11_memory_arithmetic(report):
    H, S, d, C, budget = 32, 32768, 128, 64, 3276
    m = memory_footprint(H, S, d, S // C, budget, "minmax", 4)
    # by hand: full = 2*32*32768*128*4 = 1,073,741,824
    # digests = 32 heads * 512 blocks * 2 vectors * 128 * 4 = 16,777,216
    # compressed = 2*32*3276*128*4 + digests = 107,347,968 + 16,777,216 = 124,125,184
    hand_full, hand_over, hand_comp = 1_073_741_824, 16_777_216, 124_125_184
    ok = (
        (m["resident_bytes_full"], m["digest_overhead_bytes"], m["resident_bytes_compressed"]) == (hand_full, hand_over, hand_comp)
        and m["resident_bytes_compressed"] <= 0.1 * m["resident_bytes_full"] + m["digest_overhead_bytes"]
        and abs(m["kv_usage_rate"] - 0.1) < 1e-4
    )
    report("AC11 memory arithmetic", ok,
           f"compressed {m['resident_bytes_compressed']} <= {0.1 * hand_full + hand_over:.1f}, ratio {hand_full / hand_comp:.3f}x")


def test_ac12_bench_determinism(report):
    cmd = [sys.executable, "-m", "dynsplit_kv", "bench", "--seeds", "3"]
    runs = [subprocess.run(cmd, check=True, capture_output=True).stdout for _ in range(2)]
    golden = (FIXTURES / "bench_golden.csv").read_bytes()
    ok = runs[0] == runs[1] == golden
    rows = len(runs[0].splitlines()) - 1
    report("AC12 bench CSV determinism", ok,
           f"{rows} rows, repeat identical={runs[0] == runs[1]}, matches golden={runs[0] == golden}")
