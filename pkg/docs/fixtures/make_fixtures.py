"""Regenerate the CLI fixtures in this directory.

The segment golden file comes from the brute-force oracle in tests/oracles.py,
not from the library, so the CLI test checks one path against the other.
Run from the repository root: ``python3 docs/fixtures/make_fixtures.py``.
"""

import json
import subprocess
import sys
from pathlib import Path

import numpy as np

HERE = Path(__file__).parent
sys.path.insert(0, str(HERE.parents[1] / "tests"))

from oracles import brute_segment  # noqa: E402

from dynsplit_kv.core import MISTRAL_7B_DELIMITERS, seeded_rng  # noqa: E402

CHUNK, DELTA, MIX = 64, 14, 0.5


def token_stream():
    rng = seeded_rng(2024)
    ids = np.array(list(MISTRAL_7B_DELIMITERS))
    seqs = []
    for length in (37, 180, 400, 733):
        toks = rng.integers(1000, 28000, size=length)
        mask = rng.random(length) < 0.12
        toks[mask] = rng.choice(ids, size=int(mask.sum()))
        seqs.append(toks.tolist())
    return seqs


def main():
    seqs = token_stream()
    (HERE / "tokens.jsonl").write_text("".join(json.dumps({"tokens": s}) + "\n" for s in seqs), newline="")
    MISTRAL_7B_DELIMITERS.save(HERE / "weights.json")
    weights = dict(MISTRAL_7B_DELIMITERS)
    golden = [{"spans": [list(s) for s in brute_segment(t, weights, CHUNK, DELTA, MIX)]} for t in seqs]
    (HERE / "segment_golden.json").write_text("[\n" + ",\n".join(json.dumps(g) for g in golden) + "\n]\n", newline="")
    csv = subprocess.run(
        [sys.executable, "-m", "dynsplit_kv", "bench", "--seeds", "3"], check=True, capture_output=True, text=True
    ).stdout
    (HERE / "bench_golden.csv").write_text(csv, newline="")


if __name__ == "__main__":
    main()
