"""Passkey-style retrieval: can budgeted selection find a planted span?

A short span deep in 10k filler tokens gets keys aligned with the query.
With a fixed chunk grid the span often straddles two blocks; delimiter-aware
blocks keep it whole, which matters most at the smallest budget.
"""

from dynsplit_kv.harness import passkey_hit_rates

for plan in ("fixed", "ddselect"):
    rates = passkey_hit_rates(range(50), plan, seq_len=10240)
    print(f"{plan:9s}", "  ".join(f"{b}:{r:.2f}" for b, r in rates.items()))
