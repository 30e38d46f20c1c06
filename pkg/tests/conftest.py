import numpy as np
import pytest
from hypothesis import settings

from dynsplit_kv.core import seeded_rng

ACCEPTANCE_LINES = []

# same examples on every run, so a green suite stays green
settings.register_profile("repro", derandomize=True)
settings.load_profile("repro")


@pytest.fixture
def rng():
    return seeded_rng(12345)


@pytest.fixture
def report():
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""

    def _check(tag, ok, detail=""):
        ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {tag}: {detail}")
        assert ok, f"{tag}: {detail}"

    return _check


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_keys(rng, *shape):
    return rng.standard_normal(shape)


def random_plan(rng, length, max_block=20):
    from dynsplit_kv.core import SegmentPlan

    spans, pos = [], 0
    while pos < length:
        end = min(length, pos + int(rng.integers(1, max_block + 1)))
        spans.append((pos, end))
        pos = end
    return SegmentPlan(tuple(spans))
