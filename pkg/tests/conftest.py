import numpy as np
import pytest

from incctr.data import DayBlock, RawFeature, Sample, Vocabulary


def make_block(day, rows, labels=None, vocab=None):
    """Block from a list of token tuples (one tuple per sample)."""
    m = len(rows[0]) if rows else (vocab.m if vocab else 1)
    labels = labels if labels is not None else [i % 2 for i in range(len(rows))]
    samples = [Sample(y, tuple(RawFeature(f, t) for f, t in enumerate(r))) for y, r in zip(labels, rows)]
    return DayBlock.from_samples(day, samples, vocab=vocab, m=m)


def random_stream(rng, days, n, m, vocab_size, vocab=None):
    vocab = vocab or Vocabulary(m)
    out = []
    for d in range(days):
        rows = [tuple(f"t{rng.integers(vocab_size)}" for _ in range(m)) for _ in range(n)]
        out.append(make_block(d, rows, list(rng.integers(0, 2, n)), vocab))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one acceptance line; the test still asserts on the outcome."""
    def record(name, ok, detail):
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        print(ACCEPTANCE_LINES[-1])
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
