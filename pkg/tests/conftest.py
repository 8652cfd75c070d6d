"""Shared fixtures and data generators."""

from __future__ import annotations

import random
import string
from pathlib import Path

import pytest

from pairlink import PairRecord, ScoredPair

DATA_DIR = Path(__file__).parent / "data"
GOLDEN_DIR = Path(__file__).parent / "golden"

# One line per acceptance criterion, echoed after the test run so the
# verdicts are visible even with output capture on.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

# Mixed alphabet for randomized Unicode checks: ASCII, accents, CJK,
# Cyrillic, combining marks, an astral-plane symbol, and whitespace.
UNICODE_ALPHABET = (
    string.ascii_letters
    + string.digits
    + " .,'-()&"
    + "éüñßØλ"
    + "北京市東京"
    + "МоскваЁ"
    + "́̈"
    + "\U0001F600\U0001D49E"
)


def random_unicode_string(rng: random.Random, max_len: int = 20, min_len: int = 0) -> str:
    length = rng.randint(min_len, max_len)
    return "".join(rng.choice(UNICODE_ALPHABET) for _ in range(length))


def scored(rows: list[tuple[float, int]], scorer_id: str = "test") -> list[ScoredPair]:
    """Build ScoredPairs from (score, label) rows; synthetic left/right strings."""
    return [
        ScoredPair(PairRecord(f"a{i}", f"b{i}", label=label, id=i), score, scorer_id)
        for i, (score, label) in enumerate(rows)
    ]


def synthetic_training_pairs(n_pos: int, n_neg: int, seed: int) -> list[PairRecord]:
    """Separable labeled pairs: positives are exact duplicates, negatives unrelated."""
    rng = random.Random(seed)
    letters = string.ascii_lowercase
    records: list[PairRecord] = []
    i = 0
    for _ in range(n_pos):
        s = "".join(rng.choice(letters) for _ in range(rng.randint(8, 16)))
        records.append(PairRecord(s, s, label=1, id=i))
        i += 1
    for _ in range(n_neg):
        a = "".join(rng.choice(letters) for _ in range(rng.randint(8, 16)))
        b = "".join(rng.choice(letters) for _ in range(rng.randint(8, 16)))
        while b == a:
            b = "".join(rng.choice(letters) for _ in range(rng.randint(8, 16)))
        records.append(PairRecord(a, b, label=0, id=i))
        i += 1
    return records


@pytest.fixture
def candidate_pairs_csv() -> Path:
    return DATA_DIR / "candidate_pairs.csv"
