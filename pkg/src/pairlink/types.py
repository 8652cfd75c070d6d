"""Core record types shared by every scorer and the ranking helper."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class PairRecord:
    """One candidate entity pair.

    ``left`` and ``right`` are kept verbatim; any normalization is opt-in
    and applied by scorers. ``id`` is the record's 0-based position in its
    source dataset and is the ranking tie-breaker, so it must be unique
    within a batch.
    """

    left: str
    right: str
    label: int | None = None
    id: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.left, str) or not isinstance(self.right, str):
            raise TypeError("left and right must be strings")
        if not self.left.strip():
            raise ValueError("left must be non-empty after trimming")
        if not self.right.strip():
            raise ValueError("right must be non-empty after trimming")
        if self.label is not None and self.label not in (0, 1):
            raise ValueError(f"label must be 0, 1, or None, got {self.label!r}")
        if not isinstance(self.id, int) or isinstance(self.id, bool) or self.id < 0:
            raise ValueError(f"id must be a non-negative integer, got {self.id!r}")


@dataclass(frozen=True)
class ScoredPair:
    """A pair with a match score in [0, 1] and the id of the scorer that produced it."""

    pair: PairRecord
    score: float
    scorer_id: str

    def __post_init__(self) -> None:
        score = self.score
        if not isinstance(score, (int, float)) or isinstance(score, bool):
            raise TypeError(f"score must be a real number, got {score!r}")
        if math.isnan(score) or not 0.0 <= score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {score!r}")
        if not self.scorer_id:
            raise ValueError("scorer_id must be non-empty")


def rank_by_score(scored: list[ScoredPair]) -> list[ScoredPair]:
    """Order pairs by descending score, breaking ties by ascending pair id.

    Pure and deterministic: equal inputs rank identically regardless of
    input order. Comparisons are exact, no epsilon.
    """
    return sorted(scored, key=lambda sp: (-sp.score, sp.pair.id))
