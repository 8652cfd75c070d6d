"""Two-stage scoring: rank everything cheaply, re-score the head with the LLM.

Stage 1 ranks all pairs with a fast scorer. The top_k pairs by that
ranking are re-scored by the LLM; pairs below the cut either keep their
stage-1 score or are floored to zero. Flooring keeps one score scale in
the output; keeping stage-1 scores mixes two scales in one column, which
is why it is not the default.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from .base import PairScorer, as_pair_records
from .cache import ScoreCache
from .llm import (
    ChatProvider,
    LlmConfig,
    PromptTemplate,
    PLAIN_TEMPLATE,
    ScoreBatchResult,
    ScoreError,
    score_batch,
)
from .types import PairRecord, ScoredPair, rank_by_score

__all__ = ["KEEP_STAGE1", "FLOOR_TO_ZERO", "PipelineConfig", "PipelineResult", "stage1_rank", "run_pipeline"]

KEEP_STAGE1 = "keep_stage1"
FLOOR_TO_ZERO = "floor_to_zero"


@dataclass
class PipelineConfig:
    stage1: PairScorer
    llm: LlmConfig = field(default_factory=LlmConfig)
    template: PromptTemplate = PLAIN_TEMPLATE
    top_k: int = 500
    below_k_policy: str = FLOOR_TO_ZERO

    def __post_init__(self) -> None:
        if not isinstance(self.top_k, int) or isinstance(self.top_k, bool) or self.top_k < 1:
            raise ValueError(f"top_k must be a positive integer, got {self.top_k!r}")
        if self.below_k_policy not in (KEEP_STAGE1, FLOOR_TO_ZERO):
            raise ValueError(
                f"below_k_policy must be {KEEP_STAGE1!r} or {FLOOR_TO_ZERO!r}, got {self.below_k_policy!r}"
            )


@dataclass
class PipelineResult:
    """Pipeline output aligned with the input order.

    entries holds one ScoredPair or ScoreError per input pair. All scored
    rows carry the pipeline scorer id, below-k rows included.
    """

    entries: list
    scorer_id: str
    stage1_ranked: list[ScoredPair]
    stage2: ScoreBatchResult

    @property
    def scored(self) -> list[ScoredPair]:
        return [e for e in self.entries if isinstance(e, ScoredPair)]

    @property
    def errors(self) -> list[ScoreError]:
        return [e for e in self.entries if isinstance(e, ScoreError)]

    def ranked(self) -> list[ScoredPair]:
        return rank_by_score(self.scored)


def stage1_rank(pairs: Iterable, scorer: PairScorer) -> list[ScoredPair]:
    """Score every pair with the stage-1 scorer and rank the result."""
    return rank_by_score(scorer.score_pairs(pairs))


def run_pipeline(
    pairs: Iterable,
    config: PipelineConfig,
    provider: ChatProvider,
    cache: ScoreCache | None = None,
) -> PipelineResult:
    """Run both stages; exactly min(top_k, n) pairs get a stage-2 attempt.

    Stage-2 failures stay in the output as error entries; everything else
    comes back scored, in input order.
    """
    records = as_pair_records(pairs)
    ranked = stage1_rank(records, config.stage1)
    head = ranked[: config.top_k]
    tail = ranked[config.top_k :]
    stage2 = score_batch(provider, config.llm, config.template, [sp.pair for sp in head], cache)
    pipeline_id = f"pipeline:{config.stage1.scorer_id}>{config.llm.scorer_id}"

    by_id: dict[int, ScoredPair | ScoreError] = {}
    for entry in stage2.entries:
        if isinstance(entry, ScoredPair):
            by_id[entry.pair.id] = ScoredPair(entry.pair, entry.score, pipeline_id)
        else:
            by_id[entry.pair.id] = ScoreError(
                pair=entry.pair, scorer_id=pipeline_id, message=entry.message, raw_reply=entry.raw_reply
            )
    for sp in tail:
        if config.below_k_policy == KEEP_STAGE1:
            by_id[sp.pair.id] = ScoredPair(sp.pair, sp.score, pipeline_id)
        else:
            by_id[sp.pair.id] = ScoredPair(sp.pair, 0.0, pipeline_id)

    entries = [by_id[record.id] for record in records]
    return PipelineResult(
        entries=entries,
        scorer_id=pipeline_id,
        stage1_ranked=ranked,
        stage2=stage2,
    )
