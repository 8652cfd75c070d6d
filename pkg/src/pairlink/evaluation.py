"""Ranking evaluation for scored, labeled pairs.

Average precision here is the unsmoothed, uninterpolated form: the mean of
precision@k over the ranks k that hold positives, with the ranking produced
by :func:`pairlink.types.rank_by_score`. Undefined quantities raise instead
of returning sentinel values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .types import ScoredPair, rank_by_score

__all__ = [
    "InputError",
    "UndefinedMetricError",
    "PrPoint",
    "EvalReport",
    "average_precision",
    "precision_recall_curve",
    "precision_at_full_recall",
    "build_report",
]


class InputError(ValueError):
    """Raised when evaluation input is malformed, e.g. a pair without a label."""


class UndefinedMetricError(ValueError):
    """Raised when a metric has no defined value, e.g. AP with zero positives."""


@dataclass(frozen=True)
class PrPoint:
    """One precision/recall operating point: predicted positive means score >= threshold."""

    threshold: float
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int


@dataclass
class EvalReport:
    scorer_id: str
    n_pairs: int
    n_positives: int
    average_precision: float
    precision_at_full_recall: float
    pr_curve: list[PrPoint] = field(default_factory=list)
    leniency_count: int = 0


def _checked_ranking(scored: list[ScoredPair]) -> list[ScoredPair]:
    if not scored:
        raise UndefinedMetricError("metric undefined: no pairs")
    for sp in scored:
        if sp.pair.label is None:
            raise InputError(f"pair id {sp.pair.id} has no label")
    if not any(sp.pair.label == 1 for sp in scored):
        raise UndefinedMetricError("metric undefined: no positive labels")
    return rank_by_score(scored)


def average_precision(scored: list[ScoredPair]) -> float:
    """Mean of precision@k over the ranks k occupied by positives."""
    ranked = _checked_ranking(scored)
    positives_seen = 0
    total = 0.0
    for k, sp in enumerate(ranked, start=1):
        if sp.pair.label == 1:
            positives_seen += 1
            total += positives_seen / k
    return total / positives_seen


def precision_recall_curve(scored: list[ScoredPair]) -> list[PrPoint]:
    """One point per distinct score, thresholds descending.

    At threshold t everything with score >= t is predicted positive, so
    recall never decreases as the threshold drops.
    """
    ranked = _checked_ranking(scored)
    n_positives = sum(1 for sp in ranked if sp.pair.label == 1)
    points: list[PrPoint] = []
    tp = 0
    fp = 0
    for i, sp in enumerate(ranked):
        if sp.pair.label == 1:
            tp += 1
        else:
            fp += 1
        last_of_threshold = i + 1 == len(ranked) or ranked[i + 1].score != sp.score
        if last_of_threshold:
            fn = n_positives - tp
            points.append(
                PrPoint(
                    threshold=sp.score,
                    precision=tp / (tp + fp),
                    recall=tp / n_positives,
                    tp=tp,
                    fp=fp,
                    fn=fn,
                )
            )
    return points


def precision_at_full_recall(scored: list[ScoredPair]) -> float:
    """Precision when the threshold is the minimum score among positives.

    Every pair scoring at or above that threshold counts as predicted
    positive, including negatives that tie it.
    """
    ranked = _checked_ranking(scored)
    threshold = min(sp.score for sp in ranked if sp.pair.label == 1)
    predicted = [sp for sp in ranked if sp.score >= threshold]
    tp = sum(1 for sp in predicted if sp.pair.label == 1)
    return tp / len(predicted)


def build_report(
    scored: list[ScoredPair],
    scorer_id: str | None = None,
    leniency_count: int = 0,
) -> EvalReport:
    """Assemble the full evaluation report for one scorer's output.

    scorer_id defaults to the single id present on the entries; mixing ids
    in one report is refused.
    """
    if scorer_id is None:
        ids = sorted({sp.scorer_id for sp in scored})
        if len(ids) != 1:
            raise InputError(f"expected one scorer_id, found {ids!r}; pass scorer_id explicitly")
        scorer_id = ids[0]
    return EvalReport(
        scorer_id=scorer_id,
        n_pairs=len(scored),
        n_positives=sum(1 for sp in scored if sp.pair.label == 1),
        average_precision=average_precision(scored),
        precision_at_full_recall=precision_at_full_recall(scored),
        pr_curve=precision_recall_curve(scored),
        leniency_count=leniency_count,
    )
