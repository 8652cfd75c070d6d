"""Scorer base class and input validation helpers.

Scorers follow the estimator conventions: constructor arguments are stored
as-is, ``fit`` returns self, and hyperparameters round-trip through
``get_params``/``set_params`` so instances clone cleanly.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .types import PairRecord, ScoredPair

PairLike = "PairRecord | tuple | list"


def as_pair_records(X: Iterable) -> list[PairRecord]:
    """Coerce an iterable of pairs into validated PairRecords.

    Accepts PairRecord instances (passed through), and (left, right) or
    (left, right, label) tuples, which get sequential ids. Ids must be
    unique across the batch because ranking ties break on them.
    """
    records: list[PairRecord] = []
    for i, item in enumerate(X):
        if isinstance(item, PairRecord):
            records.append(item)
        elif isinstance(item, (tuple, list)) and len(item) in (2, 3):
            left, right = item[0], item[1]
            label = item[2] if len(item) == 3 else None
            records.append(PairRecord(left, right, label=label, id=i))
        else:
            raise TypeError(
                f"item {i}: expected PairRecord or (left, right[, label]) tuple, got {item!r}"
            )
    seen: set[int] = set()
    for record in records:
        if record.id in seen:
            raise ValueError(f"duplicate pair id {record.id}; ids must be unique within a batch")
        seen.add(record.id)
    return records


def labels_of(pairs: Sequence[PairRecord], y: Sequence[int] | None = None) -> np.ndarray:
    """Resolve binary labels for a batch, from y if given, else from the records."""
    if y is not None:
        labels = np.asarray(y)
        if labels.shape != (len(pairs),):
            raise ValueError(f"y has shape {labels.shape}, expected ({len(pairs)},)")
        if not np.isin(labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        return labels.astype(np.int64)
    out = []
    for record in pairs:
        if record.label is None:
            raise ValueError(f"pair id {record.id} has no label and no y was given")
        out.append(record.label)
    return np.asarray(out, dtype=np.int64)


class PairScorer(BaseEstimator):
    """Base class for anything that maps string pairs to scores in [0, 1].

    Subclasses implement ``score_pair`` and the ``scorer_id`` property.
    ``deterministic`` tells callers whether repeated scoring of the same
    pair is guaranteed to return the same value.
    """

    deterministic: bool = True

    @property
    def scorer_id(self) -> str:
        raise NotImplementedError

    def fit(self, X=None, y=None):
        """No-op for stateless scorers; present for pipeline compatibility."""
        return self

    def score_pair(self, pair: PairRecord) -> float:
        raise NotImplementedError

    def score_pairs(self, X: Iterable) -> list[ScoredPair]:
        pairs = as_pair_records(X)
        sid = self.scorer_id
        return [ScoredPair(pair, self.score_pair(pair), sid) for pair in pairs]

    def transform(self, X: Iterable) -> np.ndarray:
        """Score column as an (n, 1) array, for feature-union style composition."""
        scores = [sp.score for sp in self.score_pairs(X)]
        return np.asarray(scores, dtype=np.float64).reshape(-1, 1)

    def fit_transform(self, X: Iterable, y=None) -> np.ndarray:
        return self.fit(X, y).transform(X)
