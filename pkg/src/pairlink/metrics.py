"""Character-level string similarity metrics.

Every function maps a pair of strings to a similarity in [0, 1], is
symmetric, and returns 1.0 for identical inputs. Strings are treated as
sequences of Unicode scalar values; nothing here lowercases, trims, or
otherwise rewrites its inputs. Opt-in rewriting lives in
:class:`NormalizationPolicy`.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable

from .base import PairScorer
from .types import PairRecord

__all__ = [
    "levenshtein",
    "levenshtein_sim",
    "jaro",
    "jaro_winkler",
    "jaccard_char",
    "jaccard_ngram",
    "jaccard_bigram",
    "cosine_letter_freq",
    "longest_common_substring",
    "lcs_overlap_sim",
    "NormalizationPolicy",
    "apply_normalization",
    "METRIC_FUNCTIONS",
    "metric_names",
    "MetricScorer",
]


def levenshtein(a: str, b: str) -> int:
    """Edit distance with unit-cost insertions, deletions, and substitutions."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    # Two-row dynamic program; rows indexed by positions in b.
    prev = list(range(len(b) + 1))
    cur = [0] * (len(b) + 1)
    for i, ca in enumerate(a, 1):
        cur[0] = i
        for j, cb in enumerate(b, 1):
            cost = 0 if ca == cb else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        prev, cur = cur, prev
    return prev[len(b)]


def levenshtein_sim(a: str, b: str) -> float:
    """1 - distance / max(len); defined as 1.0 when both strings are empty."""
    if not a and not b:
        return 1.0
    return 1.0 - levenshtein(a, b) / max(len(a), len(b))


def jaro(a: str, b: str) -> float:
    """Jaro similarity.

    Characters match when equal and within a window of
    floor(max(|a|, |b|) / 2) - 1 positions (never negative). Transpositions
    are half the number of matched characters whose match order differs.
    """
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    window = max(len(a), len(b)) // 2 - 1
    if window < 0:
        window = 0
    a_matched = [False] * len(a)
    b_matched = [False] * len(b)
    matches = 0
    for i, ca in enumerate(a):
        lo = max(0, i - window)
        hi = min(i + window + 1, len(b))
        for j in range(lo, hi):
            if not b_matched[j] and b[j] == ca:
                a_matched[i] = True
                b_matched[j] = True
                matches += 1
                break
    if matches == 0:
        return 0.0
    transposed = 0
    j = 0
    for i in range(len(a)):
        if a_matched[i]:
            while not b_matched[j]:
                j += 1
            if a[i] != b[j]:
                transposed += 1
            j += 1
    t = transposed / 2
    m = matches
    return (m / len(a) + m / len(b) + (m - t) / m) / 3


def jaro_winkler(a: str, b: str) -> float:
    """Jaro with a flat prefix bonus: jaro + l * 0.1 * (1 - jaro).

    l is the length of the common prefix, capped at 4. The bonus applies
    unconditionally (no minimum-score gate).
    """
    base = jaro(a, b)
    prefix = 0
    for ca, cb in zip(a, b):
        if ca != cb or prefix == 4:
            break
        prefix += 1
    return base + prefix * 0.1 * (1.0 - base)


def jaccard_char(a: str, b: str) -> float:
    """Jaccard index over the sets of characters; 1.0 when both are empty."""
    sa, sb = set(a), set(b)
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)


def jaccard_ngram(a: str, b: str, n: int = 2) -> float:
    """Jaccard index over sets of contiguous character n-grams.

    A string shorter than n contributes the empty set. Both inputs empty
    gives 1.0; exactly one empty gives 0.0. n must be a positive integer.
    """
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    sa = {a[i : i + n] for i in range(len(a) - n + 1)}
    sb = {b[i : i + n] for i in range(len(b) - n + 1)}
    if not sa and not sb:
        return 1.0 if a == b else 0.0
    if not sa or not sb:
        return 0.0
    return len(sa & sb) / len(sa | sb)


def jaccard_bigram(a: str, b: str) -> float:
    """Jaccard index over character bigrams."""
    return jaccard_ngram(a, b, 2)


def cosine_letter_freq(a: str, b: str) -> float:
    """Cosine similarity between character-frequency vectors.

    Whitespace characters are excluded from the counts. Two all-whitespace
    or empty strings score 1.0; exactly one scores 0.0.
    """
    ca = Counter(ch for ch in a if not ch.isspace())
    cb = Counter(ch for ch in b if not ch.isspace())
    if not ca and not cb:
        return 1.0
    if not ca or not cb:
        return 0.0
    # Counts are integers, so dot and the squared norms are exact; one
    # square root keeps identical and parallel count vectors at exactly 1.0.
    dot = sum(count * cb[ch] for ch, count in ca.items())
    sq_a = sum(c * c for c in ca.values())
    sq_b = sum(c * c for c in cb.values())
    if dot * dot == sq_a * sq_b:
        return 1.0
    return min(1.0, dot / math.sqrt(sq_a * sq_b))


def longest_common_substring(a: str, b: str) -> int:
    """Length of the longest contiguous substring shared by a and b."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    best = 0
    for ca in a:
        cur = [0] * (len(b) + 1)
        for j, cb in enumerate(b, 1):
            if ca == cb:
                cur[j] = prev[j - 1] + 1
                if cur[j] > best:
                    best = cur[j]
        prev = cur
    return best


def lcs_overlap_sim(a: str, b: str) -> float:
    """longest_common_substring / min(len); 1.0 when both empty, 0.0 when one is."""
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    return longest_common_substring(a, b) / min(len(a), len(b))


@dataclass(frozen=True)
class NormalizationPolicy:
    """Opt-in input rewriting applied before a metric sees the strings.

    case_fold applies Unicode case folding; strip_whitespace_runs collapses
    each whitespace run to a single space and drops leading and trailing
    whitespace. Applying a policy twice equals applying it once.
    """

    case_fold: bool = False
    strip_whitespace_runs: bool = False

    def apply(self, s: str) -> str:
        return apply_normalization(s, self)


def apply_normalization(s: str, policy: NormalizationPolicy) -> str:
    if policy.case_fold:
        s = s.casefold()
    if policy.strip_whitespace_runs:
        s = " ".join(s.split())
    return s


METRIC_FUNCTIONS: dict[str, Callable[[str, str], float]] = {
    "levenshtein_sim": levenshtein_sim,
    "jaro": jaro,
    "jaro_winkler": jaro_winkler,
    "jaccard_char": jaccard_char,
    "jaccard_bigram": jaccard_bigram,
    "cosine_letter_freq": cosine_letter_freq,
    "lcs_overlap": lcs_overlap_sim,
}


def metric_names() -> list[str]:
    """Names accepted by MetricScorer and the command line, in a stable order."""
    return list(METRIC_FUNCTIONS)


class MetricScorer(PairScorer):
    """Scores pairs with one of the character-level similarity metrics.

    Parameters
    ----------
    metric : str
        One of :func:`metric_names`.
    normalization : NormalizationPolicy or None
        Optional rewriting applied to both strings before scoring.
    """

    deterministic = True

    def __init__(self, metric: str = "jaro_winkler", normalization: NormalizationPolicy | None = None):
        self.metric = metric
        self.normalization = normalization

    @property
    def scorer_id(self) -> str:
        if self.normalization is None:
            return self.metric
        parts = []
        if self.normalization.case_fold:
            parts.append("case_fold")
        if self.normalization.strip_whitespace_runs:
            parts.append("collapse_ws")
        if not parts:
            return self.metric
        return f"{self.metric}[{','.join(parts)}]"

    def _metric_fn(self) -> Callable[[str, str], float]:
        try:
            return METRIC_FUNCTIONS[self.metric]
        except KeyError:
            raise ValueError(
                f"unknown metric {self.metric!r}; expected one of {', '.join(metric_names())}"
            ) from None

    def score_pair(self, pair: PairRecord) -> float:
        fn = self._metric_fn()
        left, right = pair.left, pair.right
        if self.normalization is not None:
            left = self.normalization.apply(left)
            right = self.normalization.apply(right)
        return fn(left, right)
