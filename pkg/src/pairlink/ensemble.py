"""Random forest over string-distance features, built for reproducibility.

Training is deterministic given the data order and the seed: bootstrap
draws and per-split feature subsets come from one embedded PCG64 stream,
split thresholds are midpoints between consecutive distinct feature
values, and impurity ties break toward the lowest feature index and then
the lowest threshold. Serialized models are plain versioned JSON, so a
retrain with identical inputs reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .base import PairScorer, as_pair_records
from .metrics import (
    cosine_letter_freq,
    jaccard_bigram,
    jaccard_char,
    jaro,
    jaro_winkler,
    lcs_overlap_sim,
    levenshtein_sim,
)
from .types import PairRecord

__all__ = [
    "FEATURE_SCHEMA",
    "MODEL_FORMAT_VERSION",
    "RNG_ALGORITHM",
    "TrainingDataError",
    "ModelFormatError",
    "extract_features",
    "features_matrix",
    "PairFeaturizer",
    "TrainConfig",
    "EnsembleModel",
    "train",
    "predict_proba",
    "model_to_json",
    "model_from_json",
    "EnsembleMatcher",
]

FEATURE_SCHEMA: tuple[str, ...] = (
    "levenshtein_sim",
    "jaro",
    "jaro_winkler",
    "jaccard_char",
    "jaccard_bigram",
    "cosine_letter_freq",
    "lcs_overlap",
    "length_ratio",
)

MODEL_FORMAT_VERSION = 1
RNG_ALGORITHM = "pcg64"


class TrainingDataError(ValueError):
    """Raised when training data is empty, unlabeled, or single-class."""


class ModelFormatError(ValueError):
    """Raised when a serialized model is malformed or from an incompatible format."""


def _length_ratio(a: str, b: str) -> float:
    la, lb = len(a), len(b)
    if la == 0 and lb == 0:
        return 1.0
    return min(la, lb) / max(la, lb)


def extract_features(pair: PairRecord) -> list[float]:
    """The eight-feature vector, ordered exactly as FEATURE_SCHEMA."""
    a, b = pair.left, pair.right
    return [
        levenshtein_sim(a, b),
        jaro(a, b),
        jaro_winkler(a, b),
        jaccard_char(a, b),
        jaccard_bigram(a, b),
        cosine_letter_freq(a, b),
        lcs_overlap_sim(a, b),
        _length_ratio(a, b),
    ]


def features_matrix(pairs: Sequence[PairRecord]) -> np.ndarray:
    return np.asarray([extract_features(p) for p in pairs], dtype=np.float64)


class PairFeaturizer(TransformerMixin, BaseEstimator):
    """Transformer mapping pairs to the (n, 8) feature matrix."""

    def fit(self, X=None, y=None):
        return self

    def transform(self, X: Iterable) -> np.ndarray:
        return features_matrix(as_pair_records(X))

    def get_feature_names_out(self, input_features=None) -> np.ndarray:
        return np.asarray(FEATURE_SCHEMA, dtype=object)


@dataclass(frozen=True)
class TrainConfig:
    n_trees: int = 100
    max_depth: int = 8
    min_leaf: int = 2
    feature_subsample: int = 3
    bootstrap: bool = True
    positive_weight: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.min_leaf < 1:
            raise ValueError(f"min_leaf must be >= 1, got {self.min_leaf}")
        if not 1 <= self.feature_subsample <= len(FEATURE_SCHEMA):
            raise ValueError(
                f"feature_subsample must be in [1, {len(FEATURE_SCHEMA)}], got {self.feature_subsample}"
            )
        if not self.positive_weight > 0:
            raise ValueError(f"positive_weight must be > 0, got {self.positive_weight}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {self.seed!r}")


@dataclass(frozen=True)
class EnsembleModel:
    trees: tuple
    train_config: TrainConfig
    feature_schema: tuple[str, ...] = FEATURE_SCHEMA

    @property
    def scorer_id(self) -> str:
        return f"ensemble:{self.train_config.seed}"


def _best_split(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    idx: np.ndarray,
    feature_ids: Sequence[int],
    min_leaf: int,
) -> tuple[float, int, float] | None:
    """Lowest weighted-Gini split over the candidate features at this node.

    Returns (impurity, feature, threshold) or None when no boundary leaves
    min_leaf samples on each side. Candidate thresholds are midpoints
    between consecutive distinct sorted values; ties in impurity resolve
    to the lowest feature index, then the lowest threshold.
    """
    n = idx.size
    if n < 2 * min_leaf:
        return None
    w_node = w[idx]
    y_node = y[idx]
    total_w = float(w_node.sum())
    total_pos = float((w_node * y_node).sum())
    best: tuple[float, int, float] | None = None
    for f in sorted(feature_ids):
        values = X[idx, f]
        order = np.argsort(values, kind="stable")
        sv = values[order]
        sw = w_node[order]
        spos = (w_node * y_node)[order]
        cum_w = np.cumsum(sw)
        cum_pos = np.cumsum(spos)
        left_n = np.arange(1, n)
        valid = (sv[:-1] != sv[1:]) & (left_n >= min_leaf) & ((n - left_n) >= min_leaf)
        if not valid.any():
            continue
        wl = cum_w[:-1]
        wr = total_w - wl
        pl = cum_pos[:-1]
        pr = total_pos - pl
        gl = 1.0 - (pl / wl) ** 2 - ((wl - pl) / wl) ** 2
        gr = 1.0 - (pr / wr) ** 2 - ((wr - pr) / wr) ** 2
        impurity = (wl * gl + wr * gr) / total_w
        impurity = np.where(valid, impurity, np.inf)
        i = int(np.argmin(impurity))
        if not np.isfinite(impurity[i]):
            continue
        threshold = float((sv[i] + sv[i + 1]) / 2.0)
        # Strict < keeps the earliest (lowest-index) feature on exact ties;
        # argmin already picked the lowest threshold within this feature.
        if best is None or float(impurity[i]) < best[0]:
            best = (float(impurity[i]), int(f), threshold)
    return best


def _grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    idx: np.ndarray,
    depth: int,
    config: TrainConfig,
    rng: np.random.Generator,
) -> dict:
    w_node = w[idx]
    fraction = float((w_node * y[idx]).sum() / w_node.sum())
    if depth >= config.max_depth or fraction in (0.0, 1.0) or idx.size < 2 * config.min_leaf:
        return {"leaf": fraction}
    n_features = X.shape[1]
    k = min(config.feature_subsample, n_features)
    candidates = rng.choice(n_features, size=k, replace=False)
    best = _best_split(X, y, w, idx, [int(f) for f in candidates], config.min_leaf)
    if best is None:
        return {"leaf": fraction}
    _, feature, threshold = best
    mask = X[idx, feature] <= threshold
    return {
        "feature": feature,
        "threshold": threshold,
        "left": _grow_tree(X, y, w, idx[mask], depth + 1, config, rng),
        "right": _grow_tree(X, y, w, idx[~mask], depth + 1, config, rng),
    }


def train(data: Sequence[PairRecord], config: TrainConfig | None = None) -> EnsembleModel:
    """Fit the forest on labeled pairs.

    Every record must carry a 0/1 label and both classes must be present.
    """
    config = config if config is not None else TrainConfig()
    records = list(data)
    if not records:
        raise TrainingDataError("training data is empty")
    labels = []
    for record in records:
        if record.label is None:
            raise TrainingDataError(f"pair id {record.id} has no label")
        labels.append(record.label)
    y = np.asarray(labels, dtype=np.float64)
    if y.min() == y.max():
        raise TrainingDataError("training data must contain both a positive and a negative example")
    X = features_matrix(records)
    w = np.where(y == 1.0, float(config.positive_weight), 1.0)
    rng = np.random.Generator(np.random.PCG64(config.seed))
    n = len(records)
    trees = []
    for _ in range(config.n_trees):
        if config.bootstrap:
            idx = rng.integers(0, n, size=n)
        else:
            idx = np.arange(n)
        trees.append(_grow_tree(X, y, w, idx, 0, config, rng))
    return EnsembleModel(trees=tuple(trees), train_config=config)


def _tree_score(node: dict, features: Sequence[float]) -> float:
    while "leaf" not in node:
        if features[node["feature"]] <= node["threshold"]:
            node = node["left"]
        else:
            node = node["right"]
    return node["leaf"]


def predict_proba(model: EnsembleModel, pair: PairRecord) -> float:
    """Mean positive fraction across the forest's leaves for this pair."""
    features = extract_features(pair)
    return sum(_tree_score(tree, features) for tree in model.trees) / len(model.trees)


def model_to_json(model: EnsembleModel) -> str:
    """Serialize to versioned JSON; identical models produce identical bytes."""
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "rng": RNG_ALGORITHM,
        "feature_schema": list(model.feature_schema),
        "train_config": asdict(model.train_config),
        "trees": list(model.trees),
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _check_node(node: object, n_features: int, where: str) -> None:
    if not isinstance(node, dict):
        raise ModelFormatError(f"{where}: node must be an object, got {type(node).__name__}")
    if "leaf" in node:
        value = node["leaf"]
        if not isinstance(value, (int, float)) or math.isnan(value) or not 0.0 <= value <= 1.0:
            raise ModelFormatError(f"{where}: leaf value must lie in [0, 1], got {value!r}")
        return
    for key in ("feature", "threshold", "left", "right"):
        if key not in node:
            raise ModelFormatError(f"{where}: split node missing {key!r}")
    feature = node["feature"]
    if not isinstance(feature, int) or not 0 <= feature < n_features:
        raise ModelFormatError(f"{where}: feature index {feature!r} outside [0, {n_features})")
    if not isinstance(node["threshold"], (int, float)) or not math.isfinite(node["threshold"]):
        raise ModelFormatError(f"{where}: threshold must be finite, got {node['threshold']!r}")
    _check_node(node["left"], n_features, where + ".left")
    _check_node(node["right"], n_features, where + ".right")


def model_from_json(text: str) -> EnsembleModel:
    """Parse and validate a serialized model; refuses unknown formats and schemas."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelFormatError("model file must hold a JSON object")
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format_version {version!r}, expected {MODEL_FORMAT_VERSION}")
    if doc.get("rng") != RNG_ALGORITHM:
        raise ModelFormatError(f"unsupported rng {doc.get('rng')!r}, expected {RNG_ALGORITHM!r}")
    schema = doc.get("feature_schema")
    if schema != list(FEATURE_SCHEMA):
        raise ModelFormatError(f"feature schema mismatch: model has {schema!r}")
    try:
        config = TrainConfig(**doc["train_config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"bad train_config: {exc}") from exc
    trees = doc.get("trees")
    if not isinstance(trees, list) or not trees:
        raise ModelFormatError("model must contain a non-empty tree list")
    for t, tree in enumerate(trees):
        _check_node(tree, len(FEATURE_SCHEMA), f"tree {t}")
    return EnsembleModel(trees=tuple(trees), train_config=config)


class EnsembleMatcher(PairScorer):
    """Estimator interface over the forest.

    fit accepts labeled PairRecords, or unlabeled pairs plus a y vector.
    predict_proba follows classifier conventions and returns the (n, 2)
    column-stacked class probabilities with classes_ == [0, 1].
    """

    deterministic = True

    def __init__(
        self,
        n_trees: int = 100,
        max_depth: int = 8,
        min_leaf: int = 2,
        feature_subsample: int = 3,
        bootstrap: bool = True,
        positive_weight: float = 1.0,
        seed: int = 0,
    ):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.feature_subsample = feature_subsample
        self.bootstrap = bootstrap
        self.positive_weight = positive_weight
        self.seed = seed

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            n_trees=self.n_trees,
            max_depth=self.max_depth,
            min_leaf=self.min_leaf,
            feature_subsample=self.feature_subsample,
            bootstrap=self.bootstrap,
            positive_weight=self.positive_weight,
            seed=self.seed,
        )

    def fit(self, X: Iterable, y: Sequence[int] | None = None) -> "EnsembleMatcher":
        records = as_pair_records(X)
        if y is not None:
            if len(y) != len(records):
                raise ValueError(f"y has length {len(y)}, expected {len(records)}")
            records = [replace(r, label=int(v)) for r, v in zip(records, y)]
        self.model_ = train(records, self._train_config())
        self.classes_ = np.asarray([0, 1])
        return self

    def _fitted_model(self) -> EnsembleModel:
        model = getattr(self, "model_", None)
        if model is None:
            raise NotFittedError("EnsembleMatcher is not fitted; call fit or load a model first")
        return model

    @property
    def scorer_id(self) -> str:
        model = getattr(self, "model_", None)
        if model is not None:
            return model.scorer_id
        return f"ensemble:{self.seed}"

    def score_pair(self, pair: PairRecord) -> float:
        return predict_proba(self._fitted_model(), pair)

    def predict_proba(self, X: Iterable) -> np.ndarray:
        model = self._fitted_model()
        pos = np.asarray([predict_proba(model, p) for p in as_pair_records(X)])
        return np.column_stack([1.0 - pos, pos])

    def predict(self, X: Iterable) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)

    def save(self, path) -> None:
        from .dataio import atomic_write_text

        atomic_write_text(path, model_to_json(self._fitted_model()))

    @classmethod
    def load(cls, path) -> "EnsembleMatcher":
        with open(path, "r", encoding="utf-8") as fh:
            model = model_from_json(fh.read())
        config = model.train_config
        matcher = cls(
            n_trees=config.n_trees,
            max_depth=config.max_depth,
            min_leaf=config.min_leaf,
            feature_subsample=config.feature_subsample,
            bootstrap=config.bootstrap,
            positive_weight=config.positive_weight,
            seed=config.seed,
        )
        matcher.model_ = model
        matcher.classes_ = np.asarray([0, 1])
        return matcher
