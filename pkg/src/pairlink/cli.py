"""Command line entry points: score, eval, rerank, train, predict."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Callable

from . import dataio
from .cache import ScoreCache
from .ensemble import EnsembleMatcher, TrainConfig, model_to_json, train
from .evaluation import build_report
from .llm import (
    ENRICHED_TEMPLATE,
    PLAIN_TEMPLATE,
    ChatProvider,
    LlmConfig,
    LlmError,
    MockProvider,
    OpenAiChatProvider,
    PromptTemplate,
    ReplayProvider,
    score_batch,
)
from .metrics import MetricScorer, NormalizationPolicy, metric_names
from .pipeline import FLOOR_TO_ZERO, KEEP_STAGE1, PipelineConfig, run_pipeline

ENV_PREFIX = "PAIRLINK_"

EPILOG = """\
exit status: 0 success; 1 configuration or fatal error; 2 finished with per-pair failures.

Options may also come from a JSON config file (--config) or from environment
variables named PAIRLINK_<OPTION> (uppercased, e.g. PAIRLINK_MODEL_ID).
Precedence: command line flags, then config file, then environment, then defaults.

The API key for live LLM scoring is read from the environment variable named by
--api-key-env (default OPENAI_API_KEY). It is never accepted as a flag and never
printed.
"""


class CliError(Exception):
    """Configuration or usage problem surfaced to the user with exit status 1."""


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise CliError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise CliError(f"config file {path} must hold a JSON object")
    return doc


def _resolve(args: argparse.Namespace, file_cfg: dict, key: str, default, cast: Callable):
    """Layered option lookup: flag, then config file, then environment, then default."""
    flag_value = getattr(args, key, None)
    if flag_value is not None:
        return flag_value
    if key in file_cfg:
        try:
            return cast(file_cfg[key])
        except (TypeError, ValueError) as exc:
            raise CliError(f"config file field {key!r}: {exc}") from None
    env_value = os.environ.get(ENV_PREFIX + key.upper())
    if env_value is not None:
        try:
            return cast(env_value)
        except (TypeError, ValueError) as exc:
            raise CliError(f"environment variable {ENV_PREFIX + key.upper()}: {exc}") from None
    return default


def _llm_config(args: argparse.Namespace, file_cfg: dict) -> LlmConfig:
    try:
        return LlmConfig(
            model_id=_resolve(args, file_cfg, "model_id", "gpt-4-0613", str),
            temperature=_resolve(args, file_cfg, "temperature", 0.2, float),
            max_output_tokens=_resolve(args, file_cfg, "max_output_tokens", 8, int),
            max_concurrency=_resolve(args, file_cfg, "max_concurrency", 4, int),
            max_retries=_resolve(args, file_cfg, "max_retries", 3, int),
            initial_backoff_ms=_resolve(args, file_cfg, "initial_backoff_ms", 500, int),
            api_key_env=_resolve(args, file_cfg, "api_key_env", "OPENAI_API_KEY", str),
        )
    except ValueError as exc:
        raise CliError(str(exc)) from None


def _template(args: argparse.Namespace, file_cfg: dict) -> PromptTemplate:
    if getattr(args, "prompt_file", None):
        text = Path(args.prompt_file).read_text(encoding="utf-8")
        return PromptTemplate(text=text, kind="custom")
    name = _resolve(args, file_cfg, "prompt", "plain", str)
    if name == "plain":
        return PLAIN_TEMPLATE
    if name == "enriched":
        return ENRICHED_TEMPLATE
    raise CliError(f"prompt must be 'plain' or 'enriched', got {name!r}")


def _provider(args: argparse.Namespace, config: LlmConfig) -> ChatProvider:
    if getattr(args, "mock", False):
        return MockProvider.hash_scores()
    if getattr(args, "replay", None):
        return ReplayProvider(args.replay)
    return OpenAiChatProvider(api_key_env=config.api_key_env)


def _cache(args: argparse.Namespace) -> ScoreCache | None:
    path = getattr(args, "cache", None)
    return ScoreCache(path) if path else None


def _normalization(args: argparse.Namespace) -> NormalizationPolicy | None:
    case_fold = getattr(args, "case_fold", False)
    collapse = getattr(args, "collapse_whitespace", False)
    if case_fold or collapse:
        return NormalizationPolicy(case_fold=case_fold, strip_whitespace_runs=collapse)
    return None


def _add_llm_options(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("llm scoring")
    group.add_argument("--model-id", dest="model_id", help="chat model identifier (default gpt-4-0613)")
    group.add_argument("--temperature", type=float, help="sampling temperature (default 0.2)")
    group.add_argument("--max-output-tokens", dest="max_output_tokens", type=int, help="reply token cap (default 8)")
    group.add_argument("--max-concurrency", dest="max_concurrency", type=int, help="in-flight call cap (default 4)")
    group.add_argument("--max-retries", dest="max_retries", type=int, help="retries per transient failure (default 3)")
    group.add_argument(
        "--initial-backoff-ms", dest="initial_backoff_ms", type=int, help="first retry delay, doubling after (default 500)"
    )
    group.add_argument(
        "--api-key-env",
        dest="api_key_env",
        help="environment variable holding the API key (default OPENAI_API_KEY)",
    )
    prompt = parser.add_mutually_exclusive_group()
    prompt.add_argument("--prompt", choices=["plain", "enriched"], help="built-in prompt template (default plain)")
    prompt.add_argument(
        "--prompt-file",
        dest="prompt_file",
        help="file with a custom template containing {entity_a} and {entity_b} once each",
    )
    backend = parser.add_mutually_exclusive_group()
    backend.add_argument("--mock", action="store_true", help="offline deterministic provider, no network")
    backend.add_argument("--replay", help="offline provider replaying a recorded JSONL fixture")
    parser.add_argument("--cache", help="JSONL score cache path, consulted before and written after each call")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file with option defaults")


def _print_batch_summary(n_scored: int, n_failed: int, cache_hits: int, leniency: int) -> None:
    print(f"scored={n_scored} failed={n_failed} cache_hits={cache_hits} leniency={leniency}")


def _cmd_score(args: argparse.Namespace) -> int:
    file_cfg = _load_config_file(args.config)
    modes = [name for name, on in (("--llm", args.llm), ("--model", bool(args.model)), ("--metric", bool(args.metric))) if on]
    if len(modes) > 1:
        raise CliError(f"choose one scorer: {' and '.join(modes)} both given")
    pairs = dataio.read_pairs(args.pairs)
    if args.llm:
        config = _llm_config(args, file_cfg)
        template = _template(args, file_cfg)
        provider = _provider(args, config)
        cache = _cache(args)
        try:
            result = score_batch(provider, config, template, pairs, cache)
        finally:
            if cache is not None:
                cache.close()
        dataio.write_scores(args.out, result.entries)
        _print_batch_summary(len(result.scored), result.n_failed, result.cache_hits, result.leniency_count)
        return 2 if result.n_failed else 0
    if args.model:
        scorer = EnsembleMatcher.load(args.model)
    else:
        metric = _resolve(args, file_cfg, "metric", "jaro_winkler", str)
        if metric not in metric_names():
            raise CliError(f"unknown metric {metric!r}; expected one of {', '.join(metric_names())}")
        scorer = MetricScorer(metric=metric, normalization=_normalization(args))
    entries = scorer.score_pairs(pairs)
    dataio.write_scores(args.out, entries)
    _print_batch_summary(len(entries), 0, 0, 0)
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    entries = dataio.read_scores(args.scores)
    errors = [e for e in entries if not hasattr(e, "score")]
    if errors:
        raise CliError(
            f"cannot evaluate: {len(errors)} of {len(entries)} rows carry errors instead of scores"
        )
    scored = [e for e in entries if hasattr(e, "score")]
    report = build_report(scored)
    dataio.write_report(args.report, report)
    report_path = Path(args.report)
    if args.pr_csv:
        pr_path = Path(args.pr_csv)
    elif report_path.suffix == ".json":
        pr_path = report_path.with_suffix(".pr.csv")
    else:
        pr_path = Path(str(report_path) + ".pr.csv")
    dataio.write_pr_curve_csv(pr_path, report.pr_curve)
    print(f"average_precision={report.average_precision:.6f}")
    print(f"precision_at_full_recall={report.precision_at_full_recall:.6f}")
    print(f"n_pairs={report.n_pairs} n_positives={report.n_positives}")
    return 0


def _cmd_rerank(args: argparse.Namespace) -> int:
    file_cfg = _load_config_file(args.config)
    if args.stage1_model:
        stage1 = EnsembleMatcher.load(args.stage1_model)
    else:
        metric = _resolve(args, file_cfg, "stage1", "cosine_letter_freq", str)
        if metric not in metric_names():
            raise CliError(f"unknown stage-1 metric {metric!r}; expected one of {', '.join(metric_names())}")
        stage1 = MetricScorer(metric=metric)
    llm_config = _llm_config(args, file_cfg)
    template = _template(args, file_cfg)
    top_k = _resolve(args, file_cfg, "top_k", 500, int)
    policy_name = _resolve(args, file_cfg, "below_k", "zero", str)
    policy = {"zero": FLOOR_TO_ZERO, "keep": KEEP_STAGE1}.get(policy_name)
    if policy is None:
        raise CliError(f"below-k policy must be 'zero' or 'keep', got {policy_name!r}")
    try:
        config = PipelineConfig(stage1=stage1, llm=llm_config, template=template, top_k=top_k, below_k_policy=policy)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    pairs = dataio.read_pairs(args.pairs)
    provider = _provider(args, llm_config)
    cache = _cache(args)
    try:
        result = run_pipeline(pairs, config, provider, cache)
    finally:
        if cache is not None:
            cache.close()
    dataio.write_scores(args.out, result.entries)
    n_failed = len(result.errors)
    print(
        f"stage2_attempts={len(result.stage2.entries)} stage2_calls={result.stage2.provider_calls} "
        f"cache_hits={result.stage2.cache_hits}"
    )
    _print_batch_summary(len(result.scored), n_failed, result.stage2.cache_hits, result.stage2.leniency_count)
    return 2 if n_failed else 0


def _cmd_train(args: argparse.Namespace) -> int:
    pairs = dataio.read_pairs(args.pairs)
    try:
        config = TrainConfig(
            n_trees=args.n_trees,
            max_depth=args.max_depth,
            min_leaf=args.min_leaf,
            feature_subsample=args.feature_subsample,
            bootstrap=not args.no_bootstrap,
            positive_weight=args.positive_weight,
            seed=args.seed,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from None
    model = train(pairs, config)
    dataio.atomic_write_text(args.model_out, model_to_json(model))
    print(f"trained n_trees={config.n_trees} on n_pairs={len(pairs)} -> {args.model_out}")
    return 0


def _cmd_predict(args: argparse.Namespace) -> int:
    scorer = EnsembleMatcher.load(args.model)
    pairs = dataio.read_pairs(args.pairs)
    entries = scorer.score_pairs(pairs)
    dataio.write_scores(args.out, entries)
    _print_batch_summary(len(entries), 0, 0, 0)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pairlink",
        description="Fuzzy entity matching: metric, ensemble, and LLM scorers over string pairs.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_score = sub.add_parser(
        "score",
        help="score a pairs CSV with one scorer",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p_score.add_argument("pairs", help="input CSV with columns left, right, and optional label")
    p_score.add_argument("--out", required=True, help="output scores CSV")
    p_score.add_argument("--metric", help=f"similarity metric: {', '.join(metric_names())} (default jaro_winkler)")
    p_score.add_argument("--model", help="path to a trained ensemble model JSON")
    p_score.add_argument("--llm", action="store_true", help="score with the LLM")
    p_score.add_argument("--case-fold", dest="case_fold", action="store_true", help="case-fold before metric scoring")
    p_score.add_argument(
        "--collapse-whitespace",
        dest="collapse_whitespace",
        action="store_true",
        help="collapse whitespace runs before metric scoring",
    )
    _add_llm_options(p_score)
    _add_common(p_score)
    p_score.set_defaults(func=_cmd_score)

    p_eval = sub.add_parser(
        "eval",
        help="evaluate a labeled scores CSV",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p_eval.add_argument("scores", help="scores CSV with labels")
    p_eval.add_argument("--report", required=True, help="output report JSON")
    p_eval.add_argument("--pr-csv", dest="pr_csv", help="output PR-curve CSV (default: report path with .pr.csv)")
    _add_common(p_eval)
    p_eval.set_defaults(func=_cmd_eval)

    p_rerank = sub.add_parser(
        "rerank",
        help="stage-1 rank all pairs, stage-2 LLM re-scores the top k",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p_rerank.add_argument("pairs", help="input CSV with columns left, right, and optional label")
    p_rerank.add_argument("--out", required=True, help="output scores CSV")
    stage1 = p_rerank.add_mutually_exclusive_group()
    stage1.add_argument("--stage1", help=f"stage-1 metric: {', '.join(metric_names())} (default cosine_letter_freq)")
    stage1.add_argument("--stage1-model", dest="stage1_model", help="stage-1 ensemble model JSON")
    p_rerank.add_argument("--top-k", dest="top_k", type=int, help="pairs re-scored by stage 2 (default 500)")
    p_rerank.add_argument(
        "--below-k",
        dest="below_k",
        choices=["zero", "keep"],
        help="score for pairs below the cut: zero floors to 0.0, keep reuses stage-1 (default zero)",
    )
    _add_llm_options(p_rerank)
    _add_common(p_rerank)
    p_rerank.set_defaults(func=_cmd_rerank)

    p_train = sub.add_parser(
        "train",
        help="train the distance-feature ensemble on labeled pairs",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p_train.add_argument("pairs", help="labeled pairs CSV")
    p_train.add_argument("--model-out", dest="model_out", required=True, help="output model JSON")
    p_train.add_argument("--n-trees", dest="n_trees", type=int, default=100)
    p_train.add_argument("--max-depth", dest="max_depth", type=int, default=8)
    p_train.add_argument("--min-leaf", dest="min_leaf", type=int, default=2)
    p_train.add_argument("--feature-subsample", dest="feature_subsample", type=int, default=3)
    p_train.add_argument("--no-bootstrap", dest="no_bootstrap", action="store_true", help="train each tree on the full sample")
    p_train.add_argument("--positive-weight", dest="positive_weight", type=float, default=1.0)
    p_train.add_argument("--seed", type=int, default=0)
    _add_common(p_train)
    p_train.set_defaults(func=_cmd_train)

    p_predict = sub.add_parser(
        "predict",
        help="score pairs with a trained ensemble model",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p_predict.add_argument("model", help="trained model JSON")
    p_predict.add_argument("pairs", help="input CSV with columns left, right, and optional label")
    p_predict.add_argument("--out", required=True, help="output scores CSV")
    _add_common(p_predict)
    p_predict.set_defaults(func=_cmd_predict)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, LlmError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
