import pytest

from pairlink import (
    FLOOR_TO_ZERO,
    KEEP_STAGE1,
    LlmConfig,
    MetricScorer,
    MockProvider,
    PairRecord,
    PipelineConfig,
    PLAIN_TEMPLATE,
    ScoreCache,
    rank_by_score,
    render_prompt,
    run_pipeline,
    score_batch,
    stage1_rank,
)

FAST = LlmConfig(initial_backoff_ms=1)


def company_pairs():
    rows = [
        ("jpmorgan chase bank", "jp morgan chase"),
        ("roadway express inc", "motion picture assn"),
        ("chuck fleischmann", "charles fleischmann"),
        ("brad sherman", "howard berman"),
        ("acme corporation", "acme corp"),
        ("globex", "initech"),
    ]
    return [PairRecord(a, b, id=i) for i, (a, b) in enumerate(rows)]


def reply_for(pair):
    return "0.9" if pair.left[0] == pair.right[0] else "0.2"


def scripted_mock(pairs):
    replies = {render_prompt(PLAIN_TEMPLATE, p): reply_for(p) for p in pairs}
    return MockProvider.from_mapping(replies)


def test_pipeline_config_validation():
    scorer = MetricScorer()
    with pytest.raises(ValueError):
        PipelineConfig(stage1=scorer, top_k=0)
    with pytest.raises(ValueError):
        PipelineConfig(stage1=scorer, below_k_policy="whatever")
    assert PipelineConfig(stage1=scorer).top_k == 500
    assert PipelineConfig(stage1=scorer).below_k_policy == FLOOR_TO_ZERO


def test_stage1_rank_orders_by_metric():
    pairs = company_pairs()
    ranked = stage1_rank(pairs, MetricScorer(metric="jaro_winkler"))
    assert len(ranked) == len(pairs)
    scores = [sp.score for sp in ranked]
    assert scores == sorted(scores, reverse=True)


def test_exactly_min_top_k_n_stage2_attempts():
    pairs = company_pairs()
    for top_k in (2, 4, 6, 100):
        provider = scripted_mock(pairs)
        config = PipelineConfig(stage1=MetricScorer(), llm=FAST, top_k=top_k)
        result = run_pipeline(pairs, config, provider)
        expected = min(top_k, len(pairs))
        assert len(result.stage2.entries) == expected
        assert provider.calls == expected


def test_warm_cache_makes_zero_stage2_calls(tmp_path):
    pairs = company_pairs()
    config = PipelineConfig(stage1=MetricScorer(), llm=FAST, top_k=3)
    with ScoreCache(tmp_path / "c.jsonl") as cache:
        first = run_pipeline(pairs, config, scripted_mock(pairs), cache)
        assert first.stage2.provider_calls == 3
        warm_provider = scripted_mock(pairs)
        second = run_pipeline(pairs, config, warm_provider, cache)
        assert warm_provider.calls == 0
        assert second.stage2.cache_hits == 3
        assert [e.score for e in second.entries] == [e.score for e in first.entries]


def test_output_is_permutation_of_input_in_input_order():
    pairs = company_pairs()
    config = PipelineConfig(stage1=MetricScorer(), llm=FAST, top_k=2)
    result = run_pipeline(pairs, config, scripted_mock(pairs))
    assert [e.pair.id for e in result.entries] == [p.id for p in pairs]
    assert len(result.scored) == len(pairs)


def test_full_top_k_equals_pure_stage2_ordering():
    pairs = company_pairs()
    config = PipelineConfig(stage1=MetricScorer(), llm=FAST, top_k=len(pairs))
    piped = run_pipeline(pairs, config, scripted_mock(pairs))
    pure = score_batch(scripted_mock(pairs), FAST, PLAIN_TEMPLATE, pairs)
    pipeline_ranking = [sp.pair.id for sp in piped.ranked()]
    pure_ranking = [sp.pair.id for sp in rank_by_score(pure.scored)]
    assert pipeline_ranking == pure_ranking
    assert [sp.score for sp in piped.ranked()] == [
        sp.score for sp in rank_by_score(pure.scored)
    ]


def test_floor_to_zero_puts_tail_at_zero():
    pairs = company_pairs()
    config = PipelineConfig(stage1=MetricScorer(), llm=FAST, top_k=2, below_k_policy=FLOOR_TO_ZERO)
    result = run_pipeline(pairs, config, scripted_mock(pairs))
    head_ids = {sp.pair.id for sp in result.stage1_ranked[:2]}
    for entry in result.entries:
        if entry.pair.id not in head_ids:
            assert entry.score == 0.0
    # Every stage-2 pair ranks at or above every floored pair.
    floor = [e for e in result.entries if e.pair.id not in head_ids]
    head = [e for e in result.entries if e.pair.id in head_ids]
    assert min(e.score for e in head) >= max(e.score for e in floor)


def test_keep_stage1_preserves_tail_scores():
    pairs = company_pairs()
    stage1 = MetricScorer(metric="jaro_winkler")
    config = PipelineConfig(stage1=stage1, llm=FAST, top_k=2, below_k_policy=KEEP_STAGE1)
    result = run_pipeline(pairs, config, scripted_mock(pairs))
    stage1_scores = {sp.pair.id: sp.score for sp in result.stage1_ranked}
    head_ids = {sp.pair.id for sp in result.stage1_ranked[:2]}
    for entry in result.entries:
        if entry.pair.id not in head_ids:
            assert entry.score == stage1_scores[entry.pair.id]


def test_pipeline_scorer_id_reflects_both_stages():
    pairs = company_pairs()
    config = PipelineConfig(stage1=MetricScorer(metric="cosine_letter_freq"), llm=FAST, top_k=3)
    result = run_pipeline(pairs, config, scripted_mock(pairs))
    assert result.scorer_id == "pipeline:cosine_letter_freq>gpt-4-0613@T0.2"
    assert {e.scorer_id for e in result.entries} == {result.scorer_id}


def test_stage2_failures_fail_soft():
    pairs = company_pairs()
    bad = render_prompt(PLAIN_TEMPLATE, pairs[0])

    def reply(prompt):
        return "???" if prompt == bad else "0.5"

    config = PipelineConfig(stage1=MetricScorer(), llm=FAST, top_k=len(pairs))
    result = run_pipeline(pairs, config, MockProvider(reply))
    assert len(result.errors) == 1
    assert result.errors[0].pair.id == 0
    assert len(result.scored) == len(pairs) - 1
