import pytest

from themescout.augment import (
    GeneratedPair,
    GenerationConfig,
    PromptTemplate,
    SeedPair,
    TrainingTriplet,
    build_prompt,
    default_price_table,
    default_prompt_fixture,
    default_seed_pairs,
    estimate_cost,
    export_triplets,
    filter_pairs,
    generate_queries,
    mine_negatives,
    min_score_rule,
    parse_triplets_file,
    top_k_rule,
)
from themescout.corpus import CorpusStore, Granularity
from themescout.errors import DataError
from themescout.rerank import ScorerSpec
from themescout.retrieval import build_index

from oracles import exhaustive_ranking, simple_tokens


# -- build_prompt ---------------------------------------------------------------


def test_packaged_prompt_fixture_byte_for_byte():
    template = PromptTemplate(seed_pairs=tuple(default_seed_pairs()))
    rendered = build_prompt(template, "{document_text}")
    assert rendered == default_prompt_fixture()


def test_prompt_fixture_shape():
    fixture = default_prompt_fixture()
    assert fixture.count("Example ") == 17
    assert fixture.endswith("Relevant Query:")
    assert "Example 17:\n\nDocument: {document_text}\n\nRelevant Query:" in fixture


def test_zero_seed_pairs():
    template = PromptTemplate(seed_pairs=())
    assert build_prompt(template, "target text") == "Example 1:\n\nDocument: target text\n\nRelevant Query:"


def test_two_seed_pairs_three_headers():
    seeds = (
        SeedPair(question="Q one?", passage_text="Passage one.", theme_id="t"),
        SeedPair(question="Q two?", passage_text="Passage two.", theme_id="t"),
    )
    rendered = build_prompt(PromptTemplate(seed_pairs=seeds), "the target")
    assert rendered.count("Example ") == 3
    assert rendered.endswith("Relevant Query:")
    assert rendered.count("Relevant Query:") == 3


def test_prompt_is_pure_function():
    template = PromptTemplate(seed_pairs=tuple(default_seed_pairs()[:3]))
    assert build_prompt(template, "x") == build_prompt(template, "x")


def test_empty_target_rejected():
    with pytest.raises(DataError):
        build_prompt(PromptTemplate(seed_pairs=()), "")


# -- generate_queries -------------------------------------------------------------


@pytest.fixture()
def paragraph_env():
    store = CorpusStore()
    texts = [
        "The evaluation compared treatment and control villages over three years.",
        "Payments were released after an independent audit of enrolment records.",
        "x" * 4001,
        "Service providers hired data officers to meet reporting requirements.",
    ]
    store.ingest_document("\n\n".join(texts), "g")
    return store


def _template():
    return PromptTemplate(seed_pairs=tuple(default_seed_pairs()[:2]))


def test_mock_generator_first_five_tokens(paragraph_env, mock_service):
    passages = paragraph_env.passages(Granularity.PARAGRAPH)
    spec = ScorerSpec(kind="remote", endpoint=mock_service.endpoint)
    outcome = generate_queries(spec, passages, _template(), GenerationConfig(max_doc_chars=4000))
    assert outcome.counters["skipped_too_long"] == 1
    assert outcome.counters["generated"] == 3
    by_pid = {p.passage_id: p for p in passages}
    for pair in outcome.pairs:
        expected = " ".join(by_pid[pair.passage_id].text.split()[:5])
        assert pair.query == expected


def test_over_long_passage_skipped_and_counted(paragraph_env, mock_service):
    passages = [p for p in paragraph_env.passages(Granularity.PARAGRAPH) if len(p.text) > 4000]
    spec = ScorerSpec(kind="remote", endpoint=mock_service.endpoint)
    outcome = generate_queries(spec, passages, _template(), GenerationConfig(max_doc_chars=4000))
    assert outcome.counters["skipped_too_long"] == 1
    assert outcome.pairs == []


def test_gen_score_falls_back_to_score_endpoint(paragraph_env, mock_service):
    mock_service.mode = "no_logprob"
    passages = paragraph_env.passages(Granularity.PARAGRAPH)[:2]
    spec = ScorerSpec(kind="remote", endpoint=mock_service.endpoint)
    outcome = generate_queries(spec, passages, _template(), GenerationConfig())
    # fallback /score of (query, source passage) = len(passage)/1000 per the mock
    assert [p.gen_score for p in outcome.pairs] == [len(p.text) / 1000.0 for p in passages]
    assert any(path == "/score" for path, _ in mock_service.requests)


def test_failures_counted_run_continues(paragraph_env, mock_service):
    mock_service.mode = "down"
    passages = paragraph_env.passages(Granularity.PARAGRAPH)[:2]
    spec = ScorerSpec(kind="remote", endpoint=mock_service.endpoint, timeout_ms=1500)
    outcome = generate_queries(spec, passages, _template(), GenerationConfig())
    assert outcome.counters["failures"] == 2
    assert outcome.pairs == []


def test_sentence_passages_rejected(paragraph_env, mock_service):
    sentences = paragraph_env.passages(Granularity.SENTENCE)[:1]
    spec = ScorerSpec(kind="remote", endpoint=mock_service.endpoint)
    with pytest.raises(DataError):
        generate_queries(spec, sentences, _template(), GenerationConfig())


# -- filter_pairs ------------------------------------------------------------------


def _pairs(scores):
    return [GeneratedPair(passage_id=f"p{i:02d}", query=f"q{i}", gen_score=s)
            for i, s in enumerate(scores)]


def test_filter_empty_input():
    assert filter_pairs([], top_k_rule(5)) == []


def test_filter_top_k_prefix():
    pairs = _pairs([0.1, 0.9, 0.5, 0.7, 0.3])
    kept = filter_pairs(pairs, top_k_rule(2))
    assert [p.gen_score for p in kept] == [0.9, 0.7]


def test_filter_is_sorted_prefix():
    pairs = _pairs([0.4, 0.2, 0.9, 0.2, 0.6])
    full_order = filter_pairs(pairs, top_k_rule(len(pairs)))
    for k in range(len(pairs) + 1):
        assert filter_pairs(pairs, top_k_rule(k)) == full_order[:k]


def test_filter_min_score_partition():
    pairs = _pairs([0.1, 0.9, 0.5, 0.7, 0.3])
    kept = filter_pairs(pairs, min_score_rule(0.5))
    assert all(p.gen_score >= 0.5 for p in kept)
    rejected = [p for p in pairs if p not in kept]
    assert all(p.gen_score < 0.5 for p in rejected)


def test_filter_tie_break_by_passage_id():
    pairs = [GeneratedPair("pB", "q", 0.5), GeneratedPair("pA", "q", 0.5)]
    kept = filter_pairs(pairs, top_k_rule(1))
    assert kept[0].passage_id == "pA"


# -- mine_negatives -----------------------------------------------------------------


@pytest.fixture()
def mining_env():
    store = CorpusStore()
    texts = [
        "solar panels on village schools",
        "solar panels and battery storage",
        "unrelated fiscal audit narrative",
    ]
    store.ingest_document("\n\n".join(texts), "n")
    passages = store.passages(Granularity.PARAGRAPH)
    return store, passages, build_index(passages)


def test_negative_is_best_non_source_hit(mining_env):
    store, passages, index = mining_env
    pairs = [GeneratedPair(passage_id="n:p0000", query="solar panels", gen_score=0.0)]
    triplets, dropped = mine_negatives(index, pairs, 10)
    assert dropped == 0
    assert len(triplets) == 1
    # brute-force scan oracle
    toks = [simple_tokens(p.text) for p in passages]
    ids = [p.passage_id for p in passages]
    ranking = exhaustive_ranking(toks, ids, simple_tokens("solar panels"), 10)
    expected = next(pid for pid, _ in ranking if pid != "n:p0000")
    assert triplets[0].negative_passage_id == expected


def test_only_hit_is_source_pair_dropped(mining_env):
    _, _, index = mining_env
    pairs = [GeneratedPair(passage_id="n:p0002", query="fiscal audit narrative", gen_score=0.0)]
    triplets, dropped = mine_negatives(index, pairs, 10)
    assert triplets == []
    assert dropped == 1


def test_positive_never_equals_negative(mining_env):
    _, passages, index = mining_env
    pairs = [GeneratedPair(passage_id=p.passage_id, query="solar panels battery", gen_score=0.0)
             for p in passages]
    triplets, _ = mine_negatives(index, pairs, 10)
    for t in triplets:
        assert t.positive_passage_id != t.negative_passage_id


def test_m_below_two_rejected(mining_env):
    _, _, index = mining_env
    with pytest.raises(DataError):
        mine_negatives(index, [], 1)


def test_triplet_type_enforces_distinct():
    with pytest.raises(DataError):
        TrainingTriplet(query="q", positive_passage_id="a", negative_passage_id="a")


# -- export --------------------------------------------------------------------------


def test_export_zero_triplets_creates_empty_file(tmp_path, mining_env):
    _, passages, _ = mining_env
    out = tmp_path / "triplets.tsv"
    export_triplets([], out, {p.passage_id: p for p in passages})
    assert out.exists()
    assert out.read_text(encoding="utf-8") == ""


def test_export_two_triplets_two_tabs_each(tmp_path, mining_env):
    _, passages, _ = mining_env
    lookup = {p.passage_id: p for p in passages}
    triplets = [
        TrainingTriplet("q one", "n:p0000", "n:p0001"),
        TrainingTriplet("q two", "n:p0001", "n:p0002"),
    ]
    out = tmp_path / "triplets.tsv"
    export_triplets(triplets, out, lookup)
    lines = out.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 2
    assert all(line.count("\t") == 2 for line in lines)


def test_export_roundtrip(tmp_path, mining_env):
    _, passages, _ = mining_env
    lookup = {p.passage_id: p for p in passages}
    triplets = [TrainingTriplet("does solar help", "n:p0000", "n:p0002")]
    out = tmp_path / "t.tsv"
    export_triplets(triplets, out, lookup)
    rows = parse_triplets_file(out)
    assert rows == [("does solar help", lookup["n:p0000"].text, lookup["n:p0002"].text)]


def test_export_flattens_internal_whitespace(tmp_path):
    class FakePassage:
        def __init__(self, text):
            self.text = text
    lookup = {"a": FakePassage("line one\nline two"), "b": FakePassage("has\ttab")}
    out = tmp_path / "t.tsv"
    export_triplets([TrainingTriplet("q\nwith newline", "a", "b")], out, lookup)
    line = out.read_text(encoding="utf-8").splitlines()[0]
    assert line == "q with newline\tline one line two\thas tab"


# -- cost ------------------------------------------------------------------------------


def test_curie_usage_price_exact():
    table = default_price_table()
    assert estimate_cost(1000, "Curie", table, "usage") == 0.0120


def test_zero_tokens_zero_cost():
    table = default_price_table()
    assert estimate_cost(0, "Davinci", table, "train") == 0.0


def test_ada_arithmetic_oracle():
    table = default_price_table()
    # hand multiplication: 750 * 0.0016
    assert estimate_cost(750_000, "Ada", table, "usage") == pytest.approx(1.20, abs=1e-9)
    assert estimate_cost(750_000, "Ada", table, "usage") == 750_000 / 1000 * 0.0016


def test_unknown_model_rejected():
    table = default_price_table()
    with pytest.raises(DataError):
        estimate_cost(10, "gpt-17", table, "usage")


def test_table_one_fixture_values():
    table = default_price_table()
    assert table.price("Ada", "train") == 0.0004
    assert table.price("Babbage", "usage") == 0.0024
    assert table.price("Curie", "train") == 0.0030
    assert table.price("Davinci", "usage") == 0.1200


# -- four-step reproducibility ----------------------------------------------------------


def test_four_step_run_reproducible(store, mock_service, tmp_path):
    spec = ScorerSpec(kind="remote", endpoint=mock_service.endpoint)
    template = PromptTemplate(seed_pairs=tuple(default_seed_pairs()))
    passages = store.passages(Granularity.PARAGRAPH)
    index = build_index(passages)
    lookup = {p.passage_id: p for p in passages}
    outputs = []
    for run in range(2):
        outcome = generate_queries(spec, passages, template, GenerationConfig())
        survivors = filter_pairs(outcome.pairs, top_k_rule(10))
        triplets, _ = mine_negatives(index, survivors, 50)
        out = tmp_path / f"run{run}.tsv"
        export_triplets(triplets, out, lookup)
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]
    assert len(outputs[0]) > 0
