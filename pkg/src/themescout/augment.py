"""Synthetic training-triplet generation from a handful of seed pairs.

Four deterministic stages around one remote generator:

1. generate  - few-shot prompt per unlabeled paragraph, one /generate call
2. filter    - keep the best (question, passage) pairs by generation score
3. mine      - BM25-retrieve each generated question; the best hit that is
               not the source passage becomes the negative
4. export    - TSV triplets (query, positive text, negative text) for any
               external reranker trainer

Filtering and mining are pure functions; with a deterministic generator the
whole run is byte-reproducible.
"""

import importlib.resources
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import yaml

from . import remote
from .corpus import Granularity, Passage
from .errors import DataError, RemoteServiceError
from .rerank import ScorerSpec
from .retrieval import Index, retrieve


@dataclass(frozen=True)
class SeedPair:
    question: str
    passage_text: str
    theme_id: str

    def __post_init__(self):
        if not self.question or not self.passage_text:
            raise DataError("seed pair needs both a question and a passage text")


@dataclass(frozen=True)
class PromptTemplate:
    seed_pairs: tuple[SeedPair, ...]
    example_header: str = "Example {n}:"
    document_label: str = "Document:"
    query_label: str = "Relevant Query:"


@dataclass(frozen=True)
class GenerationConfig:
    max_doc_chars: int = 4000
    temperature: float = 0.0
    max_new_tokens: int = 64
    model: Optional[str] = None

    def __post_init__(self):
        if self.max_doc_chars < 1:
            raise DataError("max_doc_chars must be >= 1")
        if self.temperature < 0:
            raise DataError("temperature must be >= 0")


@dataclass(frozen=True)
class GeneratedPair:
    passage_id: str
    query: str
    gen_score: float


@dataclass(frozen=True)
class TrainingTriplet:
    query: str
    positive_passage_id: str
    negative_passage_id: str

    def __post_init__(self):
        if self.positive_passage_id == self.negative_passage_id:
            raise DataError("triplet positive and negative must differ")


def build_prompt(template: PromptTemplate, target_passage_text: str) -> str:
    """Render the few-shot prompt, ending with an unanswered query slot."""
    if not target_passage_text:
        raise DataError("target passage text is empty")
    parts = []
    for n, pair in enumerate(template.seed_pairs, start=1):
        parts.append(
            f"{template.example_header.format(n=n)}\n\n"
            f"{template.document_label} {pair.passage_text}\n\n"
            f"{template.query_label} {pair.question}\n\n"
        )
    final = len(template.seed_pairs) + 1
    parts.append(
        f"{template.example_header.format(n=final)}\n\n"
        f"{template.document_label} {target_passage_text}\n\n"
        f"{template.query_label}"
    )
    return "".join(parts)


MIN_QUERY_CHARS = 3


@dataclass
class GenerationOutcome:
    pairs: list[GeneratedPair]
    counters: dict[str, int] = field(default_factory=dict)


def _clean_generation(text: str) -> str:
    return text.split("\n", 1)[0].strip()


def generate_queries(endpoint: ScorerSpec, passages: Sequence[Passage],
                     template: PromptTemplate, cfg: GenerationConfig) -> GenerationOutcome:
    """Generate one candidate query per eligible paragraph passage.

    Passages longer than max_doc_chars are skipped; per-passage remote
    failures are counted and skipped so a long run never aborts mid-corpus.
    The pair's gen_score is the generator's mean token log-probability when
    reported, else one /score call on (query, source passage).
    """
    if endpoint.kind != "remote":
        raise DataError("generate_queries needs a remote generator endpoint")
    counters = {"eligible": 0, "skipped_too_long": 0, "empty_dropped": 0, "failures": 0, "generated": 0}
    pairs = []
    for p in passages:
        if p.granularity is not Granularity.PARAGRAPH:
            raise DataError(f"generation runs on paragraph passages, got {p.granularity.value}")
        if len(p.text) > cfg.max_doc_chars:
            counters["skipped_too_long"] += 1
            continue
        counters["eligible"] += 1
        prompt = build_prompt(template, p.text)
        try:
            text, mean_logprob = remote.generate(
                endpoint.endpoint, prompt, cfg.max_new_tokens, cfg.temperature, cfg.model, endpoint.timeout_ms)
        except RemoteServiceError:
            counters["failures"] += 1
            continue
        query = _clean_generation(text)
        if len(query) < MIN_QUERY_CHARS:
            counters["empty_dropped"] += 1
            continue
        if mean_logprob is None:
            try:
                mean_logprob = remote.score(
                    endpoint.endpoint, query, [p.text], endpoint.model, endpoint.timeout_ms)[0]
            except RemoteServiceError:
                counters["failures"] += 1
                continue
        pairs.append(GeneratedPair(passage_id=p.passage_id, query=query, gen_score=float(mean_logprob)))
        counters["generated"] += 1
    return GenerationOutcome(pairs=pairs, counters=counters)


@dataclass(frozen=True)
class FilterRule:
    """top_k keeps the K best pairs; min_score keeps every pair >= s."""
    kind: str
    top_k: int = 0
    min_score: float = 0.0

    def __post_init__(self):
        if self.kind not in ("top_k", "min_score"):
            raise DataError(f"unknown filter rule {self.kind!r}")
        if self.kind == "top_k" and self.top_k < 0:
            raise DataError("top_k must be >= 0")


def top_k_rule(k: int) -> FilterRule:
    return FilterRule(kind="top_k", top_k=k)


def min_score_rule(s: float) -> FilterRule:
    return FilterRule(kind="min_score", min_score=s)


def filter_pairs(pairs: Sequence[GeneratedPair], keep: FilterRule) -> list[GeneratedPair]:
    """Survivors sorted by gen_score descending, then passage_id."""
    ordered = sorted(pairs, key=lambda p: (-p.gen_score, p.passage_id))
    if keep.kind == "top_k":
        return ordered[:keep.top_k]
    return [p for p in ordered if p.gen_score >= keep.min_score]


def mine_negatives(index: Index, pairs: Sequence[GeneratedPair], m: int) -> tuple[list[TrainingTriplet], int]:
    """BM25-mine one negative per pair from the top-m hits for its query.

    The negative is the highest-ranked retrieved passage that is not the
    pair's own source; pairs with no eligible negative are dropped. Returns
    (triplets, dropped_count).
    """
    if m < 2:
        raise DataError(f"negative mining pool m must be >= 2, got {m}")
    triplets = []
    dropped = 0
    for pair in pairs:
        try:
            hits = retrieve(index, pair.query, m)
        except DataError:
            dropped += 1
            continue
        negative = next((e.passage_id for e in hits.entries if e.passage_id != pair.passage_id), None)
        if negative is None:
            dropped += 1
            continue
        triplets.append(TrainingTriplet(
            query=pair.query, positive_passage_id=pair.passage_id, negative_passage_id=negative))
    return triplets, dropped


def _flatten(text: str) -> str:
    return " ".join(text.split("\t")).replace("\n", " ")


def export_triplets(triplets: Sequence[TrainingTriplet], path: Path, passage_texts) -> None:
    """One triplet per line: query TAB positive_text TAB negative_text.

    Tabs and newlines inside any field are replaced by single spaces so the
    file stays strictly three columns.
    """
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        for t in triplets:
            row = (
                _flatten(t.query),
                _flatten(passage_texts[t.positive_passage_id].text),
                _flatten(passage_texts[t.negative_passage_id].text),
            )
            f.write("\t".join(row) + "\n")


def parse_triplets_file(path: Path) -> list[tuple[str, str, str]]:
    rows = []
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        cols = line.split("\t")
        if len(cols) != 3:
            raise DataError(f"triplet line {i + 1} has {len(cols)} columns, expected 3")
        rows.append(tuple(cols))
    return rows


class PriceTable:
    """Per-1k-token training and usage prices by model label."""

    def __init__(self, prices: dict[str, tuple[float, float]]):
        for label, (train, usage) in prices.items():
            if train < 0 or usage < 0:
                raise DataError(f"negative price for model {label!r}")
        self._prices = {label.lower(): (train, usage) for label, (train, usage) in prices.items()}

    @classmethod
    def from_file(cls, path: Path) -> "PriceTable":
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        return cls({label: (row["train"], row["usage"]) for label, row in raw.items()})

    def price(self, model: str, phase: str) -> float:
        row = self._prices.get(model.lower())
        if row is None:
            raise DataError(f"unknown model {model!r} in price table")
        if phase == "train":
            return row[0]
        if phase == "usage":
            return row[1]
        raise DataError(f"unknown phase {phase!r}, expected 'train' or 'usage'")


def estimate_cost(token_count: int, model: str, table: PriceTable, phase: str) -> float:
    if token_count < 0:
        raise DataError("token_count must be >= 0")
    return token_count / 1000 * table.price(model, phase)


def _data_path(name: str) -> Path:
    return Path(str(importlib.resources.files("themescout").joinpath("data", name)))


def default_price_table() -> PriceTable:
    return PriceTable.from_file(_data_path("prices.yaml"))


def load_seed_pairs(path: Path) -> list[SeedPair]:
    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    return [SeedPair(question=r["question"], passage_text=r["passage"], theme_id=r["theme_id"]) for r in raw]


def default_seed_pairs() -> list[SeedPair]:
    return load_seed_pairs(_data_path("seed_pairs.yaml"))


def default_prompt_fixture() -> str:
    return _data_path("query_prompt.txt").read_text(encoding="utf-8")
