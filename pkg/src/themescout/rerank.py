"""Second-stage reranking of retrieved candidates.

A scorer is either `lexical` (deterministic query-term overlap, so the
whole pipeline runs with no model or network) or `remote` (the /score wire
protocol). The reranker's score fully replaces the retrieval score; ties
keep the original retrieval order.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from . import remote
from .errors import DataError
from .retrieval import RankedEntry, RankedList, Stage
from .text import index_tokens, truncate_at_token_boundary

REMOTE_TEXT_CAP = 4000  # chars; one consistent cap across all remote calls


@dataclass(frozen=True)
class ScorerSpec:
    kind: str = "lexical"  # "lexical" | "remote"
    endpoint: Optional[str] = None
    model: Optional[str] = None
    timeout_ms: int = 10_000
    max_in_flight: int = 4
    batch_size: int = 16

    def __post_init__(self):
        if self.kind not in ("lexical", "remote"):
            raise DataError(f"unknown scorer kind {self.kind!r}")
        if (self.kind == "remote") != (self.endpoint is not None):
            raise DataError("endpoint must be set for remote scorers and only for them")
        if self.max_in_flight < 1:
            raise DataError("max_in_flight must be >= 1")
        if self.batch_size < 1:
            raise DataError("batch_size must be >= 1")

    @property
    def scorer_id(self) -> str:
        if self.kind == "lexical":
            return "lexical"
        return self.model or "remote"


@dataclass(frozen=True)
class ScoredPair:
    query: str
    passage_id: str
    score: float
    scorer_id: str


def lexical_score(query: str, passage_text: str) -> float:
    """Fraction of distinct query terms present in the passage, in [0, 1]."""
    q_terms = set(index_tokens(query))
    if not q_terms:
        raise DataError(f"query {query!r} is empty after tokenization")
    p_terms = set(index_tokens(passage_text))
    return len(q_terms & p_terms) / len(q_terms)


def score_pairs(scorer: ScorerSpec, query: str, passages: Sequence) -> list[ScoredPair]:
    """Score (query, passage) pairs, order-aligned with the input.

    Remote scoring runs in batches of `batch_size`, up to `max_in_flight`
    batches concurrently; each batch is retried once on failure. Passage
    texts are capped at 4000 characters at a token boundary before any
    remote call.
    """
    if not passages:
        raise DataError("score_pairs needs at least one passage")
    texts = [p.text for p in passages]
    ids = [p.passage_id for p in passages]
    if scorer.kind == "lexical":
        scores = [lexical_score(query, t) for t in texts]
    else:
        capped = [truncate_at_token_boundary(t, REMOTE_TEXT_CAP) for t in texts]
        batches = [capped[i:i + scorer.batch_size] for i in range(0, len(capped), scorer.batch_size)]
        with ThreadPoolExecutor(max_workers=scorer.max_in_flight) as pool:
            results = list(pool.map(
                lambda batch: remote.score(scorer.endpoint, query, batch, scorer.model, scorer.timeout_ms),
                batches))
        scores = [s for batch in results for s in batch]
    for s in scores:
        if s != s or s in (float("inf"), float("-inf")):
            raise DataError(f"non-finite score {s!r} from scorer {scorer.scorer_id}")
    return [ScoredPair(query=query, passage_id=pid, score=s, scorer_id=scorer.scorer_id)
            for pid, s in zip(ids, scores)]


def rerank(candidates: RankedList, scorer: ScorerSpec, k: int, passages: Mapping[str, object]) -> RankedList:
    """Re-score the retrieved candidates and keep the top k.

    `passages` maps passage_id to any object with a .text attribute. Ties
    are broken by the original retrieval rank, better first.
    """
    if candidates.stage is not Stage.RETRIEVED:
        raise DataError(f"rerank expects a retrieved list, got stage {candidates.stage.value!r}")
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    if not candidates.entries:
        return RankedList(query=candidates.query, granularity=candidates.granularity,
                          entries=[], stage=Stage.RERANKED)
    ordered = [passages[e.passage_id] for e in candidates.entries]
    pairs = score_pairs(scorer, candidates.query, ordered)
    rescored = sorted(
        zip(pairs, candidates.entries),
        key=lambda item: (-item[0].score, item[1].rank),
    )[:k]
    entries = [RankedEntry(rank=i + 1, passage_id=pair.passage_id, score=pair.score)
               for i, (pair, _) in enumerate(rescored)]
    return RankedList(query=candidates.query, granularity=candidates.granularity,
                      entries=entries, stage=Stage.RERANKED)
