"""First-stage candidate retrieval: an inverted index scored with Okapi BM25.

The IDF uses the +1-inside-log form, ln((N - n_t + 0.5)/(n_t + 0.5) + 1),
so scores are never negative even for terms present in every passage of a
small corpus. Ties are broken by ascending passage_id for reproducibility.
"""

import json
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Optional

from .corpus import Granularity, Passage
from .errors import DataError, StoreError
from .text import index_tokens

INDEX_FORMAT_VERSION = 1


class Stage(str, Enum):
    RETRIEVED = "retrieved"
    RERANKED = "reranked"


@dataclass(frozen=True)
class IndexConfig:
    k1: float = 1.2
    b: float = 0.75
    lowercase: bool = True
    stopwords: frozenset[str] = frozenset()
    granularity: Granularity = Granularity.PARAGRAPH

    def __post_init__(self):
        if self.k1 < 0:
            raise DataError(f"k1 must be >= 0, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise DataError(f"b must be in [0, 1], got {self.b}")

    def tokens(self, text: str) -> list[str]:
        return index_tokens(text, lowercase=self.lowercase, stopwords=self.stopwords)


@dataclass(frozen=True)
class RankedEntry:
    rank: int
    passage_id: str
    score: float


@dataclass
class RankedList:
    query: str
    granularity: Granularity
    entries: list[RankedEntry]
    stage: Stage

    def __post_init__(self):
        seen = set()
        prev = math.inf
        for i, e in enumerate(self.entries, start=1):
            if e.rank != i:
                raise DataError(f"ranks must run 1..n, got {e.rank} at position {i}")
            if e.score > prev:
                raise DataError(f"scores must be non-increasing, got {e.score} after {prev}")
            if e.passage_id in seen:
                raise DataError(f"duplicate passage_id {e.passage_id!r} in ranked list")
            seen.add(e.passage_id)
            prev = e.score

    def passage_ids(self) -> list[str]:
        return [e.passage_id for e in self.entries]


class Index:
    """Immutable BM25 index over passages of a single granularity."""

    def __init__(self, postings, doc_lengths, config: IndexConfig):
        self.postings: dict[str, list[tuple[str, int]]] = postings
        self.doc_lengths: dict[str, int] = doc_lengths
        self.config = config
        self.passage_count = len(doc_lengths)
        self.avg_doc_length = sum(doc_lengths.values()) / self.passage_count if doc_lengths else 0.0
        self._tf = {term: dict(plist) for term, plist in postings.items()}

    def idf(self, term: str) -> float:
        n_t = len(self.postings.get(term, ()))
        return math.log((self.passage_count - n_t + 0.5) / (n_t + 0.5) + 1.0)


def build_index(passages: list[Passage], cfg: Optional[IndexConfig] = None) -> Index:
    if not passages:
        raise DataError("cannot build an index over an empty passage set")
    granularities = {p.granularity for p in passages}
    if len(granularities) > 1:
        raise DataError("mixed granularities in one index: " + ", ".join(sorted(g.value for g in granularities)))
    cfg = cfg or IndexConfig()
    actual = next(iter(granularities))
    if cfg.granularity is not actual:
        cfg = replace(cfg, granularity=actual)

    postings: dict[str, dict[str, int]] = {}
    doc_lengths: dict[str, int] = {}
    for p in passages:
        if p.passage_id in doc_lengths:
            raise DataError(f"duplicate passage_id {p.passage_id!r}")
        tokens = cfg.tokens(p.text)
        doc_lengths[p.passage_id] = len(tokens)
        for t in tokens:
            postings.setdefault(t, {}).setdefault(p.passage_id, 0)
            postings[t][p.passage_id] += 1
    sorted_postings = {t: sorted(tfs.items()) for t, tfs in postings.items()}
    return Index(sorted_postings, doc_lengths, cfg)


def bm25_score(index: Index, query: str, passage_id: str) -> float:
    if passage_id not in index.doc_lengths:
        raise DataError(f"unknown passage_id {passage_id!r}")
    terms = index.config.tokens(query)
    if index.avg_doc_length == 0.0:
        return 0.0
    k1, b = index.config.k1, index.config.b
    length = index.doc_lengths[passage_id]
    norm = k1 * (1.0 - b + b * length / index.avg_doc_length)
    score = 0.0
    for t in terms:
        tf = index._tf.get(t, {}).get(passage_id, 0)
        if tf == 0:
            continue
        score += index.idf(t) * tf * (k1 + 1.0) / (tf + norm)
    return score


def retrieve(index: Index, query: str, n: int) -> RankedList:
    """Top-n passages by BM25, ties broken by ascending passage_id.

    Only passages with score > 0 appear; the list is shorter than n when
    fewer passages match any query term.
    """
    if n < 1:
        raise DataError(f"n must be >= 1, got {n}")
    terms = index.config.tokens(query)
    if not terms:
        raise DataError(f"query {query!r} is empty after tokenization")
    candidates = set()
    for t in terms:
        candidates.update(index._tf.get(t, ()))
    scored = [(bm25_score(index, query, pid), pid) for pid in candidates]
    scored = [(s, pid) for s, pid in scored if s > 0.0]
    scored.sort(key=lambda x: (-x[0], x[1]))
    entries = [RankedEntry(rank=i + 1, passage_id=pid, score=s) for i, (s, pid) in enumerate(scored[:n])]
    return RankedList(query=query, granularity=index.config.granularity, entries=entries, stage=Stage.RETRIEVED)


def save_index(index: Index, path: Path) -> None:
    """Persist as line-delimited JSON with a format-version header."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        header = {
            "format_version": INDEX_FORMAT_VERSION,
            "config": {
                "k1": index.config.k1,
                "b": index.config.b,
                "lowercase": index.config.lowercase,
                "stopwords": sorted(index.config.stopwords),
                "granularity": index.config.granularity.value,
            },
        }
        f.write(json.dumps(header, ensure_ascii=False) + "\n")
        for pid in sorted(index.doc_lengths):
            f.write(json.dumps({"length": [pid, index.doc_lengths[pid]]}, ensure_ascii=False) + "\n")
        for term in sorted(index.postings):
            f.write(json.dumps({"term": term, "postings": index.postings[term]}, ensure_ascii=False) + "\n")


def load_index(path: Path) -> Index:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise StoreError(f"index file {path} is empty")
    header = json.loads(lines[0])
    version = header.get("format_version")
    if version != INDEX_FORMAT_VERSION:
        raise StoreError(f"index format version {version} != supported {INDEX_FORMAT_VERSION}")
    c = header["config"]
    cfg = IndexConfig(k1=c["k1"], b=c["b"], lowercase=c["lowercase"],
                      stopwords=frozenset(c["stopwords"]), granularity=Granularity(c["granularity"]))
    doc_lengths: dict[str, int] = {}
    postings: dict[str, list[tuple[str, int]]] = {}
    for line in lines[1:]:
        rec = json.loads(line)
        if "length" in rec:
            pid, length = rec["length"]
            doc_lengths[pid] = length
        else:
            postings[rec["term"]] = [(pid, tf) for pid, tf in rec["postings"]]
    return Index(postings, doc_lengths, cfg)
