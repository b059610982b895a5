"""Retrieval metrics, result tables and retrieval-difficulty reports.

precision@k uses k as the denominator even when fewer than k passages were
returned; recall@k divides by the gold set size. Both are None ("N/A" in
rendered tables) when the gold set for a (document, theme) is empty.

Difficulty is a pure function of the gold paragraphs and the theme's
curated keywords: hard when no gold paragraph contains any keyword
(ratio exactly 0), easy when at least half do, medium in between.
"""

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .corpus import CorpusStore, Document, Granularity, Theme
from .errors import DataError
from .rerank import ScorerSpec, rerank
from .retrieval import IndexConfig, RankedList, build_index, retrieve
from .text import index_tokens

EASY_THRESHOLD = 0.5
DEFAULT_POOL = 100
CONCAT_LABEL = "Keywords (Concatenation)"


@dataclass(frozen=True)
class EvalConfig:
    k_values: tuple[int, ...] = tuple(range(1, 21))
    granularity: Granularity = Granularity.PARAGRAPH
    match_rule: str = "exact_id"  # "exact_id" | "span_overlap"
    pool: int = DEFAULT_POOL

    def __post_init__(self):
        if not self.k_values:
            raise DataError("k_values must be non-empty")
        if list(self.k_values) != sorted(set(self.k_values)) or self.k_values[0] < 1:
            raise DataError("k_values must be positive, sorted and distinct")
        if self.match_rule not in ("exact_id", "span_overlap"):
            raise DataError(f"unknown match_rule {self.match_rule!r}")


def precision_at_k(ranked: RankedList, gold: set[str], k: int) -> Optional[float]:
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    if not gold:
        return None
    top = ranked.passage_ids()[:k]
    return len(set(top) & gold) / k


def recall_at_k(ranked: RankedList, gold: set[str], k: int) -> Optional[float]:
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    if not gold:
        return None
    top = ranked.passage_ids()[:k]
    return len(set(top) & gold) / len(gold)


@dataclass(frozen=True)
class MetricCell:
    k: int
    precision: Optional[float]
    recall: Optional[float]

    def render(self) -> str:
        if self.precision is None:
            return "N/A"
        return f"{self.precision:.2f}/{self.recall:.2f}"


@dataclass
class ResultTable:
    model_id: str
    theme_id: str
    theme_name: str
    variants: list[str]
    doc_ids: list[str]
    # (doc_id, variant label) -> list of MetricCell, one per configured k
    rows: dict[tuple[str, str], list[MetricCell]] = field(default_factory=dict)
    # (doc_id, variant label) -> error string for cells whose pipeline failed
    errors: dict[tuple[str, str], str] = field(default_factory=dict)

    def cell(self, doc_id: str, variant: str, k: int) -> MetricCell:
        for c in self.rows[(doc_id, variant)]:
            if c.k == k:
                return c
        raise DataError(f"no cell at k={k} for ({doc_id}, {variant})")


def theme_variants(theme: Theme) -> list[tuple[str, str]]:
    """(label, query string) pairs: each key question, then the keyword concatenation."""
    variants = [(q, q) for q in theme.questions]
    variants.append((CONCAT_LABEL, theme.concat_query))
    return variants


def resolve_gold(corpus: CorpusStore, doc_id: str, theme_id: str,
                 granularity: Granularity, match_rule: str) -> set[str]:
    """Gold passage ids at the evaluated granularity.

    span_overlap recomputes membership from character spans against the
    gold paragraphs, which matters when evaluating sentences against
    paragraph-level annotations.
    """
    if match_rule == "exact_id":
        return corpus.gold_ids(doc_id, theme_id, granularity)
    ann = corpus.gold.get((doc_id, theme_id))
    if ann is None:
        return set()
    spans = [corpus.passage(pid).char_span for pid in ann.gold_passage_ids]
    hits = set()
    for p in corpus.passages(granularity, doc_id):
        if any(p.char_span[0] < e and s < p.char_span[1] for s, e in spans):
            hits.add(p.passage_id)
    return hits


def eval_matrix(corpus: CorpusStore, themes: Sequence[Theme], index_cfg: IndexConfig,
                scorer: ScorerSpec, cfg: EvalConfig,
                rankings_out: Optional[list] = None) -> list[ResultTable]:
    """Run retrieve -> rerank per (document, theme, query variant).

    Retrieval is per document: each paper's passages form their own index,
    so per-paper recall is well defined. A pipeline failure annotates the
    affected cells instead of aborting the table. When `rankings_out` is a
    list, every reranked list is appended to it as
    (doc_id, theme_id, variant label, RankedList) for downstream audits.
    """
    k_max = max(cfg.k_values)
    tables = []
    doc_ids = sorted(corpus.documents)
    for theme in themes:
        table = ResultTable(model_id=scorer.scorer_id, theme_id=theme.theme_id,
                            theme_name=theme.name,
                            variants=[label for label, _ in theme_variants(theme)],
                            doc_ids=doc_ids)
        for doc_id in doc_ids:
            passages = corpus.passages(cfg.granularity, doc_id)
            index = build_index(passages, replace(index_cfg, granularity=cfg.granularity))
            lookup = {p.passage_id: p for p in passages}
            gold = resolve_gold(corpus, doc_id, theme.theme_id, cfg.granularity, cfg.match_rule)
            for label, query in theme_variants(theme):
                key = (doc_id, label)
                try:
                    candidates = retrieve(index, query, cfg.pool)
                    final = rerank(candidates, scorer, k_max, lookup) if candidates.entries else candidates
                except DataError as e:
                    table.errors[key] = str(e)
                    table.rows[key] = [MetricCell(k=k, precision=None, recall=None) for k in cfg.k_values]
                    continue
                if rankings_out is not None:
                    rankings_out.append((doc_id, theme.theme_id, label, final))
                table.rows[key] = [
                    MetricCell(k=k, precision=precision_at_k(final, gold, k),
                               recall=recall_at_k(final, gold, k))
                    for k in cfg.k_values
                ]
        tables.append(table)
    return tables


def render_table(table: ResultTable, k: int) -> str:
    """Tab-separated table at one k: header line, column row, one row per paper."""
    lines = [f"{table.theme_name} Results (Precision@{k} / Recall@{k})"]
    lines.append("\t".join(["Paper"] + table.variants))
    lines.append(f"{table.model_id} Performance")
    for doc_id in table.doc_ids:
        cells = []
        for variant in table.variants:
            key = (doc_id, variant)
            if key in table.errors:
                cells.append(f"error: {table.errors[key]}")
            else:
                cells.append(table.cell(doc_id, variant, k).render())
        lines.append("\t".join([doc_id] + cells))
    return "\n".join(lines) + "\n"


def render_cells(tables: Sequence[ResultTable]) -> str:
    """Structured export: one cell per line across every table and k."""
    lines = ["doc_id\ttheme_id\tvariant\tk\tprecision\trecall"]
    for table in tables:
        for doc_id in table.doc_ids:
            for variant in table.variants:
                for cell in table.rows[(doc_id, variant)]:
                    p = "N/A" if cell.precision is None else repr(cell.precision)
                    r = "N/A" if cell.recall is None else repr(cell.recall)
                    lines.append(f"{doc_id}\t{table.theme_id}\t{variant}\t{cell.k}\t{p}\t{r}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class DifficultyReport:
    doc_id: str
    theme_id: str
    label: str  # "hard" | "medium" | "easy"
    gs_paragraphs: int
    gs_with_keyword: int
    ratio: float
    doc_paragraph_count: int
    doc_char_count: int
    easy_threshold: float = EASY_THRESHOLD

    @property
    def evidence(self) -> str:
        """Rendered as "paragraphs with keywords / gold paragraphs"."""
        return f"{self.gs_with_keyword}/{self.gs_paragraphs}"


def _contains_phrase(tokens: list[str], phrase_tokens: list[str]) -> bool:
    if not phrase_tokens or len(phrase_tokens) > len(tokens):
        return False
    first = phrase_tokens[0]
    for i, t in enumerate(tokens):
        if t == first and tokens[i:i + len(phrase_tokens)] == phrase_tokens:
            return True
    return False


def classify_difficulty(doc: Document, theme: Theme, gold_paragraph_ids: set[str],
                        corpus: CorpusStore, easy_threshold: float = EASY_THRESHOLD) -> DifficultyReport:
    """Label (document, theme) retrieval difficulty from keyword coverage.

    A gold paragraph "contains a keyword" when the keyword's token sequence
    appears contiguously in the paragraph's tokens, case-insensitively.
    """
    if not gold_paragraph_ids:
        raise DataError(f"difficulty undefined: no gold paragraphs for ({doc.doc_id}, {theme.theme_id})")
    keyword_tokens = [index_tokens(k) for k in theme.keywords]
    with_keyword = 0
    for pid in sorted(gold_paragraph_ids):
        tokens = index_tokens(corpus.passage(pid).text)
        if any(_contains_phrase(tokens, kt) for kt in keyword_tokens):
            with_keyword += 1
    total = len(gold_paragraph_ids)
    ratio = with_keyword / total
    if ratio == 0.0:
        label = "hard"
    elif ratio >= easy_threshold:
        label = "easy"
    else:
        label = "medium"
    return DifficultyReport(
        doc_id=doc.doc_id, theme_id=theme.theme_id, label=label,
        gs_paragraphs=total, gs_with_keyword=with_keyword, ratio=ratio,
        doc_paragraph_count=len(corpus.passages(Granularity.PARAGRAPH, doc.doc_id)),
        doc_char_count=len(doc.raw_text),
        easy_threshold=easy_threshold)


def render_difficulty(reports: Sequence[DifficultyReport]) -> str:
    lines = ["doc_id\ttheme_id\tlabel\tevidence\tratio\tdoc_paragraphs\tdoc_chars\teasy_threshold"]
    for r in reports:
        lines.append(
            f"{r.doc_id}\t{r.theme_id}\t{r.label}\t{r.evidence}\t{r.ratio:.4f}"
            f"\t{r.doc_paragraph_count}\t{r.doc_char_count}\t{r.easy_threshold}")
    return "\n".join(lines) + "\n"
