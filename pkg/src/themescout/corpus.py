"""Corpus ingestion, passage tokenization, themes and gold annotations.

The corpus store is a plain directory of UTF-8 files:

    documents.jsonl            one document per line
    passages.paragraph.jsonl   paragraph passages, document order
    passages.sentence.jsonl    sentence passages, document order
    gold.jsonl                 one annotation per (doc, theme)
    themes.yaml                theme definitions

Passages are immutable once created and their ids are a pure function of
the input bytes: a paragraph is `{doc_id}:p{ordinal:04d}`, a sentence is
`{parent_id}:s{ordinal:02d}`. Paragraph boundaries are runs of
whitespace-only lines; sentences split on `.!?` followed by whitespace and
an uppercase letter or digit, guarded by an abbreviation list. Both rules
are deliberately model-free so that two ingestions of byte-identical input
produce byte-identical ids and spans.

Gold annotations are authoritative at paragraph granularity; the
sentence-level gold set is derived as every sentence whose character span
intersects a gold paragraph's span.
"""

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional

import yaml

from .errors import DataError, StoreError
from .text import index_tokens, normalize_text, punct_digit_fraction


class Granularity(str, Enum):
    PARAGRAPH = "paragraph"
    SENTENCE = "sentence"


DEFAULT_ABBREVIATIONS = ("Fig.", "et al.", "e.g.", "i.e.", "Dr.", "No.", "vs.")

# A paragraph block: consecutive lines that each contain a non-space char.
_BLOCK_RE = re.compile(r"(?:[^\n]*\S[^\n]*)(?:\n[^\n]*\S[^\n]*)*")
_TERMINATOR_RE = re.compile(r"[.!?]+")

MIN_PASSAGE_TOKENS = 3
TABULAR_FRACTION = 0.3


@dataclass
class Document:
    doc_id: str
    title: str
    raw_text: str
    metadata: dict


@dataclass(frozen=True)
class Passage:
    passage_id: str
    doc_id: str
    granularity: Granularity
    text: str
    char_span: tuple[int, int]
    parent_id: Optional[str] = None
    tabular_like: bool = False
    short: bool = False


@dataclass
class Theme:
    theme_id: str
    name: str
    keywords: list[str]
    questions: list[str]

    def __post_init__(self):
        if not self.keywords:
            raise DataError(f"theme {self.theme_id!r} has no keywords")
        if not self.questions:
            raise DataError(f"theme {self.theme_id!r} has no questions")

    @property
    def concat_query(self) -> str:
        return " ".join(self.keywords)


@dataclass
class GoldAnnotation:
    doc_id: str
    theme_id: str
    gold_passage_ids: set[str] = field(default_factory=set)
    highlights: list[tuple[int, int]] = field(default_factory=list)
    gold_summary: Optional[str] = None


def _flags(text: str) -> tuple[bool, bool]:
    tabular = punct_digit_fraction(text) > TABULAR_FRACTION
    short = len(index_tokens(text)) < MIN_PASSAGE_TOKENS
    return tabular, short


def tokenize_paragraphs(doc: Document) -> list[Passage]:
    """Split a document into paragraph passages on blank-line boundaries."""
    passages = []
    for i, m in enumerate(_BLOCK_RE.finditer(doc.raw_text)):
        seg = m.group(0)
        start = m.start() + (len(seg) - len(seg.lstrip()))
        end = m.end() - (len(seg) - len(seg.rstrip()))
        text = doc.raw_text[start:end]
        tabular, short = _flags(text)
        passages.append(
            Passage(
                passage_id=f"{doc.doc_id}:p{i:04d}",
                doc_id=doc.doc_id,
                granularity=Granularity.PARAGRAPH,
                text=text,
                char_span=(start, end),
                tabular_like=tabular,
                short=short,
            )
        )
    return passages


def _is_guarded(prefix: str, abbreviations: tuple[str, ...]) -> bool:
    low = prefix.lower()
    for abbr in abbreviations:
        a = abbr.lower()
        if low.endswith(a) and (len(low) == len(a) or not low[-len(a) - 1].isalnum()):
            return True
    return False


def _sentence_breaks(text: str, abbreviations: tuple[str, ...]) -> list[int]:
    """Offsets just past each terminator run at which a new sentence starts."""
    breaks = []
    for m in _TERMINATOR_RE.finditer(text):
        end = m.end()
        rest = text[end:]
        stripped = rest.lstrip()
        if not stripped or len(stripped) == len(rest):
            continue  # no whitespace after the run, or end of paragraph
        nxt = stripped[0]
        if not (nxt.isupper() or nxt.isdigit()):
            continue
        if _is_guarded(text[:end], abbreviations):
            continue
        breaks.append(end)
    return breaks


def tokenize_sentences(p: Passage, abbreviations: tuple[str, ...] = DEFAULT_ABBREVIATIONS) -> list[Passage]:
    """Split a paragraph passage into sentence passages.

    Sentence spans tile the paragraph in order without overlap; the gaps
    between consecutive spans are exactly the inter-sentence whitespace, so
    joining the pieces reconstructs the paragraph.
    """
    if p.granularity is not Granularity.PARAGRAPH:
        raise DataError(f"cannot sentence-tokenize {p.granularity.value} passage {p.passage_id}")
    text = p.text
    bounds = []
    start = 0
    for brk in _sentence_breaks(text, abbreviations):
        bounds.append((start, brk))
        rest = text[brk:]
        start = brk + (len(rest) - len(rest.lstrip()))
    bounds.append((start, len(text)))

    base = p.char_span[0]
    out = []
    for j, (s, e) in enumerate(bounds):
        seg = text[s:e]
        tabular, short = _flags(seg)
        out.append(
            Passage(
                passage_id=f"{p.passage_id}:s{j:02d}",
                doc_id=p.doc_id,
                granularity=Granularity.SENTENCE,
                text=seg,
                char_span=(base + s, base + e),
                parent_id=p.passage_id,
                tabular_like=tabular,
                short=short,
            )
        )
    return out


def load_themes(theme_file: Path) -> list[Theme]:
    """Load theme definitions from a YAML file of per-theme blocks."""
    try:
        raw = yaml.safe_load(Path(theme_file).read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise DataError(f"theme file {theme_file} does not parse: {e}") from e
    if not isinstance(raw, list):
        raise DataError(f"theme file {theme_file} must contain a list of theme blocks")
    themes = []
    seen = set()
    for block in raw:
        for key in ("id", "name", "keywords", "questions"):
            if key not in block:
                raise DataError(f"theme block missing field {key!r}: {block!r}")
        if block["id"] in seen:
            raise DataError(f"duplicate theme_id {block['id']!r}")
        seen.add(block["id"])
        themes.append(
            Theme(
                theme_id=block["id"],
                name=block["name"],
                keywords=[str(k) for k in block["keywords"]],
                questions=[str(q) for q in block["questions"]],
            )
        )
    return themes


class CorpusStore:
    """In-memory corpus with directory persistence.

    Single-writer, multi-reader: mutation happens through ingest_document /
    attach_gold / set_themes; passages are frozen dataclasses.
    """

    def __init__(self):
        self.documents: dict[str, Document] = {}
        self.themes: dict[str, Theme] = {}
        self.gold: dict[tuple[str, str], GoldAnnotation] = {}
        self._passages: dict[Granularity, dict[str, Passage]] = {
            Granularity.PARAGRAPH: {},
            Granularity.SENTENCE: {},
        }
        self._by_doc: dict[tuple[str, Granularity], list[str]] = {}
        self._gold_sentences: dict[tuple[str, str], set[str]] = {}

    # -- ingestion ---------------------------------------------------------

    def ingest_document(self, raw_text: str, doc_id: str, metadata: Optional[dict] = None, title: str = "") -> Document:
        if doc_id in self.documents:
            raise DataError(f"duplicate doc_id {doc_id!r}")
        text = normalize_text(raw_text)
        if not text.strip():
            raise DataError(f"document {doc_id!r} is empty after normalization")
        doc = Document(doc_id=doc_id, title=title, raw_text=text, metadata=dict(metadata or {}))
        paragraphs = tokenize_paragraphs(doc)
        sentences = [s for p in paragraphs for s in tokenize_sentences(p)]
        self.documents[doc_id] = doc
        for gran, group in ((Granularity.PARAGRAPH, paragraphs), (Granularity.SENTENCE, sentences)):
            self._by_doc[(doc_id, gran)] = [p.passage_id for p in group]
            for p in group:
                self._passages[gran][p.passage_id] = p
        return doc

    def set_themes(self, themes: Iterable[Theme]) -> None:
        self.themes = {}
        for t in themes:
            if t.theme_id in self.themes:
                raise DataError(f"duplicate theme_id {t.theme_id!r}")
            self.themes[t.theme_id] = t

    # -- lookups -----------------------------------------------------------

    def passage(self, passage_id: str) -> Passage:
        for gran in (Granularity.PARAGRAPH, Granularity.SENTENCE):
            p = self._passages[gran].get(passage_id)
            if p is not None:
                return p
        raise DataError(f"unknown passage_id {passage_id!r}")

    def passages(self, granularity: Granularity, doc_id: Optional[str] = None) -> list[Passage]:
        if doc_id is not None:
            ids = self._by_doc.get((doc_id, granularity), [])
            return [self._passages[granularity][pid] for pid in ids]
        out = []
        for d in sorted(self.documents):
            out.extend(self._passages[granularity][pid] for pid in self._by_doc[(d, granularity)])
        return out

    # -- gold --------------------------------------------------------------

    def attach_gold(self, annotations: Iterable[GoldAnnotation]) -> None:
        """Validate and attach a batch of gold annotations.

        The whole batch is rejected if any annotation references an unknown
        document or passage, or places a highlight outside its gold
        paragraphs; the error lists every offender.
        """
        batch = list(annotations)
        problems = []
        paragraphs = self._passages[Granularity.PARAGRAPH]
        for ann in batch:
            if ann.doc_id not in self.documents:
                problems.append(f"unknown doc_id {ann.doc_id!r}")
                continue
            spans = []
            for pid in sorted(ann.gold_passage_ids):
                p = paragraphs.get(pid)
                if p is None or p.doc_id != ann.doc_id:
                    problems.append(f"dangling passage_id {pid!r} in ({ann.doc_id}, {ann.theme_id})")
                else:
                    spans.append(p.char_span)
            for hs, he in ann.highlights:
                if not any(s <= hs and he <= e for s, e in spans):
                    problems.append(f"highlight ({hs}, {he}) outside gold passages in ({ann.doc_id}, {ann.theme_id})")
        if problems:
            raise DataError("gold batch rejected: " + "; ".join(problems))

        for ann in batch:
            key = (ann.doc_id, ann.theme_id)
            self.gold[key] = ann
            self._gold_sentences[key] = self._derive_sentence_gold(ann)

    def _derive_sentence_gold(self, ann: GoldAnnotation) -> set[str]:
        spans = [self._passages[Granularity.PARAGRAPH][pid].char_span for pid in ann.gold_passage_ids]
        derived = set()
        for sid in self._by_doc.get((ann.doc_id, Granularity.SENTENCE), []):
            s = self._passages[Granularity.SENTENCE][sid]
            if any(s.char_span[0] < e and start < s.char_span[1] for start, e in spans):
                derived.add(sid)
        return derived

    def gold_ids(self, doc_id: str, theme_id: str, granularity: Granularity) -> set[str]:
        key = (doc_id, theme_id)
        ann = self.gold.get(key)
        if ann is None:
            return set()
        if granularity is Granularity.PARAGRAPH:
            return set(ann.gold_passage_ids)
        return set(self._gold_sentences.get(key, set()))

    def highlight_texts(self, doc_id: str, theme_id: str) -> list[tuple[str, str]]:
        """Highlight snippets for (doc, theme) in document order.

        Returns (containing paragraph id, snippet text) pairs. Falls back to
        the gold paragraphs themselves when the annotation carries no
        explicit highlight spans.
        """
        ann = self.gold.get((doc_id, theme_id))
        if ann is None:
            return []
        doc = self.documents[doc_id]
        paragraphs = self._passages[Granularity.PARAGRAPH]
        if ann.highlights:
            out = []
            for hs, he in sorted(ann.highlights):
                parent = next(
                    pid for pid in sorted(ann.gold_passage_ids)
                    if paragraphs[pid].char_span[0] <= hs and he <= paragraphs[pid].char_span[1]
                )
                out.append((parent, doc.raw_text[hs:he]))
            return out
        return [(pid, paragraphs[pid].text) for pid in sorted(ann.gold_passage_ids)]

    # -- persistence ---------------------------------------------------------

    def save(self, directory: Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with (directory / "documents.jsonl").open("w", encoding="utf-8") as f:
            for doc_id in sorted(self.documents):
                d = self.documents[doc_id]
                f.write(json.dumps(
                    {"doc_id": d.doc_id, "title": d.title, "raw_text": d.raw_text, "metadata": d.metadata},
                    ensure_ascii=False) + "\n")
        for gran in (Granularity.PARAGRAPH, Granularity.SENTENCE):
            with (directory / f"passages.{gran.value}.jsonl").open("w", encoding="utf-8") as f:
                for doc_id in sorted(self.documents):
                    for pid in self._by_doc[(doc_id, gran)]:
                        p = self._passages[gran][pid]
                        f.write(json.dumps(
                            {"passage_id": p.passage_id, "doc_id": p.doc_id, "granularity": p.granularity.value,
                             "parent_id": p.parent_id, "text": p.text, "char_span": list(p.char_span),
                             "tabular_like": p.tabular_like, "short": p.short},
                            ensure_ascii=False) + "\n")
        with (directory / "gold.jsonl").open("w", encoding="utf-8") as f:
            for key in sorted(self.gold):
                ann = self.gold[key]
                f.write(json.dumps(
                    {"doc_id": ann.doc_id, "theme_id": ann.theme_id,
                     "gold_passage_ids": sorted(ann.gold_passage_ids),
                     "highlights": [list(h) for h in ann.highlights],
                     "gold_summary": ann.gold_summary},
                    ensure_ascii=False) + "\n")
        with (directory / "themes.yaml").open("w", encoding="utf-8") as f:
            yaml.safe_dump(
                [{"id": t.theme_id, "name": t.name, "keywords": t.keywords, "questions": t.questions}
                 for t in self.themes.values()],
                f, allow_unicode=True, sort_keys=False)

    @classmethod
    def load(cls, directory: Path) -> "CorpusStore":
        directory = Path(directory)
        store = cls()
        doc_file = directory / "documents.jsonl"
        if not doc_file.exists():
            raise StoreError(f"no corpus store at {directory} (missing documents.jsonl)")
        for line in doc_file.read_text(encoding="utf-8").splitlines():
            rec = json.loads(line)
            store.ingest_document(rec["raw_text"], rec["doc_id"], rec.get("metadata"), rec.get("title", ""))
        themes_file = directory / "themes.yaml"
        if themes_file.exists():
            store.set_themes(load_themes(themes_file))
        gold_file = directory / "gold.jsonl"
        if gold_file.exists():
            anns = []
            for line in gold_file.read_text(encoding="utf-8").splitlines():
                rec = json.loads(line)
                anns.append(GoldAnnotation(
                    doc_id=rec["doc_id"], theme_id=rec["theme_id"],
                    gold_passage_ids=set(rec["gold_passage_ids"]),
                    highlights=[tuple(h) for h in rec.get("highlights", [])],
                    gold_summary=rec.get("gold_summary")))
            store.attach_gold(anns)
        return store
