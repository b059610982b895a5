"""Theme-targeted document-level summaries via the /generate endpoint.

Input is either the annotated highlight snippets for a (document, theme)
pair, or the reranked top-k passages for the theme's first key question
restricted to that document. Either way the exact source passages are
recorded on the resulting Summary.
"""

import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from . import remote
from .corpus import CorpusStore
from .errors import DataError
from .rerank import ScorerSpec, rerank
from .retrieval import Index, RankedEntry, RankedList, Stage, retrieve
from .text import truncate_at_token_boundary

INPUT_CHAR_CAP = 4000
DEFAULT_POOL = 100

DEFAULT_TEMPLATE = (
    "Summarise the following passages with respect to {theme} in one sentence:\n"
    "{passages}\n"
    "Summary:"
)


@dataclass(frozen=True)
class SummaryRequest:
    doc_id: str
    theme_id: str
    source: str = "highlights"  # "highlights" | "retrieved"
    top_k: int = 5              # only used for source="retrieved"
    prompt_template: str = DEFAULT_TEMPLATE
    max_new_tokens: int = 60
    model: Optional[str] = None

    def __post_init__(self):
        if self.source not in ("highlights", "retrieved"):
            raise DataError(f"unknown summary source {self.source!r}")
        if self.max_new_tokens < 1:
            raise DataError("max_new_tokens must be >= 1")
        for slot in ("{theme}", "{passages}"):
            if slot not in self.prompt_template:
                raise DataError(f"prompt template is missing the {slot} slot")


@dataclass
class Summary:
    doc_id: str
    theme_id: str
    text: str
    source_passage_ids: list[str]
    model: str
    created_at: str
    truncated_input: bool = False


@dataclass
class AssembledInput:
    passage_ids: list[str]
    texts: list[str]
    concatenated: str
    truncated: bool = False


def assemble_input(req: SummaryRequest, corpus: CorpusStore,
                   index: Optional[Index] = None, scorer: Optional[ScorerSpec] = None) -> AssembledInput:
    """Collect and concatenate the passages a summary will be built from.

    Highlights come back in document order; retrieved mode reranks the
    theme's first key question over the document's passages. The
    concatenation is newline-joined and capped at 4000 characters at a
    token boundary.
    """
    if req.theme_id not in corpus.themes:
        raise DataError(f"unknown theme_id {req.theme_id!r}")
    if req.doc_id not in corpus.documents:
        raise DataError(f"unknown doc_id {req.doc_id!r}")

    if req.source == "highlights":
        pairs = corpus.highlight_texts(req.doc_id, req.theme_id)
        if not pairs:
            raise DataError(
                f"no highlights for ({req.doc_id}, {req.theme_id}); "
                "summarisation needs annotated or retrieved passages")
        ids = [pid for pid, _ in pairs]
        texts = [text for _, text in pairs]
    else:
        if index is None or scorer is None:
            raise DataError("retrieved-source summaries need an index and a scorer")
        question = corpus.themes[req.theme_id].questions[0]
        candidates = retrieve(index, question, DEFAULT_POOL)
        doc_pids = {p.passage_id for p in corpus.passages(index.config.granularity, req.doc_id)}
        kept = [e for e in candidates.entries if e.passage_id in doc_pids]
        if not kept:
            raise DataError(f"retrieval found nothing in {req.doc_id!r} for theme {req.theme_id!r}")
        subset = RankedList(
            query=candidates.query, granularity=candidates.granularity,
            entries=[RankedEntry(rank=i + 1, passage_id=e.passage_id, score=e.score)
                     for i, e in enumerate(kept)],
            stage=Stage.RETRIEVED)
        final = rerank(subset, scorer, req.top_k, {p.passage_id: p for p in corpus.passages(index.config.granularity, req.doc_id)})
        ids = final.passage_ids()
        texts = [corpus.passage(pid).text for pid in ids]

    joined = "\n".join(texts)
    capped = truncate_at_token_boundary(joined, INPUT_CHAR_CAP)
    return AssembledInput(passage_ids=ids, texts=texts, concatenated=capped,
                          truncated=len(capped) < len(joined))


def summarise_theme(req: SummaryRequest, endpoint: ScorerSpec, corpus: CorpusStore,
                    index: Optional[Index] = None, scorer: Optional[ScorerSpec] = None,
                    created_at: Optional[str] = None) -> Summary:
    """One /generate call over the rendered template; empty output is an error."""
    if endpoint.kind != "remote":
        raise DataError("summarisation needs a remote generator endpoint")
    assembled = assemble_input(req, corpus, index=index, scorer=scorer)
    theme = corpus.themes[req.theme_id]
    prompt = req.prompt_template.replace("{theme}", theme.name).replace("{passages}", assembled.concatenated)
    text, _ = remote.generate(endpoint.endpoint, prompt, req.max_new_tokens, 0.0, req.model, endpoint.timeout_ms)
    text = text.strip()
    if not text:
        raise DataError(f"generator returned an empty summary for ({req.doc_id}, {req.theme_id})")
    stamp = created_at or datetime.now(timezone.utc).isoformat(timespec="seconds")
    return Summary(
        doc_id=req.doc_id, theme_id=req.theme_id, text=text,
        source_passage_ids=assembled.passage_ids,
        model=req.model or "default", created_at=stamp,
        truncated_input=assembled.truncated)


def append_summary(path: Path, summary: Summary) -> None:
    """Append one summary to the store's summaries.jsonl."""
    with Path(path).open("a", encoding="utf-8") as f:
        f.write(json.dumps({
            "doc_id": summary.doc_id, "theme_id": summary.theme_id, "text": summary.text,
            "source_passage_ids": summary.source_passage_ids, "model": summary.model,
            "created_at": summary.created_at, "truncated_input": summary.truncated_input,
        }, ensure_ascii=False) + "\n")


def read_summaries(path: Path) -> list[Summary]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        rec = json.loads(line)
        out.append(Summary(
            doc_id=rec["doc_id"], theme_id=rec["theme_id"], text=rec["text"],
            source_passage_ids=list(rec["source_passage_ids"]), model=rec["model"],
            created_at=rec["created_at"], truncated_input=rec.get("truncated_input", False)))
    return out
