"""Shared fixtures: the six-document corpus, gold annotations anchored by
substring (so char spans never drift from the texts), and a deterministic
in-process mock of the /score + /generate wire protocol."""

import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest
import yaml

from themescout.augment import default_seed_pairs
from themescout.corpus import CorpusStore, GoldAnnotation, Granularity, load_themes

FIXTURES = Path(__file__).parent / "fixtures"
DOCS_DIR = FIXTURES / "docs"
THEMES_FILE = Path(__file__).parents[1] / "src" / "themescout" / "data" / "themes.yaml"

# (doc_id, theme_id) -> gold paragraph ordinals, highlight substrings, summary
GOLD_SPEC = {
    ("maryland-qris", "study_design"): {
        "paragraphs": [2, 3],
        "highlights": [
            "The study design is a sequential explanatory mixed-method arrangement.",
            "Data collection ran for fourteen months.",
        ],
        "summary": "A sequential explanatory mixed-method study pairing multilevel regressions with follow-up interviews.",
    },
    ("maryland-qris", "target_population"): {"paragraphs": [4]},
    ("maryland-qris", "financial_detail_and_costs"): {"paragraphs": [7]},
    ("sib-cases", "study_design"): {"paragraphs": [2, 3, 4]},
    ("educate-girls", "study_design"): {"paragraphs": [2]},
    ("educate-girls", "person_level_outcomes"): {
        "paragraphs": [3, 4],
        "highlights": [
            "students in treatment schools gained an additional 1.08 assessment levels",
            "768 out-of-school girls had enrolled, 92% of those identified as eligible",
        ],
        "summary": "Treatment schools outperformed controls and the enrolment target was exceeded.",
    },
    ("educate-girls", "financial_detail_and_costs"): {"paragraphs": [5, 6]},
    ("cataract-bond", "study_design"): {"paragraphs": [2, 3]},
    ("colombia-sib", "target_population"): {"paragraphs": [2, 3]},
    ("colombia-sib", "financial_detail_and_costs"): {"paragraphs": [4]},
    ("kemito-ene", "study_design"): {"paragraphs": [2, 3]},
    ("kemito-ene", "person_level_outcomes"): {"paragraphs": [4]},
}

EXPECTED_DIFFICULTY = {
    ("maryland-qris", "study_design"): ("easy", 2, 2),
    ("maryland-qris", "target_population"): ("easy", 1, 1),
    ("maryland-qris", "financial_detail_and_costs"): ("easy", 1, 1),
    ("sib-cases", "study_design"): ("medium", 1, 3),
    ("educate-girls", "study_design"): ("easy", 1, 1),
    ("educate-girls", "person_level_outcomes"): ("easy", 2, 2),
    ("educate-girls", "financial_detail_and_costs"): ("easy", 1, 2),
    ("cataract-bond", "study_design"): ("hard", 0, 2),
    ("colombia-sib", "target_population"): ("easy", 1, 2),
    ("colombia-sib", "financial_detail_and_costs"): ("easy", 1, 1),
    ("kemito-ene", "study_design"): ("hard", 0, 2),
    ("kemito-ene", "person_level_outcomes"): ("hard", 0, 1),
}


def build_gold(store: CorpusStore) -> list[GoldAnnotation]:
    annotations = []
    for (doc_id, theme_id), spec in GOLD_SPEC.items():
        doc = store.documents[doc_id]
        paragraphs = store.passages(Granularity.PARAGRAPH, doc_id)
        gold_ids = {paragraphs[i].passage_id for i in spec["paragraphs"]}
        highlights = []
        for needle in spec.get("highlights", []):
            start = doc.raw_text.find(needle)
            assert start >= 0, f"highlight anchor not found in {doc_id}: {needle!r}"
            highlights.append((start, start + len(needle)))
        annotations.append(GoldAnnotation(
            doc_id=doc_id, theme_id=theme_id, gold_passage_ids=gold_ids,
            highlights=highlights, gold_summary=spec.get("summary")))
    return annotations


def build_store() -> CorpusStore:
    store = CorpusStore()
    for txt in sorted(DOCS_DIR.glob("*.txt")):
        store.ingest_document(txt.read_text(encoding="utf-8"), txt.stem)
    store.set_themes(load_themes(THEMES_FILE))
    store.attach_gold(build_gold(store))
    return store


@pytest.fixture(scope="session")
def store() -> CorpusStore:
    return build_store()


@pytest.fixture()
def fresh_store() -> CorpusStore:
    return build_store()


def write_gold_jsonl(store: CorpusStore, path: Path) -> None:
    with path.open("w", encoding="utf-8") as f:
        for ann in build_gold(store):
            f.write(json.dumps({
                "doc_id": ann.doc_id, "theme_id": ann.theme_id,
                "gold_passage_ids": sorted(ann.gold_passage_ids),
                "highlights": [list(h) for h in ann.highlights],
                "gold_summary": ann.gold_summary,
            }, ensure_ascii=False) + "\n")


def write_run_config(path: Path, corpus_dir: Path, **overrides) -> Path:
    cfg = {
        "corpus_dir": str(corpus_dir),
        "theme_file": str(THEMES_FILE),
        "seed": 7,
        "index": {"granularity": "paragraph"},
        "scorer": {"kind": "lexical"},
        "eval": {"k_values": list(range(1, 21)), "granularity": "paragraph"},
    }
    cfg.update(overrides)
    path.write_text(yaml.safe_dump(cfg, sort_keys=False), encoding="utf-8")
    return path


# -- deterministic mock of the wire protocol ---------------------------------


def _stable_logprob(text: str) -> float:
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return -(int.from_bytes(digest[:4], "big") % 4000) / 1000.0 - 0.25


def extract_target_document(prompt: str) -> str:
    """The text of the final Document block of a rendered prompt."""
    block = prompt.rsplit("Document: ", 1)[1]
    return block.rsplit("\n\nRelevant Query:", 1)[0]


def mock_generate_text(prompt: str) -> str:
    """Deterministic stand-in generator.

    Query-generation prompts (with Document blocks) yield the first five
    tokens of the final document; anything else is treated as a summary
    prompt and echoes the first sentence of its passages block.
    """
    if "Document: " in prompt:
        return " ".join(extract_target_document(prompt).split()[:5])
    body = prompt.split("\n", 1)[1] if "\n" in prompt else prompt
    body = body.rsplit("\nSummary:", 1)[0]
    first = body.split(".", 1)[0].strip()
    return first + "." if first else body.strip()


def mock_score(passage: str) -> float:
    return len(passage) / 1000.0


class _Handler(BaseHTTPRequestHandler):
    server_version = "mockscorer/0"

    def log_message(self, *args):
        pass

    def _read(self):
        length = int(self.headers.get("Content-Length", 0))
        return json.loads(self.rfile.read(length))

    def _send(self, code, payload):
        body = json.dumps(payload).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self):
        mode = self.server.mode
        self.server.calls.append(self.path)
        if mode == "down":
            self._send(500, {"error": "synthetic failure"})
            return
        req = self._read()
        self.server.requests.append((self.path, req))
        if mode == "malformed":
            self._send(200, {"unexpected": "shape"})
            return
        if self.path == "/score":
            scores = [mock_score(p) for p in req["passages"]]
            if mode == "arity_bug":
                scores = scores[:-1]
            self._send(200, {"scores": scores})
        elif self.path == "/generate":
            text = mock_generate_text(req["prompt"])
            logprob = None if mode == "no_logprob" else _stable_logprob(text)
            self._send(200, {"text": text, "mean_logprob": logprob})
        elif self.path == "/health":
            self._send(200, {"score_model": "mock", "generate_model": "mock"})
        else:
            self._send(404, {"error": "unknown path"})


class MockService:
    def __init__(self):
        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
        self.httpd.mode = "normal"
        self.httpd.calls = []
        self.httpd.requests = []
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()
        self.endpoint = f"http://127.0.0.1:{self.httpd.server_address[1]}"

    @property
    def mode(self):
        return self.httpd.mode

    @mode.setter
    def mode(self, value):
        self.httpd.mode = value

    @property
    def requests(self):
        return self.httpd.requests

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture()
def mock_service():
    service = MockService()
    yield service
    service.close()


@pytest.fixture(scope="session")
def seed_pairs():
    return default_seed_pairs()
