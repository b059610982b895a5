"""Scoring and generation backends.

Model identifiers select the backend:

    builtin:overlap     deterministic token-overlap relevance scorer
    builtin:extractive  deterministic extractive greedy "generator"
    hf:<checkpoint>     cross-encoder (scoring) or seq2seq/causal LM
                        (generation) loaded from a local checkpoint

Every backend is loaded at startup; a backend that cannot load raises
immediately so a misconfigured service never comes up half-working. The
builtin backends are pure functions of their inputs, which makes the
whole service deterministic and dependency-free: they are the "tiny
model" used in tests and CI. Inference mode everywhere: no sampling, no
request-to-request state.
"""

import hashlib
import re

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def _tokens(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


class BuiltinOverlapScorer:
    """Relevance = query-term overlap, with a stable tie-breaking jitter.

    The jitter is a hash of the passage text scaled three orders of
    magnitude below the overlap signal, so equal-overlap passages get
    distinct but reproducible scores and duplicates score identically.
    """

    model_id = "builtin:overlap"

    def score(self, query: str, passages: list[str]) -> list[float]:
        q = set(_tokens(query))
        out = []
        for passage in passages:
            if not q:
                overlap = 0.0
            else:
                overlap = len(q & set(_tokens(passage))) / len(q)
            digest = hashlib.sha256(passage.encode("utf-8")).digest()
            jitter = (int.from_bytes(digest[:4], "big") % 1000) / 1_000_000.0
            out.append(overlap + jitter)
        return out


class BuiltinExtractiveGenerator:
    """Deterministic stand-in generator.

    For few-shot query-generation prompts (Document blocks followed by an
    unanswered query label) it returns the leading tokens of the final
    document; for anything else, the leading tokens of the prompt's last
    non-empty line block. mean_logprob is a stable hash-derived negative
    number, so downstream score filtering has a deterministic signal.
    """

    model_id = "builtin:extractive"

    def generate(self, prompt: str, max_new_tokens: int, temperature: float) -> tuple[str, float]:
        source = self._target_text(prompt)
        tokens = source.split()
        text = " ".join(tokens[:max(1, max_new_tokens)])
        digest = hashlib.sha256(text.encode("utf-8")).digest()
        mean_logprob = -(int.from_bytes(digest[:4], "big") % 4000) / 1000.0 - 0.25
        return text, mean_logprob

    @staticmethod
    def _target_text(prompt: str) -> str:
        if "Document: " in prompt:
            block = prompt.rsplit("Document: ", 1)[1]
            return block.rsplit("\n\nRelevant Query:", 1)[0]
        body = prompt.split("\n", 1)[1] if "\n" in prompt else prompt
        return body.rsplit("\nSummary:", 1)[0].strip() or prompt


class CrossEncoderScorer:
    """Hugging Face cross-encoder; loaded eagerly, greedy inference."""

    def __init__(self, checkpoint: str, device: str = "cpu"):
        from sentence_transformers import CrossEncoder  # deferred heavy import
        self.model_id = f"hf:{checkpoint}"
        self._model = CrossEncoder(checkpoint, device=device)

    def score(self, query: str, passages: list[str]) -> list[float]:
        preds = self._model.predict([(query, p) for p in passages])
        return [float(x) for x in preds]


class Seq2SeqGenerator:
    """Hugging Face text2text generator with greedy decoding at t=0."""

    def __init__(self, checkpoint: str, device: str = "cpu"):
        from transformers import AutoModelForSeq2SeqLM, AutoTokenizer
        self.model_id = f"hf:{checkpoint}"
        self._tokenizer = AutoTokenizer.from_pretrained(checkpoint)
        self._model = AutoModelForSeq2SeqLM.from_pretrained(checkpoint).to(device)
        self._device = device

    def generate(self, prompt: str, max_new_tokens: int, temperature: float) -> tuple[str, None]:
        import torch
        inputs = self._tokenizer(prompt, return_tensors="pt", truncation=True).to(self._device)
        do_sample = temperature > 0
        with torch.inference_mode():
            output = self._model.generate(
                **inputs, max_new_tokens=max_new_tokens,
                do_sample=do_sample,
                temperature=temperature if do_sample else None)
        text = self._tokenizer.decode(output[0], skip_special_tokens=True)
        return text, None


def load_score_backend(model_id: str, device: str = "cpu"):
    if model_id == "builtin:overlap":
        return BuiltinOverlapScorer()
    if model_id.startswith("hf:"):
        return CrossEncoderScorer(model_id[len("hf:"):], device=device)
    raise ValueError(f"unknown score model {model_id!r}")


def load_generate_backend(model_id: str, device: str = "cpu"):
    if model_id == "builtin:extractive":
        return BuiltinExtractiveGenerator()
    if model_id.startswith("hf:"):
        return Seq2SeqGenerator(model_id[len("hf:"):], device=device)
    raise ValueError(f"unknown generate model {model_id!r}")
