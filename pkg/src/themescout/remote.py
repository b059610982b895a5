"""HTTP client for the shared scorer/generator wire protocol.

Two endpoints, JSON over UTF-8, HTTP 200 on success only:

    POST /score     {"query": str, "passages": [str, ...], "model": str|null}
                 -> {"scores": [number, ...]}          arity == len(passages)
    POST /generate  {"prompt": str, "max_new_tokens": int,
                     "temperature": number, "model": str|null}
                 -> {"text": str, "mean_logprob": number|null}

A failed request is retried once; after that the caller gets a
RemoteServiceError naming the endpoint. A 200 response that does not match
the shape above raises ProtocolError carrying a payload excerpt.
"""

import json
from typing import Optional

import requests

from .errors import ProtocolError, RemoteServiceError

_EXCERPT_CHARS = 200


def _excerpt(payload) -> str:
    text = payload if isinstance(payload, str) else json.dumps(payload, ensure_ascii=False)
    return text[:_EXCERPT_CHARS]


def _post(endpoint: str, path: str, body: dict, timeout_ms: int) -> dict:
    url = endpoint.rstrip("/") + path
    timeout = timeout_ms / 1000.0
    last_exc = None
    for _ in range(2):  # one retry
        try:
            resp = requests.post(url, json=body, timeout=timeout)
        except requests.RequestException as e:
            last_exc = e
            continue
        if resp.status_code != 200:
            last_exc = RemoteServiceError(endpoint, f"HTTP {resp.status_code} from {path}")
            continue
        try:
            return resp.json()
        except ValueError:
            raise ProtocolError(endpoint, f"non-JSON response from {path}", _excerpt(resp.text))
    if isinstance(last_exc, RemoteServiceError):
        raise last_exc
    raise RemoteServiceError(endpoint, f"{path} unreachable after retry: {last_exc}")


def score(endpoint: str, query: str, passages: list[str], model: Optional[str], timeout_ms: int) -> list[float]:
    body = {"query": query, "passages": passages, "model": model}
    payload = _post(endpoint, "/score", body, timeout_ms)
    scores = payload.get("scores") if isinstance(payload, dict) else None
    if not isinstance(scores, list) or not all(isinstance(s, (int, float)) for s in scores):
        raise ProtocolError(endpoint, "response missing numeric 'scores' array", _excerpt(payload))
    if len(scores) != len(passages):
        raise ProtocolError(
            endpoint,
            f"score arity mismatch: {len(scores)} scores for {len(passages)} passages",
            _excerpt(payload),
        )
    return [float(s) for s in scores]


def generate(endpoint: str, prompt: str, max_new_tokens: int, temperature: float,
             model: Optional[str], timeout_ms: int) -> tuple[str, Optional[float]]:
    body = {"prompt": prompt, "max_new_tokens": max_new_tokens, "temperature": temperature, "model": model}
    payload = _post(endpoint, "/generate", body, timeout_ms)
    if not isinstance(payload, dict) or not isinstance(payload.get("text"), str):
        raise ProtocolError(endpoint, "response missing 'text' string", _excerpt(payload))
    logprob = payload.get("mean_logprob")
    if logprob is not None and not isinstance(logprob, (int, float)):
        raise ProtocolError(endpoint, "'mean_logprob' must be a number or null", _excerpt(payload))
    return payload["text"], None if logprob is None else float(logprob)
