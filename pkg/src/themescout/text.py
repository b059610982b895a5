"""Text normalization and the shared token rule.

Every component that tokenizes free text (index construction, lexical
scoring, keyword matching, passage flags) goes through `index_tokens` so
that "term" means the same thing everywhere: maximal runs of Unicode
alphanumeric characters, optionally lowercased, with stopwords dropped.
"""

import re
import unicodedata

# Unicode letters and digits; underscore is excluded on purpose.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

_PUNCT_OR_DIGIT_RE = re.compile(r"[\d!-/:-@\[-`{-~]")


def normalize_text(raw: str) -> str:
    """NFC-normalize and force "\\n" line endings."""
    text = unicodedata.normalize("NFC", raw)
    return text.replace("\r\n", "\n").replace("\r", "\n")


def index_tokens(text: str, lowercase: bool = True, stopwords: frozenset[str] = frozenset()) -> list[str]:
    if lowercase:
        text = text.lower()
    tokens = _TOKEN_RE.findall(text)
    if stopwords:
        tokens = [t for t in tokens if t not in stopwords]
    return tokens


def truncate_at_token_boundary(text: str, max_chars: int) -> str:
    """Cut `text` to at most `max_chars` characters without splitting a token.

    Backtracks from the cut point to the last token boundary; if the first
    token alone exceeds the limit, cuts it hard at `max_chars`.
    """
    if max_chars < 1:
        raise ValueError("max_chars must be >= 1")
    if len(text) <= max_chars:
        return text
    head = text[:max_chars]
    if _boundary(text[max_chars - 1], text[max_chars]):
        return head.rstrip()
    cut = _rfind_boundary(head)
    return (head[:cut] if cut > 0 else head).rstrip()


def _boundary(left: str, right: str) -> bool:
    return not (_is_token_char(left) and _is_token_char(right))


def _is_token_char(ch: str) -> bool:
    return bool(_TOKEN_RE.fullmatch(ch))


def _rfind_boundary(head: str) -> int:
    for i in range(len(head) - 1, 0, -1):
        if _boundary(head[i - 1], head[i]):
            return i
    return 0


def punct_digit_fraction(text: str) -> float:
    """Fraction of characters that are digits or ASCII punctuation."""
    if not text:
        return 0.0
    return len(_PUNCT_OR_DIGIT_RE.findall(text)) / len(text)
