"""Run configuration: one YAML file drives every result-affecting choice.

Command-line flags select only the subcommand, the config path and the
output directory; everything that changes numbers lives here so the
manifest's config hash pins a run completely. The remote endpoint may be
overridden by the THEMESCOUT_ENDPOINT environment variable.
"""

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .augment import GenerationConfig
from .corpus import Granularity
from .errors import UsageError
from .evalkit import EvalConfig
from .rerank import ScorerSpec
from .retrieval import IndexConfig

ENDPOINT_ENV = "THEMESCOUT_ENDPOINT"


@dataclass
class RunConfig:
    corpus_dir: Path
    theme_file: Optional[Path] = None
    index: IndexConfig = field(default_factory=IndexConfig)
    scorer: ScorerSpec = field(default_factory=ScorerSpec)
    eval: EvalConfig = field(default_factory=EvalConfig)
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    seed: int = 0
    pool: int = 100
    rerank_k: int = 20
    filter_rule: str = "top_k"
    filter_top_k: int = 10
    filter_min_score: float = 0.0
    mine_pool: int = 50
    created_at: Optional[str] = None  # pin summary timestamps for reproducible runs
    raw: dict = field(default_factory=dict)


def _granularity(value: str) -> Granularity:
    try:
        return Granularity(value)
    except ValueError:
        raise UsageError(f"unknown granularity {value!r}") from None


def load_config(path: Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as e:
        raise UsageError(f"config file {path} does not parse: {e}") from e
    if "corpus_dir" not in raw:
        raise UsageError("config is missing corpus_dir")

    idx = raw.get("index", {})
    index = IndexConfig(
        k1=float(idx.get("k1", 1.2)),
        b=float(idx.get("b", 0.75)),
        lowercase=bool(idx.get("lowercase", True)),
        stopwords=frozenset(idx.get("stopwords", [])),
        granularity=_granularity(idx.get("granularity", "paragraph")),
    )

    sc = raw.get("scorer", {})
    endpoint = os.environ.get(ENDPOINT_ENV) or sc.get("endpoint")
    kind = sc.get("kind", "lexical")
    if endpoint and kind == "lexical" and (ENDPOINT_ENV in os.environ):
        kind = "remote"
    scorer = ScorerSpec(
        kind=kind,
        endpoint=endpoint if kind == "remote" else None,
        model=sc.get("model"),
        timeout_ms=int(sc.get("timeout_ms", 10_000)),
        max_in_flight=int(sc.get("max_in_flight", 4)),
        batch_size=int(sc.get("batch_size", 16)),
    )

    ev = raw.get("eval", {})
    eval_cfg = EvalConfig(
        k_values=tuple(ev.get("k_values", list(range(1, 21)))),
        granularity=_granularity(ev.get("granularity", idx.get("granularity", "paragraph"))),
        match_rule=ev.get("match_rule", "exact_id"),
        pool=int(ev.get("pool", raw.get("pool", 100))),
    )

    gen = raw.get("generation", {})
    generation = GenerationConfig(
        max_doc_chars=int(gen.get("max_doc_chars", 4000)),
        temperature=float(gen.get("temperature", 0.0)),
        max_new_tokens=int(gen.get("max_new_tokens", 64)),
        model=gen.get("model"),
    )

    aug = raw.get("augment", {})
    return RunConfig(
        corpus_dir=Path(raw["corpus_dir"]),
        theme_file=Path(raw["theme_file"]) if raw.get("theme_file") else None,
        index=index,
        scorer=scorer,
        eval=eval_cfg,
        generation=generation,
        seed=int(raw.get("seed", 0)),
        pool=int(raw.get("pool", 100)),
        rerank_k=int(raw.get("rerank_k", 20)),
        filter_rule=aug.get("filter_rule", "top_k"),
        filter_top_k=int(aug.get("top_k", 10)),
        filter_min_score=float(aug.get("min_score", 0.0)),
        mine_pool=int(aug.get("mine_pool", 50)),
        created_at=raw.get("created_at"),
        raw=raw,
    )


def hashable_config(cfg: RunConfig) -> dict:
    """The resolved, result-affecting view of the config for hashing."""
    return {
        "corpus_dir": str(cfg.corpus_dir),
        "theme_file": str(cfg.theme_file) if cfg.theme_file else None,
        "index": {
            "k1": cfg.index.k1, "b": cfg.index.b, "lowercase": cfg.index.lowercase,
            "stopwords": sorted(cfg.index.stopwords), "granularity": cfg.index.granularity.value,
        },
        "scorer": {
            "kind": cfg.scorer.kind, "endpoint": cfg.scorer.endpoint, "model": cfg.scorer.model,
            "batch_size": cfg.scorer.batch_size,
        },
        "eval": {
            "k_values": list(cfg.eval.k_values), "granularity": cfg.eval.granularity.value,
            "match_rule": cfg.eval.match_rule, "pool": cfg.eval.pool,
        },
        "generation": {
            "max_doc_chars": cfg.generation.max_doc_chars, "temperature": cfg.generation.temperature,
            "max_new_tokens": cfg.generation.max_new_tokens, "model": cfg.generation.model,
        },
        "augment": {
            "filter_rule": cfg.filter_rule, "top_k": cfg.filter_top_k,
            "min_score": cfg.filter_min_score, "mine_pool": cfg.mine_pool,
        },
        "seed": cfg.seed,
        "pool": cfg.pool,
        "rerank_k": cfg.rerank_k,
        "created_at": cfg.created_at,
    }
