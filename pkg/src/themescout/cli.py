"""Command-line entry point.

Flags pick the subcommand, config file and output directory; every choice
that affects results lives in the config so runs are reproducible. Each
run writes a manifest beside its outputs.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 remote
service error. Failures print one machine-parsable line to stderr:
`themescout error kind=<usage|data|remote> reason=<...>`.
"""

import argparse
import json
import re
import sys
from pathlib import Path

from . import augment as aug
from . import evalkit, figures, humaneval, summarise
from .config import RunConfig, hashable_config, load_config
from .corpus import CorpusStore, GoldAnnotation, Granularity, load_themes
from .errors import DataError, RemoteServiceError, ThemescoutError, UsageError
from .manifest import write_manifest
from .rerank import rerank
from .retrieval import build_index, load_index, retrieve, save_index


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "-", text)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_store(cfg: RunConfig) -> CorpusStore:
    return CorpusStore.load(cfg.corpus_dir)


def _themes(cfg: RunConfig, store: CorpusStore):
    if cfg.theme_file:
        return load_themes(cfg.theme_file)
    if store.themes:
        return list(store.themes.values())
    raise DataError("no themes: set theme_file in the config or ingest themes into the store")


def _index_path(cfg: RunConfig) -> Path:
    return cfg.corpus_dir / f"index.{cfg.index.granularity.value}.jsonl"


def _query_for(args, cfg: RunConfig, store: CorpusStore) -> str:
    if args.query:
        return args.query
    if args.theme:
        themes = {t.theme_id: t for t in _themes(cfg, store)}
        if args.theme not in themes:
            raise DataError(f"unknown theme {args.theme!r}")
        return themes[args.theme].concat_query
    raise UsageError("give either --query or --theme")


# -- subcommands -------------------------------------------------------------


def cmd_ingest(args) -> int:
    cfg = load_config(args.config)
    store = CorpusStore()
    docs_path = Path(args.docs)
    if docs_path.is_dir():
        for txt in sorted(docs_path.glob("*.txt")):
            store.ingest_document(txt.read_text(encoding="utf-8"), txt.stem)
    elif docs_path.suffix == ".jsonl":
        for line in docs_path.read_text(encoding="utf-8").splitlines():
            rec = json.loads(line)
            store.ingest_document(rec["raw_text"], rec["doc_id"], rec.get("metadata"), rec.get("title", ""))
    else:
        raise UsageError(f"--docs must be a directory of .txt files or a .jsonl file, got {docs_path}")
    store.set_themes(_themes(cfg, store))
    if args.gold:
        anns = []
        for line in Path(args.gold).read_text(encoding="utf-8").splitlines():
            rec = json.loads(line)
            anns.append(GoldAnnotation(
                doc_id=rec["doc_id"], theme_id=rec["theme_id"],
                gold_passage_ids=set(rec.get("gold_passage_ids", [])),
                highlights=[tuple(h) for h in rec.get("highlights", [])],
                gold_summary=rec.get("gold_summary")))
        store.attach_gold(anns)
    store.save(cfg.corpus_dir)
    write_manifest(cfg.corpus_dir / "manifest.txt", "ingest", hashable_config(cfg), cfg.seed,
                   extra={"documents": len(store.documents)})
    print(f"ingested {len(store.documents)} documents into {cfg.corpus_dir}")
    return 0


def cmd_index(args) -> int:
    cfg = load_config(args.config)
    store = _load_store(cfg)
    passages = store.passages(cfg.index.granularity)
    index = build_index(passages, cfg.index)
    path = _index_path(cfg)
    save_index(index, path)
    write_manifest(cfg.corpus_dir / "manifest.txt", "index", hashable_config(cfg), cfg.seed,
                   extra={"passages": index.passage_count})
    print(f"indexed {index.passage_count} {cfg.index.granularity.value} passages -> {path}")
    return 0


def cmd_retrieve(args) -> int:
    cfg = load_config(args.config)
    store = _load_store(cfg)
    path = _index_path(cfg)
    if not path.exists():
        raise DataError(f"no index at {path}; run the index subcommand first")
    index = load_index(path)
    query = _query_for(args, cfg, store)
    ranked = retrieve(index, query, args.n or cfg.pool)
    print(f"# query: {query}")
    for e in ranked.entries:
        print(f"{e.rank}\t{e.passage_id}\t{e.score:.6f}")
    return 0


def cmd_pipeline(args) -> int:
    cfg = load_config(args.config)
    store = _load_store(cfg)
    path = _index_path(cfg)
    if not path.exists():
        raise DataError(f"no index at {path}; run the index subcommand first")
    index = load_index(path)
    query = _query_for(args, cfg, store)
    candidates = retrieve(index, query, cfg.pool)
    lookup = {p.passage_id: p for p in store.passages(index.config.granularity)}
    final = rerank(candidates, cfg.scorer, cfg.rerank_k, lookup)
    out = _outdir(args)
    with (out / "ranked.tsv").open("w", encoding="utf-8") as f:
        f.write(f"# query: {query}\n# stage: {final.stage.value}\n")
        for e in final.entries:
            f.write(f"{e.rank}\t{e.passage_id}\t{e.score:.6f}\n")
    write_manifest(out / "manifest.txt", "pipeline", hashable_config(cfg), cfg.seed,
                   extra={"query": query, "results": len(final.entries)})
    print(f"wrote {out / 'ranked.tsv'} ({len(final.entries)} entries)")
    return 0


def cmd_augment(args) -> int:
    cfg = load_config(args.config)
    store = _load_store(cfg)
    passages = store.passages(Granularity.PARAGRAPH)
    index = build_index(passages, cfg.index)
    template = aug.PromptTemplate(seed_pairs=tuple(
        aug.load_seed_pairs(args.seeds) if args.seeds else aug.default_seed_pairs()))
    outcome = aug.generate_queries(cfg.scorer, passages, template, cfg.generation)
    if cfg.filter_rule == "top_k":
        rule = aug.top_k_rule(cfg.filter_top_k)
    else:
        rule = aug.min_score_rule(cfg.filter_min_score)
    survivors = aug.filter_pairs(outcome.pairs, rule)
    triplets, dropped = aug.mine_negatives(index, survivors, cfg.mine_pool)
    out = _outdir(args)
    lookup = {p.passage_id: p for p in passages}
    aug.export_triplets(triplets, out / "triplets.tsv", lookup)
    report = dict(outcome.counters)
    report.update({"survivors": len(survivors), "triplets": len(triplets), "no_negative_dropped": dropped})
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_manifest(out / "manifest.txt", "augment", hashable_config(cfg), cfg.seed, extra=report)
    print(f"wrote {len(triplets)} triplets -> {out / 'triplets.tsv'}")
    return 0


def cmd_summarise(args) -> int:
    cfg = load_config(args.config)
    store = _load_store(cfg)
    themes = _themes(cfg, store)
    if args.theme:
        themes = [t for t in themes if t.theme_id == args.theme]
        if not themes:
            raise DataError(f"unknown theme {args.theme!r}")
    index = None
    if args.source == "retrieved":
        path = _index_path(cfg)
        if not path.exists():
            raise DataError(f"no index at {path}; run the index subcommand first")
        index = load_index(path)
    out = _outdir(args)
    run_path = out / "summaries.jsonl"
    run_path.write_text("", encoding="utf-8")
    store_path = cfg.corpus_dir / "summaries.jsonl"  # append-only store file
    written = 0
    for theme in themes:
        for doc_id in sorted(store.documents):
            if args.source == "highlights" and not store.highlight_texts(doc_id, theme.theme_id):
                continue  # only annotated (doc, theme) pairs are summarisable
            req = summarise.SummaryRequest(
                doc_id=doc_id, theme_id=theme.theme_id, source=args.source,
                top_k=args.k, max_new_tokens=cfg.generation.max_new_tokens,
                model=cfg.generation.model)
            summary = summarise.summarise_theme(
                req, cfg.scorer, store, index=index, scorer=cfg.scorer, created_at=cfg.created_at)
            summarise.append_summary(run_path, summary)
            summarise.append_summary(store_path, summary)
            written += 1
    write_manifest(out / "manifest.txt", "summarise", hashable_config(cfg), cfg.seed,
                   extra={"summaries": written, "source": args.source})
    print(f"wrote {written} summaries -> {run_path} (appended to {store_path})")
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    store = _load_store(cfg)
    themes = _themes(cfg, store)
    rankings = []
    tables = evalkit.eval_matrix(store, themes, cfg.index, cfg.scorer, cfg.eval, rankings_out=rankings)
    out = _outdir(args)
    tables_dir = out / "tables"
    tables_dir.mkdir(exist_ok=True)
    k_render = max(cfg.eval.k_values)
    for table in tables:
        name = f"{_slug(table.model_id)}__{_slug(table.theme_id)}"
        (tables_dir / f"{name}.tsv").write_text(evalkit.render_table(table, k_render), encoding="utf-8")
        figures.save_eval_figure(table, cfg.eval.k_values, out / "figures" / f"{name}.png")
    (out / "cells.tsv").write_text(evalkit.render_cells(tables), encoding="utf-8")
    with (out / "rankings.jsonl").open("w", encoding="utf-8") as f:
        for doc_id, theme_id, variant, ranked in rankings:
            f.write(json.dumps({
                "doc_id": doc_id, "theme_id": theme_id, "variant": variant,
                "stage": ranked.stage.value, "query": ranked.query,
                "entries": [[e.rank, e.passage_id, e.score] for e in ranked.entries],
            }, ensure_ascii=False) + "\n")
    write_manifest(out / "manifest.txt", "eval", hashable_config(cfg), cfg.seed,
                   extra={"tables": len(tables), "k_render": k_render})
    print(f"wrote {len(tables)} result tables -> {tables_dir}")
    return 0


def cmd_difficulty(args) -> int:
    cfg = load_config(args.config)
    store = _load_store(cfg)
    themes = _themes(cfg, store)
    reports = []
    for theme in themes:
        for doc_id in sorted(store.documents):
            gold = store.gold_ids(doc_id, theme.theme_id, Granularity.PARAGRAPH)
            if not gold:
                continue  # difficulty undefined without gold paragraphs
            reports.append(evalkit.classify_difficulty(
                store.documents[doc_id], theme, gold, store))
    out = _outdir(args)
    (out / "difficulty.tsv").write_text(evalkit.render_difficulty(reports), encoding="utf-8")
    figures.save_difficulty_figure(reports, out / "figures" / "difficulty.png")
    write_manifest(out / "manifest.txt", "difficulty", hashable_config(cfg), cfg.seed,
                   extra={"reports": len(reports)})
    print(f"wrote {len(reports)} difficulty reports -> {out / 'difficulty.tsv'}")
    return 0


def cmd_bws(args) -> int:
    cfg = load_config(args.config)
    out = _outdir(args)
    if args.action == "build-tuples":
        recs = [json.loads(line) for line in Path(args.summaries).read_text(encoding="utf-8").splitlines()]
        summaries = {(r["article_id"], r["model_id"]): r["text"] for r in recs}
        tuples = humaneval.build_tuples(summaries, cfg.seed)
        payload = [{
            "tuple_id": t.tuple_id, "article_id": t.article_id, "shuffle_seed": t.shuffle_seed,
            "candidates": [{"slot": c.slot, "model_id": c.model_id, "summary_text": c.summary_text}
                           for c in t.candidates],
        } for t in tuples]
        (out / "tuples.json").write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        annotators = args.annotators.split(",") if args.annotators else [""]
        for annotator in annotators:
            name = f"form.{annotator}.tsv" if annotator else "form.tsv"
            humaneval.write_annotation_form(tuples, out / name)
        write_manifest(out / "manifest.txt", "bws build-tuples", hashable_config(cfg), cfg.seed,
                       extra={"tuples": len(tuples)})
        print(f"wrote {len(tuples)} tuples -> {out / 'tuples.json'}")
        return 0

    tuples = _read_tuples(Path(args.tuples))
    judgements = humaneval.read_judgements(Path(args.judgements))
    if args.action == "score":
        scores = humaneval.score_bws(tuples, judgements, aggregation=args.aggregation)
        alpha = None
        try:
            alpha = humaneval.krippendorff_alpha(tuples, judgements, metric=args.metric)
        except DataError:
            pass  # single annotator or degenerate labels; scores still stand
        (out / "scores.json").write_text(json.dumps(
            {"scores": scores.scores, "aggregation": scores.aggregation},
            indent=2, sort_keys=True) + "\n", encoding="utf-8")
        (out / "scores.txt").write_text(humaneval.render_scores(scores, alpha), encoding="utf-8")
        figures.save_bws_figure(scores, out / "figures" / "bws_scores.png")
        write_manifest(out / "manifest.txt", "bws score", hashable_config(cfg), cfg.seed,
                       extra={"judgements": len(judgements)})
        print(f"wrote scores -> {out / 'scores.json'}")
        return 0
    if args.action == "alpha":
        report = humaneval.krippendorff_alpha(tuples, judgements, metric=args.metric)
        (out / "agreement.json").write_text(json.dumps({
            "alpha": report.alpha, "metric": report.metric,
            "n_annotators": report.n_annotators, "n_items": report.n_items,
        }, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        write_manifest(out / "manifest.txt", "bws alpha", hashable_config(cfg), cfg.seed,
                       extra={"alpha": f"{report.alpha:.6f}"})
        print(f"alpha={report.alpha:.4f} ({report.metric}) -> {out / 'agreement.json'}")
        return 0
    raise UsageError(f"unknown bws action {args.action!r}")


def _read_tuples(path: Path) -> list[humaneval.BwsTuple]:
    payload = json.loads(path.read_text(encoding="utf-8"))
    return [humaneval.BwsTuple(
        tuple_id=r["tuple_id"], article_id=r["article_id"], shuffle_seed=r["shuffle_seed"],
        candidates=tuple(humaneval.Candidate(slot=c["slot"], model_id=c["model_id"],
                                             summary_text=c["summary_text"])
                         for c in r["candidates"]))
        for r in payload]


# -- parser ------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="themescout", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", required=True, help="YAML run configuration")
        if out:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("ingest", help="load documents, themes and gold into the corpus store")
    common(p, out=False)
    p.add_argument("--docs", required=True, help="directory of .txt files or a .jsonl file")
    p.add_argument("--gold", help="gold annotations jsonl")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("index", help="build and persist the BM25 index")
    common(p, out=False)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("retrieve", help="print the first-stage ranking for a query or theme")
    common(p, out=False)
    p.add_argument("--query")
    p.add_argument("--theme")
    p.add_argument("--n", type=int)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("pipeline", help="retrieve then rerank; write the final ranking")
    common(p)
    p.add_argument("--query")
    p.add_argument("--theme")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("augment", help="generate, filter, mine and export training triplets")
    common(p)
    p.add_argument("--seeds", help="seed-pair YAML (defaults to the packaged set)")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("summarise", help="write theme-targeted summaries")
    common(p)
    p.add_argument("--source", choices=["highlights", "retrieved"], default="highlights")
    p.add_argument("--theme")
    p.add_argument("--k", type=int, default=5, help="top-k passages for retrieved source")
    p.set_defaults(func=cmd_summarise)

    p = sub.add_parser("eval", help="precision/recall tables, figures and rankings")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("difficulty", help="hard/medium/easy retrieval-difficulty reports")
    common(p)
    p.set_defaults(func=cmd_difficulty)

    p = sub.add_parser("bws", help="best-worst tuples, scores and agreement")
    p.add_argument("action", choices=["build-tuples", "score", "alpha"])
    common(p)
    p.add_argument("--summaries", help="jsonl of article_id, model_id, text (build-tuples)")
    p.add_argument("--tuples", help="tuples.json from build-tuples (score/alpha)")
    p.add_argument("--judgements", help="judgement TSV (score/alpha)")
    p.add_argument("--annotators", help="comma-separated annotator ids for per-annotator forms")
    p.add_argument("--aggregation", choices=["sum", "mean_over_annotators"],
                   default="mean_over_annotators")
    p.add_argument("--metric", choices=["nominal", "ordinal"], default="ordinal")
    p.set_defaults(func=cmd_bws)

    return parser


def _fail(kind: str, exc: Exception, code: int) -> int:
    reason = " ".join(str(exc).split())
    print(f"themescout error kind={kind} reason={reason}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        return _fail("usage", e, 1)
    except RemoteServiceError as e:
        return _fail("remote", e, 3)
    except (DataError, ThemescoutError) as e:
        return _fail("data", e, 2)
    except OSError as e:
        return _fail("data", e, 2)


if __name__ == "__main__":
    sys.exit(main())
