"""Command-line entry point.

One binary, nine subcommands covering the pipeline end to end: kg
stats, query expansion, index construction, retrieval, the coverage
loop, retriever evaluation, WMD matrices, loss scoring and the
conceptual-flow metrics. Report-producing commands print machine-
readable JSON on stdout (the wmd matrix is CSV); logs go to stderr.
Exit codes: 0 success, 1 usage error, 2 data/format error, 3 internal
error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import kpr, losses, metrics, sitq
from .config import RunConfig
from .embeddings import TokenDoc, VectorStore, build_token_doc, load_vectors, save_vectors
from .errors import DataError, EmptyInputError, IseeqError, ParseError
from .kg import canonical_entity, load_kg
from .sqe import ExpandedQuery, QueryDescription, QueryKind, expand_query

logger = logging.getLogger("iseeq")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 instead of argparse's default 2
        raise UsageError(f"{self.prog}: {message}")


def _print_json(obj) -> None:
    print(json.dumps(obj, sort_keys=True, separators=(",", ":")))


def _read_jsonl(path: str | Path) -> list[dict]:
    records = []
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}: {exc}", line_no) from exc
    return records


def _read_queries(path: str | Path) -> list[QueryDescription]:
    queries = []
    for record in _read_jsonl(path):
        try:
            kind = QueryKind(record.get("kind", "description_only"))
            queries.append(QueryDescription(id=str(record["id"]), text=record["text"], kind=kind))
        except (KeyError, ValueError) as exc:
            raise DataError(f"{path}: bad query record: {exc}") from exc
    if not queries:
        raise EmptyInputError(f"{path}: no queries")
    return queries


def _read_passages(path: str | Path) -> list[kpr.Passage]:
    passages = []
    for record in _read_jsonl(path):
        try:
            passages.append(kpr.Passage(id=str(record["id"]), text=record["text"]))
        except KeyError as exc:
            raise DataError(f"{path}: passage record missing {exc}") from exc
    if not passages:
        raise EmptyInputError(f"{path}: no passages")
    return passages


def _token_doc_or_none(doc_id: str, text: str, lookup: VectorStore) -> TokenDoc | None:
    try:
        return build_token_doc(doc_id, kpr.tokenize_text(text), lookup)
    except EmptyInputError:
        logger.warning("no token vectors for %s; WMD falls back to worst score", doc_id)
        return None


def _expand_all(args, kg) -> list[ExpandedQuery]:
    queries = _read_queries(args.queries)
    phrase_map: dict[str, list[str]] = {}
    if getattr(args, "phrases", None):
        for record in _read_jsonl(args.phrases):
            phrase_map[str(record["id"])] = [str(p) for p in record["phrases"]]
    out = []
    for query in queries:
        entities = spans = None
        if query.id in phrase_map:
            entities, spans = _resolve_phrases(kg, query.text, phrase_map[query.id])
        out.append(
            expand_query(
                kg,
                query,
                max_hops=args.max_hops,
                max_triples_per_entity=args.max_triples,
                entities=entities,
                spans=spans,
            )
        )
    return out


def _resolve_phrases(kg, text: str, phrases: list[str]):
    """Map externally extracted phrases onto lexicon entities and spans."""
    entities, spans = [], []
    lowered = text.lower()
    for phrase in phrases:
        entity = kg.lexicon.get(canonical_entity(phrase))
        if entity is None:
            logger.warning("phrase %r not in lexicon; skipped", phrase)
            continue
        if entity in entities:
            continue
        start = lowered.find(phrase.lower())
        if start < 0:
            start = lowered.find(entity.replace("_", " "))
        if start < 0:
            logger.warning("phrase %r has no mention in query text; skipped", phrase)
            continue
        entities.append(entity)
        spans.append((start, start + len(phrase)))
    return entities, spans


# ---------------------------------------------------------------- commands


def cmd_kg(args) -> int:
    kg = load_kg(args.path, strict=args.strict)
    _print_json({"entities": len(kg.entities), "triples": kg.n_triples})
    return 0


def cmd_expand_query(args) -> int:
    kg = load_kg(args.kg)
    for eq in _expand_all(args, kg):
        _print_json(
            {
                "id": eq.source.id,
                "entities": eq.entities,
                "k_d": eq.augmented_text,
                "triples": [
                    t.as_tuple()
                    for entity in eq.entities
                    for t in eq.triples_by_entity.get(entity, [])
                ],
            }
        )
    return 0


def cmd_build_index(args) -> int:
    cfg = _config(args)
    store = load_vectors(args.vectors)
    index = sitq.build_index(
        store, code_bits=cfg.code_bits, itq_iters=cfg.itq_iters, seed=cfg.seed
    )
    sitq.save_index(index, args.out)
    _print_json(
        {
            "vectors": len(store),
            "dim": store.dim,
            "code_bits": index.code_bits,
            "max_norm": index.max_norm,
            "quantization_error": index.itq_objective[-1],
            "out": str(args.out),
        }
    )
    return 0


def _load_retrieval_inputs(args, cfg):
    kg = load_kg(args.kg)
    expanded = _expand_all(args, kg)
    passages = _read_passages(args.passages)
    passage_store = load_vectors(args.passage_vectors)
    token_store = load_vectors(args.token_vectors)
    query_store = load_vectors(args.query_vectors)

    passage_table = {p.id: p for p in passages}
    token_docs = {}
    for p in passages:
        doc = _token_doc_or_none(p.id, p.text, token_store)
        if doc is not None:
            token_docs[p.id] = doc
    query_vecs, query_docs = {}, {}
    for eq in expanded:
        qid = eq.source.id
        if qid not in query_store:
            raise DataError(f"query {qid!r} missing from {args.query_vectors}")
        query_vecs[qid] = query_store.row(qid).astype(np.float64)
        doc = _token_doc_or_none(qid, eq.augmented_text, token_store)
        if doc is None:
            raise DataError(f"query {qid!r} has no tokens with vectors")
        query_docs[qid] = doc
    return expanded, passages, passage_table, passage_store, token_docs, query_vecs, query_docs


def cmd_retrieve(args) -> int:
    cfg = _config(args)
    (expanded, _passages, passage_table, passage_store,
     token_docs, query_vecs, query_docs) = _load_retrieval_inputs(args, cfg)

    if args.index:
        index = sitq.load_index(args.index, passage_store)
    else:
        index = sitq.build_index(
            passage_store, code_bits=cfg.code_bits, itq_iters=cfg.itq_iters, seed=cfg.seed
        )
    top_n = min(cfg.top_n, len(index))
    top_k = min(cfg.top_k, top_n)

    def run_one(eq: ExpandedQuery):
        return kpr.retrieve(
            index,
            passage_table,
            token_docs,
            eq,
            query_vecs[eq.source.id],
            query_docs[eq.source.id],
            top_n=top_n,
            k=top_k,
            nes_threshold=cfg.nes_threshold,
            probe=cfg.probe,
        )

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(run_one, expanded))
    else:
        results = [run_one(eq) for eq in expanded]
    _print_json(
        {
            "config": {
                "nes_threshold": cfg.nes_threshold,
                "top_k": top_k,
                "top_n": top_n,
                "probe": cfg.probe,
                "seed": cfg.seed,
            },
            "results": [r.to_dict() for r in results],
        }
    )
    return 0


def cmd_coverage(args) -> int:
    cfg = _config(args)
    (expanded, passages, _passage_table, passage_store,
     token_docs, query_vecs, query_docs) = _load_retrieval_inputs(args, cfg)
    report = kpr.coverage_loop(
        expanded,
        query_vecs,
        query_docs,
        kpr.batch_passages(passages, passage_store, token_docs, args.batch_size),
        code_bits=cfg.code_bits,
        itq_iters=cfg.itq_iters,
        seed=cfg.seed,
        top_n=cfg.top_n,
        k=cfg.top_k,
        nes_threshold=cfg.nes_threshold,
        probe=cfg.probe,
    )
    _print_json(report.to_dict())
    return 0


def _relevance_from_questions(args, cfg) -> tuple[dict[str, set[str]], dict[str, int]]:
    """Relevance sets from question embeddings: a passage is relevant when
    any question generated from it clears the cosine cut against any
    ground-truth question of the query."""
    gt_vecs: dict[str, list[np.ndarray]] = {}
    for record in _read_jsonl(args.gt_question_vecs):
        gt_vecs.setdefault(str(record["query_id"]), []).append(
            np.asarray(record["vec"], dtype=np.float64)
        )
    relevance: dict[str, set[str]] = {qid: set() for qid in gt_vecs}
    for record in _read_jsonl(args.question_vecs):
        qid = str(record["query_id"])
        pid = str(record["passage_id"])
        vec = np.asarray(record["vec"], dtype=np.float64)
        vec_norm = np.linalg.norm(vec)
        if vec_norm == 0.0 or qid not in gt_vecs:
            continue
        for gt in gt_vecs[qid]:
            gt_norm = np.linalg.norm(gt)
            if gt_norm == 0.0:
                continue
            if float(vec @ gt) / (vec_norm * gt_norm) > cfg.cosine_relevance:
                relevance.setdefault(qid, set()).add(pid)
                break
    counts = {qid: len(vecs) for qid, vecs in gt_vecs.items()}
    return relevance, counts


def cmd_eval_retriever(args) -> int:
    cfg = _config(args)
    with Path(args.results).open(encoding="utf-8") as fh:
        payload = json.load(fh)
    results = [
        kpr.RetrievalResult(
            query_id=r["query_id"],
            ranked=[(pid, wmd, nes_val) for pid, wmd, nes_val in r["ranked"]],
            kept=list(r["kept"]),
        )
        for r in payload["results"]
    ]
    if args.relevance:
        relevance: dict[str, set[str]] = {}
        counts: dict[str, int] = {}
        for record in _read_jsonl(args.relevance):
            qid = str(record["query_id"])
            relevance[qid] = {str(p) for p in record["relevant"]}
            if "n_questions" in record:
                counts[qid] = int(record["n_questions"])
    elif args.question_vecs and args.gt_question_vecs:
        relevance, counts = _relevance_from_questions(args, cfg)
    else:
        raise UsageError(
            "eval-retriever needs --relevance, or --question-vecs with --gt-question-vecs"
        )
    ks = [int(k) for k in args.ks.split(",") if k]
    hr, map_score = kpr.eval_retriever(
        results, relevance, ks, map_k=cfg.top_k, gt_question_counts=counts
    )
    _print_json({"hr": {str(k): v for k, v in hr.items()}, "map": map_score})
    return 0


def cmd_wmd(args) -> int:
    from .wmd import wmd_exact

    lookup = load_vectors(args.vectors)
    docs_a = [
        build_token_doc(str(r["id"]), [str(t) for t in r["tokens"]], lookup)
        for r in _read_jsonl(args.docs_a)
    ]
    docs_b = [
        build_token_doc(str(r["id"]), [str(t) for t in r["tokens"]], lookup)
        for r in _read_jsonl(args.docs_b)
    ]
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["id"] + [b.doc_id for b in docs_b])
    for doc_a in docs_a:
        writer.writerow(
            [doc_a.doc_id] + [format(wmd_exact(doc_a, doc_b), ".12g") for doc_b in docs_b]
        )
    return 0


def cmd_score_losses(args) -> int:
    cfg = _config(args)
    reward_cfg = losses.RewardConfig(alpha=cfg.alpha, gamma=cfg.gamma)
    lookup = load_vectors(args.vectors) if args.vectors else None
    batch = losses.load_loss_batch(args.batch, lookup=lookup, clamp_probs=args.clamp_probs)
    steps = [
        {
            "index": i,
            "reward": losses.reward(pair, reward_cfg),
            "indicator": losses.indicator(pair.reference, pair.generated),
            "gen_prob": pair.gen_prob,
        }
        for i, pair in enumerate(batch.pairs)
    ]
    erl = [
        {
            "index": i,
            "label": record.label.value,
            "loss": losses.erl_step_loss(batch, i, reward_cfg),
        }
        for i, record in enumerate(batch.entailments)
    ]
    _print_json(
        {
            "alpha": reward_cfg.alpha,
            "gamma": reward_cfg.gamma,
            "ce": losses.ce_loss(batch, reward_cfg),
            "rce": losses.rce_loss(batch, reward_cfg),
            "steps": steps,
            "erl": erl,
        }
    )
    return 0


def cmd_evaluate(args) -> int:
    score_records = _read_jsonl(args.sr) if args.sr else []
    label_records = _read_jsonl(args.lc) if args.lc else []
    if not score_records and not label_records:
        raise UsageError("evaluate needs --sr and/or --lc")
    by_query: dict[str, dict[str, list]] = {}
    for record in score_records:
        qid = str(record.get("query_id", "all"))
        by_query.setdefault(qid, {"scores": [], "labels": []})["scores"].append(
            float(record["score"])
        )
    for record in label_records:
        qid = str(record.get("query_id", "all"))
        by_query.setdefault(qid, {"scores": [], "labels": []})["labels"].append(
            str(record["label"])
        )
    all_scores = [s for group in by_query.values() for s in group["scores"]]
    all_labels = [l for group in by_query.values() for l in group["labels"]]
    report = metrics.MetricReport(
        sr=float(np.mean(all_scores)) if all_scores else 0.0,
        lc_percent=metrics.lc_score(all_labels),
        n_pairs=len(all_labels),
        per_query=[
            (
                qid,
                float(np.mean(group["scores"])) if group["scores"] else 0.0,
                metrics.lc_score(group["labels"]),
            )
            for qid, group in sorted(by_query.items())
        ],
    )
    _print_json(report.to_dict())
    return 0


# ---------------------------------------------------------------- wiring


def _config(args) -> RunConfig:
    overrides = {
        name: getattr(args, name)
        for name in RunConfig.field_names()
        if hasattr(args, name) and getattr(args, name) is not None
    }
    return RunConfig.load(getattr(args, "config", None), overrides)


def _add_config_flags(parser: argparse.ArgumentParser, names: list[str]) -> None:
    helps = {
        "alpha": "reward mix between exact-overlap and soft-match terms (default 0.1971, reference)",
        "gamma": "epoch EMA weight for loss tuning (default 0.12, reference)",
        "nes_threshold": "strict entity-score filter (default 0.80, reference)",
        "top_k": "passages kept after filtering (default 20, reference)",
        "top_n": "candidates fetched before re-ranking (default 100)",
        "code_bits": "binary code width (default 64)",
        "itq_iters": "rotation refinement rounds (default 50)",
        "probe": "Hamming candidates examined (default 8 * top_k)",
        "seed": "rotation-init seed; the only stochastic step (default 42)",
        "cosine_relevance": "relevance cosine cut for evaluation (default 0.70, reference)",
        "threads": "worker threads for per-query stages (default 1)",
    }
    floats = {"alpha", "gamma", "nes_threshold", "cosine_relevance"}
    for name in names:
        parser.add_argument(
            f"--{name.replace('_', '-')}",
            dest=name,
            type=float if name in floats else int,
            default=None,
            help=helps[name],
        )


def build_parser() -> _Parser:
    parser = _Parser(prog="iseeq", description=__doc__)
    parser.add_argument("--config", default=None, help="key = value config file")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("kg", parents=[], help="knowledge-graph utilities")
    p.add_argument("action", choices=["stats"])
    p.add_argument("path")
    p.add_argument("--strict", action="store_true", help="fail on malformed lines")
    p.set_defaults(func=cmd_kg)

    p = sub.add_parser("expand-query", help="augment queries with KG triples")
    p.add_argument("--kg", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--max-hops", type=int, default=2)
    p.add_argument("--max-triples", type=int, default=8)
    p.add_argument("--phrases", default=None,
                   help="JSONL of pre-extracted phrases per query id")
    p.set_defaults(func=cmd_expand_query)

    p = sub.add_parser("build-index", help="build and persist the SITQ index")
    p.add_argument("--vectors", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bits", dest="code_bits", type=int, default=None,
                   help="binary code width (default 64)")
    _add_config_flags(p, ["itq_iters", "seed"])
    p.set_defaults(func=cmd_build_index)

    for name in ("retrieve", "coverage"):
        p = sub.add_parser(name, help=f"run the {name} pipeline")
        p.add_argument("--kg", required=True)
        p.add_argument("--queries", required=True)
        p.add_argument("--passages", required=True)
        p.add_argument("--passage-vectors", required=True)
        p.add_argument("--query-vectors", required=True)
        p.add_argument("--token-vectors", required=True)
        p.add_argument("--phrases", default=None)
        p.add_argument("--max-hops", type=int, default=2)
        p.add_argument("--max-triples", type=int, default=8)
        if name == "retrieve":
            p.add_argument("--index", default=None, help="prebuilt index file")
            p.set_defaults(func=cmd_retrieve)
        else:
            p.add_argument("--batch-size", type=int, required=True)
            p.set_defaults(func=cmd_coverage)
        _add_config_flags(
            p,
            ["nes_threshold", "top_k", "top_n", "code_bits", "itq_iters",
             "probe", "seed", "threads"],
        )

    p = sub.add_parser("eval-retriever", help="hit rate and MAP for retrieval results")
    p.add_argument("--results", required=True, help="JSON output of the retrieve command")
    p.add_argument("--relevance", default=None)
    p.add_argument("--question-vecs", dest="question_vecs", default=None)
    p.add_argument("--gt-question-vecs", dest="gt_question_vecs", default=None)
    p.add_argument("--ks", default="10,20")
    _add_config_flags(p, ["top_k", "cosine_relevance"])
    p.set_defaults(func=cmd_eval_retriever)

    p = sub.add_parser("wmd", help="pairwise WMD matrix as CSV")
    p.add_argument("--docs-a", required=True)
    p.add_argument("--docs-b", required=True)
    p.add_argument("--vectors", required=True)
    p.set_defaults(func=cmd_wmd)

    p = sub.add_parser("score-losses", help="reward/CE/RCE/ERL for a batch")
    p.add_argument("--batch", required=True)
    p.add_argument("--vectors", default=None,
                   help="token vectors; defaults to exact-match one-hot embeddings")
    p.add_argument("--clamp-probs", action="store_true",
                   help="floor zero probabilities at 1e-12 instead of rejecting")
    _add_config_flags(p, ["alpha", "gamma"])
    p.set_defaults(func=cmd_score_losses)

    p = sub.add_parser("evaluate", help="SR / LC metric report")
    p.add_argument("--sr", default=None, help="pair-score JSONL")
    p.add_argument("--lc", default=None, help="pair-label JSONL")
    p.set_defaults(func=cmd_evaluate)
    return parser


def _setup_logging() -> None:
    level = os.environ.get("ISEEQ_LOG", "warning").upper()
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            parser.print_usage(sys.stderr)
            return 1
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except IseeqError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
