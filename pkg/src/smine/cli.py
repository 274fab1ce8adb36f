"""Operator-facing command line.

Exit codes: 0 success, 2 config error, 3 data error, 4 flagged-for-review.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .coarse import Lexicons, load_lexicon
from .config import PipelineConfig, load_config, save_config
from .dsl import DEFAULT_CATALOG
from .embeddings import load_store
from .errors import ConfigError, DataError, DslError, SmineError
from .kb import KnowledgeBase, KnowledgeTriple
from .mask import ScenarioMask
from .matcher import load_checkpoint, save_checkpoint, train
from .metrics import evaluate_benchmark, format_table
from .pipeline import audit_fingerprint, coarse_stage, mine_query
from .synth import HttpClient, MockClient, assemble_prompt
from .tracks import load_log_dir

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_FLAGGED = 4


def _lexicons(cfg: PipelineConfig) -> Lexicons:
    kwargs = {}
    if cfg.paths.colors_lexicon:
        kwargs["colors"] = load_lexicon(cfg.paths.colors_lexicon)
    if cfg.paths.entities_lexicon:
        kwargs["entities"] = load_lexicon(cfg.paths.entities_lexicon)
    if cfg.paths.relations_lexicon:
        kwargs["relations"] = load_lexicon(cfg.paths.relations_lexicon)
    return Lexicons(**kwargs)


def _client(cfg: PipelineConfig):
    if cfg.synth.client == "mock":
        if not cfg.synth.responses_file:
            raise ConfigError("synth.client = 'mock' needs synth.responses_file")
        return MockClient.from_file(cfg.synth.responses_file)
    if not cfg.synth.endpoint:
        raise ConfigError("synth.client = 'http' needs synth.endpoint")
    return HttpClient(cfg.synth.endpoint)


def _load_logs(cfg: PipelineConfig):
    return load_log_dir(cfg.paths.logs_dir)


def _load_kb(cfg: PipelineConfig):
    kb_dir = Path(cfg.paths.kb_dir)
    if kb_dir.is_dir() and (kb_dir / "meta.json").exists():
        return KnowledgeBase.load(kb_dir)
    return None


def _sentence_embedding(cfg: PipelineConfig, query_id: str):
    if not cfg.paths.sentence_embeddings:
        return None
    store = load_store(cfg.paths.sentence_embeddings)
    if query_id in store.text_index:
        return store.text_vector(query_id)
    return None


def _write_audit(cfg: PipelineConfig, records) -> None:
    if not cfg.paths.audit_log:
        return
    with Path(cfg.paths.audit_log).open("a", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def cmd_init_config(args) -> int:
    save_config(PipelineConfig(), args.out)
    print(f"wrote default config to {args.out}")
    return EXIT_OK


def cmd_mine(args, cfg: PipelineConfig) -> int:
    logs = _load_logs(cfg)
    if args.log not in logs:
        raise DataError(
            f"unknown log id {args.log!r}; available: {', '.join(sorted(logs))}"
        )
    store = load_store(cfg.paths.embeddings)
    model = None
    if cfg.paths.checkpoint and Path(cfg.paths.checkpoint).exists():
        model, _ = load_checkpoint(cfg.paths.checkpoint)
    query_id = args.query_id or args.query
    result = mine_query(
        args.query, logs[args.log], store, _client(cfg),
        query_id=query_id,
        kb=_load_kb(cfg),
        query_sentence_embedding=_sentence_embedding(cfg, query_id),
        model=model,
        lexicons=_lexicons(cfg),
        window_s=cfg.coarse.window_s,
        stride_s=cfg.coarse.stride_s,
        frames_per_window=cfg.coarse.frames_per_window,
        top_k=cfg.coarse.top_k,
        merge_slack_s=cfg.coarse.merge_slack_s,
        embed_mode=cfg.coarse.query_embedding,
        budget=cfg.synth.budget,
        exemplar_top_k=cfg.synth.exemplar_top_k,
        temperature=cfg.synth.temperature,
        max_tokens=cfg.synth.max_tokens,
        alpha_blend=cfg.matcher.alpha_blend,
    )
    _write_audit(cfg, result.audit + [result.to_record()])
    print(json.dumps(result.to_record(), indent=2, sort_keys=True))
    print(f"audit fingerprint: {audit_fingerprint(result.audit)}", file=sys.stderr)
    return EXIT_OK if result.status == "success" else EXIT_FLAGGED


def cmd_filter(args, cfg: PipelineConfig) -> int:
    logs = _load_logs(cfg)
    if args.log not in logs:
        raise DataError(
            f"unknown log id {args.log!r}; available: {', '.join(sorted(logs))}"
        )
    store = load_store(cfg.paths.embeddings)
    restricted, region = coarse_stage(
        args.query, logs[args.log], store, args.query_id or args.query,
        window_s=cfg.coarse.window_s, stride_s=cfg.coarse.stride_s,
        frames_per_window=cfg.coarse.frames_per_window, top_k=cfg.coarse.top_k,
        merge_slack_s=cfg.coarse.merge_slack_s, lexicons=_lexicons(cfg),
        embed_mode=cfg.coarse.query_embedding,
    )
    print(json.dumps({
        "log_id": args.log,
        "region": {k: list(map(list, v)) for k, v in region.intervals.items()},
        "tracks_kept": [t.track_id for t in restricted.tracks],
    }, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_kb_build(args, cfg: PipelineConfig) -> int:
    logs = _load_logs(cfg)
    candidates = []
    with Path(args.candidates).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec["log_id"] not in logs:
                raise DataError(f"candidate {rec['triple_id']}: unknown log {rec['log_id']}")
            triple = KnowledgeTriple(
                triple_id=rec["triple_id"],
                query_text=rec["query_text"],
                query_embedding=np.asarray(rec["embedding"], dtype=np.float32),
                log_id=rec["log_id"],
                mask=ScenarioMask.from_pairs({rec["log_id"]: rec["mask"]}),
                program_source=rec["program"],
                provenance=rec.get("provenance", "kb build"),
            )
            candidates.append((triple, logs[rec["log_id"]]))
    if not candidates:
        raise DataError(f"no candidates found in {args.candidates}")
    kb = KnowledgeBase(dim=candidates[0][0].query_embedding.shape[0])
    results = kb.insert_batch(candidates)
    kb.save(cfg.paths.kb_dir)
    accepted = sum(r.accepted for r in results)
    for r in results:
        status = "accepted" if r.accepted else f"rejected ({r.reason})"
        print(f"{r.triple_id}: {status}")
    print(f"{accepted}/{len(results)} accepted -> {cfg.paths.kb_dir}")
    return EXIT_OK


def cmd_kb_validate(args, cfg: PipelineConfig) -> int:
    kb = _load_kb(cfg)
    if kb is None:
        raise DataError(f"no knowledge base at {cfg.paths.kb_dir}")
    results = kb.revalidate(_load_logs(cfg))
    bad = [r for r in results if not r.accepted]
    for r in bad:
        print(f"{r.triple_id}: {r.reason}")
    print(f"{len(results) - len(bad)}/{len(results)} triples re-validate")
    return EXIT_OK if not bad else EXIT_DATA


def cmd_train_matcher(args, cfg: PipelineConfig) -> int:
    kb = _load_kb(cfg)
    if kb is None:
        raise DataError(f"no knowledge base at {cfg.paths.kb_dir}")
    logs = _load_logs(cfg)
    store = load_store(cfg.paths.embeddings)
    pairs = []
    skipped = 0
    for triple in kb.triples:
        if triple.triple_id not in store.text_index or triple.log_id not in logs:
            skipped += 1
            continue
        tokens = store.text_tokens(triple.triple_id)
        log = logs[triple.log_id]
        for track_id in triple.mask.track_ids(triple.log_id):
            track = log.tracks_by_id.get(track_id)
            if track is not None:
                pairs.append((track, tokens))
    if skipped:
        print(f"note: {skipped} triples lack text tokens or logs; skipped", file=sys.stderr)
    result = train(pairs, cfg.matcher.patch, cfg.matcher.train)
    save_checkpoint(result.model, args.out, cfg.matcher.train)
    print(f"trained on {len(pairs)} pairs ({result.skipped_short} too short), "
          f"loss {result.initial_total:.4f} -> {result.final_total:.4f}")
    print(f"checkpoint written to {args.out}")
    return EXIT_OK


def _load_masks_file(path) -> tuple[dict, dict]:
    masks, ranges = {}, {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            masks[rec["log_id"]] = ScenarioMask.from_pairs(
                {rec["log_id"]: rec.get("mask", [])}
            )
            if rec.get("ranges"):
                ranges[rec["log_id"]] = tuple(tuple(r) for r in rec["ranges"])
    return masks, ranges


def cmd_evaluate(args, cfg: PipelineConfig) -> int:
    logs = _load_logs(cfg)
    predictions, _ = _load_masks_file(args.predictions)
    ground_truth, ranges = _load_masks_file(args.ground_truth)
    result = evaluate_benchmark(logs, predictions, ground_truth,
                                scenario_ranges=ranges,
                                alphas=cfg.metrics.grid())
    print(format_table(result))
    if args.out:
        with Path(args.out).open("w", encoding="utf-8") as fh:
            for r in result.per_log:
                fh.write(json.dumps({
                    "log_id": r.log_id, "HOTA-T": r.hota_t, "HOTA": r.hota,
                    "TS-F1": r.ts_f1, "pred_positive": r.pred_positive,
                    "gt_positive": r.gt_positive,
                }) + "\n")
            fh.write(json.dumps({"summary": result.summary()}) + "\n")
    return EXIT_OK


def cmd_inspect_catalog(args) -> int:
    payload = json.dumps(DEFAULT_CATALOG.to_json(), indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(payload + "\n", encoding="utf-8")
        print(f"wrote predicate catalog to {args.out}")
    else:
        print(payload)
    return EXIT_OK


def cmd_inspect_prompt(args, cfg: PipelineConfig) -> int:
    from .synth import Exemplar

    kb = _load_kb(cfg)
    exemplars = []
    query_id = args.query_id or args.query
    if kb is not None and len(kb) > 0:
        emb = _sentence_embedding(cfg, query_id)
        if emb is not None:
            exemplars = [
                Exemplar(t.query_text, t.program_source, sim)
                for t, sim in kb.knn_retrieve(emb, k=cfg.synth.exemplar_top_k)
            ]
    bundle = assemble_prompt(
        args.query, exemplars, DEFAULT_CATALOG.render_doc(),
        DEFAULT_CATALOG.categories, top_k=cfg.synth.exemplar_top_k,
    )
    print(bundle.render())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smine",
        description="Coarse-to-fine scenario mining over trajectory logs",
    )
    parser.add_argument("--version", action="version", version=f"smine {__version__}")
    parser.add_argument("--config", default="smine.toml", help="pipeline config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init-config", help="write a default config file")
    p.add_argument("--out", default="smine.toml")

    p = sub.add_parser("mine", help="run the full pipeline for one query on one log")
    p.add_argument("--query", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--query-id", default="", help="embedding store key (default: query text)")

    p = sub.add_parser("filter", help="run only the coarse filtering stage")
    p.add_argument("--query", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--query-id", default="")
    p.add_argument("--coarse-only", action="store_true", default=True,
                   help="coarse stage only (always on; flag kept for clarity)")

    kb = sub.add_parser("kb", help="knowledge base operations")
    kb_sub = kb.add_subparsers(dest="kb_command", required=True)
    p = kb_sub.add_parser("build", help="validate candidates and build the KB")
    p.add_argument("--candidates", required=True, help="JSONL candidate triples")
    kb_sub.add_parser("validate", help="re-run the gate over the stored KB")

    p = sub.add_parser("train-matcher", help="train the re-ranking matcher from the KB")
    p.add_argument("--out", required=True, help="checkpoint output path")

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    p.add_argument("--predictions", required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--out", default="", help="optional per-log results JSONL")

    p = sub.add_parser("inspect", help="inspection helpers")
    ins_sub = p.add_subparsers(dest="inspect_command", required=True)
    q = ins_sub.add_parser("prompt", help="render the prompt for a query")
    q.add_argument("--query", required=True)
    q.add_argument("--query-id", default="")
    c = ins_sub.add_parser("catalog", help="dump the machine-readable predicate catalog")
    c.add_argument("--out", default="", help="write JSON to a file instead of stdout")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "init-config":
            return cmd_init_config(args)
        cfg = load_config(args.config)
        if args.command == "mine":
            return cmd_mine(args, cfg)
        if args.command == "filter":
            return cmd_filter(args, cfg)
        if args.command == "kb":
            if args.kb_command == "build":
                return cmd_kb_build(args, cfg)
            return cmd_kb_validate(args, cfg)
        if args.command == "train-matcher":
            return cmd_train_matcher(args, cfg)
        if args.command == "evaluate":
            return cmd_evaluate(args, cfg)
        if args.command == "inspect":
            if args.inspect_command == "catalog":
                return cmd_inspect_catalog(args)
            return cmd_inspect_prompt(args, cfg)
        parser.error(f"unknown command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DslError, SmineError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
