"""Command-line surface: synth, ingest, pool, folds, eval, report, and the
chained run-paper-protocol convenience command.

Every run writes its fully resolved configuration next to its outputs;
logs go to stderr, data to files only. The seed flag falls back to the
TONEPROBE_SEED environment variable, then 42.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import corpus as corpus_mod
from . import embstore, evalreport, folds, synth
from .corpus import CorpusError
from .embstore import EmbeddingFormatError, FeatureTable
from .evalreport import EvalError, SvmConfig
from .folds import FoldError
from .svm import SvmTrainingError, ovr_model_to_json
from .synth import SynthError, SynthSpec

logger = logging.getLogger("toneprobe")

_FATAL = (CorpusError, EmbeddingFormatError, EvalError, FoldError, SvmTrainingError, SynthError, ValueError)


def default_seed() -> int:
    return int(os.environ.get("TONEPROBE_SEED", "42"))


def parse_layer_list(text: str) -> list[int]:
    """Parse ``1..12`` / ``0,1,5`` / mixes of both."""
    layers: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..", 1)
            layers.extend(range(int(lo), int(hi) + 1))
        elif part:
            layers.append(int(part))
    if not layers:
        raise ValueError(f"no layers in {text!r}")
    return sorted(set(layers))


def _write_run_config(args: argparse.Namespace, target: Path) -> None:
    resolved = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"}
    target.write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _config_path_for(out: Path) -> Path:
    return out / "run_config.json" if out.is_dir() or not out.suffix else out.with_suffix(out.suffix + ".run.json")


def cmd_synth(args) -> int:
    spec = SynthSpec.from_json(args.spec)
    out_dir = Path(args.out_dir)
    corpus = synth.generate(spec, out_dir)
    _write_run_config(args, out_dir / "run_config.json")
    logger.info(
        "generated %d tokens over %d speakers into %s", len(corpus.tokens), spec.n_speakers, out_dir
    )
    return 0


def cmd_ingest(args) -> int:
    manifest = corpus_mod.load_manifest(args.manifest, language=args.language)
    inventory = tuple(v.strip() for v in args.inventory.split(",") if v.strip())
    tokens, warnings = corpus_mod.extract_tokens(manifest, args.tier, inventory)
    for w in warnings:
        logger.warning("%s", w)
    kept = corpus_mod.filter_by_duration(tokens, args.min_dur)
    out = Path(args.out)
    corpus_mod.write_tokens_csv(kept, out)
    acct = corpus_mod.accounting(kept, inventory)
    acct_path = out.with_name(out.stem + "_accounting.csv")
    corpus_mod.write_accounting_csv(acct, acct_path)
    _write_run_config(args, _config_path_for(out))
    logger.info(
        "ingested %d tokens (%d below %.3f s removed) -> %s",
        len(kept), len(tokens) - len(kept), args.min_dur, out,
    )
    return 0


def cmd_pool(args) -> int:
    tokens = corpus_mod.read_tokens_csv(args.tokens)
    layers = parse_layer_list(args.layers)
    table, drops = embstore.pool_corpus(tokens, args.emb_dir, layers, language=args.language or "")
    out = Path(args.out)
    table.save(out)
    embstore.write_drop_report(drops, out.with_name(out.stem + "_drops.csv"))
    _write_run_config(args, _config_path_for(out))
    logger.info("pooled %d rows (%d tokens dropped) -> %s", len(table), len(drops), out)
    return 0


def cmd_folds(args) -> int:
    tokens = corpus_mod.read_tokens_csv(args.tokens)
    if args.mode == "speaker":
        plan = folds.build_speaker_folds(tokens, k=args.k, seed=args.seed)
    else:
        plan = folds.build_dialect_folds(tokens, train_dialect_count=args.train_dialects, seed=args.seed)
    validation = folds.validate_plan(plan, tokens)
    if not validation.ok:  # construction bug guard; reported, not silently shipped
        for v in validation.violations:
            logger.error("%s", v)
        return 1
    out = Path(args.out)
    folds.save_plan(plan, out)
    _write_run_config(args, _config_path_for(out))
    logger.info(
        "%s plan: %d folds, max per-fold divergence %.4f -> %s",
        plan.mode, plan.k, validation.stats.max_divergence, out,
    )
    return 0


def cmd_eval(args) -> int:
    table = FeatureTable.load(args.features)
    plan = folds.load_plan(args.plan)
    layers = parse_layer_list(args.layers) if args.layers else table.available_layers()
    config = SvmConfig(
        C=args.C, tol=args.tol, max_epochs=args.max_epochs, seed=args.seed,
        standardize=not args.no_standardize,
    )
    results = evalreport.run_sweep(table, plan, layers, config, jobs=args.jobs)
    out = Path(args.out)
    evalreport.save_results(results, out)
    _write_run_config(args, _config_path_for(out))
    if args.dump_models:
        dump_dir = Path(args.dump_models)
        dump_dir.mkdir(parents=True, exist_ok=True)
        for layer in layers:
            for index, (test_fold, train_folds) in enumerate(plan.evaluation_instances()):
                classes = results[0].classes
                model, _, _ = evalreport._fit_cell(
                    table, plan.assignment, classes, layer, test_fold, train_folds, config
                )
                ovr_model_to_json(model, dump_dir / f"layer{layer:02d}_fold{index:02d}.json")
    aggregates = evalreport.aggregate(results)
    top_layer, top_f1 = evalreport.best_layer(aggregates)
    logger.info("%d results; best layer %d with mean F1 %.4f -> %s", len(results), top_layer, top_f1, out)
    return 0


def cmd_report(args) -> int:
    results = evalreport.load_results(args.results)
    out_dir = Path(args.out_dir)
    written = evalreport.emit_reports(results, out_dir)
    _write_run_config(args, out_dir / "run_config.json")
    logger.info("wrote %d report files under %s", len(written), out_dir)
    return 0


def cmd_run_paper_protocol(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_run_config(args, out_dir / "run_config.json")

    manifest = corpus_mod.load_manifest(args.manifest, language=args.language)
    inventory = tuple(v.strip() for v in args.inventory.split(",") if v.strip())
    tokens, warnings = corpus_mod.extract_tokens(manifest, args.tier, inventory)
    for w in warnings:
        logger.warning("%s", w)
    kept = corpus_mod.filter_by_duration(tokens, args.min_dur)
    corpus_mod.write_tokens_csv(kept, out_dir / "tokens.csv")
    corpus_mod.write_accounting_csv(corpus_mod.accounting(kept, inventory), out_dir / "tokens_accounting.csv")

    layers = parse_layer_list(args.layers)
    table, drops = embstore.pool_corpus(kept, args.emb_dir, layers, language=manifest.language)
    table.save(out_dir / "features.tpft")
    embstore.write_drop_report(drops, out_dir / "features_drops.csv")

    dropped = {d.token_id for d in drops}
    usable = [t for t in kept if t.token_id not in dropped]
    if args.mode == "speaker":
        plan = folds.build_speaker_folds(usable, k=args.k, seed=args.seed)
    else:
        plan = folds.build_dialect_folds(usable, train_dialect_count=args.train_dialects, seed=args.seed)
    folds.save_plan(plan, out_dir / "plan.json")

    config = SvmConfig(
        C=args.C, tol=args.tol, max_epochs=args.max_epochs, seed=args.seed,
        standardize=not args.no_standardize,
    )
    results = evalreport.run_sweep(table, plan, layers, config, jobs=args.jobs)
    evalreport.save_results(results, out_dir / "results.json")
    evalreport.emit_reports(results, out_dir / "reports")

    top_layer, top_f1 = evalreport.best_layer(evalreport.aggregate(results))
    logger.info("protocol complete: best layer %d, mean F1 %.4f, outputs in %s", top_layer, top_f1, out_dir)
    return 0


def _add_svm_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--C", type=float, default=1.0, help="hinge penalty (default 1.0)")
    p.add_argument("--tol", type=float, default=1e-4, help="projected-gradient stop tolerance")
    p.add_argument("--max-epochs", type=int, default=1000)
    p.add_argument("--seed", type=int, default=default_seed())
    p.add_argument("--no-standardize", action="store_true", help="train on raw features")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                   help="parallel (layer, fold) cells; never changes outputs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="toneprobe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus from a spec JSON")
    p.add_argument("--spec", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="manifest + TextGrids -> thresholded token CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--tier", default=corpus_mod.DEFAULT_TIER)
    p.add_argument("--min-dur", type=float, default=corpus_mod.DEFAULT_MIN_DURATION)
    p.add_argument("--inventory", required=True, help="comma-separated tone labels")
    p.add_argument("--language", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("pool", help="tokens + embedding files -> pooled feature table")
    p.add_argument("--tokens", required=True)
    p.add_argument("--emb-dir", required=True)
    p.add_argument("--layers", default="1..12")
    p.add_argument("--language", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pool)

    p = sub.add_parser("folds", help="build a cross-validation fold plan")
    p.add_argument("--tokens", required=True)
    p.add_argument("--mode", choices=["speaker", "dialect"], default="speaker")
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--train-dialects", type=int, default=None,
                   help="dialect mode: train on exactly this many dialects per instance")
    p.add_argument("--seed", type=int, default=default_seed())
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_folds)

    p = sub.add_parser("eval", help="layer x fold SVM sweep over a feature table")
    p.add_argument("--features", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--layers", default=None, help="default: all layers in the table")
    _add_svm_flags(p)
    p.add_argument("--dump-models", default=None, help="directory for per-cell model JSON dumps")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="results JSON -> CSV tables and SVG figures")
    p.add_argument("--results", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser(
        "run-paper-protocol",
        help="chain ingest -> pool -> folds -> eval -> report with standard defaults",
    )
    p.add_argument("--manifest", required=True)
    p.add_argument("--emb-dir", required=True)
    p.add_argument("--tier", default=corpus_mod.DEFAULT_TIER)
    p.add_argument("--min-dur", type=float, default=corpus_mod.DEFAULT_MIN_DURATION)
    p.add_argument("--inventory", required=True)
    p.add_argument("--language", default=None)
    p.add_argument("--layers", default="1..12")
    p.add_argument("--mode", choices=["speaker", "dialect"], default="speaker")
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--train-dialects", type=int, default=None)
    _add_svm_flags(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_run_paper_protocol)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _FATAL as err:
        logger.error("%s", err)
        return 1


if __name__ == "__main__":
    sys.exit(main())
