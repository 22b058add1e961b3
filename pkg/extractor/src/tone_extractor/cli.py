"""CLI: extract per-layer hidden states for every utterance in a manifest."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from toneprobe.corpus import CorpusError, load_manifest

from .extract import extract, write_extraction_log
from .models import MODEL_REGISTRY, ExtractorError, resolve_model

logger = logging.getLogger("tone_extractor")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tone-extract", description=__doc__)
    parser.add_argument("--manifest", required=True)
    parser.add_argument("--model", required=True, help=f"model tag ({', '.join(sorted(MODEL_REGISTRY))})")
    parser.add_argument("--checkpoint", default=None, help="override: hub id or local model directory")
    parser.add_argument("--untrained", action="store_true",
                        help="seeded random base-architecture weights (offline testing)")
    parser.add_argument("--out", required=True, help="output root; files land in <out>/<model tag>/")
    parser.add_argument("--include-layer0", action="store_true",
                        help="also store the front-end output as layer 0")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--batch", type=int, default=1,
                        help="reserved sizing hint; inference stays per-utterance for reproducibility")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        spec = resolve_model(args.model, checkpoint=args.checkpoint, untrained=args.untrained)
        manifest = load_manifest(args.manifest)
        report = extract(
            manifest, spec, args.out, include_layer0=args.include_layer0, device=args.device
        )
    except (ExtractorError, CorpusError) as err:
        logger.error("%s", err)
        return 1
    write_extraction_log(report, Path(args.out) / f"{spec.model_tag}_extraction.log")
    # per-utterance failures are logged and non-fatal unless nothing succeeded
    return 1 if report.failed and not report.written else 0


if __name__ == "__main__":
    sys.exit(main())
