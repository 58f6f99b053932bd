"""Command-line entry points: cemb-export and cemb-verify."""

from __future__ import annotations

import argparse
import logging
import sys

from .cemb import CembFormatError
from .corpus import CorpusFormatError
from .export import ExportError, ExportSpec, export, verify_alignment


def export_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cemb-export",
        description="Export contextual token embeddings from a corpus to a CEMB file.",
    )
    parser.add_argument("--corpus", required=True, help="corpus JSON-lines file")
    parser.add_argument("--model", required=True,
                        help="model identifier, local path, or preset "
                             "(bert-base, biobert, roberta)")
    parser.add_argument("--out", required=True, help="output .cemb path")
    parser.add_argument("--pooling", choices=("mean", "first"), default="mean",
                        help="how to pool a word's sub-word pieces")
    parser.add_argument("--layer", type=int, default=-1,
                        help="hidden layer to export (-1 = final)")
    parser.add_argument("--batch", type=int, default=8, help="inference batch size")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s",
                        stream=sys.stderr)
    try:
        spec = ExportSpec(
            corpus_path=args.corpus, model=args.model, out_path=args.out,
            pooling=args.pooling, layer=args.layer, batch_size=args.batch,
        )
        export(spec)
    except (CorpusFormatError, CembFormatError, ExportError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def verify_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cemb-verify",
        description="Check a CEMB file against its corpus (coverage, row counts, finiteness).",
    )
    parser.add_argument("--corpus", required=True)
    parser.add_argument("--cemb", required=True)
    args = parser.parse_args(argv)
    diagnostics = verify_alignment(args.corpus, args.cemb)
    print(diagnostics.summary())
    return 0 if diagnostics.ok else 1


if __name__ == "__main__":
    sys.exit(export_main())
