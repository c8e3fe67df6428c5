"""`ssebridge export`: vocabulary manifest -> annotated SSE-EMB file."""

from __future__ import annotations

import argparse
import sys

from .encoder import REFERENCE_ENCODER_ID
from .errors import BridgeError
from .export import ExportRequest, export_embeddings


def cmd_export(args) -> int:
    mark_words = None
    if args.mark_words is not None:
        mark_words = tuple(w.strip() for w in args.mark_words.split(",") if w.strip())
    req = ExportRequest(
        manifest_path=args.manifest,
        out_path=args.out,
        encoder_id=args.encoder,
        mark_words=mark_words,
        eot_cap=args.eot_cap,
    )
    summary = export_embeddings(req)
    print(
        f"exported {summary.n_rows} rows from {summary.n_sentences} sentences "
        f"({summary.kinds['target']} target, {summary.kinds['eot']} eot) to {summary.out_path}",
        file=sys.stderr,
    )
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssebridge",
        description="Export text-encoder token embeddings with kind annotations into SSE-EMB.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="encode manifest sentences and write SSE-EMB + sidecar")
    p.add_argument("--manifest", required=True, help="vocabulary manifest JSON")
    p.add_argument("--encoder", default=REFERENCE_ENCODER_ID,
                   help=f"encoder id (default {REFERENCE_ENCODER_ID}; other ids need transformers)")
    p.add_argument("--mark-words", default=None,
                   help="comma-separated words whose pieces get kind=target "
                        "(default: the manifest's word list; empty string marks nothing)")
    p.add_argument("--eot-cap", type=int, default=None,
                   help="keep at most this many end-of-text rows per sentence (default: all)")
    p.add_argument("--out", required=True, help="output SSE-EMB path")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BridgeError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
