"""Command line: encode frames and texts into an SMEB store."""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .encoders import make_encoder
from .export import ExportJob, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smine-export",
        description="Export frame/text embeddings in the engine's SMEB format",
    )
    parser.add_argument("--version", action="version",
                        version=f"smine-export {__version__}")
    parser.add_argument("--frames-dir", default="",
                        help="directory of <log_id>/<camera_id>/<ts_ns>.png frames")
    parser.add_argument("--texts-file", default="",
                        help='JSONL of {"query_id", "text"} records')
    parser.add_argument("--encoder", default="tiny", help="tiny | clip")
    parser.add_argument("--dim", type=int, default=64,
                        help="output dimension (tiny encoder only)")
    parser.add_argument("--model-name", default="",
                        help="pretrained model identifier for the clip encoder")
    parser.add_argument("--text-tokens", action="store_true",
                        help="emit one row per text token instead of one pooled row")
    parser.add_argument("--out", required=True, help="output .smeb path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if not args.frames_dir and not args.texts_file:
        print("error: need --frames-dir and/or --texts-file", file=sys.stderr)
        return 2
    try:
        encoder = make_encoder(args.encoder, dim=args.dim, model_name=args.model_name)
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        report = export(ExportJob(
            encoder=encoder,
            frames_dir=args.frames_dir,
            texts_file=args.texts_file,
            out_path=args.out,
            text_tokens=args.text_tokens,
        ))
    except (FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"wrote {report.rows} rows (dim {report.dim}, {report.frames} frames, "
          f"{report.texts} texts) to {report.smeb_path}")
    print(f"sidecar index: {report.index_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
