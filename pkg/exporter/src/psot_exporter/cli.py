"""The psot-export command."""

from __future__ import annotations

import argparse
import sys

from .errors import ExportError
from .export import ExportSpec, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="psot-export",
        description="Convert a video (with .wav audio sidecar) and a question into a .psot bundle.",
    )
    parser.add_argument("--video", required=True, help="video file; audio sidecar <video>.wav")
    parser.add_argument("--question", required=True, help="question text")
    parser.add_argument("--label", type=int, default=None, help="answer label, if known")
    parser.add_argument("--classes", type=int, default=None, help="answer vocabulary size for the header")
    parser.add_argument("--segment-seconds", type=float, default=6.0)
    parser.add_argument("--grid", type=int, default=8, help="output patch grid side N")
    parser.add_argument("--dim", type=int, default=512, help="common feature width in the header")
    parser.add_argument("--visual-encoder", default="cell-stats")
    parser.add_argument("--audio-encoder", default="spectral")
    parser.add_argument("--text-encoder", default="hashed-word")
    parser.add_argument("--out", required=True, help="output .psot path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = ExportSpec(
        video=args.video,
        question=args.question,
        out=args.out,
        segment_seconds=args.segment_seconds,
        grid=args.grid,
        dim=args.dim,
        label=args.label,
        classes=args.classes,
        visual_encoder=args.visual_encoder,
        audio_encoder=args.audio_encoder,
        text_encoder=args.text_encoder,
    )
    try:
        path = export(spec)
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
