"""Command-line entry point: export a list of audio files to FEA1 features."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .export import ExportJob, ModelLoadError, export


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pyfeat-export",
        description="Export pretrained speech embeddings to FEA1 feature files.",
    )
    parser.add_argument("input_list",
                        help="text file with one audio path per line")
    parser.add_argument("--model", required=True,
                        choices=["wav2vec2-base", "wavlm-base-plus"])
    parser.add_argument("--layer", required=True, type=int,
                        help="transformer layer to take embeddings from")
    parser.add_argument("--out-dir", required=True)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO)

    try:
        paths = [line.strip() for line in
                 Path(args.input_list).read_text().splitlines() if line.strip()]
        job = ExportJob(audio_paths=paths, model=args.model,
                        layer=args.layer, out_dir=args.out_dir)
        records = export(job)
    except (OSError, ValueError, ModelLoadError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"exported {len(records)} of {len(paths)} files to {args.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
