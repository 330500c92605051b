"""Command line: `hub-export export ...` and `hub-export verify <file>`."""

from __future__ import annotations

import argparse
import sys

from .exporter import ExportError, ExportJob, export
from .interchange import FormatError, verify


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="hub-export", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_export = sub.add_parser("export", help="run a checkpoint over a CSV dataset")
    p_export.add_argument("--checkpoint", required=True, help="model id or local path")
    p_export.add_argument("--data", required=True, help="labeled CSV (id,text,label)")
    p_export.add_argument("--out", required=True, help="output interchange file")
    p_export.add_argument("--max-len", type=int, default=150)
    p_export.add_argument("--device", default="cpu")

    p_verify = sub.add_parser("verify", help="re-parse and validate an interchange file")
    p_verify.add_argument("file")

    args = parser.parse_args(argv)
    if args.command == "export":
        job = ExportJob(checkpoint=args.checkpoint, dataset=args.data,
                        output=args.out, max_len=args.max_len, device=args.device)
        try:
            count = export(job)
        except ExportError as e:
            print(str(e), file=sys.stderr)
            return 1
        print(f"exported {count} examples to {args.out}")
        return 0
    try:
        report = verify(args.file)
    except (FormatError, FileNotFoundError) as e:
        print(f"FAIL {e}", file=sys.stderr)
        return 1
    print(f"OK {report.summary()}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
