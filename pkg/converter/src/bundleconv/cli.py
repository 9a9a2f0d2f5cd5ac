"""Converter CLI: convert standard citation benchmarks or generate synthetic
bundles.  Nonzero exit with a message on download/parse failure."""

from __future__ import annotations

import argparse
import sys

from .formats import ConvertError
from .planetoid import DATASETS, convert
from .synth import KINDS, gen_synthetic


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bundleconv",
                                 description="Graph bundle converter")
    sub = ap.add_subparsers(dest="command", required=True)

    cv = sub.add_parser("convert", help="convert a standard citation dataset")
    cv.add_argument("--dataset", required=True, choices=DATASETS)
    cv.add_argument("--out", required=True)
    cv.add_argument("--source", default=None,
                    help="directory with the raw ind.* files (skips download)")

    gen = sub.add_parser("gen", help="generate a synthetic bundle")
    gen.add_argument("--kind", required=True, choices=KINDS)
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--p", type=float, default=0.3)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--f", type=int, default=8)
    gen.add_argument("--classes", type=int, default=2)
    gen.add_argument("--out", required=True)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "convert":
            manifest = convert(args.dataset, args.out, source=args.source)
        else:
            manifest = gen_synthetic(args.kind, args.n, args.p, args.seed,
                                     args.f, args.classes, args.out)
    except ConvertError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(manifest.to_json(), end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
