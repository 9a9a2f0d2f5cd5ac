"""Command-line surface.

Subcommands: run-decoupled, run-iterative, sweep, theory, validate-bundle.
Exit codes: 0 ok, 1 input error, 2 numerical failure.  The UNIFEWS_THREADS
environment variable bounds sweep worker parallelism.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from .errors import InputError, NumericalError
from .metrics import reports_to_csv, run_single, sweep
from .bundle import validate_bundle


def _parse_deltas(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip() != ""]
    except ValueError as exc:
        raise InputError(f"bad threshold list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sparsegnn",
                                 description="Entry-wise sparsified graph learning engine")
    sub = ap.add_subparsers(dest="command", required=True)

    dec = sub.add_parser("run-decoupled", help="propagate then train the transform MLP")
    dec.add_argument("--bundle", required=True)
    dec.add_argument("--scheme", choices=["sgc", "appnp"], default="sgc")
    dec.add_argument("--hops", type=int, default=2)
    dec.add_argument("--alpha", type=float, default=0.1)
    dec.add_argument("--delta-a", type=float, default=0.0)
    dec.add_argument("--delta-w", type=float, default=0.0)
    dec.add_argument("--skip", action=argparse.BooleanOptionalAction, default=True)
    dec.add_argument("--epochs", type=int, default=200)
    dec.add_argument("--hidden", type=int, default=512)
    dec.add_argument("--depth", type=int, default=2)
    dec.add_argument("--lr", type=float, default=0.5)
    dec.add_argument("--seed", type=int, default=0)
    dec.add_argument("--out", required=True)

    it = sub.add_parser("run-iterative", help="train the sparsified GCN")
    it.add_argument("--bundle", required=True)
    it.add_argument("--depth", type=int, default=2)
    it.add_argument("--hidden", type=int, default=512)
    it.add_argument("--epochs", type=int, default=200)
    it.add_argument("--delta-a", type=float, default=0.0)
    it.add_argument("--delta-w", type=float, default=0.0)
    it.add_argument("--lr", type=float, default=0.5)
    it.add_argument("--weight-decay", type=float, default=0.0)
    it.add_argument("--skip", action=argparse.BooleanOptionalAction, default=True)
    it.add_argument("--seed", type=int, default=0)
    it.add_argument("--out", required=True)

    sw = sub.add_parser("sweep", help="grid of runs over delta_a x delta_w")
    sw.add_argument("--bundle", required=True)
    sw.add_argument("--grid", required=True, help="JSON grid config")
    sw.add_argument("--out", required=True)

    th = sub.add_parser("theory", help="numerical verification suites")
    th.add_argument("--check", choices=["thm42", "thm43", "prop44", "smoothing"],
                    required=True)
    th.add_argument("--n", type=int, default=32)
    th.add_argument("--seeds", type=int, default=20)
    th.add_argument("--deltas", type=_parse_deltas, default=None)
    th.add_argument("--c", type=float, default=1.0)
    th.add_argument("--hops", type=int, default=10)
    th.add_argument("--edge-prob", type=float, default=0.3)
    th.add_argument("--out", required=True)

    vb = sub.add_parser("validate-bundle", help="check a bundle directory")
    vb.add_argument("--bundle", required=True)
    return ap


def _cmd_run_decoupled(args) -> int:
    spec = {"mode": "decoupled", "bundle": args.bundle, "scheme": args.scheme,
            "hops": args.hops, "alpha": args.alpha, "delta_a": args.delta_a,
            "delta_w": args.delta_w, "skip": args.skip, "epochs": args.epochs,
            "hidden": args.hidden, "depth": args.depth,
            "learning_rate": args.lr, "seed": args.seed}
    report = run_single(spec)
    report.to_json(args.out)
    print(f"test accuracy {report.accuracy['test']:.4f}  "
          f"eta_a {report.totals['eta_a_mean']:.4f}  flops {report.totals['flops']}")
    return 0


def _cmd_run_iterative(args) -> int:
    spec = {"mode": "iterative", "bundle": args.bundle, "depth": args.depth,
            "hidden": args.hidden, "epochs": args.epochs,
            "delta_a": args.delta_a, "delta_w": args.delta_w,
            "learning_rate": args.lr, "weight_decay": args.weight_decay,
            "skip": args.skip, "seed": args.seed}
    report = run_single(spec)
    report.to_json(args.out)
    print(f"test accuracy {report.accuracy['test']:.4f}  "
          f"eta_a {report.totals['eta_a_mean']:.4f}  "
          f"eta_w {report.totals['eta_w_mean']:.4f}  flops {report.totals['flops']}")
    return 0


def _cmd_sweep(args) -> int:
    with open(args.grid) as fh:
        grid = json.load(fh)
    grid["bundle"] = args.bundle
    reports = sweep(grid)
    reports_to_csv(reports, args.out)
    print(f"{len(reports)} runs -> {args.out}")
    return 0


def _dicts_to_csv(rows, path) -> None:
    if not rows:
        raise InputError("empty result table")
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()))
    writer.writeheader()
    writer.writerows(rows)
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def _cmd_theory(args) -> int:
    from . import theory
    from .propagate import PropagationScheme, SchemeKind

    seeds = list(range(args.seeds))
    deltas = args.deltas
    if args.check == "thm43":
        rows = theory.thm43_suite([args.n], seeds, deltas or [0.01, 0.05, 0.1],
                                  p_edge=args.edge_prob)
        _dicts_to_csv(rows, args.out)
        bad = [r for r in rows if not r["bound_holds"]]
    elif args.check == "thm42":
        rows = theory.thm42_suite([args.n], seeds, deltas or [0.01, 0.05, 0.1],
                                  [0.5, args.c], p_edge=args.edge_prob)
        _dicts_to_csv(rows, args.out)
        bad = [r for r in rows if not r["within_bound"]]
    elif args.check == "prop44":
        rows = []
        for seed in seeds:
            T = theory.random_diffusion(args.n, args.edge_prob, seed)
            rng_x = np.random.default_rng(seed + 613)
            X = rng_x.standard_normal((args.n, 1))
            scheme = PropagationScheme(SchemeKind.SGC, hops=args.hops, skip=False)
            rows += theory.multi_hop_error_curve(
                T, X, scheme, deltas or [0.0, 0.02, 0.05, 0.1])
        theory.table_to_csv(rows, args.out)
        bad = []
    else:  # smoothing
        rows = []
        for seed in seeds:
            T = theory.random_diffusion(args.n, args.edge_prob, seed)
            rng_x = np.random.default_rng(seed + 613)
            X = rng_x.standard_normal((args.n, 1))
            scheme = PropagationScheme(SchemeKind.GENERIC_SMOOTHING,
                                       hops=args.hops, b=0.25, c=args.c, skip=False)
            rows += theory.smoothing_distance(
                T, X, scheme, deltas or [0.0, 0.02, 0.05, 0.1], args.c)
        theory.table_to_csv(rows, args.out)
        bad = []
    print(f"{len(rows)} rows -> {args.out}")
    if bad:
        print(f"{len(bad)} bound violations", file=sys.stderr)
        return 2
    return 0


def _cmd_validate_bundle(args) -> int:
    summary = validate_bundle(args.bundle)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "run-decoupled": _cmd_run_decoupled,
        "run-iterative": _cmd_run_iterative,
        "sweep": _cmd_sweep,
        "theory": _cmd_theory,
        "validate-bundle": _cmd_validate_bundle,
    }
    try:
        return handlers[args.command](args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
