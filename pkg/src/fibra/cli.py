"""Command-line interface.

    fibra color GRAPH            print fibers, write the coloring as JSON
    fibra base GRAPH             write the base document and compression factor
    fibra test GRAPH1 GRAPH2     Fibration and WL screens (exit 3 = not isomorphic)
    fibra gnn-check GRAPH        base-vs-graph equivalence on random GNN stacks
    fibra train-fbgd ...         Fibration-Gradient Descent on IDX data, CSV out
    fibra stats DIR              compression-factor histogram over a directory
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import gnn
from .fibration import (
    compression_factor,
    covering_partition,
    minimal_balanced_coloring,
    minimal_base,
)
from .io import (
    GraphFormatError,
    IdxFormatError,
    base_to_document,
    coloring_to_document,
    load_graph,
    load_idx,
    save_checkpoint,
)
from .isotest import fibration_test, wl_test
from .mlp import FbgdConfig, MlpModel, fbgd_train

EXIT_NON_ISOMORPHIC = 3
GRAPH_SUFFIXES = {".json", ".txt", ".edges", ".el", ".gz"}


def _default_seed() -> int:
    try:
        return int(os.environ.get("FIBRA_SEED", "0"))
    except ValueError:
        return 0


def _fmt_class(members) -> str:
    return "{" + ",".join(str(u) for u in members) + "}"


def cmd_color(args) -> int:
    g = load_graph(args.graph)
    c = covering_partition(g, not args.no_attributes) if args.covering else \
        minimal_balanced_coloring(g, not args.no_attributes)
    classes = c.classes()
    noun = "fiber" if len(classes) == 1 else "fibers"
    print(f"{len(classes)} {noun}: " + " ".join(_fmt_class(m) for m in classes))
    out = args.output or Path(args.graph).with_suffix(".coloring.json")
    Path(out).write_text(json.dumps(coloring_to_document(c), indent=1) + "\n")
    return 0


def cmd_base(args) -> int:
    g = load_graph(args.graph)
    b = minimal_base(g, not args.no_attributes)
    cf = compression_factor(g, b)
    out = args.output or Path(args.graph).with_suffix(".base.json")
    Path(out).write_text(json.dumps(base_to_document(g, b), indent=1) + "\n")
    print(f"nodes {g.node_count} -> {b.base.node_count}  compression_factor {cf:.3f}")
    print(f"base written to {out}")
    return 0


def cmd_test(args) -> int:
    g1, g2 = load_graph(args.graph1), load_graph(args.graph2)
    use_attr = not args.no_attributes
    fib = fibration_test(g1, g2, use_attr)
    wl = wl_test(g1, g2, use_attr)
    flag = "" if fib.exact else " (signature comparison, not exact)"
    print(f"fibration: {fib.outcome.value}{flag}")
    print(f"wl:        {wl.outcome.value}")
    return EXIT_NON_ISOMORPHIC if fib.non_isomorphic or wl.non_isomorphic else 0


def cmd_gnn_check(args) -> int:
    g = load_graph(args.graph)
    b = minimal_base(g, not args.no_attributes)
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    types = g.edge_types or (0,)
    for _ in range(args.stacks):
        stack = gnn.random_stack(rng, args.features, types, depth=args.depth, width=args.width)
        H0_B = rng.normal(size=(b.base.node_count, args.features))
        rep = gnn.reduced_form_equivalence(g, b, stack, H0_B)
        worst = max(worst, rep.max_deviation)
    ok = worst <= args.tolerance
    print(f"fibers {b.base.node_count}/{g.node_count}  stacks {args.stacks}  max deviation {worst:.3e}")
    return 0 if ok else 1


def _load_split(args):
    root = Path(args.data_dir) if args.data_dir else None

    def pick(explicit, *names):
        if explicit:
            return Path(explicit)
        for name in names:
            for cand in (root / name, root / (name + ".gz")):
                if cand.exists():
                    return cand
        raise FileNotFoundError(f"none of {names} found in {root}")

    if root is None and not (args.images and args.labels):
        raise FileNotFoundError("give --data-dir or both --images and --labels")
    tr_img = pick(args.images, "train-images-idx3-ubyte", "train-images.idx3-ubyte")
    tr_lab = pick(args.labels, "train-labels-idx1-ubyte", "train-labels.idx1-ubyte")
    train = load_idx(tr_img, tr_lab, args.limit)
    test = None
    if args.test_images and args.test_labels:
        test = load_idx(args.test_images, args.test_labels, args.test_limit)
    elif root is not None:
        try:
            test = load_idx(pick(None, "t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"),
                            pick(None, "t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"),
                            args.test_limit)
        except FileNotFoundError:
            test = None
    return train, test


def cmd_train_fbgd(args) -> int:
    train, test = _load_split(args)
    X, y = train.flat(), train.labels
    eval_set = (test.flat(), test.labels) if test is not None else None
    sizes = [X.shape[1], *args.hidden, 10]
    cfg = FbgdConfig(epsilon=args.epsilon, period_T=args.period, learning_rate=args.lr,
                     batch_size=args.batch_size, rng_seed=args.seed, criterion=args.criterion)
    model = MlpModel.init(sizes, seed=args.seed)
    header = ["epoch", "loss", "accuracy"] + [f"size_l{i + 1}" for i in range(len(args.hidden))]
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(header)

        def emit(rec):
            writer.writerow([rec.epoch, repr(float(rec.loss)), repr(float(rec.accuracy)), *rec.sizes])
            out.flush()

        result = fbgd_train(model, X, y, args.epochs, cfg, eval_set, on_epoch=emit)
    finally:
        if out is not sys.stdout:
            out.close()
    for msg in result.diagnostics:
        print(msg, file=sys.stderr)
    if args.checkpoint:
        save_checkpoint(result.model, args.checkpoint, seed=args.seed, epoch=args.epochs)
    return 0


def _stats_one(path: Path):
    g = load_graph(path)
    return path.name, g.node_count, compression_factor(g, minimal_base(g))


def cmd_stats(args) -> int:
    files = sorted(p for p in Path(args.directory).iterdir()
                   if p.is_file() and p.suffix in GRAPH_SUFFIXES and ".base." not in p.name
                   and ".coloring." not in p.name)
    if not files:
        print(f"no graph files in {args.directory}", file=sys.stderr)
        return 1
    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        rows = list(pool.map(_stats_one, files))
    for name, n, cf in rows:
        print(f"{name}\t{n}\t{cf:.4f}")
    factors = np.array([cf for _, _, cf in rows])
    counts, edges = np.histogram(factors, bins=args.bins, range=(0.0, 1.0))
    print(f"# files {len(rows)}  mean compression_factor {factors.mean():.4f}")
    for lo, hi, c in zip(edges, edges[1:], counts):
        print(f"# [{lo:.2f}, {hi:.2f}{']' if hi == 1.0 else ')'} {c}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fibra", description="Fibration symmetry toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("color", help="minimal balanced coloring of a graph")
    p.add_argument("graph")
    p.add_argument("-o", "--output")
    p.add_argument("--covering", action="store_true", help="use in+out refinement instead")
    p.add_argument("--no-attributes", action="store_true")
    p.set_defaults(func=cmd_color)

    p = sub.add_parser("base", help="minimal fibration base of a graph")
    p.add_argument("graph")
    p.add_argument("-o", "--output")
    p.add_argument("--no-attributes", action="store_true")
    p.set_defaults(func=cmd_base)

    p = sub.add_parser("test", help="Fibration and WL isomorphism screens")
    p.add_argument("graph1")
    p.add_argument("graph2")
    p.add_argument("--no-attributes", action="store_true")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("gnn-check", help="check base/graph GNN equivalence on random stacks")
    p.add_argument("graph")
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--stacks", type=int, default=20)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--width", type=int, default=4)
    p.add_argument("--features", type=int, default=3)
    p.add_argument("--tolerance", type=float, default=1e-9)
    p.add_argument("--no-attributes", action="store_true")
    p.set_defaults(func=cmd_gnn_check)

    p = sub.add_parser("train-fbgd", help="train an MLP with Fibration-Gradient Descent")
    p.add_argument("--data-dir")
    p.add_argument("--images")
    p.add_argument("--labels")
    p.add_argument("--test-images")
    p.add_argument("--test-labels")
    p.add_argument("--limit", type=int, default=10000)
    p.add_argument("--test-limit", type=int)
    p.add_argument("--hidden", type=int, nargs="+", default=[128, 64])
    p.add_argument("--epsilon", type=float, default=5e-2)
    p.add_argument("--period", type=int, default=5)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--criterion", choices=("lambda", "xi"), default="lambda")
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("-o", "--output", help="CSV path (default: stdout)")
    p.add_argument("--checkpoint")
    p.set_defaults(func=cmd_train_fbgd)

    p = sub.add_parser("stats", help="compression factors over a directory of graphs")
    p.add_argument("directory")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--jobs", type=int, default=4)
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (GraphFormatError, IdxFormatError, FileNotFoundError, ValueError) as exc:
        print(f"fibra {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
