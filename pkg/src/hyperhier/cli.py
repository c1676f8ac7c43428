"""Command-line interface.

Machine-readable outputs go to the output directory (``--out``, else
``$HYPERHIER_OUT``, else the config file's ``out``, else ``./out``); the
human log goes to standard error. Settings resolve as flags > config file >
defaults.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import io
from .errors import DataError, DimensionError, DomainError, InvariantViolation, TreeError
from .mlr import train_flat
from .pipeline import (
    RunConfig,
    analysis_report,
    build_run_config,
    dumps_json,
    evaluate_levels,
    resolve_tree,
    run_experiment,
    write_json,
)
from .synthetic import generate_synthetic
from .taxonomy import load_tree, save_tree

log = logging.getLogger("hyperhier")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_TREE = 5
EXIT_DOMAIN = 6
EXIT_INVARIANT = 7
EXIT_IO = 8


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _common(p):
    p.add_argument("--config", metavar="FILE", help="key = value config file")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides $HYPERHIER_OUT)")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")


def _synthetic_flags(p):
    g = p.add_argument_group("synthetic data")
    g.add_argument("--seed", type=int, help="seed for data generation and training (default 0)")
    g.add_argument("--dim", type=int, help="feature dimension n (default 2)")
    g.add_argument("--classes", type=int, help="leaf class count K (default 8)")
    g.add_argument("--parents", type=int, help="group leaves into this many adjacent parents (default K/2)")
    g.add_argument("--radius", type=float, help="ring radius R of cluster means (default 4)")
    g.add_argument("--sigma", type=float, help="per-class standard deviation (default 0.5)")
    g.add_argument("--jitter", type=float, help="angular jitter as a fraction of spacing (default 0.01)")
    g.add_argument("--train-per-class", type=int, help="training samples per class (default 500)")
    g.add_argument("--test-per-class", type=int, help="test samples per class (default 500)")
    g.add_argument("--tree", metavar="FILE", help="label tree file (default: ring tree)")
    g.add_argument("--shuffle-tree-seed", type=int, help="shuffle leaf-to-parent assignment with this seed")


def _train_flags(p, seed=True):
    g = p.add_argument_group("training")
    g.add_argument("--geometry", choices=("euclidean", "hyperbolic"), help="classifier head (default hyperbolic)")
    g.add_argument("--steps", type=int, help="optimizer steps (default 5000)")
    g.add_argument("--batch-size", type=int, help="minibatch size (default 1024)")
    g.add_argument("--lr-offsets", type=float, help="Riemannian SGD rate for gyroplane offsets (default 1e-4)")
    g.add_argument("--lr-normals", type=float, help="SGD rate for gyroplane normals (default 1e-3)")
    g.add_argument("--lr-euclidean", type=float, help="SGD rate for the Euclidean head (default 1e-3)")
    g.add_argument("--c", type=float, help="curvature magnitude (default 1)")
    g.add_argument("--boundary-epsilon", type=float, help="boundary shell width (default 1e-5)")
    if seed:
        g.add_argument("--seed", type=int, help="training seed (default 0)")


def _metric_flags(p):
    g = p.add_argument_group("metrics")
    g.add_argument("--bins", type=int, help="calibration bins M (default 15)")
    g.add_argument("--ignore-index", type=int, help="label excluded from metrics (default 255)")
    g.add_argument("--ece-normalization", choices=("all", "class"),
                   help="cwECE bin weights over all samples or the class's samples (default all)")


def _analysis_flags(p, seed=True):
    g = p.add_argument_group("analysis")
    g.add_argument("--max-pairs", type=int, help="cap on distance pairs per class pair (default 100000)")
    if seed:
        g.add_argument("--seed", type=int, help="pair-subsampling seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hyperhier", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate synthetic train/test data and tree")
    _common(p)
    _synthetic_flags(p)

    p = sub.add_parser("train", help="train a flat classifier on an HHEB file")
    _common(p)
    p.add_argument("--data", metavar="FILE", help="training data (default OUT/train.hheb)")
    p.add_argument("--classes", type=int, help="class count (default: max label + 1)")
    _train_flags(p)

    p = sub.add_parser("eval", help="child- and parent-level metrics for a checkpoint")
    _common(p)
    p.add_argument("--model", metavar="FILE", help="checkpoint (default OUT/model.ckpt)")
    p.add_argument("--data", metavar="FILE", help="evaluation data (default OUT/test.hheb)")
    p.add_argument("--tree", metavar="FILE", help="label tree (default OUT/tree.txt)")
    _metric_flags(p)

    p = sub.add_parser("analyze", help="embedding norm and distance-uniformity diagnostics")
    _common(p)
    p.add_argument("--model", metavar="FILE", help="checkpoint (default OUT/model.ckpt)")
    p.add_argument("--data", metavar="FILE", help="embedding data (default OUT/test.hheb)")
    _analysis_flags(p)

    p = sub.add_parser("concavity", help="tabulate ball distance against Euclidean distance")
    _common(p)
    p.add_argument("--norms", type=_floats, required=True, metavar="N1,N2",
                   help="embedding norms in [0, 1)")
    p.add_argument("--grid", type=_floats, required=True, metavar="D1,D2,...",
                   help="ascending Euclidean distances")
    p.add_argument("--step", type=float, default=1e-6, help="finite-difference step (default 1e-6)")

    p = sub.add_parser("run", help="full pipeline: gen, train, eval, analyze")
    _common(p)
    _synthetic_flags(p)
    _train_flags(p, seed=False)
    _metric_flags(p)
    _analysis_flags(p, seed=False)
    return parser


_NOT_CONFIG = {"command", "config", "verbose", "data", "model", "norms", "grid", "step"}


def _resolve(args) -> RunConfig:
    file_layer = io.read_config(args.config) if args.config else {}
    env_layer = {"out": os.environ["HYPERHIER_OUT"]} if os.environ.get("HYPERHIER_OUT") else {}
    cli_layer = {k: str(v) for k, v in vars(args).items()
                 if k not in _NOT_CONFIG and v is not None}
    if args.command in ("eval", "train", "analyze"):
        cli_layer.pop("tree", None)
    return build_run_config(file_layer, env_layer, cli_layer)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen(args, cfg: RunConfig) -> None:
    out = _out_dir(cfg)
    tree = resolve_tree(cfg)
    data = generate_synthetic(replace(cfg.synthetic, tree=tree))
    io.write_hheb(out / "train.hheb", data.train.X, data.train.labels)
    io.write_hheb(out / "test.hheb", data.test.X, data.test.labels)
    save_tree(tree, out / "tree.txt")
    log.info("wrote %d train and %d test samples to %s", len(data.train.labels),
             len(data.test.labels), out)


def cmd_train(args, cfg: RunConfig) -> None:
    out = _out_dir(cfg)
    X, y = io.read_hheb(args.data or out / "train.hheb")
    result = train_flat(X, y, cfg.geometry, cfg.train, cfg.ball, n_classes=args.classes)
    io.save_checkpoint(result.model, out / "model.ckpt")
    (out / "loss_trace.txt").write_text(
        "".join(format(float(v), ".17g") + "\n" for v in result.loss_trace))
    log.info("trained %s head for %d steps, final loss %.4f", cfg.geometry,
             cfg.train.steps, result.loss_trace[-1])


def cmd_eval(args, cfg: RunConfig) -> None:
    out = _out_dir(cfg)
    model = io.load_checkpoint(args.model or out / "model.ckpt")
    X, y = io.read_hheb(args.data or out / "test.hheb")
    tree = load_tree(args.tree or out / "tree.txt", strict=False)
    if tree.level_size(0) != model.n_classes:
        raise DataError(f"tree has {tree.level_size(0)} leaves, model {model.n_classes} classes")
    levels = evaluate_levels(model, X, y, tree, cfg.n_bins, cfg.ignore_index, cfg.ece_normalization)
    write_json(out / "metrics_child.json", levels[0])
    if len(levels) > 1:
        write_json(out / "metrics_parent.json", levels[1])
    for r in levels:
        log.info("level %d: mIoU %.4f mAcc %.4f aAcc %.4f cwECE %.4f",
                 r["level"], r["mIoU"], r["mAcc"], r["aAcc"], r["cwECE"])


def cmd_analyze(args, cfg: RunConfig) -> None:
    out = _out_dir(cfg)
    model = io.load_checkpoint(args.model or out / "model.ckpt")
    X, y = io.read_hheb(args.data or out / "test.hheb")
    if model.dim != X.shape[1]:
        raise DimensionError(f"model expects n={model.dim}, data has n={X.shape[1]}")
    report = analysis_report(model, X, y, cfg.max_pairs, cfg.train.seed)
    write_json(out / "analysis.json", report)
    log.info("mean inter-class CV %.4f, mean plane CV %.4f",
             report["interclass_cv_mean"], report["plane_cv_mean"])


def cmd_concavity(args, cfg: RunConfig) -> None:
    from .analysis import concavity_scan

    if len(args.norms) != 2:
        raise UsageError("hyperhier concavity: error: --norms takes exactly two values")
    rows = concavity_scan(args.norms[0], args.norms[1], args.grid, args.step)
    print(f"{'d_E':>12} {'d_H':>14} {'dH/dE':>14} {'finite diff':>14}")
    for r in rows:
        print(f"{r.d_e:12.6g} {r.d_h:14.9f} {r.derivative:14.9f} {r.fd_derivative:14.9f}")
    if args.out or os.environ.get("HYPERHIER_OUT"):
        write_json(_out_dir(cfg) / "concavity.json",
                   {"norm1": args.norms[0], "norm2": args.norms[1],
                    "rows": [r._asdict() for r in rows]})


def cmd_run(args, cfg: RunConfig) -> None:
    result = run_experiment(cfg)
    log.info("wrote reports to %s", cfg.out_dir)
    log.debug("%s", dumps_json(result["summary"]))


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "analyze": cmd_analyze,
            "concavity": cmd_concavity, "run": cmd_run}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _resolve(args)
    except (ValueError, TypeError, OSError) as exc:
        print(f"hyperhier: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except TreeError as exc:
        log.error("tree error: %s", exc)
        return EXIT_TREE
    except DomainError as exc:
        log.error("domain error: %s", exc)
        return EXIT_DOMAIN
    except (DataError, DimensionError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except InvariantViolation as exc:
        log.error("invariant violated: %s", exc)
        return EXIT_INVARIANT
    except OSError as exc:
        log.error("i/o error: %s", exc)
        return EXIT_IO
    except ValueError as exc:
        log.error("invalid value: %s", exc)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
