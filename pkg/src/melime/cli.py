"""Command-line surface: canned demos and a generic explain command.

Exit codes are a stable contract: 0 success, 1 demo checks failed or
black-box fault, 2 usage or input problems, 3 empty neighborhood after
automatic radius growth, 4 bridge failure. When the report goes to
stdout nothing else is written there; all diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import shlex
import sys
from pathlib import Path

import numpy as np

from .blackbox import (
    bridge_class_probability_fn,
    bridge_connect,
    bridge_regression_fn,
    knn_regressor_from_json,
    naive_bayes_from_json,
    tabular_regression_fn,
    text_class_probability_fn,
)
from .core import (
    BlackBoxFailure,
    BridgeError,
    Dataset,
    Instance,
    NeighborhoodEmpty,
    TokenInstance,
)
from .engine import EngineConfig, explain
from .experiments import (
    EXPERIMENTS,
    report_importance_charts,
    run_experiment,
    write_importance_svg,
)
from .generators import (
    KdeGenerator,
    KdePcaGenerator,
    VaeGenerator,
    Word2VecGenerator,
    linear_autoencoder_codec,
    load_embeddings,
)
from .local_models import LinearFamily, StatsFamily, TreeFamily

__all__ = ["main"]

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_NEIGHBORHOOD = 3
EXIT_BRIDGE = 4

# initial try plus this many automatic radius doublings
_R_DOUBLINGS = 3

_FAMILIES = {"linear": LinearFamily, "tree": TreeFamily, "stats": StatsFamily}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="melime", description="Local model-agnostic explanations."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    demo = sub.add_parser("demo", help="run a canned experiment and grade it")
    demo.add_argument("name", choices=sorted(EXPERIMENTS), help="experiment to run")
    demo.add_argument("--seed", type=int, default=None,
                      help="RNG seed (default: $MELIME_SEED or 0)")
    demo.add_argument("--out", default="-", help="report path, - for stdout")
    demo.add_argument("--svg", default=None, metavar="PREFIX",
                      help="write one importance chart per explanation to PREFIX<label>.svg")

    ex = sub.add_parser("explain", help="explain one instance of any model")
    ex.add_argument("--data", default=None, help="training CSV for generator fitting")
    source = ex.add_mutually_exclusive_group(required=True)
    source.add_argument("--model", default=None, help="serialized model JSON file")
    source.add_argument("--bridge", default=None,
                        help="command line of a bridge peer speaking the wire protocol")
    ex.add_argument("--instance", required=True,
                    help="comma-separated feature values, or tokens for word2vec")
    ex.add_argument("--generator", default="kde",
                    choices=("kde", "kdepca", "vae", "word2vec"))
    ex.add_argument("--local-model", default="linear", choices=sorted(_FAMILIES))
    ex.add_argument("--r", type=float, required=True, help="neighborhood radius")
    ex.add_argument("--batch-size", type=int, default=200, metavar="B")
    ex.add_argument("--sigma", type=float, default=1e-3)
    ex.add_argument("--epsilon-c", type=float, default=1e-3)
    ex.add_argument("--max-batches", type=int, default=100)
    ex.add_argument("--seed", type=int, default=None,
                    help="RNG seed (default: $MELIME_SEED or 0)")
    ex.add_argument("--h", type=float, default=None, help="KDE bandwidth override")
    ex.add_argument("--latent-dim", type=int, default=None,
                    help="latent dimension for kdepca/vae")
    ex.add_argument("--variance-threshold", type=float, default=None,
                    help="kdepca: retain components up to this variance ratio")
    ex.add_argument("--embeddings", default=None, help="embedding table file for word2vec")
    ex.add_argument("--class-label", default=None,
                    help="class whose probability is explained (classifiers)")
    ex.add_argument("--timeout", type=float, default=30.0, help="bridge timeout, seconds")
    ex.add_argument("--out", default="-", help="explanation path, - for stdout")
    return parser


def _usage(message: str) -> int:
    print(f"melime: error: {message}", file=sys.stderr)
    return EXIT_USAGE


def _resolve_seed(value):
    if value is not None:
        return int(value), None
    raw = os.environ.get("MELIME_SEED")
    if raw is None or raw == "":
        return 0, None
    try:
        return int(raw), None
    except ValueError:
        return None, f"MELIME_SEED must be an integer, got {raw!r}"


def _write_out(out: str, payload: str) -> None:
    if out == "-":
        sys.stdout.write(payload)
        sys.stdout.flush()
    else:
        Path(out).write_text(payload, "utf-8")


def _read_table(path: str) -> Dataset:
    """CSV of floats; a non-numeric first row is taken as the header."""
    lines = Path(path).read_text("utf-8").strip().split("\n")
    first = [c.strip() for c in lines[0].split(",")]
    names = None
    start = 0
    try:
        [float(c) for c in first]
    except ValueError:
        names = tuple(first)
        start = 1
    rows = [[float(c) for c in line.split(",")] for line in lines[start:]]
    return Dataset(np.array(rows), names)


def _cmd_demo(args) -> int:
    seed, err = _resolve_seed(args.seed)
    if err:
        return _usage(err)
    report, checks = run_experiment(args.name, seed=seed)
    _write_out(args.out, json.dumps(report, indent=2) + "\n")
    if args.svg is not None:
        for label, importances in report_importance_charts(report):
            write_importance_svg(
                importances,
                f"{args.svg}{label}.svg",
                f"{args.name} importances ({label})",
                seed=seed,
            )
    for name, ok in checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {args.name}.{name}", file=sys.stderr)
    return EXIT_OK if all(checks.values()) else EXIT_FAIL


def _cmd_explain(args) -> int:
    seed, err = _resolve_seed(args.seed)
    if err:
        return _usage(err)

    textual = args.generator == "word2vec"
    if textual and args.embeddings is None:
        return _usage("--generator word2vec requires --embeddings")
    if not textual and args.data is None:
        return _usage(f"--generator {args.generator} requires --data")
    if args.local_model == "stats" and not textual:
        return _usage("--local-model stats needs the per-sample annotations "
                      "only --generator word2vec produces")
    if textual and args.bridge is not None:
        return _usage("the bridge protocol is numeric; word2vec needs --model")

    # the explained instance
    if textual:
        x_star = TokenInstance(tuple(t for t in args.instance.split(",") if t))
        train = None
    else:
        try:
            train = _read_table(args.data)
        except (OSError, ValueError) as exc:
            return _usage(f"cannot read --data: {exc}")
        try:
            values = [float(v) for v in args.instance.split(",")]
        except ValueError:
            return _usage(f"--instance must be numeric for --generator {args.generator}")
        if len(values) != train.d:
            return _usage(f"--instance has {len(values)} values, --data has {train.d} columns")
        x_star = Instance(values, train.feature_names)

    # the black box
    client = None
    if args.bridge is not None:
        try:
            client = bridge_connect(command=shlex.split(args.bridge), timeout=args.timeout)
        except (BridgeError, OSError) as exc:
            print(f"melime: bridge failure: {exc}", file=sys.stderr)
            return EXIT_BRIDGE
        if client.n_features != x_star.d:
            client.close()
            return _usage(f"bridge peer expects {client.n_features} features, "
                          f"--instance has {x_star.d}")
        if client.task == "classification":
            label = args.class_label or client.classes[0]
            if label not in client.classes:
                client.close()
                return _usage(f"peer classes are {list(client.classes)}, got {label!r}")
            f = bridge_class_probability_fn(client, label)
        else:
            f = bridge_regression_fn(client)
    else:
        try:
            text = Path(args.model).read_text("utf-8")
            schema = json.loads(text).get("format")
        except (OSError, ValueError) as exc:
            return _usage(f"cannot read --model: {exc}")
        if schema == "melime-knn-regressor":
            if textual:
                return _usage("a knn regressor explains numeric rows, not token sequences")
            model = knn_regressor_from_json(text)
            f = tabular_regression_fn(model)
        elif schema == "melime-naive-bayes":
            if not textual:
                return _usage("a naive-bayes model explains token sequences; "
                              "use --generator word2vec")
            model = naive_bayes_from_json(text)
            label = args.class_label or model.classes[0]
            if label not in model.classes:
                return _usage(f"model classes are {list(model.classes)}, got {label!r}")
            f = text_class_probability_fn(model, label)
        else:
            return _usage(f"unknown model schema {schema!r}")

    try:
        # the neighborhood generator
        if args.generator == "kde":
            generator = KdeGenerator(train, h=args.h)
        elif args.generator == "kdepca":
            generator = KdePcaGenerator(
                train, m=args.latent_dim,
                variance_threshold=args.variance_threshold, h=args.h,
            )
        elif args.generator == "vae":
            m = args.latent_dim if args.latent_dim is not None else min(2, train.d)
            generator = VaeGenerator(linear_autoencoder_codec(train, m))
        else:
            table = load_embeddings(args.embeddings)
            missing = [t for t in x_star.tokens if t not in table.vocabulary]
            if missing:
                return _usage(f"tokens {missing} not in the embedding table")
            generator = Word2VecGenerator(table)
        family = _FAMILIES[args.local_model]()

        r = args.r
        last = None
        for attempt in range(_R_DOUBLINGS + 1):
            config = EngineConfig(
                r=r, b=args.batch_size, sigma=args.sigma,
                epsilon_c=args.epsilon_c, max_batches=args.max_batches, seed=seed,
            )
            try:
                explanation = explain(f, x_star, generator, family, config)
                break
            except NeighborhoodEmpty as exc:
                last = exc
                if attempt < _R_DOUBLINGS:
                    print(f"melime: no neighbors within r={r:.6g}, retrying with "
                          f"r={2 * r:.6g}", file=sys.stderr)
                    r = 2 * r
        else:
            print(f"melime: neighborhood still empty after {_R_DOUBLINGS} radius "
                  f"doublings (r={r:.6g}); nearest training point is at distance "
                  f"{last.min_distance:.6g}", file=sys.stderr)
            return EXIT_NEIGHBORHOOD
    except BlackBoxFailure as exc:
        if isinstance(exc.cause, BridgeError):
            print(f"melime: bridge failure: {exc.cause}", file=sys.stderr)
            return EXIT_BRIDGE
        print(f"melime: black box failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    finally:
        if client is not None:
            client.close()

    _write_out(args.out, explanation.to_json() + "\n")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "demo":
        return _cmd_demo(args)
    return _cmd_explain(args)


if __name__ == "__main__":
    raise SystemExit(main())
