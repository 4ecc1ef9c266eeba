"""Command-line pipeline: gen-synth, pretrain, meta-train, adapt,
evaluate. Exit codes: 0 success, 2 configuration error, 3 missing
input, 4 numerical divergence.
"""

import argparse
import sys

from . import autodiff, kge, meta, scheduler, synth
from .config import ConfigError, load_config, dump_config
from .pipeline import (adapt_stage, derive_seed, evaluate_stage,
                       gen_synth_stage, meta_train_stage, pretrain_stage)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING_INPUT = 3
EXIT_DIVERGENCE = 4

_DIVERGENCE_ERRORS = (kge.DivergenceError, meta.NonFiniteGradientError,
                      autodiff.NonFiniteValueError,
                      scheduler.NonFiniteFeatureError)


def _add_common(p):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--seed", type=int, help="run seed (overrides config)")
    p.add_argument("--workers", type=int, help="worker cap")
    p.add_argument("--out", required=True, help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="coldrec",
        description="Cold-start KG recommender pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate a synthetic dataset")
    _add_common(p)
    p.add_argument("--users", type=int, default=200)
    p.add_argument("--items", type=int, default=100)
    p.add_argument("--entities", type=int, default=30,
                   help="attribute entities beyond the items themselves")
    p.add_argument("--relations", type=int, default=3)
    p.add_argument("--noise", type=float, default=0.0,
                   help="fraction of training users with shuffled labels")

    for name in ("pretrain", "meta-train", "adapt", "evaluate"):
        p = sub.add_parser(name)
        _add_common(p)
        p.add_argument("--data", required=True, help="dataset directory")
        if name in ("meta-train", "adapt", "evaluate"):
            p.add_argument("--checkpoint", required=True,
                           help="input checkpoint from the previous stage")
        if name in ("adapt", "evaluate"):
            p.add_argument("--scenario", required=True,
                           choices=["uc", "ic", "uic", "ncs"])
        if name == "evaluate":
            p.add_argument("--k", type=int, help="ranking cutoff")
            p.add_argument("--per-user", action="store_true",
                           help="include per-user rows in the report")
    return parser


def _config_from_args(args):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if getattr(args, "k", None) is not None:
        overrides["top_k"] = args.k
    return load_config(args.config, overrides)


def run(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
    except FileNotFoundError as exc:
        print(f"error: missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print("resolved config:")
    print(dump_config(cfg), end="")

    try:
        if args.command == "gen-synth":
            spec = synth.SyntheticSpec(
                n_users=args.users, n_items=args.items,
                n_attr_entities=args.entities, n_kg_relations=args.relations,
                noise_fraction=args.noise, query_size=cfg.query_size,
                user_cut=cfg.user_cut, item_cut=cfg.item_cut,
                ncs_holdout=cfg.ncs_holdout)
            gen_synth_stage(spec, args.out, derive_seed(cfg.seed, "gen-synth"))
            print(f"dataset written to {args.out}")
        elif args.command == "pretrain":
            path = pretrain_stage(args.data, args.out, cfg)
            print(f"pretraining checkpoint: {path}")
        elif args.command == "meta-train":
            path = meta_train_stage(args.data, args.checkpoint, args.out, cfg)
            print(f"model checkpoint: {path}")
        elif args.command == "adapt":
            path = adapt_stage(args.data, args.checkpoint, args.scenario,
                               args.out, cfg)
            print(f"adapted checkpoint: {path}")
        elif args.command == "evaluate":
            report = evaluate_stage(args.data, args.checkpoint, args.scenario,
                                    args.out, cfg,
                                    per_user=getattr(args, "per_user", False))
            print(report.to_text(), end="")
    except FileNotFoundError as exc:
        print(f"error: missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except (ConfigError, synth.InfeasibleSpecError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _DIVERGENCE_ERRORS as exc:
        print(f"error: numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
