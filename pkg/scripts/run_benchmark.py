"""End-to-end synthetic benchmark: generate data, pretrain, meta-train,
adapt and evaluate every cold-start scenario.

Usage:
    python scripts/run_benchmark.py --out runs/bench --seed 0
"""

import argparse
import os
import sys

from coldrec import cli


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/bench")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--config", default=None)
    args = ap.parse_args()

    os.makedirs(args.out, exist_ok=True)
    data = os.path.join(args.out, "data")
    common = ["--seed", str(args.seed), "--out", args.out]
    if args.config:
        common += ["--config", args.config]

    kge_ckpt = os.path.join(args.out, "kge.ckpt")
    model_ckpt = os.path.join(args.out, "model.ckpt")
    steps = [
        ["gen-synth", "--out", data, "--seed", str(args.seed)],
        ["pretrain", "--data", data] + common,
        ["meta-train", "--data", data, "--checkpoint", kge_ckpt] + common,
    ]
    for scen in ("uc", "ic", "uic", "ncs"):
        adapted = os.path.join(args.out, f"adapted_{scen}.ckpt")
        steps.append(["adapt", "--data", data, "--checkpoint", model_ckpt,
                      "--scenario", scen] + common)
        steps.append(["evaluate", "--data", data, "--checkpoint", adapted,
                      "--scenario", scen] + common)

    for step in steps:
        print("+", " ".join(step))
        rc = cli.run(step)
        if rc != 0:
            print(f"step failed with exit code {rc}", file=sys.stderr)
            return rc
    for scen in ("uc", "ic", "uic", "ncs"):
        path = os.path.join(args.out, f"report_{scen}.txt")
        print(f"--- {scen} ---")
        with open(path) as f:
            print(f.read())
    return 0


if __name__ == "__main__":
    sys.exit(main())
