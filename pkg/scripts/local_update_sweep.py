"""Sensitivity of the meta model to the number of local updates m.

Runs the synthetic benchmark with m in 1..5 and reports UIC Recall@20;
the spread should be small (one local update is enough).

Usage:
    python scripts/local_update_sweep.py --seeds 3
"""

import argparse
import time

from coldrec import bench


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--max-m", type=int, default=5)
    args = ap.parse_args()

    ms = list(range(1, args.max_m + 1))
    means = {m: [] for m in ms}
    for seed in range(args.seeds):
        spec, data = bench.benchmark_data(seed)
        ckg = bench.train_graph(data)
        cfg = bench.benchmark_config()
        kgp = bench.pretrain_base(ckg, cfg, seed + 10)
        for m in ms:
            t0 = time.perf_counter()
            cfg = bench.benchmark_config(local_updates=m)
            params, _ = bench.meta_run(ckg, kgp, cfg, seed + 20)
            r = bench.eval_scenario(params, ckg, data, cfg, seed + 30)
            means[m].append(r)
            print(f"seed={seed} m={m} recall@20={r:.4f} "
                  f"t={time.perf_counter()-t0:.1f}s", flush=True)

    avg = {m: sum(v) / len(v) for m, v in means.items()}
    lo, hi = min(avg.values()), max(avg.values())
    spread = (hi - lo) / ((hi + lo) / 2) if hi + lo else 0.0
    for m in ms:
        print(f"m={m} mean recall@20={avg[m]:.4f}")
    print(f"relative spread (max-min)/mean: {spread:.3f}")


if __name__ == "__main__":
    main()
