"""Average/max insert and query times while varying f or sigma.

    python3 scripts/param_sweeps.py --out-dir results
"""
import argparse
import os

from nbtree import Config
from nbtree.bench.sweep import sweep


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=2**17)
    ap.add_argument("--n-queries", type=int, default=1000)
    ap.add_argument("--out-dir", default="results")
    a = ap.parse_args()
    os.makedirs(a.out_dir, exist_ok=True)
    for sigma in (64, 2048):
        rows = sweep("f", [3, 6, 9, 12, 15], Config(sigma=sigma), os.path.join(a.out_dir, f"sweep_f_sigma{sigma}.csv"),
                     n=a.n, n_queries=a.n_queries)
        for r in rows:
            print(sigma, r["value"], r["avg_insert_modeled_ns"], r["avg_query_modeled_ns"], flush=True)
    rows = sweep("sigma", [64, 128, 256, 512, 1024, 2048, 4096], Config(stree_fanout=3),
                 os.path.join(a.out_dir, "sweep_sigma.csv"), n=a.n // 2, n_queries=a.n_queries)
    for r in rows:
        print("sigma", r["value"], r["avg_insert_modeled_ns"], r["avg_query_modeled_ns"])


if __name__ == "__main__":
    main()
