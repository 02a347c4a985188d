"""Pages written per insert vs n, with and without deamortization.

    python3 scripts/growth_law.py --out results/growth.csv
"""
import argparse
import csv
import math

from nbtree import Config, NBTree
from nbtree.bench.runner import execute
from nbtree.bench.workload import WorkloadSpec, generate_workload
from nbtree.costmodel import nbtree_costs


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="14,16,18", help="log2 of n")
    ap.add_argument("--sigma", type=int, default=1024)
    ap.add_argument("--fanout", type=int, default=4)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", default=None)
    a = ap.parse_args()
    rows = []
    fit = None
    for e in (int(x) for x in a.sizes.split(",")):
        n = 2**e
        ops = generate_workload(WorkloadSpec("insert", n, a.seed))
        for deam in (False, True):
            cfg = Config(sigma=a.sigma, stree_fanout=a.fanout, deamortize=deam)
            tree = NBTree(cfg)
            rep = execute(tree, ops)
            m = [r.modeled_ns for r in rep.rows]
            pred = nbtree_costs(n, cfg.dtree_fanout, a.fanout, a.sigma).amortized_insert.alpha_seq
            w = rep.total_pages_written / n
            if fit is None and not deam:
                fit = w / pred
            rows.append({"n": n, "deamortize": int(deam), "pages_written_per_insert": round(w, 5),
                         "predicted": round(fit * pred, 5), "max_modeled_ns": max(m),
                         "mean_modeled_ns": round(sum(m) / n), "max_over_mean": round(max(m) * n / sum(m), 1),
                         "s_tree_height": tree.shape()[0], "forced_drains": tree.forced_drains})
            print(rows[-1], flush=True)
    if a.out:
        with open(a.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    main()
