"""Mixed-workload fuzz against the reference map, validating every 1000 ops.

    python3 scripts/oracle_fuzz.py --seeds 0-9 --ops 100000
"""
import argparse
import time

from nbtree import Config, NBTree, OracleMap
from nbtree.bench.runner import execute
from nbtree.bench.workload import WorkloadSpec, generate_workload


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", default="0-2")
    ap.add_argument("--ops", type=int, default=100_000)
    ap.add_argument("--sigma", type=int, default=512)
    ap.add_argument("--fanout", type=int, default=3)
    ap.add_argument("--mode", default="advanced")
    a = ap.parse_args()
    lo, _, hi = a.seeds.partition("-")
    failed = 0
    for seed in range(int(lo), int(hi or lo) + 1):
        ops = generate_workload(WorkloadSpec("mixed", a.ops, seed))
        for deam in (False, True):
            t0 = time.perf_counter()
            cfg = Config(sigma=a.sigma, stree_fanout=a.fanout, mode=a.mode, deamortize=deam)
            tree = NBTree(cfg)
            rep = execute(tree, ops, oracle=OracleMap(), checkpoint_every=1000)
            failed += rep.mismatches
            print(f"seed={seed} deamortize={deam} mismatches={rep.mismatches} "
                  f"validations={rep.validations} forced_drains={rep.forced_drains} "
                  f"{time.perf_counter() - t0:.1f}s", flush=True)
    raise SystemExit(1 if failed else 0)


if __name__ == "__main__":
    main()
