"""Command line entry point: ``nbtree <command> ...``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

from ..core import Config, Mode, NBTreeError, OracleMap
from ..costmodel import STRUCTURES, lsm_simulate, predict
from ..engine import MANIFEST_NAME, NBTree
from ..manifest import read_manifest
from .runner import run
from .sweep import sweep
from .trace import trace_figure2
from .workload import WorkloadKind, WorkloadSpec


def _config_args(p: argparse.ArgumentParser) -> None:
    # None means "not given": take the stored index's value, else the Config default
    p.add_argument("--sigma", type=int, default=None, help="records per d-tree (default 1024)")
    p.add_argument("--fanout", "-f", type=int, default=None, help="s-tree fanout (default 3)")
    p.add_argument("--page-bytes", type=int, default=None, help="default 4096")
    p.add_argument("--key-bytes", type=int, default=None, help="default 8")
    p.add_argument("--value-bytes", type=int, default=None, help="default 128")
    p.add_argument("--mode", choices=[m.value for m in Mode], default=None)
    p.add_argument("--deamortize", action="store_true", default=None)
    p.add_argument("--memory-budget", type=int, default=None, help="bytes")
    p.add_argument("--seed", type=int, default=0)


_ARG_FIELDS = {"page_bytes": "page_bytes", "fanout": "stree_fanout", "sigma": "sigma",
               "key_bytes": "key_bytes", "value_bytes": "value_bytes", "mode": "mode",
               "deamortize": "deamortize", "memory_budget": "memory_budget"}


def _config(a, base: Config = None) -> Config:
    given = {f: getattr(a, arg) for arg, f in _ARG_FIELDS.items() if getattr(a, arg) is not None}
    if base is None:
        return Config(**given)
    d = base.to_dict()
    if "page_bytes" in given or "key_bytes" in given or "value_bytes" in given:
        # let the derived layout follow the new sizes
        d["dtree_fanout"] = d["leaf_capacity"] = None
    d.update(given)
    return Config.from_dict(d)


def _stored_config(directory):
    if directory and os.path.exists(os.path.join(directory, MANIFEST_NAME)):
        return read_manifest(os.path.join(directory, MANIFEST_NAME)).config
    return None


def _dir_arg(p: argparse.ArgumentParser, required: bool = False) -> None:
    p.add_argument("--dir", default=os.environ.get("NBTREE_DIR"),
                   help="index directory (default: $NBTREE_DIR; in-memory if unset)")


def cmd_bench(a) -> int:
    cfg = _config(a, _stored_config(a.dir))
    oracle = OracleMap() if a.oracle else None
    if a.workload == "insert":
        spec = WorkloadSpec(WorkloadKind.INSERT, a.n, a.seed, cfg.key_bytes, cfg.value_bytes)
        rep = run(spec, cfg, a.out, directory=a.dir, oracle=oracle,
                  checkpoint_every=a.checkpoint_every)
    elif a.workload == "mixed":
        spec = WorkloadSpec(WorkloadKind.MIXED, a.n, a.seed, cfg.key_bytes, cfg.value_bytes)
        rep = run(spec, cfg, a.out, directory=a.dir, oracle=oracle,
                  checkpoint_every=a.checkpoint_every)
    else:
        # build (or reopen) an index, then time queries against it
        tree = NBTree.open(a.dir, cfg) if a.dir else NBTree(cfg)
        ins = WorkloadSpec(WorkloadKind.INSERT, a.n, a.seed, cfg.key_bytes, cfg.value_bytes)
        if a.n:
            run(ins, cfg, tree=tree)
        lo, hi = bytes(cfg.key_bytes), b"\xff" * cfg.key_bytes
        existing = [k for k, _ in tree.range_query(lo, hi)]
        spec = WorkloadSpec(WorkloadKind.QUERY, a.n_queries, a.seed + 1, cfg.key_bytes,
                            cfg.value_bytes, query_source=a.query_source)
        rep = run(spec, cfg, a.out, tree=tree, existing=existing)
        if a.dir:
            tree.close()
    print(json.dumps(rep.summary(), indent=2, sort_keys=True))
    return 1 if rep.mismatches else 0


def cmd_sweep(a) -> int:
    values = [int(v) for v in a.values.split(",") if v]
    rows = sweep(a.param, values, _config(a), a.out, n=a.n, n_queries=a.n_queries, seed=a.seed)
    w = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]))
    w.writeheader()
    w.writerows(rows)
    return 0


def cmd_validate(a) -> int:
    if not a.dir:
        print("validate needs --dir or NBTREE_DIR", file=sys.stderr)
        return 2
    tree = NBTree.open(a.dir)
    rep = tree.validate()
    tree.pager.close()
    print(json.dumps({"ok": rep.ok, "violation": rep.violation, "path": list(rep.path),
                      "s_tree_height": rep.height, "max_dtree_height": rep.max_dtree_height,
                      "snodes": rep.snodes, "records": rep.records}, indent=2))
    return 0 if rep.ok else 1


def cmd_trace(a) -> int:
    panels = trace_figure2(a.out)
    if not a.out:
        print(json.dumps(panels, indent=2))
    return 0


def cmd_costmodel(a) -> int:
    structures = [s for s in a.structures.split(",") if s]
    ns = [int(v) for v in a.n.split(",")]
    cols = ["structure", "n", "B", "f", "sigma", "amortized_alpha", "amortized_beta",
            "worst_alpha", "worst_beta", "query_alpha", "amortized_insert_s",
            "worst_insert_s", "worst_query_s", "sim_total_pages", "sim_total_seeks"]
    out = open(a.out, "w", newline="") if a.out else sys.stdout
    try:
        w = csv.DictWriter(out, fieldnames=cols)
        w.writeheader()
        for n in ns:
            for s in structures:
                row = {"structure": s, "n": n, "B": a.B, "f": a.fanout, "sigma": a.sigma,
                       "sim_total_pages": "", "sim_total_seeks": ""}
                row.update(predict(s, n, a.B, a.fanout, a.sigma).row())
                if s == "lsm" and a.simulate:
                    sim = lsm_simulate(n, a.fanout, a.sigma, a.B)
                    row["sim_total_pages"] = sim["total_pages"]
                    row["sim_total_seeks"] = sim["total_seeks"]
                w.writerow(row)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nbtree", description="Nested B-tree index benchmarks")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="run an insert, query or mixed workload")
    b.add_argument("workload", choices=["insert", "query", "mixed"])
    b.add_argument("--n", type=int, default=10000, help="operations (inserts to preload for query)")
    b.add_argument("--n-queries", type=int, default=10000)
    b.add_argument("--query-source", choices=["existing", "absent"], default="existing")
    b.add_argument("--oracle", action="store_true", help="check every query against a plain map")
    b.add_argument("--checkpoint-every", type=int, default=None, help="validate every N ops")
    b.add_argument("--out", default=None, help="per-op CSV path")
    _config_args(b)
    _dir_arg(b)
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("sweep", help="vary f or sigma and report avg/max times")
    s.add_argument("--param", choices=["f", "sigma"], required=True)
    s.add_argument("--values", required=True, help="comma separated, at least two")
    s.add_argument("--n", type=int, default=1 << 14)
    s.add_argument("--n-queries", type=int, default=1000)
    s.add_argument("--out", default=None)
    _config_args(s)
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("validate", help="audit an on-disk index")
    _dir_arg(v)
    v.set_defaults(func=cmd_validate)

    t = sub.add_parser("trace", help="golden structural traces")
    t.add_argument("which", choices=["figure2"])
    t.add_argument("--out", default=None)
    t.set_defaults(func=cmd_trace)

    c = sub.add_parser("costmodel", help="closed-form cost table")
    c.add_argument("--n", default=str(1 << 20), help="comma separated item counts")
    c.add_argument("--structures", default=",".join(STRUCTURES))
    c.add_argument("--B", type=int, default=256)
    c.add_argument("--fanout", "-f", type=int, default=4)
    c.add_argument("--sigma", type=int, default=1024, help="NB-tree sigma, also the LSM's C1")
    c.add_argument("--simulate", action="store_true", help="add brute-force LSM merge totals")
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_costmodel)
    return ap


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return a.func(a)
    except (NBTreeError, ValueError, OSError) as e:
        print(f"nbtree: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
