"""One insert run plus one query run per parameter value."""
from __future__ import annotations

import csv
from dataclasses import replace
from typing import Optional, Sequence

from ..core import Config
from ..engine import NBTree
from .runner import execute, RunReport
from .workload import WorkloadKind, WorkloadSpec, generate_workload

SWEEP_PARAMS = {"f": "stree_fanout", "sigma": "sigma"}
SWEEP_COLUMNS = ["param", "value", "n", "over_budget",
                 "avg_insert_wall_ns", "max_insert_wall_ns",
                 "avg_insert_modeled_ns", "max_insert_modeled_ns",
                 "avg_query_wall_ns", "max_query_wall_ns",
                 "avg_query_modeled_ns", "max_query_modeled_ns",
                 "pages_written_per_insert"]


def sweep(param: str, values: Sequence[int], base: Config, out: Optional[str] = None, *,
          n: int = 1 << 14, n_queries: int = 1000, seed: int = 0) -> list[dict]:
    if param not in SWEEP_PARAMS:
        raise ValueError(f"param must be one of {sorted(SWEEP_PARAMS)}, got {param!r}")
    if len(values) < 2:
        raise ValueError("a sweep needs at least two values")
    rows = []
    for v in values:
        cfg = replace(base, **{SWEEP_PARAMS[param]: v})
        tree = NBTree(cfg)
        spec = WorkloadSpec(WorkloadKind.INSERT, n, seed, cfg.key_bytes, cfg.value_bytes)
        ops = generate_workload(spec)
        ins = execute(tree, ops)
        qspec = WorkloadSpec(WorkloadKind.QUERY, n_queries, seed + 1, cfg.key_bytes, cfg.value_bytes)
        qry = execute(tree, generate_workload(qspec, [o.key for o in ops]), report=RunReport())
        over = (cfg.memory_budget is not None
                and cfg.sigma * cfg.record_bytes > cfg.memory_budget)
        row = {"param": param, "value": v, "n": n, "over_budget": int(over)}
        for k in SWEEP_COLUMNS[4:8]:
            row[k] = ins.aggregates[k]
        for k in SWEEP_COLUMNS[8:12]:
            row[k] = qry.aggregates[k]
        row["pages_written_per_insert"] = ins.total_pages_written / n if n else 0.0
        rows.append(row)
    if out:
        with open(out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
            w.writeheader()
            w.writerows(rows)
    return rows
