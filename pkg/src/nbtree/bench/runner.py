"""Run workloads against an index and record per-op cost."""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from ..core import Config, DeltaRecord, NBTreeError, Op, OracleMap
from ..engine import NBTree
from ..pager import modeled_seconds
from .workload import WorkloadOp, WorkloadSpec, generate_workload

log = logging.getLogger(__name__)

CSV_HEADER = ["op_index", "op", "wall_ns", "pages_read", "pages_written", "seeks", "modeled_ns"]
WRITE_OPS = ("insert", "update", "delete")


class OracleMismatch(NBTreeError):
    pass


class Row(tuple):
    __slots__ = ()
    fields = CSV_HEADER

    def __new__(cls, *vals):
        return super().__new__(cls, vals)

    op_index = property(lambda s: s[0])
    op = property(lambda s: s[1])
    wall_ns = property(lambda s: s[2])
    pages_read = property(lambda s: s[3])
    pages_written = property(lambda s: s[4])
    seeks = property(lambda s: s[5])
    modeled_ns = property(lambda s: s[6])


def aggregate(rows: Sequence[Row]) -> dict:
    """avg/max of wall and modeled time for writes and for queries."""
    out = {}
    for label, ops in (("insert", WRITE_OPS), ("query", ("query",))):
        sel = [r for r in rows if r.op in ops]
        n = len(sel)
        out[f"n_{label}"] = n
        for col in ("wall_ns", "modeled_ns"):
            vals = [r[CSV_HEADER.index(col)] for r in sel]
            out[f"avg_{label}_{col}"] = sum(vals) / n if n else 0.0
            out[f"max_{label}_{col}"] = max(vals) if n else 0
    return out


@dataclass
class RunReport:
    rows: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    mismatches: int = 0
    validations: int = 0
    forced_drains: int = 0
    final_shape: tuple = (0, 0)

    @property
    def total_pages_written(self) -> int:
        return sum(r.pages_written for r in self.rows)

    def summary(self) -> dict:
        return {**self.aggregates, "n_rows": len(self.rows), "mismatches": self.mismatches,
                "validations": self.validations, "forced_drains": self.forced_drains,
                "total_pages_written": self.total_pages_written,
                "total_pages_read": sum(r.pages_read for r in self.rows),
                "total_seeks": sum(r.seeks for r in self.rows),
                "s_tree_height": self.final_shape[0], "max_dtree_height": self.final_shape[1]}


def _counters(tree: NBTree):
    w, q = tree.stats, tree.query_stats
    return (w.seq_read_pages + q.seq_read_pages, w.seq_write_pages + q.seq_write_pages,
            w.seeks + q.seeks)


def execute(tree: NBTree, ops: Sequence[WorkloadOp], *, oracle: Optional[OracleMap] = None,
            checkpoint_every: Optional[int] = None, writer=None, start_index: int = 0,
            report: Optional[RunReport] = None) -> RunReport:
    """Apply ``ops`` to ``tree`` one at a time, timing each."""
    report = report if report is not None else RunReport()
    p = tree.config.cost_params
    clock = time.perf_counter_ns
    for i, (name, key, value) in enumerate(ops, start_index):
        r0, w0, s0 = _counters(tree)
        t0 = clock()
        if name == "insert":
            tree.insert(key, value)
        elif name == "update":
            tree.update(key, value)
        elif name == "delete":
            tree.delete(key)
        elif name == "query":
            got = tree.point_query(key)
        else:
            raise ValueError(f"unknown op {name!r}")
        wall = clock() - t0
        r1, w1, s1 = _counters(tree)
        dr, dw, ds = r1 - r0, w1 - w0, s1 - s0
        row = Row(i, name, wall, dr, dw, ds, round(modeled_seconds(ds, dr, dw, p) * 1e9))
        report.rows.append(row)
        if writer is not None:
            writer.writerow(row)
        if oracle is not None:
            if name == "query":
                if got != oracle.get(key):
                    report.mismatches += 1
                    log.error("op %d: query %s returned %r, oracle %r", i, key.hex(), got,
                              oracle.get(key))
            else:
                op = {"insert": Op.PUT, "update": Op.UPDATE, "delete": Op.DELETE}[name]
                oracle.apply(DeltaRecord(op, 0, key, value or b""))
        if checkpoint_every and (i + 1) % checkpoint_every == 0:
            rep = tree.validate()
            report.validations += 1
            if not rep.ok:
                raise NBTreeError(f"validate failed after op {i}: {rep.violation} at {rep.path}")
    report.forced_drains = tree.forced_drains
    report.final_shape = tree.shape()
    report.aggregates = aggregate(report.rows)
    return report


def run(spec: WorkloadSpec, config: Config, out_path: Optional[str] = None, *,
        tree: Optional[NBTree] = None, directory: Optional[str] = None,
        existing: Sequence[bytes] = (), oracle: Optional[OracleMap] = None,
        checkpoint_every: Optional[int] = None) -> RunReport:
    """Generate ``spec``'s ops, run them, and optionally write CSV + summary JSON.

    Uses ``tree`` if given, else opens ``directory``, else a fresh in-memory
    index. A failing op still leaves the rows so far in the CSV.
    """
    if spec.key_bytes != config.key_bytes or spec.value_bytes != config.value_bytes:
        spec = replace(spec, key_bytes=config.key_bytes, value_bytes=config.value_bytes)
    ops = generate_workload(spec, existing)
    own = tree is None
    if tree is None:
        tree = NBTree.open(directory, config) if directory else NBTree(config)
    fh = open(out_path, "w", newline="") if out_path else None
    report = RunReport()
    try:
        writer = None
        if fh is not None:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
        execute(tree, ops, oracle=oracle, checkpoint_every=checkpoint_every,
                writer=writer, report=report)
    finally:
        if fh is not None:
            fh.close()
        if own and directory:
            tree.close()
    if out_path:
        with open(out_path + ".summary.json", "w") as js:
            json.dump(report.summary(), js, indent=2, sort_keys=True)
    return report


def read_csv(path: str) -> list[Row]:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        return [Row(int(a), op, int(b), int(c), int(d), int(e), int(f)) for a, op, b, c, d, e, f in rd]
