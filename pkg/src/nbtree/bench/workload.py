"""Deterministic workload generation."""
from __future__ import annotations

import enum
import random
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence


class WorkloadKind(str, enum.Enum):
    INSERT = "insert"
    QUERY = "query"
    MIXED = "mixed"


class QuerySource(str, enum.Enum):
    EXISTING = "existing"
    ABSENT = "absent"


class WorkloadOp(NamedTuple):
    op: str            # insert | update | delete | query
    key: bytes
    value: Optional[bytes]


class KeySpaceExhausted(ValueError):
    pass


@dataclass(frozen=True)
class WorkloadSpec:
    kind: WorkloadKind
    n_ops: int
    seed: int = 0
    key_bytes: int = 8
    value_bytes: int = 128
    query_source: QuerySource = QuerySource.EXISTING
    # put : update : delete : query, for mixed workloads
    ratios: tuple = (70, 10, 10, 10)

    def __post_init__(self):
        object.__setattr__(self, "kind", WorkloadKind(self.kind))
        object.__setattr__(self, "query_source", QuerySource(self.query_source))
        if self.n_ops < 0:
            raise ValueError("n_ops must be >= 0")
        if len(self.ratios) != 4 or min(self.ratios) < 0 or sum(self.ratios) == 0:
            raise ValueError("ratios must be four nonnegative weights, not all zero")


class _KeySource:
    """Uniform keys, rejection-sampled so that none repeats."""

    def __init__(self, rng: random.Random, key_bytes: int, taken=()):
        self.rng = rng
        self.bits = 8 * key_bytes
        self.key_bytes = key_bytes
        self.taken = set(taken)

    def fresh(self) -> bytes:
        if len(self.taken) >= 1 << self.bits:
            raise KeySpaceExhausted(f"all {1 << self.bits} keys of {self.key_bytes} bytes used")
        while True:
            k = self.rng.getrandbits(self.bits).to_bytes(self.key_bytes, "big")
            if k not in self.taken:
                self.taken.add(k)
                return k


def generate_workload(spec: WorkloadSpec, existing: Sequence[bytes] = ()) -> list[WorkloadOp]:
    """Build the op sequence for ``spec``.

    Query workloads draw uniformly from ``existing`` (keys already in the
    index) or, for absent queries, from fresh keys outside it.
    """
    rng = random.Random(spec.seed)
    kb, vb = spec.key_bytes, spec.value_bytes
    if spec.kind is WorkloadKind.INSERT and spec.n_ops > (1 << 8 * kb) - len(existing):
        raise KeySpaceExhausted(f"{spec.n_ops} unique keys do not fit in {kb} bytes")
    keys = _KeySource(rng, kb, existing)
    ops: list[WorkloadOp] = []

    if spec.kind is WorkloadKind.INSERT:
        for _ in range(spec.n_ops):
            ops.append(WorkloadOp("insert", keys.fresh(), rng.randbytes(vb)))
        return ops

    if spec.kind is WorkloadKind.QUERY:
        if spec.query_source is QuerySource.EXISTING:
            if not existing and spec.n_ops:
                raise ValueError("existing-key queries need a nonempty key set")
            pool = list(existing)
            for _ in range(spec.n_ops):
                ops.append(WorkloadOp("query", pool[rng.randrange(len(pool))], None))
        else:
            for _ in range(spec.n_ops):
                k = keys.fresh()
                keys.taken.discard(k)   # absent keys may repeat; they just must not exist
                ops.append(WorkloadOp("query", k, None))
        return ops

    # mixed: updates, deletes and queries target keys live at that point
    live = list(existing)
    where = {k: i for i, k in enumerate(live)}
    names = ("insert", "update", "delete", "query")
    for _ in range(spec.n_ops):
        name = rng.choices(names, weights=spec.ratios)[0]
        if name != "insert" and not live:
            name = "insert"
        if name == "insert":
            k = keys.fresh()
            where[k] = len(live)
            live.append(k)
            ops.append(WorkloadOp(name, k, rng.randbytes(vb)))
            continue
        k = live[rng.randrange(len(live))]
        if name == "update":
            ops.append(WorkloadOp(name, k, rng.randbytes(vb)))
        elif name == "query":
            ops.append(WorkloadOp(name, k, None))
        else:
            # swap-remove; a deleted key is never reinserted since fresh() remembers it
            i = where.pop(k)
            last = live.pop()
            if last != k:
                live[i] = last
                where[last] = i
            ops.append(WorkloadOp(name, k, None))
    return ops
