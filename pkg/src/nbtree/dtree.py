"""Immutable on-disk B+-trees ("d-trees") and the sorted-stream plumbing around them.

A d-tree occupies one contiguous extent: its leaves come first, in key order,
followed by the internal levels bottom-up with the root on the last page. It
is bulk-built from a sorted stream and never modified afterwards; the only
mutation is advancing ``live_start``, which logically drops a prefix.
"""
from __future__ import annotations

import struct
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, Optional

from .core import Config, DeltaRecord, KeyRange, NBTreeError, Op, RecordCodec, ceil_div
from .pager import CURSOR_A, Extent, IoStats, Pager

LEAF = 0
INTERNAL = 1
_HEAD = struct.Struct(">BH")


class StreamOrderError(NBTreeError):
    pass


class DTreeCorrupt(NBTreeError):
    pass


class PageFormat:
    """Encodes d-nodes into pages: tag, entry count, entries."""

    def __init__(self, config: Config):
        self.codec = RecordCodec.for_config(config)
        self.page_bytes = config.page_bytes
        self.leaf_capacity = config.leaf_capacity
        self.fanout = config.dtree_fanout
        self.key_bytes = config.key_bytes
        self._entry = struct.Struct(f">{config.key_bytes}sQ")
        self._child = struct.Struct(">Q")

    def encode_leaf(self, records) -> bytes:
        return _HEAD.pack(LEAF, len(records)) + self.codec.encode_many(records)

    def encode_internal(self, seps: list[bytes], children: list[int]) -> bytes:
        assert len(children) == len(seps) + 1
        pack = self._entry.pack
        body = b"".join([pack(k, c) for k, c in zip(seps, children)])
        return _HEAD.pack(INTERNAL, len(seps)) + body + self._child.pack(children[-1])

    def decode_leaf(self, page: bytes) -> list[DeltaRecord]:
        tag, count = _HEAD.unpack_from(page)
        if tag != LEAF:
            raise DTreeCorrupt(f"expected leaf page, found tag {tag}")
        size = self.codec.size
        return self.codec.decode_many(page[3:3 + count * size])

    def decode_internal(self, page: bytes) -> tuple[list[bytes], list[int]]:
        tag, count = _HEAD.unpack_from(page)
        if tag != INTERNAL:
            raise DTreeCorrupt(f"expected internal page, found tag {tag}")
        end = 3 + count * self._entry.size
        seps, kids = [], []
        for k, c in self._entry.iter_unpack(page[3:end]):
            seps.append(k)
            kids.append(c)
        kids.append(self._child.unpack_from(page, end)[0])
        return seps, kids

    def page_tag(self, page: bytes) -> int:
        return page[0]


def dtree_page_count(n_records: int, leaf_capacity: int, fanout: int) -> int:
    """Pages used by a bulk-loaded d-tree: full leaves, full internal nodes,
    only the rightmost node of each level may be partial."""
    if n_records == 0:
        return 0
    level = ceil_div(n_records, leaf_capacity)
    total = level
    while level > 1:
        level = ceil_div(level, fanout)
        total += level
    return total


@dataclass(frozen=True)
class DTree:
    extent: Optional[Extent]
    root_page: int
    leaf_count: int
    total_records: int
    height: int
    min_key: Optional[bytes]
    max_key: Optional[bytes]
    leaf_capacity: int
    live_start: int = 0
    live_start_key: Optional[bytes] = None

    @property
    def record_count(self) -> int:
        return self.total_records - self.live_start

    @property
    def empty(self) -> bool:
        return self.record_count == 0

    @property
    def pages(self) -> int:
        return self.extent.length if self.extent is not None else 0

    def may_hold(self, key: bytes) -> bool:
        """Cheap in-memory range test against the live key interval."""
        return self.record_count > 0 and self.live_start_key <= key <= self.max_key

    def advanced(self, moved: int, next_key: Optional[bytes]) -> "DTree":
        """Logically drop the next ``moved`` live records (lazy removal)."""
        start = self.live_start + moved
        if start > self.total_records:
            raise ValueError("cannot advance past the end of a d-tree")
        return replace(self, live_start=start,
                       live_start_key=next_key if start < self.total_records else None)


def empty_dtree(leaf_capacity: int = 1) -> DTree:
    return DTree(None, -1, 0, 0, 0, None, None, leaf_capacity)


def build_steps(records: list, pager: Pager, stats: IoStats, fmt: PageFormat):
    """Write ``records`` (ascending, unique keys) as a new d-tree.

    Generator: yields after each page written so callers can interleave the
    work; the finished ``DTree`` is the generator's return value.
    """
    n = len(records)
    if n == 0:
        return empty_dtree(fmt.leaf_capacity)
    cap, fanout = fmt.leaf_capacity, fmt.fanout
    ext = pager.allocate_extent(dtree_page_count(n, cap, fanout))
    level = []
    offset = 0
    for i in range(0, n, cap):
        chunk = records[i:i + cap]
        pager.write_pages(ext, offset, [fmt.encode_leaf(chunk)], stats)
        level.append((chunk[0].key, ext.start + offset))
        offset += 1
        yield
    leaf_count = offset
    height = 1
    while len(level) > 1:
        parents = []
        for j in range(0, len(level), fanout):
            group = level[j:j + fanout]
            page = fmt.encode_internal([k for k, _ in group[1:]], [p for _, p in group])
            pager.write_pages(ext, offset, [page], stats)
            parents.append((group[0][0], ext.start + offset))
            offset += 1
            yield
        level = parents
        height += 1
    assert offset == ext.length
    return DTree(ext, level[0][1], leaf_count, n, height,
                 records[0].key, records[-1].key, cap, 0, records[0].key)


def drive(gen):
    """Run a work generator to completion and return its result."""
    try:
        while True:
            next(gen)
    except StopIteration as stop:
        return stop.value


def check_ascending(stream: Iterable[DeltaRecord]) -> Iterator[DeltaRecord]:
    prev = None
    for r in stream:
        if prev is not None and r.key <= prev:
            raise StreamOrderError(f"stream not strictly ascending at key {r.key!r}")
        prev = r.key
        yield r


def bulk_build(stream: Iterable[DeltaRecord], pager: Pager, stats: IoStats,
               fmt: PageFormat) -> DTree:
    records = list(check_ascending(stream))
    return drive(build_steps(records, pager, stats, fmt))


def _read(pager: Pager, d: DTree, page_id: int, cursor: int, stats: IoStats) -> bytes:
    return pager.read_page(d.extent, page_id - d.extent.start, cursor, stats)


def _find_leaf(d: DTree, key: bytes, pager, fmt, cursor, stats) -> int:
    """Descend the internal levels; returns the leaf's page id."""
    page_id = d.root_page
    for _ in range(d.height - 1):
        seps, kids = fmt.decode_internal(_read(pager, d, page_id, cursor, stats))
        page_id = kids[bisect_right(seps, key)]
    return page_id


def lookup(d: DTree, key: bytes, pager: Pager, fmt: PageFormat, cursor: int,
           stats: IoStats) -> Optional[DeltaRecord]:
    if d.record_count == 0 or key < d.live_start_key or key > d.max_key:
        return None
    leaf = _find_leaf(d, key, pager, fmt, cursor, stats)
    records = fmt.decode_leaf(_read(pager, d, leaf, cursor, stats))
    keys = [r.key for r in records]
    i = bisect_left(keys, key)
    if i < len(keys) and keys[i] == key:
        return records[i]
    return None


def scan(d: DTree, pager: Pager, fmt: PageFormat, stats: IoStats, cursor: int = CURSOR_A,
         key_range: Optional[KeyRange] = None) -> Iterator[DeltaRecord]:
    """Yield live records (optionally restricted to a range) in key order,
    reading one leaf page at a time."""
    if d.record_count == 0:
        return
    leaf = d.live_start // d.leaf_capacity
    skip = d.live_start % d.leaf_capacity
    low = high = None
    if key_range is not None:
        low, high = key_range.low, key_range.high
        if high < d.live_start_key or low > d.max_key:
            return
        if low > d.live_start_key:
            found = _find_leaf(d, low, pager, fmt, cursor, stats) - d.extent.start
            if found > leaf:
                leaf, skip = found, 0
    for li in range(leaf, d.leaf_count):
        records = fmt.decode_leaf(pager.read_page(d.extent, li, cursor, stats))
        if skip:
            records = records[skip:]
            skip = 0
        for r in records:
            if low is not None and r.key < low:
                continue
            if high is not None and r.key > high:
                return
            yield r


def resolve(newer: DeltaRecord, older: DeltaRecord) -> DeltaRecord:
    """Collapse two records for the same key, newer first."""
    if newer.op != Op.UPDATE:
        return newer
    if older.op == Op.UPDATE:
        return newer
    # update over a live value or over a tombstone both leave the key present
    return DeltaRecord(Op.PUT, newer.seq, newer.key, newer.value)


def settle_at_leaf(r: DeltaRecord) -> Optional[DeltaRecord]:
    """At the bottom of the tree tombstones have nothing left to shadow and
    updates have nothing left to modify: drop the former, materialize the latter."""
    if r.op == Op.PUT:
        return r
    if r.op == Op.DELETE:
        return None
    return DeltaRecord(Op.PUT, r.seq, r.key, r.value)


def merge_streams(newer: Iterable[DeltaRecord], older: Iterable[DeltaRecord],
                  at_leaf: bool = False) -> Iterator[DeltaRecord]:
    """Merge two ascending streams; on a key collision ``newer`` wins."""
    newer, older = iter(newer), iter(older)
    a = next(newer, None)
    b = next(older, None)
    while a is not None or b is not None:
        if b is None or (a is not None and a.key < b.key):
            out = a
            nxt = next(newer, None)
            if nxt is not None and nxt.key <= a.key:
                raise StreamOrderError(f"newer stream out of order at {nxt.key!r}")
            a = nxt
        elif a is None or b.key < a.key:
            out = b
            nxt = next(older, None)
            if nxt is not None and nxt.key <= b.key:
                raise StreamOrderError(f"older stream out of order at {nxt.key!r}")
            b = nxt
        else:
            out = resolve(a, b)
            na, nb = next(newer, None), next(older, None)
            if na is not None and na.key <= a.key:
                raise StreamOrderError(f"newer stream out of order at {na.key!r}")
            if nb is not None and nb.key <= b.key:
                raise StreamOrderError(f"older stream out of order at {nb.key!r}")
            a, b = na, nb
        if at_leaf:
            out = settle_at_leaf(out)
            if out is None:
                continue
        yield out


class RootBuffer:
    """The root s-node's d-tree, held in memory as a key -> record map."""

    def __init__(self, records: Iterable[DeltaRecord] = ()):
        self.records: dict[bytes, DeltaRecord] = {}
        for r in records:
            self.put(r)

    def __len__(self):
        return len(self.records)

    def __contains__(self, key):
        return key in self.records

    def get(self, key: bytes) -> Optional[DeltaRecord]:
        return self.records.get(key)

    def put(self, d: DeltaRecord) -> int:
        old = self.records.get(d.key)
        self.records[d.key] = d if old is None else resolve(d, old)
        return len(self.records)

    def absorb_older(self, d: DeltaRecord) -> None:
        """Fold in a record that predates everything already buffered."""
        cur = self.records.get(d.key)
        self.records[d.key] = d if cur is None else resolve(cur, d)

    def sorted_records(self) -> list[DeltaRecord]:
        recs = self.records
        return [recs[k] for k in sorted(recs)]

    def scan(self, key_range: Optional[KeyRange] = None) -> Iterator[DeltaRecord]:
        for r in self.sorted_records():
            if key_range is None or r.key in key_range:
                yield r

    def discard(self, keys: Iterable[bytes]) -> None:
        for k in keys:
            del self.records[k]

    def clear(self) -> None:
        self.records.clear()


def root_insert(rb: RootBuffer, d: DeltaRecord) -> int:
    return rb.put(d)


@dataclass
class DTreeAudit:
    records: list
    error: Optional[str] = None


def audit_dtree(d: DTree, pager: Pager, fmt: PageFormat, stats: IoStats) -> DTreeAudit:
    """Read every page of ``d`` and check the B+-tree and layout invariants."""
    if d.extent is None:
        if d.total_records or d.height:
            return DTreeAudit([], "empty d-tree with nonzero counters")
        return DTreeAudit([])
    if not d.extent.live:
        return DTreeAudit([], f"d-tree references freed {d.extent}")
    expected_pages = dtree_page_count(d.total_records, d.leaf_capacity, fmt.fanout)
    if d.extent.length != expected_pages:
        return DTreeAudit([], f"extent has {d.extent.length} pages, layout needs {expected_pages}")
    pages = pager.read_pages(d.extent, 0, d.extent.length, CURSOR_A, stats)
    all_records = []
    for i in range(d.leaf_count):
        if pages[i][0] != LEAF:
            return DTreeAudit([], f"page {i} should be a leaf")
        recs = fmt.decode_leaf(pages[i])
        if not recs:
            return DTreeAudit([], f"leaf page {i} is empty")
        if i < d.leaf_count - 1 and len(recs) != d.leaf_capacity:
            return DTreeAudit([], f"non-final leaf page {i} holds {len(recs)} records")
        all_records.extend(recs)
    for prev, cur in zip(all_records, all_records[1:]):
        if cur.key <= prev.key:
            return DTreeAudit([], f"leaf keys not ascending at {cur.key!r}")
    if len(all_records) != d.total_records:
        return DTreeAudit([], f"{len(all_records)} records on disk, header says {d.total_records}")
    if all_records[0].key != d.min_key or all_records[-1].key != d.max_key:
        return DTreeAudit([], "min/max key mismatch")
    if d.live_start < d.total_records and all_records[d.live_start].key != d.live_start_key:
        return DTreeAudit([], "live_start_key does not match the record at live_start")

    # walk internal levels from the root, collecting leaves left to right
    start = d.extent.start
    half = ceil_div(fmt.fanout, 2)
    leaves_seen = []

    def walk(page_id, depth, lo, hi, rightmost):
        off = page_id - start
        if not 0 <= off < d.extent.length:
            return f"child pointer {page_id} outside extent"
        page = pages[off]
        if depth == d.height - 1:
            if page[0] != LEAF:
                return f"page {off} at leaf depth is not a leaf"
            recs = fmt.decode_leaf(page)
            if (lo is not None and recs[0].key < lo) or (hi is not None and recs[-1].key >= hi):
                return f"leaf page {off} violates separator bounds"
            leaves_seen.append(off)
            return None
        if page[0] != INTERNAL:
            return f"page {off} at depth {depth} is not internal"
        seps, kids = fmt.decode_internal(page)
        if len(kids) > fmt.fanout:
            return f"internal page {off} has {len(kids)} > B children"
        if depth > 0 and not rightmost and len(kids) < half:
            return f"internal page {off} has {len(kids)} < ceil(B/2) children"
        if depth == 0 and len(kids) < 2:
            return f"root page {off} has a single child"
        bounds = [lo] + seps + [hi]
        for j, kid in enumerate(kids):
            err = walk(kid, depth + 1, bounds[j], bounds[j + 1],
                       rightmost and j == len(kids) - 1)
            if err:
                return err
        return None

    err = walk(d.root_page, 0, None, None, True)
    if err:
        return DTreeAudit([], err)
    if leaves_seen != list(range(d.leaf_count)):
        return DTreeAudit([], "leaves are not laid out in key order")
    return DTreeAudit(all_records[d.live_start:])
