"""The Nested B-tree: a B-tree of s-nodes, each owning one d-tree.

Writes land in the in-memory root buffer. When it exceeds ``sigma`` records a
cascade of flushes and splits pushes records down and restores the size
bounds. The cascade is written as a generator that yields after every page of
I/O, so the same code runs either to completion inside one insert or
deamortized: a slice of ``ceil(W / sigma)`` pages per subsequent insert.
"""
from __future__ import annotations

import heapq
import itertools
import logging
import os
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from typing import Callable, Iterator, NamedTuple, Optional

from .bloom import BloomFilter
from .core import (Config, DeltaRecord, KeyRange, Mode, NBTreeError, Op, ceil_div)
from .dtree import (DTree, PageFormat, RootBuffer, audit_dtree, build_steps, drive,
                    dtree_page_count, empty_dtree, lookup, merge_streams, scan,
                    settle_at_leaf)
from .pager import CURSOR_A, CURSOR_B, IoStats, Pager

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest"
PAGES_NAME = "pages.dat"


class KeyLengthError(NBTreeError, ValueError):
    pass


@dataclass(eq=False)
class SNode:
    id: int
    s_keys: list = field(default_factory=list)
    children: list = field(default_factory=list)
    dtree: Optional[DTree] = None           # None only for the root, whose d-tree is the buffer
    bloom: Optional[BloomFilter] = None

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def size(self) -> int:
        return self.dtree.record_count if self.dtree is not None else 0

    @property
    def pending_flush_mark(self) -> Optional[bytes]:
        if self.dtree is None or self.dtree.live_start == 0:
            return None
        return self.dtree.live_start_key

    def child_for(self, key: bytes) -> "SNode":
        return self.children[bisect_right(self.s_keys, key)]

    def __repr__(self):
        return f"SNode(id={self.id}, s_keys={len(self.s_keys)}, children={len(self.children)}, size={self.size})"


class SplitResult(NamedTuple):
    median: bytes
    left: SNode
    right: SNode


@dataclass
class ValidationReport:
    ok: bool
    violation: Optional[str] = None
    path: tuple = ()
    height: int = 0                 # s-tree levels, root included (H_s)
    max_dtree_height: int = 0       # tallest on-disk d-tree (H_d)
    snodes: int = 0
    records: int = 0
    cascade_pending: bool = False

    def __bool__(self):
        return self.ok


class _Violation(Exception):
    def __init__(self, message, path=()):
        super().__init__(message)
        self.path = tuple(path)


class NBTree:
    """A Nested B-tree over a pager.

    Single writer. Point and range queries may be issued between writes,
    including while a deamortized cascade is only partly done.
    """

    def __init__(self, config: Config, pager: Optional[Pager] = None):
        self.config = config
        self.pager = pager if pager is not None else Pager.in_memory(config.page_bytes)
        self.fmt = PageFormat(config)
        self.stats = IoStats()              # writer: flushes and splits
        self.query_stats = IoStats()        # reader: point and range queries
        self.seq = 0
        self.buffer = RootBuffer()
        self.draining: Optional[RootBuffer] = None
        self._next_id = 0
        self.root = self._new_node()
        self.deletes_seen = False
        self.dtree_searches = 0
        self.observer: Optional[Callable[[str, "NBTree"], None]] = None
        self.path: Optional[str] = None
        self.checkpointing = False
        # deamortization state
        self._cascade = None
        self.staged_work = 0
        self.step_budget = 0
        self.cascades = 0
        self.forced_drains = 0
        self.max_staged_work = 0

    # ------------------------------------------------------------------ writes

    def insert(self, key: bytes, value: bytes) -> None:
        self._submit(Op.PUT, key, value)

    def update(self, key: bytes, value: bytes) -> None:
        self._submit(Op.UPDATE, key, value)

    def delete(self, key: bytes) -> None:
        self._submit(Op.DELETE, key, None)

    def _check_key(self, key: bytes) -> None:
        if len(key) != self.config.key_bytes:
            raise KeyLengthError(f"key must be {self.config.key_bytes} bytes, got {len(key)}")

    def _submit(self, op: Op, key: bytes, value: Optional[bytes]) -> None:
        self._check_key(key)
        if value is None:
            value = self.fmt.codec.zero_value
        elif len(value) != self.config.value_bytes:
            raise KeyLengthError(
                f"value must be {self.config.value_bytes} bytes, got {len(value)}")
        if op == Op.DELETE:
            self.deletes_seen = True
        self.seq += 1
        n = self.buffer.put(DeltaRecord(op, self.seq, key, value))
        sigma = self.config.sigma
        if not self.config.deamortize:
            if n > sigma:
                self.cascades += 1
                drive(self._cascade_steps(self.buffer))
                self._after_cascade()
            return
        if n > sigma:
            if self._cascade is not None:
                # cannot happen while the step budget is an upper bound; block anyway
                self.forced_drains += 1
                self.drain()
            if len(self.buffer) > sigma:
                self._stage()
        if self._cascade is not None:
            self.deamortize_step()

    # ---------------------------------------------------------- deamortization

    @property
    def cascade_pending(self) -> bool:
        return self._cascade is not None

    def _stage(self) -> None:
        self.cascades += 1
        self.draining = self.buffer
        self.buffer = RootBuffer()
        self.staged_work = self.estimate_cascade_pages(self.draining)
        self.max_staged_work = max(self.max_staged_work, self.staged_work)
        self.step_budget = max(1, ceil_div(self.staged_work, self.config.sigma))
        self._cascade = self._cascade_steps(self.draining)

    def deamortize_step(self) -> int:
        """Advance the staged cascade by one insert's share of pages."""
        if self._cascade is None:
            return 0
        start = self.stats.pages
        try:
            while self.stats.pages - start < self.step_budget:
                next(self._cascade)
        except StopIteration:
            self._finish_staged()
        return self.stats.pages - start

    def drain(self) -> int:
        """Finish any staged cascade immediately."""
        if self._cascade is None:
            return 0
        start = self.stats.pages
        drive(self._cascade)
        self._finish_staged()
        return self.stats.pages - start

    def _finish_staged(self) -> None:
        for r in self.draining.sorted_records():
            self.buffer.absorb_older(r)
        self.draining = None
        self._cascade = None
        self._after_cascade()

    def _after_cascade(self) -> None:
        if self.checkpointing and self.path is not None:
            self.checkpoint()

    def estimate_cascade_pages(self, source: RootBuffer) -> int:
        """Upper estimate of the pages one cascade will read and write."""
        cfg = self.config
        sigma, f = cfg.sigma, cfg.stree_fanout

        def pages(n):
            return dtree_page_count(n, cfg.leaf_capacity, cfg.dtree_fanout)

        root = self.root
        if root.is_leaf:
            return 2 * pages(len(source)) + 2
        total = 0
        split_slack = 0
        level = [root]
        node = root
        while True:
            kids = node.children
            live = [k.size for k in kids]
            if node is not root:
                total += pages(node.size)           # prefix read (+ basic-mode rewrite below)
                if cfg.mode is Mode.BASIC:
                    total += pages(node.size)
            # every child may be read and rewritten with up to sigma extra records
            total += sum(pages(x) for x in live) + sum(pages(x) for x in live)
            total += pages(sigma) + 2 * len(kids)
            # one split of this node (or its children at the leaf level) per level
            split_slack += 2 * pages(max(live) + sigma) + 4 + 2 * pages(node.size)
            if kids[0].is_leaf:
                # several leaves may overflow at once; all of them split
                split_slack += 2 * (sum(pages(x) for x in live) + pages(sigma)) + 2 * len(kids)
                break
            if cfg.mode is Mode.BASIC:
                # every child may cascade; bound by walking the whole next level
                level = [c for n in level for c in n.children]
                node = max(level, key=lambda n: n.size)
                total += sum(2 * pages(n.size) + pages(sigma) for n in level)
            else:
                node = max(kids, key=lambda n: n.size)
        return total + split_slack

    # ----------------------------------------------------------------- cascade

    def _notify(self, event: str) -> None:
        if self.observer is not None:
            self.observer(event, self)

    def _new_node(self, s_keys=None, children=None, dtree=None, bloom=None) -> SNode:
        node = SNode(self._next_id, s_keys or [], children or [], dtree, bloom)
        self._next_id += 1
        return node

    def _collect(self, stream):
        """Materialize a record stream, yielding whenever a page was read."""
        out = []
        stats = self.stats
        mark = stats.pages
        for r in stream:
            out.append(r)
            if stats.pages != mark:
                mark = stats.pages
                yield
        return out

    def _bloom(self, records) -> BloomFilter:
        return BloomFilter.build([r.key for r in records], self.config.bloom_bits_per_key,
                                 self.config.bloom_hashes)

    def _build(self, records):
        d = yield from build_steps(records, self.pager, self.stats, self.fmt)
        return d, self._bloom(records)

    def _free(self, d: Optional[DTree]) -> None:
        if d is not None and d.extent is not None:
            self.pager.free_extent(d.extent)

    def _node_size(self, node: SNode, source: RootBuffer) -> int:
        return len(source) if node is self.root else node.size

    def _cascade_steps(self, source: RootBuffer):
        root = self.root
        if root.is_leaf:
            res = yield from self.snode_split(root, source)
        else:
            res = yield from self.handle_full_snode(root, source)
        if res is not None:
            self.root = self._new_node([res.median], [res.left, res.right])
            self._notify("new_root")
        self._notify("cascade_done")

    def handle_full_snode(self, node: SNode, source: RootBuffer):
        """Restore the size bounds below ``node``; returns a SplitResult if
        ``node`` itself had to split (the caller links it into the parent)."""
        if node.is_leaf:
            return (yield from self.snode_split(node, source))
        yield from self.flush(node, source)
        sigma = self.config.sigma
        kids = node.children
        if self.config.mode is Mode.BASIC or kids[0].is_leaf:
            targets = [c for c in kids if c.size > sigma]
        else:
            largest = max(kids, key=lambda c: c.size)
            targets = [largest] if largest.size > sigma else []
        for child in targets:
            res = yield from self.handle_full_snode(child, source)
            if res is not None:
                self._install(node, child, res)
        if len(node.children) > self.config.stree_fanout:
            return (yield from self.snode_split(node, source))
        return None

    def _install(self, parent: SNode, child: SNode, res: SplitResult) -> None:
        idx = next(i for i, c in enumerate(parent.children) if c is child)
        parent.children[idx:idx + 1] = [res.left, res.right]
        parent.s_keys.insert(idx, res.median)
        self._notify("install")

    def flush(self, node: SNode, source: RootBuffer):
        """Move the ``sigma`` smallest live records of ``node`` into its children."""
        sigma = self.config.sigma
        if node is self.root:
            moving = source.sorted_records()[:sigma]
            parent_stream = None
        else:
            parent_stream = scan(node.dtree, self.pager, self.fmt, self.stats, CURSOR_A)
            moving = yield from self._collect(itertools.islice(parent_stream, sigma))

        parts = [[] for _ in node.children]
        keys = node.s_keys
        i = 0
        for r in moving:
            while i < len(keys) and r.key >= keys[i]:
                i += 1
            parts[i].append(r)

        for child, part in zip(node.children, parts):
            if not part:
                continue
            old = child.dtree
            older = scan(old, self.pager, self.fmt, self.stats, CURSOR_B)
            merged = yield from self._collect(merge_streams(part, older, at_leaf=child.is_leaf))
            child.dtree, child.bloom = yield from self._build(merged)
            self._free(old)

        # drop the moved prefix from the parent only once every child holds it
        if node is self.root:
            source.discard([r.key for r in moving])
        elif self.config.mode is Mode.BASIC:
            rest = yield from self._collect(parent_stream)
            old = node.dtree
            node.dtree, node.bloom = yield from self._build(rest)
            self._free(old)
        else:
            nxt = next(parent_stream, None)
            node.dtree = node.dtree.advanced(len(moving), nxt.key if nxt else None)
        self._notify("flush")

    def snode_split(self, node: SNode, source: RootBuffer):
        if node is self.root:
            records = source.sorted_records()
            if node.is_leaf:
                # nothing lies below a leaf root: tombstones can go, updates become puts
                records = [s for s in map(settle_at_leaf, records) if s is not None]
                if len(records) <= self.config.sigma:
                    source.clear()
                    for r in records:
                        source.put(r)
                    return None
        else:
            records = yield from self._collect(
                scan(node.dtree, self.pager, self.fmt, self.stats, CURSOR_A))
        if node.is_leaf:
            mid = len(records) // 2
            median = records[mid].key
            lrec, rrec = records[:mid], records[mid:]
            left, right = self._new_node(), self._new_node()
        else:
            mi = len(node.s_keys) // 2
            median = node.s_keys[mi]
            cut = bisect_left([r.key for r in records], median)
            lrec, rrec = records[:cut], records[cut:]
            left = self._new_node(node.s_keys[:mi], node.children[:mi + 1])
            right = self._new_node(node.s_keys[mi + 1:], node.children[mi + 1:])
        left.dtree, left.bloom = yield from self._build(lrec)
        right.dtree, right.bloom = yield from self._build(rrec)
        if node is self.root:
            source.clear()
        else:
            self._free(node.dtree)
        return SplitResult(median, left, right)

    # ----------------------------------------------------------------- queries

    def point_query(self, key: bytes) -> Optional[bytes]:
        self._check_key(key)
        r = self.buffer.get(key)
        if r is None and self.draining is not None:
            r = self.draining.get(key)
        if r is not None:
            return None if r.op == Op.DELETE else r.value
        node = self.root
        while node.children:
            node = node.child_for(key)
            d = node.dtree
            if not d.may_hold(key):
                continue
            if node.bloom is not None and not node.bloom.may_contain(key):
                continue
            self.dtree_searches += 1
            r = lookup(d, key, self.pager, self.fmt, CURSOR_A, self.query_stats)
            if r is not None:
                return None if r.op == Op.DELETE else r.value
        return None

    get = point_query

    def range_query(self, low: bytes, high: bytes) -> Iterator[tuple[bytes, bytes]]:
        """Ascending (key, value) pairs in [low, high]; upper levels shadow lower ones."""
        self._check_key(low)
        self._check_key(high)
        kr = KeyRange(low, high)
        streams = [self.buffer.scan(kr)]
        if self.draining is not None:
            streams.append(self.draining.scan(kr))
        frontier = [(self.root, None, None)]
        while frontier:
            nxt = []
            for node, lo, hi in frontier:
                bounds = [lo] + node.s_keys + [hi]
                for j, child in enumerate(node.children):
                    clo, chi = bounds[j], bounds[j + 1]
                    if (clo is not None and clo > high) or (chi is not None and chi <= low):
                        continue
                    streams.append(scan(child.dtree, self.pager, self.fmt, self.query_stats,
                                        CURSOR_A, kr))
                    nxt.append((child, clo, chi))
            frontier = nxt

        def tagged(prio, stream):
            for r in stream:
                yield r.key, prio, r

        merged = heapq.merge(*[tagged(p, s) for p, s in enumerate(streams)])
        last = None
        for key, _, r in merged:
            if key == last:
                continue
            last = key
            if r.op != Op.DELETE:
                yield key, r.value

    # ------------------------------------------------------------ inspection

    def shape(self) -> tuple[int, int]:
        """(s-tree levels, tallest d-tree height), from in-memory metadata only."""
        height, hd = 1, 0
        level = [self.root]
        while level[0].children:
            level = [c for n in level for c in n.children]
            height += 1
            hd = max(hd, max(n.dtree.height for n in level))
        return height, hd

    def iter_nodes(self):
        """Breadth-first (level, node, lo, hi) over the s-tree."""
        frontier = [(self.root, None, None)]
        depth = 0
        while frontier:
            nxt = []
            for node, lo, hi in frontier:
                yield depth, node, lo, hi
                bounds = [lo] + node.s_keys + [hi]
                for j, child in enumerate(node.children):
                    nxt.append((child, bounds[j], bounds[j + 1]))
            frontier = nxt
            depth += 1

    def validate(self) -> ValidationReport:
        """Audit the whole tree. Size and fanout upper bounds are transiently
        exceeded inside a cascade, so they are only checked when none is staged."""
        report = ValidationReport(ok=True, cascade_pending=self.cascade_pending)
        try:
            self._validate(report)
        except _Violation as v:
            report.ok = False
            report.violation = str(v)
            report.path = v.path
        return report

    def _validate(self, report: ValidationReport) -> None:
        cfg = self.config
        sigma, f = cfg.sigma, cfg.stree_fanout
        quiescent = not self.cascade_pending
        stats = IoStats()
        err = self.pager.audit()
        if err:
            raise _Violation(f"allocator: {err}")

        seen_seq: dict[bytes, int] = {}
        for buf in (self.buffer, self.draining):
            if buf is None:
                continue
            for r in buf.sorted_records():
                prev = seen_seq.get(r.key)
                if prev is not None and r.seq > prev:
                    raise _Violation(f"draining buffer holds newer record for {r.key!r}")
                seen_seq.setdefault(r.key, r.seq)
        if quiescent and len(self.buffer) > sigma:
            raise _Violation(f"root buffer holds {len(self.buffer)} > sigma records", ("root",))

        referenced = set()
        leaf_depth = None
        max_hd = 0
        n_nodes = 0
        n_records = len(self.buffer)
        paths = {id(self.root): ("root",)}
        for depth, node, lo, hi in self.iter_nodes():
            n_nodes += 1
            path = paths[id(node)]
            for j, c in enumerate(node.children):
                paths[id(c)] = path + (j,)
            is_root = node is self.root
            if node.is_leaf:
                if leaf_depth is None:
                    leaf_depth = depth
                elif leaf_depth != depth:
                    raise _Violation(f"leaf s-nodes at depths {leaf_depth} and {depth}", path)
            else:
                if len(node.children) != len(node.s_keys) + 1:
                    raise _Violation("children count is not s-key count + 1", path)
                if quiescent and len(node.children) > f:
                    raise _Violation(f"{len(node.children)} children exceeds fanout {f}", path)
                if not is_root and len(node.children) < ceil_div(f, 2):
                    raise _Violation(f"{len(node.children)} children below ceil(f/2)", path)
                if is_root and len(node.children) < 2:
                    raise _Violation("non-leaf root with fewer than 2 children", path)
                for a, b in zip(node.s_keys, node.s_keys[1:]):
                    if not a < b:
                        raise _Violation("s-keys not strictly ascending", path)
                for k in node.s_keys:
                    if (lo is not None and k < lo) or (hi is not None and k >= hi):
                        raise _Violation(f"s-key {k!r} breaks cross-s-node linkage", path)
            if is_root:
                if node.dtree is not None:
                    raise _Violation("root s-node must use the in-memory buffer", path)
                for r in self.buffer.records.values():
                    pass
                continue
            d = node.dtree
            if d is None:
                raise _Violation("non-root s-node without a d-tree", path)
            if d.extent is not None:
                if self.pager.live.get(d.extent.start) is not d.extent:
                    raise _Violation(f"d-tree extent {d.extent} is not live", path)
                referenced.add(d.extent.start)
            audit = audit_dtree(d, self.pager, self.fmt, stats)
            if audit.error:
                raise _Violation(f"d-tree: {audit.error}", path)
            max_hd = max(max_hd, d.height)
            n_records += len(audit.records)
            for r in audit.records:
                if (lo is not None and r.key < lo) or (hi is not None and r.key >= hi):
                    raise _Violation(f"d-key {r.key!r} breaks cross-s-node linkage", path)
                prev = seen_seq.get(r.key)
                if prev is not None and r.seq > prev:
                    raise _Violation(f"key {r.key!r} has a newer record below an older one", path)
                seen_seq[r.key] = r.seq
                if node.is_leaf and r.op != Op.PUT:
                    raise _Violation(f"unresolved {Op(r.op).name} at leaf level", path)
            if node.bloom is not None and audit.records:
                hits = node.bloom.contains_many([r.key for r in audit.records])
                if not hits.all():
                    miss = audit.records[int(hits.argmin())].key
                    raise _Violation(f"bloom filter misses live key {miss!r}", path)
            if quiescent and node.is_leaf:
                if d.record_count > sigma:
                    raise _Violation(f"leaf d-tree holds {d.record_count} > sigma", path)
                if not self.deletes_seen and d.record_count < ceil_div(sigma, 2):
                    raise _Violation(f"leaf d-tree holds {d.record_count} < ceil(sigma/2)", path)
            if quiescent and not node.is_leaf and cfg.mode is Mode.BASIC and d.record_count > sigma:
                raise _Violation(f"d-tree holds {d.record_count} > sigma", path)
            if quiescent and cfg.mode is Mode.ADVANCED and node.children and not node.children[0].is_leaf:
                total = sum(c.size for c in node.children)
                if total > f * (sigma + 1):
                    raise _Violation(f"sibling d-trees hold {total} > f(sigma+1)", path)
        if quiescent and self.root.children and not self.root.children[0].is_leaf \
                and cfg.mode is Mode.ADVANCED:
            total = sum(c.size for c in self.root.children)
            if total > f * (sigma + 1):
                raise _Violation(f"sibling d-trees hold {total} > f(sigma+1)", ("root",))
        if quiescent and referenced != set(self.pager.live):
            leaked = sorted(set(self.pager.live) - referenced)
            raise _Violation(f"live extents not referenced by the tree: {leaked[:5]}")
        report.height = (leaf_depth or 0) + 1
        report.max_dtree_height = max_hd
        report.snodes = n_nodes
        report.records = n_records

    def dump(self, decode_key=lambda k: k.hex()) -> dict:
        """Nested description of the tree, reading every d-tree."""
        stats = IoStats()

        def node_dict(node, level):
            if node is self.root:
                keys = [decode_key(r.key) for r in self.buffer.sorted_records()]
            else:
                keys = [decode_key(r.key) for r in
                        scan(node.dtree, self.pager, self.fmt, stats, CURSOR_A)]
            return {
                "id": node.id,
                "level": level,
                "s_keys": [decode_key(k) for k in node.s_keys],
                "d_keys": keys,
                "children": [node_dict(c, level + 1) for c in node.children],
            }

        return node_dict(self.root, 0)

    # ------------------------------------------------------------ persistence

    @classmethod
    def open(cls, path: str, config: Optional[Config] = None, checkpoint: bool = False) -> "NBTree":
        """Create an index directory, or load the one already at ``path``."""
        from . import manifest

        mpath = os.path.join(path, MANIFEST_NAME)
        if os.path.exists(mpath):
            state = manifest.read_manifest(mpath)
            stored = state.config
            if config is not None:
                bad = stored.layout_mismatches(config)
                if bad:
                    raise manifest.ConfigMismatch(
                        f"stored index differs in {', '.join(bad)}")
            else:
                config = stored
            pager = Pager.on_file(os.path.join(path, PAGES_NAME), config.page_bytes)
            tree = cls(config, pager)
            manifest.restore(tree, state)
        else:
            if config is None:
                raise NBTreeError(f"no index at {path} and no config to create one")
            os.makedirs(path, exist_ok=True)
            pager = Pager.on_file(os.path.join(path, PAGES_NAME), config.page_bytes)
            tree = cls(config, pager)
        tree.path = path
        tree.checkpointing = checkpoint
        return tree

    def checkpoint(self) -> None:
        """Atomically replace the manifest with the current state."""
        from . import manifest

        if self.path is None:
            raise NBTreeError("in-memory index has no manifest")
        self.pager.sync()
        manifest.write_manifest(os.path.join(self.path, MANIFEST_NAME), self)

    def close(self) -> None:
        self.drain()
        if self.path is not None:
            self.checkpoint()
        self.pager.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
