"""Binary manifest: everything about an index except the d-tree pages.

Layout (big-endian): magic ``NBT1``, u16 version, u32 length + JSON config,
u64 seq, u64 next_page, u8 flags, u32 id counter, the s-tree in preorder, the
root buffer records, and a trailing crc32 over all preceding bytes.
"""
from __future__ import annotations

import json
import os
import struct
import zlib
from dataclasses import dataclass, field
from typing import Optional

from .bloom import BloomFilter
from .core import Config, DeltaRecord, NBTreeError, RecordCodec
from .dtree import DTree, RootBuffer
from .pager import Extent

MAGIC = b"NBT1"
VERSION = 1

_U8 = struct.Struct(">B")
_U16 = struct.Struct(">H")
_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")
_DTREE = struct.Struct(">QQQQQHIQ")   # ext start, ext len, root, leaves, total, height, cap, live_start

FLAG_DELETES = 1


class ManifestError(NBTreeError):
    pass


class ConfigMismatch(ManifestError):
    pass


@dataclass
class NodeState:
    id: int
    s_keys: list
    dtree: Optional[DTree]
    bloom: Optional[BloomFilter]
    children: list = field(default_factory=list)


@dataclass
class ManifestState:
    config: Config
    seq: int
    next_page: int
    deletes_seen: bool
    next_id: int
    root: NodeState
    buffer: list


class _Writer:
    def __init__(self):
        self.parts = []

    def u8(self, v):
        self.parts.append(_U8.pack(v))

    def u16(self, v):
        self.parts.append(_U16.pack(v))

    def u32(self, v):
        self.parts.append(_U32.pack(v))

    def u64(self, v):
        self.parts.append(_U64.pack(v))

    def blob(self, b: bytes):
        self.u32(len(b))
        self.parts.append(b)

    def opt_key(self, k: Optional[bytes]):
        if k is None:
            self.u8(0)
        else:
            self.u8(1)
            self.blob(k)

    def getvalue(self) -> bytes:
        return b"".join(self.parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def _take(self, s: struct.Struct):
        if self.pos + s.size > len(self.buf):
            raise ManifestError("manifest truncated")
        v = s.unpack_from(self.buf, self.pos)
        self.pos += s.size
        return v

    def u8(self):
        return self._take(_U8)[0]

    def u16(self):
        return self._take(_U16)[0]

    def u32(self):
        return self._take(_U32)[0]

    def u64(self):
        return self._take(_U64)[0]

    def raw(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise ManifestError("manifest truncated")
        b = self.buf[self.pos:self.pos + n]
        self.pos += n
        return b

    def blob(self) -> bytes:
        return self.raw(self.u32())

    def opt_key(self) -> Optional[bytes]:
        return self.blob() if self.u8() else None


def _write_node(w: _Writer, node) -> None:
    w.u32(node.id)
    w.u16(len(node.s_keys))
    for k in node.s_keys:
        w.blob(k)
    d = node.dtree
    if d is None:
        w.u8(0)
    else:
        w.u8(1)
        ext = d.extent
        w.parts.append(_DTREE.pack(ext.start if ext else 0, ext.length if ext else 0,
                                   max(d.root_page, 0), d.leaf_count, d.total_records,
                                   d.height, d.leaf_capacity, d.live_start))
        w.u8(1 if ext is not None else 0)
        w.opt_key(d.min_key)
        w.opt_key(d.max_key)
        w.opt_key(d.live_start_key)
    if node.bloom is None:
        w.u8(0)
    else:
        w.u8(1)
        w.blob(node.bloom.to_bytes())
    w.u16(len(node.children))
    for c in node.children:
        _write_node(w, c)


def _read_node(r: _Reader) -> NodeState:
    nid = r.u32()
    s_keys = [r.blob() for _ in range(r.u16())]
    dtree = None
    if r.u8():
        start, length, root, leaves, total, height, cap, live_start = r._take(_DTREE)
        has_ext = r.u8()
        min_key, max_key, live_key = r.opt_key(), r.opt_key(), r.opt_key()
        ext = Extent(start, length) if has_ext else None
        dtree = DTree(ext, root if has_ext else -1, leaves, total, height,
                      min_key, max_key, cap, live_start, live_key)
    bloom = None
    if r.u8():
        try:
            bloom = BloomFilter.from_bytes(r.blob())
        except ValueError as e:
            raise ManifestError(f"bad bloom filter: {e}") from e
    node = NodeState(nid, s_keys, dtree, bloom)
    node.children = [_read_node(r) for _ in range(r.u16())]
    return node


def encode_manifest(tree) -> bytes:
    if tree.cascade_pending:
        raise ManifestError("cannot persist while a cascade is staged; drain first")
    w = _Writer()
    w.parts.append(MAGIC)
    w.u16(VERSION)
    w.blob(json.dumps(tree.config.to_dict(), sort_keys=True).encode())
    w.u64(tree.seq)
    w.u64(tree.pager.next_page)
    w.u8(FLAG_DELETES if tree.deletes_seen else 0)
    w.u32(tree._next_id)
    _write_node(w, tree.root)
    recs = tree.buffer.sorted_records()
    w.u32(len(recs))
    w.parts.append(tree.fmt.codec.encode_many(recs))
    body = w.getvalue()
    return body + _U32.pack(zlib.crc32(body))


def decode_manifest(buf: bytes) -> ManifestState:
    if len(buf) < len(MAGIC) + 2 + 4 or buf[:4] != MAGIC:
        raise ManifestError("not an index manifest (bad magic)")
    body, (crc,) = buf[:-4], _U32.unpack(buf[-4:])
    if zlib.crc32(body) != crc:
        raise ManifestError("manifest checksum mismatch")
    r = _Reader(body)
    r.raw(4)
    version = r.u16()
    if version != VERSION:
        raise ManifestError(f"manifest version {version}, expected {VERSION}")
    try:
        config = Config.from_dict(json.loads(r.blob()))
    except (ValueError, TypeError) as e:
        raise ManifestError(f"bad config block: {e}") from e
    seq, next_page = r.u64(), r.u64()
    flags = r.u8()
    next_id = r.u32()
    root = _read_node(r)
    count = r.u32()
    codec = RecordCodec.for_config(config)
    buffer = codec.decode_many(r.raw(count * codec.size))
    if r.pos != len(body):
        raise ManifestError("trailing bytes in manifest")
    return ManifestState(config, seq, next_page, bool(flags & FLAG_DELETES), next_id, root, buffer)


def write_manifest(path: str, tree) -> None:
    """Write to a temp file, fsync, then rename over ``path``."""
    data = encode_manifest(tree)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def read_manifest(path: str) -> ManifestState:
    with open(path, "rb") as fh:
        return decode_manifest(fh.read())


def restore(tree, state: ManifestState) -> None:
    """Rebuild the in-memory s-tree of ``tree`` from a decoded manifest."""
    from .engine import SNode

    extents = []

    def build(ns: NodeState) -> SNode:
        if ns.dtree is not None and ns.dtree.extent is not None:
            extents.append(ns.dtree.extent)
        return SNode(ns.id, list(ns.s_keys), [build(c) for c in ns.children], ns.dtree, ns.bloom)

    tree.root = build(state.root)
    tree.pager.restore(state.next_page, extents)
    tree.seq = state.seq
    tree.deletes_seen = state.deletes_seen
    tree._next_id = state.next_id
    tree.buffer = RootBuffer(state.buffer)
