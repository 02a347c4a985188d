"""Page store with append-only extent allocation and seek/sequential accounting.

Each actor (the writer, a query, an audit walk) carries its own ``IoStats``.
A stats object owns two read cursors and one write cursor; touching a page
that is not the successor of the chosen cursor's previous page costs a seek.
"""
from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from .core import CostParams, NBTreeError

CURSOR_A = 0
CURSOR_B = 1


class PagerError(NBTreeError):
    pass


class StorageFull(PagerError):
    pass


class ExtentState(enum.Enum):
    LIVE = "live"
    FREED = "freed"


@dataclass(eq=False)
class Extent:
    start: int
    length: int
    state: ExtentState = ExtentState.LIVE

    @property
    def end(self) -> int:
        return self.start + self.length

    @property
    def live(self) -> bool:
        return self.state is ExtentState.LIVE

    def __repr__(self):
        return f"Extent(start={self.start}, length={self.length}, {self.state.value})"


@dataclass
class IoStats:
    seeks: int = 0
    seq_read_pages: int = 0
    seq_write_pages: int = 0
    read_cursors: list = field(default_factory=lambda: [None, None])
    write_cursor: Optional[int] = None

    @classmethod
    def with_cursors(cls, n_read: int) -> "IoStats":
        return cls(read_cursors=[None] * n_read)

    @property
    def pages(self) -> int:
        return self.seq_read_pages + self.seq_write_pages

    def charge_read(self, cursor: int, first: int, n: int) -> None:
        last = self.read_cursors[cursor]
        if last is None or first != last + 1:
            self.seeks += 1
        self.seq_read_pages += n
        self.read_cursors[cursor] = first + n - 1

    def charge_write(self, first: int, n: int) -> None:
        last = self.write_cursor
        if last is None or first != last + 1:
            self.seeks += 1
        self.seq_write_pages += n
        self.write_cursor = first + n - 1

    def counters(self) -> tuple[int, int, int]:
        return self.seeks, self.seq_read_pages, self.seq_write_pages

    def copy(self) -> "IoStats":
        return IoStats(self.seeks, self.seq_read_pages, self.seq_write_pages,
                       list(self.read_cursors), self.write_cursor)


class ModeledTime(NamedTuple):
    seek_s: float
    read_s: float
    write_s: float

    @property
    def total(self) -> float:
        return self.seek_s + self.read_s + self.write_s


def modeled_time(stats: IoStats, p: CostParams) -> ModeledTime:
    return ModeledTime(stats.seeks * p.t_seek,
                       stats.seq_read_pages * p.t_seq_r,
                       stats.seq_write_pages * p.t_seq_w)


def modeled_seconds(seeks: int, pages_read: int, pages_written: int, p: CostParams) -> float:
    return seeks * p.t_seek + pages_read * p.t_seq_r + pages_written * p.t_seq_w


class MemoryBackend:
    def __init__(self, page_bytes: int):
        self.page_bytes = page_bytes
        self.pages: list = []

    def ensure(self, n_pages: int) -> None:
        if n_pages > len(self.pages):
            self.pages.extend([None] * (n_pages - len(self.pages)))

    def write(self, page_id: int, data: bytes) -> None:
        self.pages[page_id] = data

    def read(self, page_id: int) -> bytes:
        return self.pages[page_id]

    def discard(self, start: int, length: int) -> None:
        for i in range(start, start + length):
            self.pages[i] = None

    def sync(self) -> None:
        pass

    def close(self) -> None:
        pass


class FileBackend:
    """Raw pages file: page i lives at byte offset i * page_bytes."""

    def __init__(self, path: str, page_bytes: int):
        self.path = path
        self.page_bytes = page_bytes
        self.fd = os.open(path, os.O_RDWR | os.O_CREAT, 0o644)

    def ensure(self, n_pages: int) -> None:
        pass

    def write(self, page_id: int, data: bytes) -> None:
        if len(data) < self.page_bytes:
            data = data + bytes(self.page_bytes - len(data))
        os.pwrite(self.fd, data, page_id * self.page_bytes)

    def read(self, page_id: int) -> bytes:
        return os.pread(self.fd, self.page_bytes, page_id * self.page_bytes)

    def discard(self, start: int, length: int) -> None:
        pass

    def sync(self) -> None:
        os.fsync(self.fd)

    def close(self) -> None:
        if self.fd is not None:
            os.close(self.fd)
            self.fd = None


class Pager:
    """Hands out contiguous extents at the end of the store and never reuses them."""

    def __init__(self, page_bytes: int, backend=None, max_pages: Optional[int] = None):
        self.page_bytes = page_bytes
        self.backend = backend if backend is not None else MemoryBackend(page_bytes)
        self.max_pages = max_pages
        self.next_page = 0
        self.live: dict[int, Extent] = {}

    @classmethod
    def in_memory(cls, page_bytes: int, max_pages: Optional[int] = None) -> "Pager":
        return cls(page_bytes, MemoryBackend(page_bytes), max_pages)

    @classmethod
    def on_file(cls, path: str, page_bytes: int) -> "Pager":
        return cls(page_bytes, FileBackend(path, page_bytes))

    def allocate_extent(self, n_pages: int) -> Extent:
        if n_pages < 1:
            raise PagerError(f"extent must span at least one page, got {n_pages}")
        if self.max_pages is not None and self.next_page + n_pages > self.max_pages:
            raise StorageFull(f"cannot grow store past {self.max_pages} pages")
        ext = Extent(self.next_page, n_pages)
        self.next_page += n_pages
        self.backend.ensure(self.next_page)
        self.live[ext.start] = ext
        return ext

    def _check(self, extent: Extent, offset: int, n: int, verb: str) -> None:
        if not extent.live or self.live.get(extent.start) is not extent:
            raise PagerError(f"cannot {verb} freed extent {extent}")
        if offset < 0 or n < 0 or offset + n > extent.length:
            raise PagerError(
                f"{verb} of pages [{offset}, {offset + n}) outside {extent}")

    def write_pages(self, extent: Extent, offset: int, pages, stats: IoStats) -> None:
        pages = list(pages)
        self._check(extent, offset, len(pages), "write")
        if not pages:
            return
        first = extent.start + offset
        for i, data in enumerate(pages):
            if len(data) > self.page_bytes:
                raise PagerError(f"page payload of {len(data)} bytes exceeds page size")
            self.backend.write(first + i, bytes(data))
        stats.charge_write(first, len(pages))

    def read_pages(self, extent: Extent, offset: int, n: int, cursor: int,
                   stats: IoStats) -> list[bytes]:
        self._check(extent, offset, n, "read")
        if n == 0:
            return []
        first = extent.start + offset
        stats.charge_read(cursor, first, n)
        read = self.backend.read
        return [read(first + i) for i in range(n)]

    def read_page(self, extent: Extent, offset: int, cursor: int, stats: IoStats) -> bytes:
        self._check(extent, offset, 1, "read")
        first = extent.start + offset
        stats.charge_read(cursor, first, 1)
        return self.backend.read(first)

    def free_extent(self, extent: Extent) -> None:
        if not extent.live or self.live.get(extent.start) is not extent:
            raise PagerError(f"double free of {extent}")
        extent.state = ExtentState.FREED
        del self.live[extent.start]
        self.backend.discard(extent.start, extent.length)

    def restore(self, next_page: int, extents) -> None:
        """Reinstate allocator state loaded from a manifest."""
        self.next_page = next_page
        self.backend.ensure(next_page)
        self.live = {}
        for ext in extents:
            ext.state = ExtentState.LIVE
            self.live[ext.start] = ext

    def audit(self) -> Optional[str]:
        """Return a description of the first overlap among live extents, if any."""
        prev = None
        for start in sorted(self.live):
            ext = self.live[start]
            if ext.end > self.next_page:
                return f"{ext} extends past allocated end {self.next_page}"
            if prev is not None and prev.end > ext.start:
                return f"{prev} overlaps {ext}"
            prev = ext
        return None

    def sync(self) -> None:
        self.backend.sync()

    def close(self) -> None:
        self.backend.close()
