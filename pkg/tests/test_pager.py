import pytest
from hypothesis import given, strategies as st

from nbtree.core import CostParams
from nbtree.pager import (CURSOR_A, CURSOR_B, IoStats, Pager, PagerError, StorageFull,
                          modeled_time)


def test_allocation_is_append_only():
    p = Pager.in_memory(64)
    a = p.allocate_extent(3)
    b = p.allocate_extent(2)
    assert (a.start, b.start) == (0, 3)
    p.free_extent(a)
    c = p.allocate_extent(1)
    assert c.start == 5          # freed space is never reused
    assert p.audit() is None


def test_zero_length_extent_rejected():
    with pytest.raises(PagerError):
        Pager.in_memory(64).allocate_extent(0)


def test_storage_full():
    p = Pager.in_memory(64, max_pages=4)
    p.allocate_extent(3)
    with pytest.raises(StorageFull):
        p.allocate_extent(2)


def test_double_free_and_freed_read():
    p = Pager.in_memory(64)
    e = p.allocate_extent(1)
    p.write_pages(e, 0, [b"x"], IoStats())
    p.free_extent(e)
    with pytest.raises(PagerError):
        p.free_extent(e)
    with pytest.raises(PagerError):
        p.read_page(e, 0, CURSOR_A, IoStats())


def test_out_of_extent_access():
    p = Pager.in_memory(64)
    e = p.allocate_extent(2)
    with pytest.raises(PagerError):
        p.write_pages(e, 1, [b"a", b"b"], IoStats())
    with pytest.raises(PagerError):
        p.write_pages(e, 0, [bytes(65)], IoStats())


def test_seek_accounting():
    p = Pager.in_memory(64)
    e = p.allocate_extent(10)
    s = IoStats()
    p.write_pages(e, 0, [b"p"] * 4, s)
    p.write_pages(e, 4, [b"q"] * 2, s)      # continues the write stream
    assert (s.seeks, s.seq_write_pages) == (1, 6)
    p.read_pages(e, 0, 3, CURSOR_A, s)
    p.read_pages(e, 5, 1, CURSOR_B, s)
    p.read_page(e, 3, CURSOR_A, s)          # successor of cursor A: no seek
    p.read_page(e, 6, CURSOR_B, s)          # successor of cursor B: no seek
    p.read_page(e, 0, CURSOR_A, s)          # jump back: seek
    assert s.seeks == 4
    assert s.seq_read_pages == 7


def test_modeled_time():
    s = IoStats(seeks=2, seq_read_pages=10, seq_write_pages=5)
    t = modeled_time(s, CostParams())
    assert t.total == pytest.approx(2 * 8.5e-3 + 10 * 3e-5 + 5 * 3.2e-5)


@given(st.lists(st.binary(min_size=1, max_size=32), min_size=1, max_size=20))
def test_page_round_trip(pages):
    p = Pager.in_memory(32)
    e = p.allocate_extent(len(pages))
    p.write_pages(e, 0, pages, IoStats())
    assert p.read_pages(e, 0, len(pages), CURSOR_A, IoStats()) == pages


def test_file_backend_round_trip(tmp_path):
    p = Pager.on_file(str(tmp_path / "pages.dat"), 32)
    e = p.allocate_extent(2)
    p.write_pages(e, 0, [b"hello", b"world"], IoStats())
    p.sync()
    got = p.read_pages(e, 0, 2, CURSOR_A, IoStats())
    assert got[0][:5] == b"hello" and len(got[0]) == 32
    p.close()
    assert (tmp_path / "pages.dat").stat().st_size == 64


def test_audit_detects_overlap():
    p = Pager.in_memory(32)
    a = p.allocate_extent(4)
    a.length = 8   # corrupt the descriptor
    p.allocate_extent(2)
    assert "overlaps" in p.audit() or "past" in p.audit()
