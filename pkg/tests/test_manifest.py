import os
import random

import pytest

from nbtree import Config, NBTree
from nbtree.core import NBTreeError
from nbtree.manifest import ConfigMismatch, ManifestError, read_manifest

from conftest import K, V

CFG = Config(page_bytes=512, sigma=32, stree_fanout=3, value_bytes=8)


def populate(path, n=500, seed=0):
    t = NBTree.open(str(path), CFG)
    rng = random.Random(seed)
    expect = {}
    for i in range(n):
        k = rng.randrange(400)
        if rng.random() < 0.1:
            t.delete(K(k))
            expect.pop(k, None)
        else:
            t.insert(K(k), V(i))
            expect[k] = V(i)
    return t, expect


def test_round_trip(tmp_path):
    t, expect = populate(tmp_path)
    rep0 = t.validate()
    t.close()
    t2 = NBTree.open(str(tmp_path))
    assert t2.config == CFG
    for k in range(400):
        assert t2.point_query(K(k)) == expect.get(k)
    rep = t2.validate()
    assert rep.ok and rep.records == rep0.records
    t2.insert(K(9999), V(1))
    t2.close()
    assert NBTree.open(str(tmp_path)).point_query(K(9999)) == V(1)


def test_insert_100_close_open(tmp_path):
    t = NBTree.open(str(tmp_path), CFG)
    for i in range(100):
        t.insert(K(i), V(i))
    t.close()
    t = NBTree.open(str(tmp_path), CFG)
    assert [t.point_query(K(i)) for i in range(100)] == [V(i) for i in range(100)]


def test_config_mismatch(tmp_path):
    t, _ = populate(tmp_path, 50)
    t.close()
    with pytest.raises(ConfigMismatch):
        NBTree.open(str(tmp_path), Config(page_bytes=1024, sigma=32, stree_fanout=3, value_bytes=8))


def test_corrupted_manifest_leaves_store_untouched(tmp_path):
    t, _ = populate(tmp_path, 200)
    t.close()
    m = tmp_path / "manifest"
    data = bytearray(m.read_bytes())
    data[len(data) // 2] ^= 0xFF
    m.write_bytes(bytes(data))
    pages_before = (tmp_path / "pages.dat").read_bytes()
    with pytest.raises(ManifestError):
        NBTree.open(str(tmp_path))
    assert (tmp_path / "pages.dat").read_bytes() == pages_before
    assert m.read_bytes() == bytes(data)


def test_version_mismatch(tmp_path):
    t, _ = populate(tmp_path, 20)
    t.close()
    import struct
    import zlib
    m = tmp_path / "manifest"
    body = bytearray(m.read_bytes()[:-4])
    body[4:6] = struct.pack(">H", 99)
    m.write_bytes(bytes(body) + struct.pack(">I", zlib.crc32(bytes(body))))
    with pytest.raises(ManifestError, match="version"):
        read_manifest(str(m))


def test_replace_is_temp_then_rename(tmp_path, monkeypatch):
    t, _ = populate(tmp_path, 50)
    calls = []
    real = os.replace

    def spy(src, dst):
        calls.append((os.path.basename(src), os.path.basename(dst), os.path.exists(src)))
        return real(src, dst)

    monkeypatch.setattr(os, "replace", spy)
    t.close()
    assert calls == [("manifest.tmp", "manifest", True)]
    assert not (tmp_path / "manifest.tmp").exists()


def test_close_drains_staged_cascade(tmp_path):
    cfg = Config(page_bytes=512, sigma=32, stree_fanout=3, value_bytes=8, deamortize=True)
    t = NBTree.open(str(tmp_path), cfg)
    i = 0
    while not t.cascade_pending:
        t.insert(K(i), V(i))
        i += 1
    t.close()
    t = NBTree.open(str(tmp_path), cfg)
    assert all(t.point_query(K(j)) == V(j) for j in range(i))
    assert t.validate().ok


def test_checkpoint_after_cascades(tmp_path):
    t = NBTree.open(str(tmp_path), CFG, checkpoint=True)
    for i in range(40):
        t.insert(K(i), V(i))
    assert (tmp_path / "manifest").exists()
    assert read_manifest(str(tmp_path / "manifest")).seq == 33


def test_open_missing_without_config(tmp_path):
    with pytest.raises(NBTreeError):
        NBTree.open(str(tmp_path / "nope"))
