import os
import random

import pytest
from hypothesis import given, strategies as st

from nbtree.bloom import BloomFilter, build_filter, expected_fp_rate, may_contain
from nbtree.core import DeltaRecord, Op

keys8 = st.binary(min_size=8, max_size=8)


@given(st.lists(keys8, max_size=200, unique=True))
def test_no_false_negatives(keys):
    bf = build_filter(keys, 8, 3)
    assert all(may_contain(bf, k) for k in keys)
    assert bf.contains_many(keys).all() or not keys


@given(st.lists(keys8, max_size=50, unique=True))
def test_deterministic_and_serializable(keys):
    a = BloomFilter.build(keys, 8, 3)
    b = BloomFilter.build(keys, 8, 3)
    assert a == b
    assert BloomFilter.from_bytes(a.to_bytes()) == a


def test_accepts_records():
    recs = [DeltaRecord(Op.PUT, 1, bytes([i]) * 8, b"") for i in range(10)]
    bf = build_filter(recs, 8, 3)
    assert all(bf.may_contain(r.key) for r in recs)


def test_empty_filter_contains_nothing():
    bf = BloomFilter.build([], 8, 3)
    assert bf.m == 8 and not bf.may_contain(b"anything")


def test_size():
    bf = BloomFilter.build([os.urandom(8) for _ in range(100)], 8, 3)
    assert bf.m == 800 and len(bf.bits) == 100


def test_vectorized_matches_scalar():
    rng = random.Random(5)
    keys = [rng.randbytes(8) for _ in range(500)]
    bf = BloomFilter.build(keys[:250], 4, 3)
    assert list(bf.contains_many(keys)) == [bf.may_contain(k) for k in keys]


def test_truncated_blob():
    with pytest.raises(ValueError):
        BloomFilter.from_bytes(b"\x00" * 5)
    blob = BloomFilter.build([b"a" * 8], 8, 3).to_bytes()
    with pytest.raises(ValueError):
        BloomFilter.from_bytes(blob[:-1])


def test_expected_fp_rate():
    # k=8 bits per key, h=3 hashes
    assert expected_fp_rate(8, 3) == pytest.approx(0.0306, abs=1e-3)
