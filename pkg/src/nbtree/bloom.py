"""Per-d-tree Bloom filters using double hashing over one 128-bit digest."""
from __future__ import annotations

import hashlib
import math
import struct
from typing import Iterable

import numpy as np

MIN_BITS = 8
_HEADER = struct.Struct(">IQQ")


def _digest_pair(key: bytes) -> tuple[int, int]:
    d = hashlib.blake2b(key, digest_size=16).digest()
    return int.from_bytes(d[:8], "little"), int.from_bytes(d[8:], "little")


def _position_matrix(keys, m: int, h: int) -> np.ndarray:
    """(len(keys), h) array of bit positions; same values as ``positions``."""
    blake = hashlib.blake2b
    raw = b"".join([blake(key, digest_size=16).digest() for key in keys])
    pairs = np.frombuffer(raw, dtype="<u8").reshape(len(keys), 2)
    h1 = pairs[:, 0] % np.uint64(m)
    h2 = pairs[:, 1] % np.uint64(m)
    h2[h2 == 0] = 1
    i = np.arange(h, dtype=np.uint64)
    # (h1 + i*h2) % m without overflow: both terms are < m < 2**32 in practice,
    # but reduce each product first to stay exact for any m
    return (h1[:, None] + (i[None, :] * h2[:, None]) % np.uint64(m)) % np.uint64(m)


class BloomFilter:
    def __init__(self, m: int, h: int, n: int, bits: bytes):
        self.m = m
        self.h = h
        self.n = n
        self.bits = bits

    @classmethod
    def build(cls, keys: Iterable[bytes], k: int, h: int) -> "BloomFilter":
        if k < 1 or h < 1:
            raise ValueError("bits per key and hash count must be >= 1")
        keys = list(keys)
        n = len(keys)
        m = max(MIN_BITS, k * n)
        bitmap = np.zeros(m, dtype=bool)
        if n:
            bitmap[_position_matrix(keys, m, h).ravel()] = True
        return cls(m, h, n, np.packbits(bitmap, bitorder="little").tobytes())

    def contains_many(self, keys) -> np.ndarray:
        """Vectorized ``may_contain`` over a sequence of keys."""
        keys = list(keys)
        if self.n == 0 or not keys:
            return np.zeros(len(keys), dtype=bool)
        bitmap = np.unpackbits(np.frombuffer(self.bits, dtype=np.uint8), count=self.m,
                               bitorder="little").astype(bool)
        return bitmap[_position_matrix(keys, self.m, self.h)].all(axis=1)

    def positions(self, key: bytes) -> list[int]:
        a, b = _digest_pair(key)
        m = self.m
        a %= m
        b = b % m or 1
        return [(a + i * b) % m for i in range(self.h)]

    def may_contain(self, key: bytes) -> bool:
        if self.n == 0:
            return False
        bits = self.bits
        for p in self.positions(key):
            if not (bits[p >> 3] >> (p & 7)) & 1:
                return False
        return True

    __contains__ = may_contain

    def to_bytes(self) -> bytes:
        return _HEADER.pack(self.h, self.m, self.n) + self.bits

    @classmethod
    def from_bytes(cls, blob: bytes) -> "BloomFilter":
        if len(blob) < _HEADER.size:
            raise ValueError("truncated bloom filter")
        h, m, n = _HEADER.unpack_from(blob)
        bits = blob[_HEADER.size:]
        if len(bits) != (m + 7) // 8:
            raise ValueError(f"bloom bit array has {len(bits)} bytes, expected {(m + 7) // 8}")
        return cls(m, h, n, bytes(bits))

    def __eq__(self, other):
        return (isinstance(other, BloomFilter) and self.m == other.m and self.h == other.h
                and self.n == other.n and self.bits == other.bits)

    def __repr__(self):
        return f"BloomFilter(m={self.m}, h={self.h}, n={self.n})"


def build_filter(stream, k: int, h: int) -> BloomFilter:
    """Build over the keys of a record stream (records or raw keys)."""
    keys = [r if isinstance(r, bytes) else r.key for r in stream]
    return BloomFilter.build(keys, k, h)


def may_contain(bf: BloomFilter, key: bytes) -> bool:
    return bf.may_contain(key)


def expected_fp_rate(k: int, h: int) -> float:
    return (1.0 - math.exp(-h / k)) ** h
