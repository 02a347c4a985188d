"""Domain types shared by every layer: records, configuration, codec and the
in-memory reference map used to check the index."""
from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass, field, asdict
from typing import NamedTuple, Optional

from sortedcontainers import SortedDict


class NBTreeError(Exception):
    pass


class CodecError(NBTreeError):
    pass


class ConfigError(NBTreeError, ValueError):
    pass


class Op(enum.IntEnum):
    PUT = 0
    DELETE = 1
    UPDATE = 2


class DeltaRecord(NamedTuple):
    """One keyed operation as it travels through the index.

    Field order matches the wire layout so pages decode straight into
    records. Delete records carry an all-zero value.
    """
    op: int
    seq: int
    key: bytes
    value: bytes

    @property
    def is_delete(self) -> bool:
        return self.op == Op.DELETE


@dataclass(frozen=True)
class KeyRange:
    low: bytes
    high: bytes

    def __post_init__(self):
        if self.low > self.high:
            raise ValueError(f"empty key range {self.low!r} > {self.high!r}")

    def __contains__(self, key: bytes) -> bool:
        return self.low <= key <= self.high


class Mode(str, enum.Enum):
    BASIC = "basic"
    ADVANCED = "advanced"


@dataclass(frozen=True)
class CostParams:
    """Seconds charged per seek and per sequentially transferred page.

    Defaults are the 7200rpm HDD figures: 8.5 ms seeks and ~3e-5 s to
    stream one 4 KB page.
    """
    t_seek: float = 8.5e-3
    t_seq_r: float = 3.0e-5
    t_seq_w: float = 3.2e-5

    def __post_init__(self):
        for name in ("t_seek", "t_seq_r", "t_seq_w"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be strictly positive")


PAGE_HEADER_BYTES = 3      # node-type tag + 2-byte entry count
CHILD_REF_BYTES = 8


@dataclass(frozen=True)
class Config:
    page_bytes: int = 4096
    dtree_fanout: Optional[int] = None      # B; derived from page_bytes when None
    stree_fanout: int = 3                   # f
    sigma: int = 1024                       # records per d-tree
    key_bytes: int = 8
    value_bytes: int = 128
    bloom_bits_per_key: int = 8
    bloom_hashes: int = 3
    mode: Mode = Mode.ADVANCED
    deamortize: bool = False
    leaf_capacity: Optional[int] = None     # records per leaf d-node; derived when None
    cost_params: CostParams = field(default_factory=CostParams)
    memory_budget: Optional[int] = None     # bytes; consulted by the bench driver only

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.dtree_fanout is None:
            derived = (self.page_bytes - PAGE_HEADER_BYTES) // (self.key_bytes + CHILD_REF_BYTES)
            object.__setattr__(self, "dtree_fanout", derived)
        if self.leaf_capacity is None:
            derived = (self.page_bytes - PAGE_HEADER_BYTES) // self.record_bytes
            object.__setattr__(self, "leaf_capacity", derived)
        self.check()

    @property
    def record_bytes(self) -> int:
        return 1 + 8 + self.key_bytes + self.value_bytes

    def check(self) -> None:
        f, B, sigma = self.stree_fanout, self.dtree_fanout, self.sigma
        if self.key_bytes < 1 or self.value_bytes < 0:
            raise ConfigError("key_bytes must be >= 1 and value_bytes >= 0")
        if f < 2:
            raise ConfigError(f"stree_fanout must be >= 2, got {f}")
        if B < 4:
            raise ConfigError(f"dtree_fanout must be >= 4, got {B}")
        if sigma < 2 * f:
            raise ConfigError(f"sigma must be >= 2*stree_fanout ({2 * f}), got {sigma}")
        if B * (self.key_bytes + CHILD_REF_BYTES) + PAGE_HEADER_BYTES > self.page_bytes:
            raise ConfigError(
                f"page_bytes={self.page_bytes} cannot hold a d-node with fanout {B}")
        if self.leaf_capacity < 1:
            raise ConfigError("page_bytes too small for a single record")
        if PAGE_HEADER_BYTES + self.leaf_capacity * self.record_bytes > self.page_bytes:
            raise ConfigError(
                f"leaf_capacity={self.leaf_capacity} records do not fit in one page")
        if self.bloom_bits_per_key < 1 or self.bloom_hashes < 1:
            raise ConfigError("bloom parameters must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Config":
        d = dict(d)
        d["cost_params"] = CostParams(**d.get("cost_params", {}))
        return cls(**d)

    # Fields that change the on-disk layout or the tree shape; a stored index
    # can only be reopened with identical values.
    LAYOUT_FIELDS = ("page_bytes", "dtree_fanout", "stree_fanout", "sigma", "key_bytes",
                     "value_bytes", "bloom_bits_per_key", "bloom_hashes", "mode",
                     "leaf_capacity")

    def layout_mismatches(self, other: "Config") -> list[str]:
        return [name for name in self.LAYOUT_FIELDS
                if getattr(self, name) != getattr(other, name)]

    @staticmethod
    def sigma_from_bytes(sigma_bytes: int, key_bytes: int = 8, value_bytes: int = 128) -> int:
        """Convert a byte budget per d-tree into a record count."""
        return max(1, sigma_bytes // (key_bytes + value_bytes))


class RecordCodec:
    """Fixed-width record encoding: op tag, big-endian seq, key, value."""

    def __init__(self, key_bytes: int, value_bytes: int):
        self.key_bytes = key_bytes
        self.value_bytes = value_bytes
        self.struct = struct.Struct(f">BQ{key_bytes}s{value_bytes}s")
        self.size = self.struct.size
        self.zero_value = bytes(value_bytes)

    @classmethod
    def for_config(cls, config: Config) -> "RecordCodec":
        return cls(config.key_bytes, config.value_bytes)

    def encode(self, d: DeltaRecord) -> bytes:
        if len(d.key) != self.key_bytes:
            raise CodecError(f"key must be {self.key_bytes} bytes, got {len(d.key)}")
        if len(d.value) != self.value_bytes:
            raise CodecError(f"value must be {self.value_bytes} bytes, got {len(d.value)}")
        if d.op not in (Op.PUT, Op.DELETE, Op.UPDATE):
            raise CodecError(f"unknown op tag {d.op}")
        return self.struct.pack(int(d.op), d.seq, d.key, d.value)

    def decode(self, buf: bytes) -> DeltaRecord:
        if len(buf) != self.size:
            raise CodecError(f"record must be {self.size} bytes, got {len(buf)}")
        op, seq, key, value = self.struct.unpack(buf)
        if op > Op.UPDATE:
            raise CodecError(f"unknown op tag {op}")
        return DeltaRecord(op, seq, key, value)

    def encode_many(self, records) -> bytes:
        pack = self.struct.pack
        return b"".join([pack(*r) for r in records])

    def decode_many(self, buf: bytes) -> list[DeltaRecord]:
        make = DeltaRecord._make
        return [make(t) for t in self.struct.iter_unpack(buf)]


def encode_record(d: DeltaRecord, codec: RecordCodec) -> bytes:
    return codec.encode(d)


def decode_record(buf: bytes, codec: RecordCodec) -> DeltaRecord:
    return codec.decode(buf)


class OracleMap:
    """Plain sorted map replaying the same operations as the index."""

    def __init__(self):
        self.data = SortedDict()

    def __len__(self):
        return len(self.data)

    def __contains__(self, key):
        return key in self.data

    def get(self, key: bytes) -> Optional[bytes]:
        return self.data.get(key)

    def apply(self, d: DeltaRecord) -> "OracleMap":
        if d.op == Op.DELETE:
            self.data.pop(d.key, None)
        else:
            # PUT and UPDATE are both upserts
            self.data[d.key] = d.value
        return self

    def range(self, low: bytes, high: bytes) -> list[tuple[bytes, bytes]]:
        return [(k, self.data[k]) for k in self.data.irange(low, high)]

    def items(self):
        return self.data.items()


def oracle_apply(oracle: OracleMap, d: DeltaRecord) -> OracleMap:
    return oracle.apply(d)


def key_from_int(i: int, key_bytes: int = 8) -> bytes:
    return i.to_bytes(key_bytes, "big")


def key_to_int(key: bytes) -> int:
    return int.from_bytes(key, "big")


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def log_base(x: float, base: float) -> float:
    return math.log(x) / math.log(base)
