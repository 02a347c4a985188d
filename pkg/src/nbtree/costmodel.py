"""Closed-form I/O costs for the NB-tree and its competitors, plus a
brute-force leveled LSM merge simulator used to check the LSM formulas.

Every cost is written as alpha sequential pages plus beta seeks per
operation, with big-O constants fixed to 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .core import CostParams, ConfigError, ceil_div, log_base

DEFAULT_MERGE_SEEKS = 3   # two read streams plus one write stream


class IoCost(NamedTuple):
    alpha_seq: float
    beta_seek: float

    def seconds(self, p: CostParams, write: bool = True) -> float:
        t_seq = p.t_seq_w if write else p.t_seq_r
        return self.alpha_seq * t_seq + self.beta_seek * p.t_seek


@dataclass(frozen=True)
class CostPrediction:
    structure: str
    amortized_insert: IoCost
    worst_insert: IoCost
    worst_query: float          # random page reads per point query
    params: CostParams = CostParams()

    def __post_init__(self):
        vals = (*self.amortized_insert, *self.worst_insert, self.worst_query)
        if any(v < 0 or math.isnan(v) for v in vals):
            raise ValueError(f"negative cost component in {self}")

    @property
    def amortized_insert_s(self) -> float:
        return self.amortized_insert.seconds(self.params)

    @property
    def worst_insert_s(self) -> float:
        return self.worst_insert.seconds(self.params)

    @property
    def worst_query_s(self) -> float:
        # each page of a point query is a random read
        return self.worst_query * (self.params.t_seek + self.params.t_seq_r)

    def row(self) -> dict:
        return {
            "structure": self.structure,
            "amortized_alpha": self.amortized_insert.alpha_seq,
            "amortized_beta": self.amortized_insert.beta_seek,
            "worst_alpha": self.worst_insert.alpha_seq,
            "worst_beta": self.worst_insert.beta_seek,
            "query_alpha": self.worst_query,
            "amortized_insert_s": self.amortized_insert_s,
            "worst_insert_s": self.worst_insert_s,
            "worst_query_s": self.worst_query_s,
        }


def _logp(x: float, base: float) -> float:
    """log_base(x), clamped at 0 for x <= 1."""
    return log_base(x, base) if x > 1 else 0.0


def nbtree_costs(n: int, B: int, f: int, sigma: int, params: CostParams = CostParams()) -> CostPrediction:
    if not (f >= 2 and sigma >= 2 * f and n >= sigma):
        raise ConfigError(f"need n >= sigma >= 2f >= 4, got n={n}, sigma={sigma}, f={f}")
    if B < 2:
        raise ConfigError(f"B must be >= 2, got {B}")
    levels = _logp(n / sigma, f)
    ins = IoCost(f / B * levels, f / sigma * levels)
    # the root level still costs one d-tree descent, hence the +1
    query = _logp(sigma, B) * (1 + levels)
    return CostPrediction("nbtree", ins, ins, query, params)


def lsm_costs(n: int, B: int, f: int, C1: int, params: CostParams = CostParams()) -> CostPrediction:
    if not (n >= C1 >= 1 and f >= 2 and B >= 2):
        raise ConfigError(f"need n >= C1 >= 1, f >= 2, B >= 2; got n={n}, C1={C1}, f={f}, B={B}")
    amort = IoCost(f / B * _logp(n / C1, f), 1.0)
    worst = IoCost(n / B, _logp(B, f) * _logp(n, B))
    query = _logp(B, f) * _logp(n, B) ** 2
    return CostPrediction("lsm", amort, worst, query, params)


def btree_costs(n: int, B: int, params: CostParams = CostParams()) -> CostPrediction:
    if n < 1 or B < 2:
        raise ConfigError(f"need n >= 1 and B >= 2, got n={n}, B={B}")
    h = _logp(n, B)
    c = IoCost(h, h)
    return CostPrediction("btree", c, c, h, params)


def beps_costs(n: int, B: int, f: int, params: CostParams = CostParams()) -> CostPrediction:
    if n < 1 or B < 2 or f < 2:
        raise ConfigError(f"need n >= 1, B >= 2, f >= 2; got n={n}, B={B}, f={f}")
    h = _logp(n, B)
    w = f * _logp(B, f) / B * h
    c = IoCost(w, w)
    return CostPrediction("beps", c, c, _logp(B, f) * h, params)


@dataclass
class LsmSimState:
    capacities: list
    sizes: list
    total_pages: int = 0
    total_seeks: int = 0
    merges: int = 0


def lsm_simulate(n: int, f: int, C1: int, B: int,
                 merge_seeks: int = DEFAULT_MERGE_SEEKS) -> dict:
    """Insert ``n`` items one at a time into a leveled LSM-tree.

    Component i holds up to C1 * f**i items. An insert that finds component 0
    full first merges it into component 1, cascading deeper merges first
    whenever the receiving component cannot absorb the incoming one. Each
    merge reads both components and writes the result: ceil((C_i + C_{i+1}) / B)
    pages and ``merge_seeks`` seeks.
    """
    if min(f, C1, B) < 1 or n < 0:
        raise ConfigError("lsm_simulate parameters must be positive")
    st = LsmSimState([C1], [0])

    def cap(i):
        while len(st.capacities) <= i:
            st.capacities.append(st.capacities[-1] * f)
            st.sizes.append(0)
        return st.capacities[i]

    def merge_down(i):
        cap(i + 1)
        if st.sizes[i + 1] + st.sizes[i] > st.capacities[i + 1]:
            merge_down(i + 1)
        st.total_pages += ceil_div(st.capacities[i] + st.capacities[i + 1], B)
        st.total_seeks += merge_seeks
        st.merges += 1
        st.sizes[i + 1] += st.sizes[i]
        st.sizes[i] = 0

    for _ in range(n):
        if st.sizes[0] == C1:
            merge_down(0)
        st.sizes[0] += 1
    return {"total_pages": st.total_pages, "total_seeks": st.total_seeks,
            "merges": st.merges, "components": len(st.sizes)}


STRUCTURES = ("nbtree", "lsm", "btree", "beps")


def predict(structure: str, n: int, B: int, f: int, sigma: int,
            params: CostParams = CostParams()) -> CostPrediction:
    """Dispatch by name; ``sigma`` doubles as the LSM's C1."""
    if structure == "nbtree":
        return nbtree_costs(n, B, f, sigma, params)
    if structure == "lsm":
        return lsm_costs(n, B, f, sigma, params)
    if structure == "btree":
        return btree_costs(n, B, params)
    if structure == "beps":
        return beps_costs(n, B, f, params)
    raise ValueError(f"unknown structure {structure!r}")
