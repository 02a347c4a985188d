"""Nested B-tree key-value index."""
from .core import Config, CostParams, DeltaRecord, KeyRange, Mode, Op, OracleMap, key_from_int, key_to_int
from .engine import NBTree, SNode, SplitResult, ValidationReport
from .pager import IoStats, Pager

__all__ = ["Config", "CostParams", "DeltaRecord", "KeyRange", "Mode", "Op", "OracleMap",
           "key_from_int", "key_to_int", "NBTree", "SNode", "SplitResult", "ValidationReport",
           "IoStats", "Pager"]
