"""The small worked insertion example: sigma = 6, f = 3, B = 4, Basic mode."""
from __future__ import annotations

import json
from typing import Optional

from ..core import Config, Mode, NBTreeError, key_from_int, key_to_int
from ..engine import NBTree

FIG2_CONFIG = Config(page_bytes=128, dtree_fanout=4, stree_fanout=3, sigma=6, key_bytes=8,
                     value_bytes=0, mode=Mode.BASIC, leaf_capacity=4)

PANEL_A = [1, 2, 8, 15, 21, 32]
PANEL_B = [33]
PANEL_C_E = [3, 5, 11, 16, 17, 20, 51]
PANEL_F = [4, 6, 10, 13, 14, 18]
QUERY_KEY = 11


class TraceMismatch(NBTreeError, AssertionError):
    pass


def _check(cond: bool, what: str) -> None:
    if not cond:
        raise TraceMismatch(what)


def trace_figure2(out: Optional[str] = None) -> dict:
    """Run the example, asserting the structures the worked example states."""
    tree = NBTree(FIG2_CONFIG)
    panels = {}

    def put_all(keys):
        for k in keys:
            tree.insert(key_from_int(k), b"")

    put_all(PANEL_A)
    panels["a"] = tree.dump(key_to_int)
    a = panels["a"]
    _check(a["children"] == [] and a["d_keys"] == PANEL_A, f"panel (a) mismatch: {a}")

    put_all(PANEL_B)
    panels["b"] = b = tree.dump(key_to_int)
    _check(b["s_keys"] == [15], f"panel (b) root s-keys {b['s_keys']}")
    _check([c["d_keys"] for c in b["children"]] == [[1, 2, 8], [15, 21, 32, 33]],
           f"panel (b) leaves {[c['d_keys'] for c in b['children']]}")

    put_all(PANEL_C_E)
    panels["e"] = tree.dump(key_to_int)

    names = iter(["f.1", "f.2", "f.3"])

    def observe(event, t):
        if event in ("flush", "install", "new_root") and t.cascade_pending is False:
            panels[next(names, event)] = t.dump(key_to_int)

    tree.observer = observe
    put_all(PANEL_F)
    tree.observer = None
    f3 = panels.get("f.3")
    _check(f3 is not None, "no root split during the last batch")
    _check(f3["s_keys"] == [15] and len(f3["children"]) == 2
           and all(c["children"] for c in f3["children"]),
           f"panel (f.3) is not a two-level non-leaf structure under root {{15}}: {f3}")
    report = tree.validate()
    _check(report.ok, f"validate failed: {report.violation}")

    before = tree.query_stats.pages
    found = tree.point_query(key_from_int(QUERY_KEY))
    _check(found is not None, "query for 11 missed")
    panels["query_11"] = {"found": True, "pages_read": tree.query_stats.pages - before,
                          "dtrees_searched": tree.dtree_searches,
                          "s_tree_height": report.height}
    if out:
        with open(out, "w") as fh:
            json.dump(panels, fh, indent=2)
    return panels
