import math

import pytest

from nbtree.core import ConfigError
from nbtree.costmodel import (beps_costs, btree_costs, lsm_costs, lsm_simulate, nbtree_costs,
                              predict)


def test_nbtree_degenerate():
    c = nbtree_costs(1024, 256, 4, 1024)
    assert c.amortized_insert == (0, 0) and c.worst_insert == (0, 0)
    assert c.worst_query == pytest.approx(math.log(1024, 256))


def test_nbtree_formula():
    c = nbtree_costs(2**20, 256, 4, 2**10)
    assert c.amortized_insert.alpha_seq == pytest.approx(0.078125)
    assert c.amortized_insert.beta_seek == pytest.approx(4 / 1024 * 5)
    assert c.worst_insert == c.amortized_insert


def test_nbtree_fanout_raises_insert_cost():
    assert (nbtree_costs(2**20, 256, 8, 2**10).amortized_insert.alpha_seq
            > nbtree_costs(2**20, 256, 4, 2**10).amortized_insert.alpha_seq)


@pytest.mark.parametrize("args", [(100, 256, 4, 1024), (2**20, 256, 4, 6), (2**20, 256, 1, 64)])
def test_nbtree_domain(args):
    with pytest.raises(ConfigError):
        nbtree_costs(*args)


def test_lsm_formulas():
    c = lsm_costs(1024, 4, 2, 4)
    assert c.amortized_insert == (4.0, 1.0)
    assert c.worst_insert.alpha_seq == 256
    d = lsm_costs(64, 4, 2, 64)
    assert d.amortized_insert.alpha_seq == 0
    assert d.worst_query == pytest.approx(math.log(4, 2) * math.log(64, 4) ** 2)


def test_btree_and_beps():
    assert btree_costs(256, 256).worst_query == pytest.approx(1)
    assert btree_costs(2**20, 256).amortized_insert.alpha_seq == pytest.approx(2.5)
    b = beps_costs(2**20, 256, 256)
    # with f = B the per-level buffer term collapses to the B-tree's
    assert b.amortized_insert.alpha_seq == pytest.approx(btree_costs(2**20, 256).amortized_insert.alpha_seq)


def test_seconds_shape():
    c = nbtree_costs(2**20, 256, 4, 2**10)
    p = c.params
    assert c.amortized_insert_s == pytest.approx(c.amortized_insert.alpha_seq * p.t_seq_w
                                                 + c.amortized_insert.beta_seek * p.t_seek)


def test_monotone_in_n():
    for s in ("nbtree", "lsm", "btree", "beps"):
        a, b = predict(s, 2**16, 64, 4, 64), predict(s, 2**18, 64, 4, 64)
        assert b.amortized_insert.alpha_seq >= a.amortized_insert.alpha_seq
        assert b.worst_query >= a.worst_query


def test_simulator_examples():
    assert lsm_simulate(4, 2, 4, 4)["total_pages"] == 0
    one = lsm_simulate(8, 2, 4, 4)
    assert one["merges"] == 1 and one["total_pages"] == math.ceil((4 + 8) / 4)
    assert one["total_seeks"] == 3


def test_simulator_vs_formula_grid():
    for f in (2, 4):
        for c1 in (4, 64):
            for n in (2**10, 2**14):
                sim = lsm_simulate(n, f, c1, 4)["total_pages"]
                pred = n * lsm_costs(n, 4, f, c1).amortized_insert.alpha_seq
                assert 0.25 <= sim / pred <= 4, (f, c1, n)
