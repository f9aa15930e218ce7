import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from backdoor_game.core import BudgetExceeded, TruthTable, all_functions_class, explicit_class, indicator_class, sparse_class
from backdoor_game.vc import growth_count, is_shattered, sauer_shelah_bound, shatter_witness, vc_dimension


def brute_vc(cls):
    # independent oracle: python sets over every subset
    rows = [tuple(f(x) for x in range(1 << cls.n)) for f in cls]
    best = 0
    for k in range(1, (1 << cls.n) + 1):
        if any(len({tuple(r[p] for p in pts) for r in rows}) == 1 << k for pts in itertools.combinations(range(1 << cls.n), k)):
            best = k
        else:
            break
    return best


def test_indicator_class_has_vc_one():
    assert vc_dimension(indicator_class(3)) == 1


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_sparse_class_vc(k):
    assert vc_dimension(sparse_class(3, k)) == k


def test_all_functions_vc():
    assert vc_dimension(all_functions_class(2)) == 4


class_tables = st.lists(st.lists(st.integers(0, 1), min_size=8, max_size=8), min_size=1, max_size=12, unique_by=tuple)


@given(class_tables)
def test_vc_matches_brute_force(tables):
    cls = explicit_class(3, [TruthTable.from_array(3, t) for t in tables])
    assert vc_dimension(cls) == brute_vc(cls)


@given(class_tables, st.lists(st.integers(0, 7), min_size=1, max_size=6, unique=True))
def test_growth_respects_sauer_shelah(tables, points):
    cls = explicit_class(3, [TruthTable.from_array(3, t) for t in tables])
    d = vc_dimension(cls)
    assert growth_count(cls, points) <= sauer_shelah_bound(len(points), d)


def test_witness_realizes_every_labeling():
    cls = sparse_class(3, 3)
    d, w = vc_dimension(cls, with_witness=True)
    assert d == 3 and len(w.labelings()) == 8
    for lab in w.labelings():
        f = cls[w.realizer(lab)]
        assert tuple(f(p) for p in w.points) == lab
        # lowest index realizer
        assert all(tuple(g(p) for p in w.points) != lab for g in list(cls)[: w.realizer(lab)])


def test_shattering_edge_cases():
    cls = sparse_class(3, 2)
    assert is_shattered(cls, [1, 2])
    assert not is_shattered(cls, [1, 2, 3])
    assert shatter_witness(cls, [1, 1]) is None
    assert is_shattered(cls, [])


def test_budget():
    with pytest.raises(BudgetExceeded):
        growth_count(indicator_class(5), list(range(26)))
