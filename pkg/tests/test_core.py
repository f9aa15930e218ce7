from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from backdoor_game.core import (
    BudgetExceeded,
    ContractViolation,
    DimensionMismatch,
    ExampleOracle,
    InputDistribution,
    RandomSource,
    RepresentationClass,
    SpecialCased,
    TruthTable,
    all_functions_class,
    distance,
    exact_distance,
    explicit_class,
    indicator,
    indicator_class,
    is_epsilon_valid,
    pairwise_distances,
    point_from_bits,
    point_to_bits,
    sparse_class,
)

tables3 = st.lists(st.integers(0, 1), min_size=8, max_size=8)
masses3 = st.lists(st.integers(0, 20), min_size=8, max_size=8).filter(lambda w: sum(w) > 0)


def dist_from_weights(n, weights):
    return InputDistribution.from_support(n, {x: w for x, w in enumerate(weights) if w})


def test_point_bits_follow_variable_order():
    assert point_from_bits("0110") == 6
    assert point_to_bits(6, 4) == "0110"
    with pytest.raises(ValueError):
        point_from_bits("01a")


@given(st.integers(0, 2**12 - 1))
def test_point_bits_roundtrip(x):
    assert point_from_bits(point_to_bits(x, 12)) == x


def test_random_source_replays_per_stream():
    a = RandomSource(7, 3).integers(0, 1000, 20)
    b = RandomSource(7, 3).integers(0, 1000, 20)
    c = RandomSource(7, 4).integers(0, 1000, 20)
    assert (a == b).all()
    assert not (a == c).all()
    assert not (RandomSource(7, 3).child(1).random(5) == RandomSource(7, 3).child(2).random(5)).all()


@given(tables3)
def test_truth_table_hex_roundtrip(bits):
    t = TruthTable.from_array(3, bits)
    assert TruthTable.from_hex(3, t.to_hex()) == t
    assert [t(x) for x in range(8)] == bits


def test_truth_table_rejects_bad_input():
    with pytest.raises(ContractViolation):
        TruthTable(3, bytes(7))
    with pytest.raises(ContractViolation):
        TruthTable.from_array(2, [0, 2, 0, 0])
    with pytest.raises(ContractViolation):
        TruthTable.constant(21, 0)


def test_distribution_validation():
    with pytest.raises(ContractViolation):
        InputDistribution(2, [0.5, 0.5, 0.5, 0.0])
    with pytest.raises(ContractViolation):
        InputDistribution(2, [1.5, -0.5, 0.0, 0.0])
    D = InputDistribution.uniform(3)
    assert D.is_exact and sum(D.exact()) == 1
    assert D.is_uniform
    assert InputDistribution.from_json(3, D.to_json()).mass.tolist() == D.mass.tolist()


def test_distribution_samples_only_support():
    D = InputDistribution.from_support(4, {3: 1, 9: 2})
    xs = D.sample(RandomSource(1), 2000)
    assert set(xs.tolist()) == {3, 9}
    assert abs((xs == 9).mean() - 2 / 3) < 0.05


@given(tables3, tables3, masses3)
def test_distance_matches_brute_force(a, b, w):
    D = dist_from_weights(3, w)
    f, g = TruthTable.from_array(3, a), TruthTable.from_array(3, b)
    expected = sum(Fraction(wi, sum(w)) for ai, bi, wi in zip(a, b, w) if ai != bi)
    assert exact_distance(f, g, D) == expected
    assert distance(f, g, D) == pytest.approx(float(expected), abs=1e-15)


@given(tables3, tables3, tables3, masses3)
def test_distance_is_a_pseudometric(a, b, c, w):
    D = dist_from_weights(3, w)
    f, g, h = (TruthTable.from_array(3, t) for t in (a, b, c))
    assert exact_distance(f, g, D) == exact_distance(g, f, D)
    assert exact_distance(f, f, D) == 0
    assert exact_distance(f, h, D) <= exact_distance(f, g, D) + exact_distance(g, h, D)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        distance(TruthTable.constant(2, 0), TruthTable.constant(3, 0), InputDistribution.uniform(3))
    with pytest.raises(DimensionMismatch):
        indicator(2, 4)


def test_epsilon_validity_needs_trigger_disagreement():
    D = InputDistribution.uniform(3)
    f, g = indicator(3, 1), indicator(3, 2)
    assert is_epsilon_valid(f, g, D, Fraction(1, 4), 1)
    assert not is_epsilon_valid(f, g, D, Fraction(1, 4), 5)
    assert not is_epsilon_valid(f, g, D, Fraction(1, 8), 1)
    assert is_epsilon_valid(f, g, D, 0.25, 2)
    with pytest.raises(ContractViolation):
        is_epsilon_valid(f, g, D, 0, 1)


def test_oracle_labels_and_counts():
    f = indicator(3, 5)
    oracle = ExampleOracle(f, InputDistribution.uniform(3), RandomSource(2))
    ex = oracle.draw(50)
    assert all(y == f(x) for x, y in ex)
    x, y = oracle()
    assert y == f(x)
    assert oracle.calls == 51


def test_class_membership_and_tables():
    cls = indicator_class(3)
    assert len(cls) == 8 and indicator(3, 4) in cls and cls.index(indicator(3, 4)) == 4
    assert TruthTable.constant(3, 0) not in cls
    assert cls.tables().shape == (8, 8)
    assert (cls.tables() == np.eye(8, dtype=np.uint8)).all()
    with pytest.raises(ContractViolation):
        explicit_class(3, [indicator(3, 1), indicator(3, 1)])
    with pytest.raises(DimensionMismatch):
        explicit_class(3, [indicator(2, 1)])


def test_non_enumerable_class():
    cls = RepresentationClass(3, "odd", None, contains=lambda f: isinstance(f, TruthTable) and f(1) == 1)
    assert indicator(3, 1) in cls and indicator(3, 2) not in cls
    with pytest.raises(BudgetExceeded):
        len(cls)


def test_class_sizes():
    from math import comb

    for k in range(4):
        assert len(sparse_class(3, k)) == sum(comb(8, j) for j in range(k + 1))
    assert len(all_functions_class(2)) == 16
    with pytest.raises(BudgetExceeded):
        all_functions_class(5)


def test_special_cased_overrides_one_point():
    base = indicator(3, 2)
    g = SpecialCased(base, 5, 1)
    assert g(5) == 1 and g(2) == 1 and g(0) == 0 and g.is_modified
    assert not SpecialCased(base, 2, 1).is_modified
    assert g.table().tolist() == [0, 0, 1, 0, 0, 1, 0, 0]


@given(masses3)
def test_pairwise_distances_match_loop(w):
    D = dist_from_weights(3, w)
    cls = sparse_class(3, 1)
    got = pairwise_distances(cls, D)
    for i, f in enumerate(cls):
        for j, g in enumerate(cls):
            assert got[i, j] == pytest.approx(float(exact_distance(f, g, D)), abs=1e-12)
