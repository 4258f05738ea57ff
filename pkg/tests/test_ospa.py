import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rnnfilter.lstm import ConfigError, ShapeError
from rnnfilter.ospa import OspaConfig, hungarian, ospa
from tests.oracles import brute_assignment, brute_ospa


def test_identity_is_zero():
    A = np.array([[1.0, 2.0], [30.0, -4.0], [0.5, 0.5]])
    r = ospa(A, A.copy())
    assert (r.total, r.loc, r.card) == (0.0, 0.0, 0.0)


def test_one_empty_is_cutoff():
    r = ospa(np.zeros((0, 2)), np.array([[1.0, 1.0], [2.0, 2.0]]))
    assert (r.total, r.loc, r.card) == (100.0, 0.0, 100.0)
    assert ospa(np.array([[1.0, 1.0]]), np.zeros((0, 2))).total == 100.0


def test_both_empty_is_zero():
    assert ospa(np.zeros((0, 2)), np.zeros((0, 2))).total == 0.0


def test_345_pair():
    assert ospa(np.array([[0.0, 0.0]]), np.array([[3.0, 4.0]])).total == 5.0


def test_cardinality_mismatch_hand_value():
    # matched pair 10 apart, one unmatched: (10 + 100) / 2
    r = ospa(np.array([[0.0, 0.0]]), np.array([[10.0, 0.0], [500.0, 500.0]]))
    assert r.total == 55.0 and r.loc == 5.0 and r.card == 50.0


def test_distance_is_cut_off():
    assert ospa(np.array([[0.0, 0.0]]), np.array([[1000.0, 0.0]])).total == 100.0


def test_config_validation():
    with pytest.raises(ConfigError):
        OspaConfig(p=0.5)
    with pytest.raises(ConfigError):
        OspaConfig(c=0.0)


def test_dimension_mismatch():
    with pytest.raises(ShapeError):
        ospa(np.zeros((1, 2)), np.zeros((1, 3)))


def random_pair(rng, max_size=6, spread=150.0):
    a, b = rng.integers(0, max_size + 1, 2)
    return rng.uniform(-spread, spread, (a, 2)), rng.uniform(-spread, spread, (b, 2))


def test_matches_brute_force():
    rng = np.random.default_rng(2024)
    for _ in range(150):
        A, B = random_pair(rng)
        assert abs(ospa(A, B).total - brute_ospa(A, B)) <= 1e-9


@pytest.mark.parametrize("p", [1.0, 2.0, 3.0])
def test_matches_brute_force_other_orders(p):
    rng = np.random.default_rng(int(p))
    for _ in range(40):
        A, B = random_pair(rng, max_size=5)
        got = ospa(A, B, OspaConfig(p=p, c=100.0)).total
        assert abs(got - brute_ospa(A, B, p=p)) <= 1e-9


def test_non_additive_for_p_above_one():
    r = ospa(np.array([[0.0, 0.0]]), np.array([[10.0, 0.0], [500.0, 500.0]]), OspaConfig(p=2.0))
    assert not r.additive
    assert r.total == pytest.approx(math.sqrt((100.0 + 10000.0) / 2))


points = arrays(np.float64, st.tuples(st.integers(0, 6), st.just(2)), elements=st.floats(-300, 300))


@settings(max_examples=200, deadline=None)
@given(A=points, B=points)
def test_metric_properties(A, B):
    r = ospa(A, B)
    assert 0.0 <= r.total <= 100.0 + 1e-12
    assert r.total == pytest.approx(ospa(B, A).total, abs=1e-9)
    assert r.total == pytest.approx(r.loc + r.card, abs=1e-12)
    assert ospa(A, A).total == 0.0


def test_triangle_inequality_sampled():
    rng = np.random.default_rng(5)
    for _ in range(100):
        A, B = random_pair(rng)
        C, _ = random_pair(rng)
        assert ospa(A, C).total <= ospa(A, B).total + ospa(B, C).total + 1e-9


class TestHungarian:
    def test_dominant_diagonal(self):
        cost = np.full((4, 4), 10.0)
        np.fill_diagonal(cost, 1.0)
        assert hungarian(cost).tolist() == [0, 1, 2, 3]

    def test_single_row_picks_minimum(self):
        row = np.array([[5.0, 2.0, 9.0, 2.5]])
        assert hungarian(row).tolist() == [1]

    def test_rejects_more_rows_than_columns(self):
        with pytest.raises(ValueError):
            hungarian(np.zeros((3, 2)))

    def test_empty(self):
        assert hungarian(np.zeros((0, 4))).tolist() == []

    def test_random_5x7_cost_equals_enumeration(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            cost = rng.uniform(0, 100, (5, 7))
            cols = hungarian(cost)
            best, _ = brute_assignment(cost)
            assert len(set(cols.tolist())) == 5
            assert cost[np.arange(5), cols].sum() == pytest.approx(best, abs=1e-9)

    def test_ties_resolve_to_lexicographically_smallest(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            cost = rng.integers(0, 3, (4, 5)).astype(float)
            _, first = brute_assignment(cost)  # permutations come in lexicographic order
            assert hungarian(cost).tolist() == list(first)

    def test_all_equal(self):
        assert hungarian(np.ones((3, 3))).tolist() == [0, 1, 2]
