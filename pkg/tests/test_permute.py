import numpy as np
import pytest

from otafl import permute
from otafl.core import RngStream


def plans_for(dim, rng, round_index=0):
    magnitudes = np.abs(rng.standard_normal((3, dim)))
    return [
        permute.PermutationPlan(kind=permute.IDENTITY, dim=dim,
                                round_index=round_index),
        permute.PermutationPlan(kind=permute.FLIP, dim=dim,
                                round_index=round_index),
        permute.PermutationPlan(kind=permute.ROLL, dim=dim,
                                round_index=round_index),
        permute.make_sort_plan(magnitudes, round_index=round_index),
    ]


def test_identity_is_noop():
    g = np.array([3.0, 1.0, 4.0, 1.0])
    plan = permute.PermutationPlan(kind=permute.IDENTITY, dim=4)
    assert np.array_equal(permute.apply(plan, g), g)


def test_flip_reverses():
    plan = permute.PermutationPlan(kind=permute.FLIP, dim=4)
    assert np.array_equal(permute.apply(plan, np.array([1.0, 2.0, 3.0, 4.0])),
                          [4.0, 3.0, 2.0, 1.0])


def test_flip_is_involution():
    g = RngStream(1, role=9).standard_normal(20)
    plan = permute.PermutationPlan(kind=permute.FLIP, dim=20)
    assert np.array_equal(permute.apply(plan, permute.apply(plan, g)), g)


def test_sort_indexing():
    plan = permute.PermutationPlan(kind=permute.SORT, dim=4,
                                   sorted_indices=np.array([2, 0, 3, 1]))
    g = np.array([10.0, 11.0, 12.0, 13.0])
    assert np.array_equal(permute.apply(plan, g), [12.0, 10.0, 13.0, 11.0])
    assert np.array_equal(permute.inverse(plan, np.array([12.0, 10.0, 13.0, 11.0])),
                          g)


class TestRoll:
    def test_offset_schedule(self):
        assert permute.roll_offset(0, 8) == 0
        assert permute.roll_offset(1, 8) == 2
        assert permute.roll_offset(4, 8) == 0  # full cycle
        with pytest.raises(ValueError):
            permute.roll_offset(-1, 8)

    def test_round_one_shift(self):
        plan = permute.PermutationPlan(kind=permute.ROLL, dim=8, round_index=1)
        g = np.arange(8.0)
        assert np.array_equal(permute.apply(plan, g),
                              [2, 3, 4, 5, 6, 7, 0, 1])

    def test_cycle_visits_every_offset_once(self):
        dim = 12
        offsets = {permute.roll_offset(n, dim) for n in range(dim // 2)}
        assert offsets == set(range(0, dim, 2))
        for n in range(dim // 2):
            assert permute.roll_offset(n + dim // 2, dim) == permute.roll_offset(n, dim)

    def test_inverse_shifts_back(self):
        g = RngStream(2, role=9).standard_normal(10)
        for n in range(7):
            plan = permute.PermutationPlan(kind=permute.ROLL, dim=10,
                                           round_index=n)
            assert np.array_equal(permute.inverse(plan, permute.apply(plan, g)), g)

    def test_pair_alignment(self):
        # even shifts keep (real, imag) pairs on one symbol
        plan = permute.PermutationPlan(kind=permute.ROLL, dim=8, round_index=3)
        pairs = np.arange(8.0).reshape(4, 2)
        rolled = permute.apply(plan, pairs.ravel()).reshape(4, 2)
        assert all(b == a + 1 for a, b in rolled)


class TestMakeSortPlan:
    def test_single_device_example(self):
        plan = permute.make_sort_plan(np.array([[0.3, 0.1, 0.5, 0.2]]))
        assert plan.sorted_indices.tolist() == [2, 0, 3, 1]

    def test_tie_break_keeps_original_order(self):
        plan = permute.make_sort_plan(np.full((2, 6), 0.5))
        assert plan.sorted_indices.tolist() == list(range(6))

    def test_device_average(self):
        plan = permute.make_sort_plan(np.array([[1.0, 0.0], [0.0, 4.0]]))
        assert plan.sorted_indices.tolist() == [1, 0]

    def test_sorted_magnitudes_non_increasing(self):
        magnitudes = np.abs(RngStream(3, role=9).standard_normal((4, 50)))
        plan = permute.make_sort_plan(magnitudes)
        ordered = magnitudes.mean(axis=0)[plan.sorted_indices]
        assert np.all(np.diff(ordered) <= 0)
        assert sorted(plan.sorted_indices.tolist()) == list(range(50))

    def test_rejects_negative_magnitudes(self):
        with pytest.raises(ValueError):
            permute.make_sort_plan(np.array([[0.2, -0.1]]))


def test_round_trip_every_kind():
    rng = RngStream(4, role=9)
    for dim in (2, 8, 64):
        for plan in plans_for(dim, rng, round_index=5):
            for _ in range(20):
                g = rng.standard_normal(dim)
                assert np.array_equal(permute.inverse(plan, permute.apply(plan, g)), g)


def test_apply_works_row_wise():
    rng = RngStream(5, role=9)
    g = rng.standard_normal((3, 8))
    for plan in plans_for(8, rng):
        stacked = permute.apply(plan, g)
        for k in range(3):
            assert np.array_equal(stacked[k], permute.apply(plan, g[k]))
        assert np.array_equal(permute.inverse(plan, stacked), g)


def test_dimension_mismatch():
    plan = permute.PermutationPlan(kind=permute.FLIP, dim=8)
    with pytest.raises(ValueError):
        permute.apply(plan, np.zeros(6))
    with pytest.raises(ValueError):
        permute.inverse(plan, np.zeros(6))


def test_plan_validation():
    with pytest.raises(ValueError):
        permute.PermutationPlan(kind="shuffle", dim=4)
    with pytest.raises(ValueError):
        permute.PermutationPlan(kind=permute.IDENTITY, dim=5)
    with pytest.raises(ValueError):
        permute.PermutationPlan(kind=permute.SORT, dim=4,
                                sorted_indices=np.array([0, 1, 1, 3]))


def test_advance_round():
    plan = permute.PermutationPlan(kind=permute.ROLL, dim=6)
    assert permute.advance_round(plan).round_index == 1
    assert plan.round_index == 0
