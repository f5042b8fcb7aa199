import numpy as np
import pytest

from biasbench.groups import GroupingError, GroupTable, assign_groups


def test_binary_label_binary_factor_gives_four_groups():
    y = np.array([0, 0, 1, 1, 0, 1, 0, 1])
    b = np.array([[0], [1], [0], [1], [0], [1], [1], [0]])
    gids, table = assign_groups(y, b, [0])
    assert len(table.keys) == 4
    assert table.keys == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert table.total == 8


def test_empty_selection_groups_by_class():
    y = np.array([3, 1, 3, 0])
    b = np.zeros((4, 2), dtype=int)
    _, table = assign_groups(y, b, [])
    assert table.keys == [(0,), (1,), (3,)]


def test_counting_bound_two_factors():
    rng = np.random.default_rng(0)
    y = rng.integers(0, 10, size=5000)
    b = rng.integers(0, 10, size=(5000, 3))
    _, table = assign_groups(y, b, [0, 1])
    assert len(table.keys) <= 1000
    assert table.counts.sum() == 5000


def test_unpopulated_keys_absent():
    y = np.array([0, 0, 0])
    b = np.array([[1], [1], [2]])
    _, table = assign_groups(y, b, [0])
    assert table.keys == [(0, 1), (0, 2)]


def test_missing_factor_column_rejected():
    y = np.array([0, 1])
    b = np.array([[0], [1]])
    with pytest.raises(GroupingError):
        assign_groups(y, b, [1])


def test_correct_counts_and_accuracies():
    y = np.array([0, 0, 1, 1])
    b = np.array([[0], [0], [0], [0]])
    correct = np.array([True, False, True, True])
    _, table = assign_groups(y, b, [0], correct)
    assert table.as_dict() == {(0, 0): {"n": 2, "correct": 1}, (1, 0): {"n": 2, "correct": 2}}
    assert table.accuracies().tolist() == [0.5, 1.0]
    assert table.overall_accuracy() == 0.75
    assert table.worst_group_accuracy() == 0.5


def test_table_invariants_enforced():
    with pytest.raises(GroupingError):
        GroupTable(keys=[(0,)], counts=np.array([0]), correct=np.array([0]))
    with pytest.raises(GroupingError):
        GroupTable(keys=[(0,)], counts=np.array([2]), correct=np.array([3]))


def test_priors_sum_to_one():
    rng = np.random.default_rng(2)
    y = rng.integers(0, 5, size=997)
    b = rng.integers(0, 4, size=(997, 1))
    _, table = assign_groups(y, b, [0])
    assert abs(table.priors().sum() - 1.0) < 1e-12
