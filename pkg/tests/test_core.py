import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gtexchange.core import (
    ExchangeEvent,
    FileSet,
    GTViolation,
    Instance,
    Schedule,
    achievable_universe,
    apply_schedule,
    exchange,
    gt_satisfied,
    satisfied_count,
)


def fs(*items, n=10):
    return FileSet.from_indices(n, items)


def inst(*holdings, n=10):
    return Instance.from_lists(n, holdings)


@pytest.mark.parametrize(
    "a, b, expected",
    [((1, 2), (2, 3), True), ((1,), (1, 2), False), ((1, 2), (1, 2), False), ((), (), False)],
)
def test_gt_satisfied_examples(a, b, expected):
    assert gt_satisfied(fs(*a), fs(*b)) is expected


def test_gt_capacity_mismatch():
    with pytest.raises(ValueError):
        gt_satisfied(FileSet(3), FileSet(4))


def test_fileset_rejects_out_of_range():
    with pytest.raises(ValueError):
        FileSet.from_indices(3, [3])
    with pytest.raises(ValueError):
        FileSet(2, 0b100)


def test_exchange_examples():
    assert exchange(inst([1], [2]), ExchangeEvent(0, 1)) == inst([1, 2], [1, 2])
    with pytest.raises(GTViolation):
        exchange(inst([1], [1, 2]), ExchangeEvent(0, 1))
    out = exchange(inst([1, 2], [2, 3], [9]), ExchangeEvent(0, 1))
    assert out == inst([1, 2, 3], [1, 2, 3], [9])


def test_event_rejects_self_exchange():
    with pytest.raises(ValueError):
        ExchangeEvent(1, 1)


def test_apply_schedule_examples():
    start = inst([1], [2], [3])
    out = apply_schedule(start, Schedule.from_pairs([(0, 1), (0, 2)]))
    assert out == inst([1, 2, 3], [1, 2], [1, 2, 3])
    assert apply_schedule(start, Schedule()) == start
    with pytest.raises(GTViolation) as err:
        apply_schedule(inst([1], [2]), Schedule.from_pairs([(0, 1), (0, 1)]))
    assert err.value.step == 1


def test_achievable_universe_examples():
    assert achievable_universe(inst([1], [2], [3])) == fs(1, 2, 3)
    assert achievable_universe(inst([], [])) == FileSet(10)
    assert achievable_universe(inst([1, 2], [2])) == fs(1, 2)


def test_satisfied_count_examples():
    state = inst([1, 2, 3], [1, 2], [1, 2, 3])
    assert satisfied_count(state, fs(1, 2, 3)) == 2
    assert satisfied_count(state, FileSet(10)) == 3
    assert satisfied_count(inst([1], [2]), fs(1, 2)) == 0


def test_json_round_trip():
    state = inst([3, 1], [], [0, 9])
    data = json.loads(state.to_json())
    assert data == {"n": 10, "m": 3, "holdings": [[1, 3], [], [0, 9]]}
    assert Instance.from_json(state.to_json()) == state
    sched = Schedule.from_pairs([(0, 2), (1, 0)])
    assert json.loads(sched.to_json()) == [[0, 2], [1, 0]]
    assert Schedule.from_json(sched.to_json()) == sched


def test_from_dict_checks_m():
    with pytest.raises(ValueError):
        Instance.from_dict({"n": 2, "m": 3, "holdings": [[0]]})


N = 8
file_sets = st.integers(0, 2**N - 1).map(lambda mk: FileSet(N, mk))


@given(file_sets, file_sets, st.integers(0, N - 1))
def test_set_algebra_matches_membership(a, b, x):
    assert (x in a | b) == (x in a or x in b)
    assert (x in a & b) == (x in a and x in b)
    assert (x in a - b) == (x in a and x not in b)
    assert (a <= b) == all(y in b for y in a)
    assert len(a) == sum(1 for _ in a)
    assert all(y < N for y in a)


@given(file_sets, file_sets)
def test_gt_is_mutual_non_subset(a, b):
    assert gt_satisfied(a, b) == (bool(a - b) and bool(b - a))
    assert gt_satisfied(a, b) == gt_satisfied(b, a)


@settings(max_examples=200)
@given(st.lists(file_sets, min_size=2, max_size=6), st.data())
def test_valid_exchange_invariants(holdings, data):
    state = Instance(N, tuple(holdings))
    i = data.draw(st.integers(0, state.m - 1))
    j = data.draw(st.integers(0, state.m - 1).filter(lambda k: k != i))
    a, b = state.holdings[i], state.holdings[j]
    if not gt_satisfied(a, b):
        with pytest.raises(GTViolation):
            exchange(state, ExchangeEvent(i, j))
        return
    after = exchange(state, ExchangeEvent(i, j))
    assert achievable_universe(after) == achievable_universe(state)
    assert after.holdings[i] > a and after.holdings[j] > b
    assert not gt_satisfied(after.holdings[i], after.holdings[j])
    for k in range(state.m):
        assert after.holdings[k] >= state.holdings[k]
        if k not in (i, j):
            assert after.holdings[k] == state.holdings[k]
