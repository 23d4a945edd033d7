import numpy as np
import pytest

from memsched.packer import PackingProblem, greedy_pack, knapsack_pack, quantize, quantized_total

import oracles

A, B, C, D = 1, 2, 3, 4


def test_greedy_example():
    prob = PackingProblem.of([(A, 5), (B, 1), (C, 2), (D, 4)], 7)
    assert greedy_pack(prob) == {B, C, D}


def test_knapsack_example(backend):
    prob = PackingProblem.of([(A, 3), (B, 4), (C, 5)], 7)
    assert knapsack_pack(prob) == {A, B}


def test_empty_cases(backend):
    prob = PackingProblem.of([(A, 3), (B, 4)], 0)
    assert greedy_pack(prob) == set() and knapsack_pack(prob) == set()
    heavy = PackingProblem.of([(A, 9)], 5)
    assert greedy_pack(heavy) == set() and knapsack_pack(heavy) == set()
    assert knapsack_pack(PackingProblem.of([], 5)) == set()


def test_all_fit(backend):
    prob = PackingProblem.of([(A, 1), (B, 2), (C, 3)], 10)
    assert greedy_pack(prob) == knapsack_pack(prob) == {A, B, C}


def test_greedy_ties_by_id():
    prob = PackingProblem.of([(3, 2), (1, 2), (2, 2)], 4)
    assert greedy_pack(prob) == {1, 2}


def test_knapsack_tie_break(backend):
    # sum 6 via {1,2} (two items) or {3} (one item): more items wins
    assert knapsack_pack(PackingProblem.of([(1, 3), (2, 3), (3, 6)], 6)) == {1, 2}
    # {1,4} and {2,3} both sum 5 with two items: lexicographically smallest
    assert knapsack_pack(PackingProblem.of([(1, 1), (2, 2), (3, 3), (4, 4)], 5)) == {1, 4}


def test_quantize_rounds_up():
    assert quantize(3.0, 1.0) == 3
    assert quantize(3.01, 1.0) == 4
    assert quantize(0.3, 0.1) == 3
    assert quantize(0.2, 1.0) == 1
    assert quantize(2.5, 0.5) == 5
    assert quantize(50.00000000000001, 1.0) == 50
    assert quantize(50.001, 1.0) == 51


def test_fractional_weights_stay_feasible(backend):
    rng = np.random.default_rng(0)
    for _ in range(200):
        items = [(i, float(rng.uniform(0.1, 30))) for i in range(1, int(rng.integers(1, 14)))]
        cap = float(rng.uniform(0, 80))
        prob = PackingProblem.of(items, cap)
        for q in (1.0, 0.25):
            chosen = knapsack_pack(prob, q)
            assert sum(w for i, w in items if i in chosen) <= cap * (1 + 1e-9)
            assert quantized_total(prob, chosen, q) * q <= cap + 1e-9


def test_random_instances_against_exhaustive(backend):
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(1, 13))
        weights = [int(w) for w in rng.integers(1, 50, n)]
        cap = int(0.4 * sum(weights))
        prob = PackingProblem.of(enumerate(weights, start=1), cap)
        chosen = knapsack_pack(prob)
        expected = oracles.best_knapsack_set(weights, cap)
        assert chosen == {k + 1 for k in expected}
        assert len(greedy_pack(prob)) == oracles.max_cardinality(weights, cap)


def test_dominance():
    rng = np.random.default_rng(2)
    for _ in range(300):
        n = int(rng.integers(1, 16))
        items = [(i, int(w)) for i, w in enumerate(rng.integers(1, 100, n), start=1)]
        prob = PackingProblem.of(items, int(rng.integers(0, 400)))
        k, g = knapsack_pack(prob), greedy_pack(prob)
        weights = dict(prob.items)
        assert sum(weights[i] for i in k) >= sum(weights[i] for i in g)
        assert len(g) >= len(k)


def test_deterministic(backend):
    prob = PackingProblem.of([(i, float(i % 5 + 1)) for i in range(1, 20)], 17.5)
    assert knapsack_pack(prob) == knapsack_pack(prob)


def test_many_items_use_sparse_path():
    items = [(i, float(i % 7 + 1)) for i in range(1, 80)]
    chosen = knapsack_pack(PackingProblem.of(items, 50))
    assert sum(dict(items)[i] for i in chosen) == 50


def test_validation():
    with pytest.raises(ValueError):
        PackingProblem.of([(1, 2), (1, 3)], 5)
    with pytest.raises(ValueError):
        PackingProblem.of([(1, 0)], 5)
    with pytest.raises(ValueError):
        PackingProblem.of([(1, 1)], -1)
    with pytest.raises(ValueError):
        knapsack_pack(PackingProblem.of([(1, 1)], 1), quantum=0)
