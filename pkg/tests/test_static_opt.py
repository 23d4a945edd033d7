import itertools

import numpy as np
import pytest

from memsched.simulator import peak_memory, sequential_order
from memsched.static_opt import (HillClimbConfig, apply_swaps, climb_trajectory, draw_proposals, hill_climb,
                                 load_catalog, moving_average, optimize_orders, propose, save_catalog)
from memsched.workload import TaskTable, default_task_table


class FixedDraws:
    """Stands in for a Generator: returns canned swap pairs."""

    def __init__(self, pairs):
        self.pairs = np.asarray(pairs)

    def integers(self, low, high, size=None):
        return self.pairs


def test_identity_swaps_leave_order():
    assert propose([1, 2, 3, 4], 3, FixedDraws([[0, 0], [2, 2], [3, 3]])) == [1, 2, 3, 4]


def test_single_swap():
    assert propose([1, 2, 3], 1, FixedDraws([[0, 2]])) == [3, 2, 1]


def test_last_swap_applies_first():
    # s1 o s2 with s2 = (1,2), s1 = (0,1): (1,2,3) -> (1,3,2) -> (3,1,2)
    assert apply_swaps([1, 2, 3], [(0, 1), (1, 2)]) == [3, 1, 2]


def test_propose_always_permutation():
    rng = np.random.default_rng(0)
    order = list(range(1, 23))
    for _ in range(500):
        order = propose(order, int(rng.integers(1, 5)), rng)
        assert sorted(order) == list(range(1, 23))
    with pytest.raises(ValueError):
        propose(order, 0, rng)


def test_no_iterations_returns_start(backend):
    table = default_task_table()
    start = list(range(22, 0, -1))
    order, peak = hill_climb(table, start, HillClimbConfig(K=3, iters=0, restarts=1))
    assert order == start
    assert peak == peak_memory(table, start, 3)


def test_five_task_instance_reaches_exhaustive_minimum(backend):
    table = TaskTable(lengths=(50.0, 40.0, 30.0, 20.0, 10.0))
    best = min(peak_memory(table, list(p), 2) for p in itertools.permutations(range(1, 6)))
    _, peak = hill_climb(table, None, HillClimbConfig(K=2, iters=2000, restarts=5, seed=0))
    assert peak == best


def test_small_instances_match_exhaustive_over_seed_ensemble():
    rng = np.random.default_rng(11)
    hits = 0
    for seed in range(20):
        n = 8
        table = TaskTable(lengths=tuple(float(v) for v in rng.uniform(1, 100, n)))
        K = int(rng.integers(2, 4))
        best = min(peak_memory(table, list(p), K) for p in itertools.permutations(range(1, n + 1)))
        _, peak = hill_climb(table, None, HillClimbConfig(K=K, iters=3000, restarts=5, seed=seed))
        hits += peak == best
    assert hits / 20 >= 0.95


def test_trajectory_non_increasing():
    table = default_task_table()
    hist = climb_trajectory(table, sequential_order(22), 3, 300, 4, np.random.default_rng(4))
    assert all(b <= a for a, b in zip(hist, hist[1:]))
    assert hist[-1] < hist[0]


def test_deterministic_and_worker_independent():
    table = default_task_table()
    cfg = HillClimbConfig(K=4, iters=500, restarts=3, seed=9)
    a = hill_climb(table, None, cfg)
    assert hill_climb(table, None, cfg) == a
    assert hill_climb(table, None, cfg, workers=2) == a


def test_backends_follow_identical_trajectories():
    from memsched import kernels
    if "compiled" not in kernels.available_backends():
        pytest.skip("compiled kernels not built")
    table = default_task_table()
    cfg = HillClimbConfig(K=5, iters=3000, restarts=2, seed=1)
    results = []
    for name in ("python", "compiled"):
        kernels.use_backend(name)
        results.append(hill_climb(table, None, cfg))
    kernels.use_backend("compiled")
    assert results[0] == results[1]


def test_proposals_are_seeded():
    a = draw_proposals(np.random.default_rng(3), 22, 10, 4)
    b = draw_proposals(np.random.default_rng(3), 22, 10, 4)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert a[0].min() >= 1 and a[0].max() <= 4


def test_default_k2_reaches_quarter_reduction():
    table = default_task_table()
    _, peak = hill_climb(table, None, HillClimbConfig(K=2, iters=20000, restarts=10, seed=0))
    assert peak <= 0.75 * 492.45


def test_config_validation():
    for kwargs in ({"iters": -1}, {"max_swaps": 0}, {"restarts": 0}, {"K": 0}):
        with pytest.raises(ValueError):
            HillClimbConfig(**({"K": 2} | kwargs))


def test_moving_average_examples():
    assert moving_average([1, 2, 3, 4], 2) == [1.5, 2.5, 3.5]
    rng = np.random.default_rng(0)
    order = list(rng.permutation(22) + 1)
    assert moving_average(order, 22) == [11.5]
    with pytest.raises(ValueError):
        moving_average([1, 2], 3)


@pytest.mark.xfail(strict=True, reason="optimized K=3 orders put extreme ids at the ends; "
                                       "window means stray about 6 from the centre")
def test_optimized_window_means_within_band():
    order, _ = hill_climb(default_task_table(), None, HillClimbConfig(K=3, iters=20000, restarts=10, seed=0))
    assert all(abs(m - 11) <= 4 for m in moving_average(order, 3))


def test_optimized_windows_more_balanced_than_sequential():
    order, _ = hill_climb(default_task_table(), None, HillClimbConfig(K=3, iters=20000, restarts=10, seed=0))
    spread = np.std(moving_average(order, 3))
    assert spread < np.std(moving_average(sequential_order(22), 3))


def test_catalog_round_trip(tmp_path):
    catalog = optimize_orders(default_task_table(), [2, 3], iters=200, restarts=1)
    for K, entry in catalog.items():
        assert entry["sequential_peak"] >= entry["peak"]
        assert sorted(entry["order"]) == list(range(1, 23))
    save_catalog(catalog, tmp_path / "c.json", config={"seed": 0})
    assert load_catalog(tmp_path / "c.json") == catalog
