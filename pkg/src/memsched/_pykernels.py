"""Pure-Python kernels. Reference semantics for ``_ckernels.pyx``.

Both backends sum memory in position order so peaks agree bit-for-bit.
Permutations here are 0-based task indices.
"""
import heapq


def list_schedule_times(dur, perm, K):
    """Start/completion time per position under list scheduling."""
    n = len(perm)
    starts = [0.0] * n
    comps = [0.0] * n
    heap = []
    for j in range(n):
        if j < K:
            s = 0.0
        else:
            s, _ = heapq.heappop(heap)
        c = s + dur[perm[j]]
        starts[j] = s
        comps[j] = c
        heapq.heappush(heap, (c, j))
    return starts, comps


def peak_memory(mem, dur, perm, K):
    starts, comps = list_schedule_times(dur, perm, K)
    n = len(perm)
    best = 0.0
    for j in range(n):
        t = starts[j]
        total = 0.0
        for i in range(n):
            if starts[i] <= t < comps[i]:
                total += mem[perm[i]]
        if total > best:
            best = total
    return best


def apply_swaps(perm, pairs, count):
    """Compose the first ``count`` swaps, last one applied first."""
    for k in range(count - 1, -1, -1):
        i, j = pairs[k][0], pairs[k][1]
        perm[i], perm[j] = perm[j], perm[i]


def hill_climb(mem, dur, perm0, K, msizes, pairs):
    """First-improvement climb over pre-drawn swap proposals.

    ``msizes[r]`` is the number of swaps at iteration r and ``pairs[r]`` holds
    at least that many (i, j) position pairs.
    """
    mem = [float(x) for x in mem]
    dur = [float(x) for x in dur]
    current = [int(x) for x in perm0]
    current_peak = peak_memory(mem, dur, current, K)
    for r in range(len(msizes)):
        cand = current[:]
        apply_swaps(cand, pairs[r].tolist(), int(msizes[r]))
        p = peak_memory(mem, dur, cand, K)
        if p < current_peak:
            current = cand
            current_peak = p
    return current, current_peak


def _better(count, mask, best_count, best_mask):
    if count != best_count:
        return count > best_count
    diff = mask ^ best_mask
    if diff == 0:
        return False
    low = diff & -diff
    return bool(mask & low)


def knapsack_mask(weights, capacity):
    """Sparse DP keyed by reachable weight sum.

    Each key keeps the subset (bitmask over item positions) with the most
    items, then the lexicographically smallest position set. Returns the
    mask stored at the largest reachable sum.
    """
    table = {0: (0, 0)}
    for k, w in enumerate(weights):
        if w > capacity:
            continue
        bit = 1 << k
        # snapshot: each item used at most once
        for s, (count, mask) in sorted(table.items(), reverse=True):
            ns = s + w
            if ns > capacity:
                continue
            cand = (count + 1, mask | bit)
            old = table.get(ns)
            if old is None or _better(cand[0], cand[1], old[0], old[1]):
                table[ns] = cand
    best_sum = max(table)
    return best_sum, table[best_sum][1]
