# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; semantics mirror ``_pykernels`` exactly."""
from libc.stdlib cimport malloc, free
from libc.stdint cimport int64_t, uint64_t

import numpy as np


cdef void _schedule(const double[:] dur, const int64_t[:] perm, Py_ssize_t K,
                    double* starts, double* comps, double* slot_c, Py_ssize_t* slot_j) noexcept nogil:
    # K-slot linear scan: n and K are small, and it keeps tie order explicit
    cdef Py_ssize_t n = perm.shape[0]
    cdef Py_ssize_t j, k, best, nslots
    cdef double s
    nslots = K if K < n else n
    for j in range(n):
        if j < nslots:
            s = 0.0
            starts[j] = s
            comps[j] = s + dur[perm[j]]
            slot_c[j] = comps[j]
            slot_j[j] = j
        else:
            best = 0
            for k in range(1, nslots):
                if slot_c[k] < slot_c[best] or (slot_c[k] == slot_c[best] and slot_j[k] < slot_j[best]):
                    best = k
            s = slot_c[best]
            starts[j] = s
            comps[j] = s + dur[perm[j]]
            slot_c[best] = comps[j]
            slot_j[best] = j


cdef double _peak(const double[:] mem, const double[:] dur, const int64_t[:] perm, Py_ssize_t K,
                  double* starts, double* comps, double* slot_c, Py_ssize_t* slot_j) noexcept nogil:
    cdef Py_ssize_t n = perm.shape[0]
    cdef Py_ssize_t i, j
    cdef double t, total, best = 0.0
    _schedule(dur, perm, K, starts, comps, slot_c, slot_j)
    for j in range(n):
        t = starts[j]
        total = 0.0
        for i in range(n):
            if starts[i] <= t and t < comps[i]:
                total += mem[perm[i]]
        if total > best:
            best = total
    return best


def list_schedule_times(const double[:] dur, const int64_t[:] perm, Py_ssize_t K):
    cdef Py_ssize_t n = perm.shape[0]
    starts = np.empty(n, dtype=np.float64)
    comps = np.empty(n, dtype=np.float64)
    cdef double[:] sv = starts
    cdef double[:] cv = comps
    cdef double* slot_c = <double*> malloc(n * sizeof(double))
    cdef Py_ssize_t* slot_j = <Py_ssize_t*> malloc(n * sizeof(Py_ssize_t))
    try:
        _schedule(dur, perm, K, &sv[0], &cv[0], slot_c, slot_j)
    finally:
        free(slot_c)
        free(slot_j)
    return starts.tolist(), comps.tolist()


def peak_memory(const double[:] mem, const double[:] dur, const int64_t[:] perm, Py_ssize_t K):
    cdef Py_ssize_t n = perm.shape[0]
    cdef double* buf = <double*> malloc(3 * n * sizeof(double))
    cdef Py_ssize_t* slot_j = <Py_ssize_t*> malloc(n * sizeof(Py_ssize_t))
    cdef double result
    try:
        result = _peak(mem, dur, perm, K, buf, buf + n, buf + 2 * n, slot_j)
    finally:
        free(buf)
        free(slot_j)
    return result


def hill_climb(const double[:] mem, const double[:] dur, const int64_t[:] perm0, Py_ssize_t K,
               const int64_t[:] msizes, const int64_t[:, :, :] pairs):
    cdef Py_ssize_t n = perm0.shape[0]
    cdef Py_ssize_t R = msizes.shape[0]
    cdef Py_ssize_t r, k, a, b
    cdef int64_t tmp
    cdef double p, current_peak
    current = np.array(perm0, dtype=np.int64)
    cand = np.array(perm0, dtype=np.int64)
    cdef int64_t[:] cur = current
    cdef int64_t[:] cv = cand
    cdef double* buf = <double*> malloc(3 * n * sizeof(double))
    cdef Py_ssize_t* slot_j = <Py_ssize_t*> malloc(n * sizeof(Py_ssize_t))
    try:
        with nogil:
            current_peak = _peak(mem, dur, cur, K, buf, buf + n, buf + 2 * n, slot_j)
            for r in range(R):
                for k in range(n):
                    cv[k] = cur[k]
                for k in range(msizes[r] - 1, -1, -1):
                    a = pairs[r, k, 0]
                    b = pairs[r, k, 1]
                    tmp = cv[a]
                    cv[a] = cv[b]
                    cv[b] = tmp
                p = _peak(mem, dur, cv, K, buf, buf + n, buf + 2 * n, slot_j)
                if p < current_peak:
                    current_peak = p
                    for k in range(n):
                        cur[k] = cv[k]
    finally:
        free(buf)
        free(slot_j)
    return current.tolist(), current_peak


def knapsack_mask(const int64_t[:] weights, int64_t capacity):
    """Dense-table twin of the sparse DP; needs at most 63 items."""
    cdef Py_ssize_t n = weights.shape[0]
    if n > 63:
        raise ValueError("compiled knapsack supports at most 63 items")
    if capacity < 0:
        capacity = 0
    cdef Py_ssize_t size = capacity + 1
    cdef char* reach = <char*> malloc(size * sizeof(char))
    cdef int* count = <int*> malloc(size * sizeof(int))
    cdef uint64_t* mask = <uint64_t*> malloc(size * sizeof(uint64_t))
    cdef Py_ssize_t k, w, nw, wk, best_sum
    cdef int cc
    cdef uint64_t cm, bit, diff, low
    cdef bint better
    try:
        with nogil:
            for w in range(size):
                reach[w] = 0
                count[w] = 0
                mask[w] = 0
            reach[0] = 1
            for k in range(n):
                wk = weights[k]
                if wk > capacity:
                    continue
                bit = (<uint64_t> 1) << k
                for w in range(capacity - wk, -1, -1):
                    if not reach[w]:
                        continue
                    nw = w + wk
                    cc = count[w] + 1
                    cm = mask[w] | bit
                    if not reach[nw]:
                        better = True
                    elif cc != count[nw]:
                        better = cc > count[nw]
                    else:
                        diff = cm ^ mask[nw]
                        if diff == 0:
                            better = False
                        else:
                            low = diff & (~diff + 1)
                            better = (cm & low) != 0
                    if better:
                        reach[nw] = 1
                        count[nw] = cc
                        mask[nw] = cm
            best_sum = capacity
            while not reach[best_sum]:
                best_sum -= 1
        return int(best_sum), int(mask[best_sum])
    finally:
        free(reach)
        free(count)
        free(mask)
