# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled Viterbi over a batch of log-emission matrices."""

import numpy as np


def viterbi_batch(const double[:, :, ::1] log_emission, const double[:, ::1] log_transition):
    """Best path and score per batch item.

    Ties go to the lowest final class, then the lowest predecessor at each
    backtrace step; strict ``>`` comparisons keep the first maximum.
    """
    cdef Py_ssize_t N = log_emission.shape[0]
    cdef Py_ssize_t T = log_emission.shape[1]
    cdef Py_ssize_t C = log_emission.shape[2]
    if log_transition.shape[0] != C or log_transition.shape[1] != C:
        raise ValueError(f"transition shape {(log_transition.shape[0], log_transition.shape[1])} vs C={C}")
    paths = np.zeros((N, T), dtype=np.int64)
    scores = np.empty(N, dtype=np.float64)
    delta_arr = np.empty(C, dtype=np.float64)
    nxt_arr = np.empty(C, dtype=np.float64)
    back_arr = np.zeros((max(T, 1), C), dtype=np.int64)
    cdef long long[:, ::1] pv = paths
    cdef double[::1] sv = scores
    cdef double[::1] delta = delta_arr
    cdef double[::1] nxt = nxt_arr
    cdef long long[:, ::1] back = back_arr
    cdef Py_ssize_t n, t, i, j, arg
    cdef double best, v
    if T == 0 or C == 0:
        scores[:] = 0.0
        return paths, scores
    with nogil:
        for n in range(N):
            for j in range(C):
                delta[j] = log_emission[n, 0, j]
            for t in range(1, T):
                for j in range(C):
                    best = delta[0] + log_transition[0, j]
                    arg = 0
                    for i in range(1, C):
                        v = delta[i] + log_transition[i, j]
                        if v > best:
                            best = v
                            arg = i
                    nxt[j] = best + log_emission[n, t, j]
                    back[t, j] = arg
                for j in range(C):
                    delta[j] = nxt[j]
            best = delta[0]
            arg = 0
            for j in range(1, C):
                if delta[j] > best:
                    best = delta[j]
                    arg = j
            sv[n] = best
            pv[n, T - 1] = arg
            for t in range(T - 1, 0, -1):
                arg = back[t, arg]
                pv[n, t - 1] = arg
    return paths, scores
