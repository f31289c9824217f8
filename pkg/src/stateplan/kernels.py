"""Decoding kernels with a compiled core and a numpy fallback.

The compiled extension is used when it imports; set
``STATEPLAN_PURE_PYTHON=1`` to force the fallback. Both produce bit-identical
paths and scores because they add terms in the same order.
"""

from __future__ import annotations

import os

import numpy as np


def viterbi_batch_numpy(log_emission: np.ndarray, log_transition: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    log_emission = np.ascontiguousarray(log_emission, dtype=np.float64)
    log_transition = np.ascontiguousarray(log_transition, dtype=np.float64)
    N, T, C = log_emission.shape
    if log_transition.shape != (C, C):
        raise ValueError(f"transition shape {log_transition.shape} vs C={C}")
    paths = np.zeros((N, T), dtype=np.int64)
    scores = np.zeros(N, dtype=np.float64)
    if T == 0 or C == 0 or N == 0:
        return paths, scores
    chunk = max(1, (1 << 22) // (C * C))
    for lo in range(0, N, chunk):
        em = log_emission[lo:lo + chunk]
        n = em.shape[0]
        delta = em[:, 0].copy()
        back = np.zeros((n, T, C), dtype=np.int64)
        rows = np.arange(n)[:, None]
        cols = np.arange(C)[None, :]
        for t in range(1, T):
            cand = delta[:, :, None] + log_transition[None]
            arg = np.argmax(cand, axis=1)
            delta = cand[rows, arg, cols] + em[:, t]
            back[:, t] = arg
        last = np.argmax(delta, axis=1)
        scores[lo:lo + n] = delta[np.arange(n), last]
        paths[lo:lo + n, T - 1] = last
        cur = last
        for t in range(T - 1, 0, -1):
            cur = back[np.arange(n), t, cur]
            paths[lo:lo + n, t - 1] = cur
    return paths, scores


try:
    from ._viterbi import viterbi_batch as viterbi_batch_compiled
except ImportError:  # extension not built
    viterbi_batch_compiled = None

if viterbi_batch_compiled is not None and os.environ.get("STATEPLAN_PURE_PYTHON", "") in ("", "0"):
    BACKEND = "compiled"

    def viterbi_batch(log_emission, log_transition):
        return viterbi_batch_compiled(
            np.ascontiguousarray(log_emission, dtype=np.float64),
            np.ascontiguousarray(log_transition, dtype=np.float64),
        )
else:
    BACKEND = "numpy"
    viterbi_batch = viterbi_batch_numpy
