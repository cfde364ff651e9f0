# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled skip-gram negative-sampling epoch; see skipgram_py for semantics."""

from libc.math cimport exp, log

import numpy as np

cimport numpy as cnp

cdef double _MAX_EXP = 30.0


def train_epoch(
    float[:, ::1] syn0,
    float[:, ::1] syn1,
    int[::1] seq,
    long[::1] offsets,
    int window,
    int[::1] negatives,
    int n_negative,
    double lr_start,
    double lr_end,
    long step0,
    long total_steps,
):
    cdef int dim = syn0.shape[1]
    cdef long denom = total_steps - 1 if total_steps > 1 else 1
    cdef double lr_span = lr_end - lr_start
    cdef double loss = 0.0
    cdef long pair_idx = 0
    cdef long p, start, end, base
    cdef long i, j
    cdef int t, k, center, context, target
    cdef double lr, dot, f, g, label
    cdef float gf
    cdef cnp.ndarray[cnp.float32_t, ndim=1] neu1e_arr = np.zeros(dim, dtype=np.float32)
    cdef float[::1] neu1e = neu1e_arr

    for p in range(offsets.shape[0] - 1):
        start = offsets[p]
        end = offsets[p + 1]
        for i in range(start, end):
            center = seq[i]
            for j in range(i - window if i - window > start else start,
                           (i + window if i + window < end - 1 else end - 1) + 1):
                if j == i:
                    continue
                context = seq[j]
                lr = lr_start + lr_span * ((<double>(step0 + pair_idx)) / denom)
                for k in range(dim):
                    neu1e[k] = 0.0
                base = pair_idx * n_negative
                for t in range(n_negative + 1):
                    if t == 0:
                        target = context
                        label = 1.0
                    else:
                        target = negatives[base + t - 1]
                        if target == context:
                            continue
                        label = 0.0
                    dot = 0.0
                    for k in range(dim):
                        dot += <double>syn0[center, k] * <double>syn1[target, k]
                    if dot > _MAX_EXP:
                        f = 1.0
                    elif dot < -_MAX_EXP:
                        f = 0.0
                    else:
                        f = 1.0 / (1.0 + exp(-dot))
                    g = (label - f) * lr
                    gf = <float>g
                    if label == 1.0:
                        loss -= log(f if f > 1e-12 else 1e-12)
                    else:
                        loss -= log((1.0 - f) if (1.0 - f) > 1e-12 else 1e-12)
                    for k in range(dim):
                        neu1e[k] += gf * syn1[target, k]
                        syn1[target, k] += gf * syn0[center, k]
                for k in range(dim):
                    syn0[center, k] += neu1e[k]
                pair_idx += 1
    return loss, pair_idx
