# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: batch prompt encoding, its gradient, and fused evaluation.

Mirrors ``_kernels_py`` exactly; see that module for the shared
formulation and the contract both backends satisfy.
"""

import numpy as np

from libc.math cimport sqrt

ZERO_NORM_MSG = "zero-norm encoded feature"


cdef void _column_weights(const double[:, ::1] mix, double[::1] weights, Py_ssize_t length) noexcept nogil:
    cdef Py_ssize_t l, j
    cdef double acc
    for j in range(length):
        acc = 0.0
        for l in range(length):
            acc += mix[l, j]
        weights[j] = acc / length


cdef int _encode_one(const double[:, :] prompt,
                     const double[::1] weights,
                     const double[:, ::1] proj,
                     double[::1] pooled,
                     double[:] out) noexcept nogil:
    """Encode one (L, E) prompt into ``out`` (D,). Returns 0 on zero norm."""
    cdef Py_ssize_t length = prompt.shape[0]
    cdef Py_ssize_t width = prompt.shape[1]
    cdef Py_ssize_t dim = proj.shape[1]
    cdef Py_ssize_t j, e, d
    cdef double acc, norm
    for e in range(width):
        acc = 0.0
        for j in range(length):
            acc += weights[j] * prompt[j, e]
        pooled[e] = acc
    norm = 0.0
    for d in range(dim):
        acc = 0.0
        for e in range(width):
            acc += proj[e, d] * pooled[e]
        out[d] = acc
        norm += acc * acc
    norm = sqrt(norm)
    if norm == 0.0:
        return 0
    for d in range(dim):
        out[d] /= norm
    return 1


def encode_batch(const double[:, :, ::1] prompts,
                 const double[:, ::1] mix,
                 const double[:, ::1] proj):
    """Encode a stack of prompts (N, L, E) into unit-norm features (N, D)."""
    cdef Py_ssize_t n_prompts = prompts.shape[0]
    cdef Py_ssize_t length = prompts.shape[1]
    cdef Py_ssize_t width = prompts.shape[2]
    cdef Py_ssize_t dim = proj.shape[1]
    out_arr = np.empty((n_prompts, dim), dtype=np.float64)
    pooled_arr = np.empty(width, dtype=np.float64)
    weights_arr = np.empty(length, dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] pooled = pooled_arr
    cdef double[::1] weights = weights_arr
    cdef Py_ssize_t n
    cdef int ok = 1
    with nogil:
        _column_weights(mix, weights, length)
        for n in range(n_prompts):
            if not _encode_one(prompts[n], weights, proj, pooled, out[n]):
                ok = 0
                break
    if not ok:
        raise ValueError(ZERO_NORM_MSG)
    return out_arr


def encode_grad_batch(const double[:, :, ::1] prompts,
                      const double[:, ::1] mix,
                      const double[:, ::1] proj,
                      const double[:, ::1] upstreams):
    """Gradient of ``encode_batch`` contracted with one cotangent per prompt."""
    cdef Py_ssize_t n_prompts = prompts.shape[0]
    cdef Py_ssize_t length = prompts.shape[1]
    cdef Py_ssize_t width = prompts.shape[2]
    cdef Py_ssize_t dim = proj.shape[1]
    grad_arr = np.empty((n_prompts, length, width), dtype=np.float64)
    feat_arr = np.empty(dim, dtype=np.float64)
    g_pre_arr = np.empty(dim, dtype=np.float64)
    pooled_arr = np.empty(width, dtype=np.float64)
    weights_arr = np.empty(length, dtype=np.float64)
    cdef double[:, :, ::1] grad = grad_arr
    cdef double[::1] feat = feat_arr
    cdef double[::1] g_pre = g_pre_arr
    cdef double[::1] pooled = pooled_arr
    cdef double[::1] weights = weights_arr
    cdef Py_ssize_t n, j, e, d
    cdef double acc, norm, radial, g_pooled_e
    cdef int ok = 1
    with nogil:
        _column_weights(mix, weights, length)
        for n in range(n_prompts):
            for e in range(width):
                acc = 0.0
                for j in range(length):
                    acc += weights[j] * prompts[n, j, e]
                pooled[e] = acc
            norm = 0.0
            for d in range(dim):
                acc = 0.0
                for e in range(width):
                    acc += proj[e, d] * pooled[e]
                feat[d] = acc
                norm += acc * acc
            norm = sqrt(norm)
            if norm == 0.0:
                ok = 0
                break
            radial = 0.0
            for d in range(dim):
                feat[d] /= norm
                radial += feat[d] * upstreams[n, d]
            for d in range(dim):
                g_pre[d] = (upstreams[n, d] - feat[d] * radial) / norm
            for e in range(width):
                g_pooled_e = 0.0
                for d in range(dim):
                    g_pooled_e += proj[e, d] * g_pre[d]
                for j in range(length):
                    grad[n, j, e] = weights[j] * g_pooled_e
    if not ok:
        raise ValueError(ZERO_NORM_MSG)
    return grad_arr


def fused_encode_batch(const double[:, :, ::1] learned,
                       const double[:, :, ::1] handcrafted,
                       const double[::1] alphas,
                       const double[:, ::1] mix,
                       const double[:, ::1] proj):
    """Blend two prompt stacks per input weight, then encode every blend.

    For input n and class c the encoded prompt is
    ``alphas[n] * learned[c] + (1 - alphas[n]) * handcrafted[c]``, built in
    full and re-encoded per input (no caching across inputs).  Returns
    unit-norm features of shape (N, C, D).
    """
    cdef Py_ssize_t n_inputs = alphas.shape[0]
    cdef Py_ssize_t n_classes = learned.shape[0]
    cdef Py_ssize_t length = learned.shape[1]
    cdef Py_ssize_t width = learned.shape[2]
    cdef Py_ssize_t dim = proj.shape[1]
    out_arr = np.empty((n_inputs, n_classes, dim), dtype=np.float64)
    fused_arr = np.empty((length, width), dtype=np.float64)
    pooled_arr = np.empty(width, dtype=np.float64)
    weights_arr = np.empty(length, dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef double[:, ::1] fused = fused_arr
    cdef double[::1] pooled = pooled_arr
    cdef double[::1] weights = weights_arr
    cdef Py_ssize_t n, c, j, e
    cdef double a, b
    cdef int ok = 1
    with nogil:
        _column_weights(mix, weights, length)
        for n in range(n_inputs):
            a = alphas[n]
            b = 1.0 - a
            for c in range(n_classes):
                for j in range(length):
                    for e in range(width):
                        fused[j, e] = a * learned[c, j, e] + b * handcrafted[c, j, e]
                if not _encode_one(fused, weights, proj, pooled, out[n, c]):
                    ok = 0
                    break
            if not ok:
                break
    if not ok:
        raise ValueError(ZERO_NORM_MSG)
    return out_arr
