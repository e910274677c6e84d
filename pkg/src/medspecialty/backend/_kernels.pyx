# Compiled twins of backend.reference. Same per-element expressions, same
# association, no -ffast-math and no FMA contraction, so results are
# bit-identical to the NumPy lane (asserted by tests, not assumed).

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def adam_update(double[::1] param, double[::1] grad, double[::1] m, double[::1] v,
                double lr, double beta1, double beta2, double eps, double c1, double c2):
    cdef Py_ssize_t i, n = param.shape[0]
    cdef double omb1 = 1.0 - beta1
    cdef double omb2 = 1.0 - beta2
    cdef double g, step
    for i in range(n):
        g = grad[i]
        m[i] = beta1 * m[i] + omb1 * g
        v[i] = beta2 * v[i] + omb2 * (g * g)
        step = (m[i] / c1) / (sqrt(v[i] / c2) + eps)
        param[i] = param[i] - lr * step


def embedding_gather(double[:, ::1] emb, cnp.int64_t[:, ::1] ids, double[:, ::1] out):
    cdef Py_ssize_t nrows = ids.shape[0], ncols = ids.shape[1], d = emb.shape[1]
    cdef Py_ssize_t b, l, j, base
    cdef cnp.int64_t t
    for b in range(nrows):
        for l in range(ncols):
            t = ids[b, l]
            base = l * d
            for j in range(d):
                out[b, base + j] = emb[t, j]


def embedding_scatter_add(double[:, ::1] grad_emb, cnp.int64_t[:, ::1] ids,
                          double[:, ::1] d_flat):
    cdef Py_ssize_t nrows = ids.shape[0], ncols = ids.shape[1], d = grad_emb.shape[1]
    cdef Py_ssize_t b, l, j, base
    cdef cnp.int64_t t
    for b in range(nrows):
        for l in range(ncols):
            t = ids[b, l]
            base = l * d
            for j in range(d):
                grad_emb[t, j] += d_flat[b, base + j]
