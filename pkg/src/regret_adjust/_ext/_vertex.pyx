# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: vertex maximization of box quadratics and row-wise box maxima."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef int RESYNC = 4096


cdef double _exact(const double[:, ::1] Q, const double[::1] g, double c0,
                   const double[::1] u, double[::1] grad) noexcept nogil:
    cdef Py_ssize_t d = u.shape[0], i, j
    cdef double val = c0, acc
    for i in range(d):
        acc = 0.0
        for j in range(d):
            acc += Q[i, j] * u[j]
        grad[i] = acc + g[i]
        val += u[i] * (0.5 * acc + g[i])
    return val


def vertex_max(const double[:, ::1] Q, const double[::1] g, double c0,
               const double[::1] lower, const double[::1] upper, double tie_tol=1e-12):
    """Max of 1/2 u'Qu + g'u + c0 over the vertices of [lower, upper].

    Gray-code walk: each step flips one free coordinate and updates the value
    and gradient in O(d).  Returns (value, bits) where bit b of ``bits``
    refers to the b-th non-degenerate coordinate; ties go to the smaller bits.
    """
    cdef Py_ssize_t d = lower.shape[0], i, r, b
    cdef cnp.ndarray[cnp.intp_t, ndim=1] free_np = np.flatnonzero(np.asarray(lower) < np.asarray(upper))
    cdef Py_ssize_t nf = free_np.shape[0]
    if nf > 62:
        raise ValueError("too many free coordinates for vertex enumeration")
    cdef Py_ssize_t[::1] free = free_np
    cdef double[::1] u = np.array(lower, dtype=np.float64)
    cdef double[::1] grad = np.empty(d)
    cdef double val, best, delta, scale
    cdef unsigned long long k, total = 1ULL << nf, bits = 0, best_bits = 0
    cdef int j
    with nogil:
        val = _exact(Q, g, c0, u, grad)
        best = val
        for k in range(1, total):
            j = 0
            while ((k >> j) & 1ULL) == 0:
                j += 1
            i = free[j]
            if (bits >> j) & 1ULL:
                delta = lower[i] - upper[i]
            else:
                delta = upper[i] - lower[i]
            val += delta * grad[i] + 0.5 * delta * delta * Q[i, i]
            for r in range(d):
                grad[r] += delta * Q[r, i]
            bits ^= (1ULL << j)
            u[i] = upper[i] if (bits >> j) & 1ULL else lower[i]
            if k % RESYNC == 0:
                val = _exact(Q, g, c0, u, grad)
            scale = tie_tol * (1.0 + (best if best > 0 else -best))
            if val > best + scale:
                best = val
                best_bits = bits
            elif val >= best - scale and bits < best_bits:
                best_bits = bits
                if val > best:
                    best = val
    return best, int(best_bits)


def rows_box_max(const double[:, ::1] C, const double[::1] const_term,
                 const double[::1] lower, const double[::1] upper):
    """Row-wise max over the box of C[j] @ u + const_term[j].

    Returns (values, argmax) with argmax[j] the maximizing vertex: a
    coordinate sits at its upper bound iff its coefficient is positive.
    """
    cdef Py_ssize_t m = C.shape[0], d = C.shape[1], j, i
    cdef cnp.ndarray[double, ndim=1] vals_np = np.empty(m)
    cdef cnp.ndarray[double, ndim=2] arg_np = np.empty((m, d))
    cdef double[::1] vals = vals_np
    cdef double[:, ::1] arg = arg_np
    cdef double acc, coef
    with nogil:
        for j in range(m):
            acc = const_term[j]
            for i in range(d):
                coef = C[j, i]
                if coef > 0:
                    acc += coef * upper[i]
                    arg[j, i] = upper[i]
                else:
                    acc += coef * lower[i]
                    arg[j, i] = lower[i]
            vals[j] = acc
    return vals_np, arg_np
