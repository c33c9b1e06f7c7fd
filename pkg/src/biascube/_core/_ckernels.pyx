# Compiled twins of biascube._core._kernels_py; see that module for contracts.

from libc.math cimport fabs, pow, sqrt

import numpy as np

BACKEND = "compiled"


cdef inline double _abs_pow(double x, double q) noexcept nogil:
    cdef double a = fabs(x)
    if q == 2.0:
        return a * a
    if q == 1.0:
        return a
    if q == 1.5:
        return a * sqrt(a)
    return pow(a, q)


cdef inline double _qnorm_pow(double* v, Py_ssize_t d, double q, double p) noexcept nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t j
    for j in range(d):
        acc += _abs_pow(v[j], q)
    if p == q:
        return acc
    if q == 2.0:
        acc = sqrt(acc)
    elif q != 1.0:
        acc = pow(acc, 1.0 / q)
    if p == 1.0:
        return acc
    if p == 2.0:
        return acc * acc
    return pow(acc, p)


def score_gradient_moment(
    const double[:, :, ::1] df,
    const double[::1] mu,
    const double[:, ::1] trans,
    const double[:, ::1] score,
    double p,
    double q,
):
    cdef Py_ssize_t n = df.shape[0]
    cdef Py_ssize_t size = df.shape[1]
    cdef Py_ssize_t d = df.shape[2]
    # contiguous per-start copy of the gradient block keeps the inner loop in L1
    cdef double[:, ::1] dfx = np.empty((n, d))
    cdef double[::1] vec = np.empty(d)
    cdef double t00 = trans[0, 0], t01 = trans[0, 1]
    cdef double t10 = trans[1, 0], t11 = trans[1, 1]
    cdef double s00 = score[0, 0], s01 = score[0, 1]
    cdef double s10 = score[1, 0], s11 = score[1, 1]
    cdef double acc = 0.0, inner, kern, wx, s
    cdef Py_ssize_t x, y, i, j, xx, yy, by
    with nogil:
        for x in range(size):
            wx = mu[x]
            if wx == 0.0:
                continue
            for i in range(n):
                for j in range(d):
                    dfx[i, j] = df[i, x, j]
            inner = 0.0
            for y in range(size):
                kern = 1.0
                for j in range(d):
                    vec[j] = 0.0
                xx = x
                yy = y
                for i in range(n):
                    by = yy & 1
                    if xx & 1:
                        if by:
                            kern *= t11
                            s = s11
                        else:
                            kern *= t10
                            s = s10
                    else:
                        if by:
                            kern *= t01
                            s = s01
                        else:
                            kern *= t00
                            s = s00
                    for j in range(d):
                        vec[j] += s * dfx[i, j]
                    xx >>= 1
                    yy >>= 1
                inner += kern * _qnorm_pow(&vec[0], d, q, p)
            acc += wx * inner
    return acc


def pair_displacement_mean(const double[:, ::1] values, const double[::1] weights, double q):
    cdef Py_ssize_t size = values.shape[0]
    cdef Py_ssize_t d = values.shape[1]
    cdef double[::1] diff = np.empty(d)
    cdef double acc = 0.0, inner, wx
    cdef Py_ssize_t x, y, j
    with nogil:
        for x in range(size):
            wx = weights[x]
            if wx == 0.0:
                continue
            inner = 0.0
            for y in range(x + 1, size):
                for j in range(d):
                    diff[j] = values[x, j] - values[y, j]
                inner += weights[y] * _qnorm_pow(&diff[0], d, q, 1.0)
            acc += 2.0 * wx * inner
    return acc
