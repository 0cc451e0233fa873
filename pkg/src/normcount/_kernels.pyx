# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: pair correlation against a dense table, lattice
line sums against a tabulated weight, and binned projection sums."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"

cdef long long BIG = 4611686018427387904LL  # 2^62


cdef inline long long fdiv(long long a, long long b) nogil:
    # floor division (cdivision truncates toward zero)
    cdef long long q = a / b
    if a % b != 0 and ((a < 0) != (b < 0)):
        q -= 1
    return q


cdef inline long long cdivu(long long a, long long b) nogil:
    return -fdiv(-a, b)


cdef inline long long pmod(long long a, long long m) nogil:
    cdef long long r = a % m
    if r < 0:
        r += m
    return r


def pair_correlate(cnp.int64_t[::1] x1, cnp.int64_t[::1] x2,
                   cnp.int64_t[::1] wt, long long a1, long long a2,
                   cnp.int32_t[::1] lam, long long lo):
    cdef Py_ssize_t i, n = x1.shape[0]
    cdef long long t, idx, L = lam.shape[0]
    cdef long long acc = 0
    with nogil:
        for i in range(n):
            t = a1 * x1[i] + a2 * x2[i]
            idx = t - lo
            if 0 <= idx < L:
                acc += wt[i] * <long long> lam[idx]
    return acc


def line_sum(cnp.int64_t[::1] bp, cnp.int64_t[::1] bcnt,
             long long abar1, long long abar2, long long d1, long long d2,
             long long x1lo, long long x1hi, long long x2lo, long long x2hi,
             double[:, ::1] table, long long t1lo, long long t2lo,
             long long cell, double[:, ::1] ktab, long long lq):
    cdef Py_ssize_t ib, nb = bp.shape[0]
    cdef long long b, X10, X20, mlo, mhi, m, u1, u2
    cdef double acc = 0.0, line
    with nogil:
        for ib in range(nb):
            b = bp[ib]
            X10 = abar1 * b
            X20 = abar2 * b
            mlo = -BIG
            mhi = BIG
            if d1 > 0:
                mlo = max(mlo, cdivu(x1lo - X10, d1))
                mhi = min(mhi, fdiv(x1hi - X10, d1))
            elif d1 < 0:
                mlo = max(mlo, cdivu(x1hi - X10, d1))
                mhi = min(mhi, fdiv(x1lo - X10, d1))
            elif X10 < x1lo or X10 > x1hi:
                continue
            if d2 > 0:
                mlo = max(mlo, cdivu(x2lo - X20, d2))
                mhi = min(mhi, fdiv(x2hi - X20, d2))
            elif d2 < 0:
                mlo = max(mlo, cdivu(x2hi - X20, d2))
                mhi = min(mhi, fdiv(x2lo - X20, d2))
            elif X20 < x2lo or X20 > x2hi:
                continue
            if mhi < mlo:
                continue
            line = 0.0
            for m in range(mlo, mhi + 1):
                u1 = X10 + m * d1
                u2 = X20 + m * d2
                line += table[(u1 - t1lo) // cell, (u2 - t2lo) // cell] \
                    * ktab[pmod(u1, lq), pmod(u2, lq)]
            acc += line * bcnt[ib]
    return acc


def proj_bin_many(double[::1] a1, double[::1] a2, double[::1] vw,
                  double[::1] x1, double[::1] x2,
                  double[::1] wbins, double lo, double width):
    cdef Py_ssize_t iv, s, nv = a1.shape[0], ns = x1.shape[0]
    cdef long long idx, nb = wbins.shape[0]
    cdef double t, acc = 0.0, row, c1, c2
    with nogil:
        for iv in range(nv):
            c1 = a1[iv]
            c2 = a2[iv]
            row = 0.0
            for s in range(ns):
                t = c1 * x1[s] + c2 * x2[s]
                if t >= lo:
                    idx = <long long> ((t - lo) / width)
                    if idx < nb:
                        row += wbins[idx]
            acc += row * vw[iv]
    return acc
