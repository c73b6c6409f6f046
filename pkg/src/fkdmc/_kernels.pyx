# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: Philox4x32-10 uniform streams and fused resampling."""
import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.stdint cimport uint32_t, uint64_t, int64_t

cnp.import_array()

cdef uint64_t M0 = 0xD2511F53
cdef uint64_t M1 = 0xCD9E8D57
cdef uint32_t W0 = 0x9E3779B9
cdef uint32_t W1 = 0xBB67AE85
cdef double TWO_M53 = 1.0 / 9007199254740992.0


cdef inline void philox_block(uint32_t* c, uint32_t k0, uint32_t k1) noexcept nogil:
    cdef uint64_t p0, p1
    cdef uint32_t a0, a1, a2, a3
    cdef int r
    for r in range(10):
        if r:
            k0 = k0 + W0
            k1 = k1 + W1
        p0 = M0 * <uint64_t>c[0]
        p1 = M1 * <uint64_t>c[2]
        a0 = <uint32_t>(p1 >> 32) ^ c[1] ^ k0
        a1 = <uint32_t>p1
        a2 = <uint32_t>(p0 >> 32) ^ c[3] ^ k1
        a3 = <uint32_t>p0
        c[0] = a0
        c[1] = a1
        c[2] = a2
        c[3] = a3


def philox4x32(uint32_t c0, uint32_t c1, uint32_t c2, uint32_t c3, uint32_t k0, uint32_t k1):
    cdef uint32_t c[4]
    c[0] = c0; c[1] = c1; c[2] = c2; c[3] = c3
    philox_block(c, k0, k1)
    return c[0], c[1], c[2], c[3]


cdef inline void uniform_pair(uint32_t walker, uint32_t step, uint32_t lane, uint32_t block,
                              uint32_t k0, uint32_t k1, double* out) noexcept nogil:
    cdef uint32_t c[4]
    c[0] = walker
    c[1] = step
    c[2] = lane
    c[3] = block
    philox_block(c, k0, k1)
    out[0] = <double>(((<uint64_t>c[0] << 32) | c[1]) >> 11) * TWO_M53
    out[1] = <double>(((<uint64_t>c[2] << 32) | c[3]) >> 11) * TWO_M53


def uniforms(uint64_t seed, uint32_t step, uint32_t lane, uint64_t start, Py_ssize_t n,
             Py_ssize_t nblocks, uint32_t block0, int threads):
    out = np.empty((n, 2 * nblocks), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef uint32_t k0 = <uint32_t>(seed & 0xFFFFFFFF)
    cdef uint32_t k1 = <uint32_t>(seed >> 32)
    cdef Py_ssize_t i, b
    cdef int nt = threads if threads > 0 else 1
    if n == 0:
        return out
    for i in prange(n, nogil=True, num_threads=nt, schedule="static"):
        for b in range(nblocks):
            uniform_pair(<uint32_t>(start + i), step, lane, block0 + <uint32_t>b, k0, k1,
                         &o[i, 2 * b])
    return out


def resample(const double[::1] cumw, const double[::1] survive, const double[::1] u_keep,
             const double[::1] u_pick, int threads):
    cdef Py_ssize_t n = survive.shape[0]
    cdef Py_ssize_t m = cumw.shape[0]
    out = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] idx = out
    cdef double total = cumw[m - 1]
    cdef double t
    cdef Py_ssize_t i, lo, hi, mid
    cdef int nt = threads if threads > 0 else 1
    for i in prange(n, nogil=True, num_threads=nt, schedule="static"):
        if u_keep[i] < survive[i]:
            idx[i] = i
        else:
            # branchless search for the first cumw entry above t
            t = u_pick[i] * total
            lo = 0
            hi = m
            while hi > 1:
                mid = hi // 2
                lo = lo + mid if cumw[lo + mid - 1] <= t else lo
                hi = hi - mid
            if cumw[lo] <= t:
                lo = lo + 1
            if lo > m - 1:
                lo = m - 1
            idx[i] = lo
    return out
