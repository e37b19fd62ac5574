# cython: language_level=3
"""Compiled kernels: sparse wedge products and Pfaffian moments.

Masks up to 128 bits run in C++; wider masks are delegated to the
pure-Python implementation so both modules accept the same inputs.
"""

import numpy as np

from libcpp.vector cimport vector
from libcpp.complex cimport complex as cpp_complex

from grasq import _pykernels

ctypedef unsigned long long u64
ctypedef cpp_complex[double] cplx

cdef extern from "_kernels_impl.h" namespace "grasq":
    ctypedef struct u128:
        pass
    void wedge128(const vector[u128] &ma, const vector[cplx] &ca,
                  const vector[u128] &mb, const vector[cplx] &cb,
                  int max_degree, vector[u128] &mo, vector[cplx] &co) nogil
    cplx pfaffian_inplace(cplx *a, int n) nogil
    cplx wick128(const vector[u128] &m, const vector[cplx] &c, const cplx *sigma, int g) nogil
    cplx wick_product128(const vector[u128] &ma, const vector[cplx] &ca,
                         const vector[u128] &mb, const vector[cplx] &cb,
                         const cplx *sigma, int g) nogil

cdef extern from *:
    """
    static inline grasq::u128 grasq_make128(unsigned long long lo, unsigned long long hi) {
        return ((grasq::u128)hi << 64) | (grasq::u128)lo;
    }
    static inline unsigned long long grasq_lo(grasq::u128 x) { return (unsigned long long)x; }
    static inline unsigned long long grasq_hi(grasq::u128 x) { return (unsigned long long)(x >> 64); }
    """
    u128 grasq_make128(u64 lo, u64 hi) nogil
    u64 grasq_lo(u128 x) nogil
    u64 grasq_hi(u128 x) nogil

cdef object M64 = (1 << 64) - 1

COMPILED = True


cdef bint load(dict t, vector[u128] &m, vector[cplx] &c):
    cdef double complex z
    m.reserve(len(t))
    c.reserve(len(t))
    for key, val in t.items():
        if key >> 128:
            return False
        z = val
        m.push_back(grasq_make128(<u64>(key & M64), <u64>(key >> 64)))
        c.push_back(cplx(z.real, z.imag))
    return True


cdef dict unload(vector[u128] &m, vector[cplx] &c):
    cdef dict out = {}
    cdef size_t i
    cdef u64 hi
    for i in range(m.size()):
        hi = grasq_hi(m[i])
        if hi:
            key = (<object>hi << 64) | <object>grasq_lo(m[i])
        else:
            key = <object>grasq_lo(m[i])
        out[key] = complex(c[i].real(), c[i].imag())
    return out


def wedge(dict ta, dict tb, int max_degree=-1):
    """Product of two sparse elements given as {mask: coeff} dicts."""
    cdef vector[u128] ma, mb, mo
    cdef vector[cplx] ca, cb, co
    if not ta or not tb:
        return {}
    if not load(ta, ma, ca) or not load(tb, mb, cb):
        return _pykernels.wedge(ta, tb, max_degree)
    with nogil:
        wedge128(ma, ca, mb, cb, max_degree, mo, co)
    return unload(mo, co)


def pfaffian(a):
    """Pfaffian by Gaussian elimination with pivoting."""
    cdef double complex[:, ::1] buf = np.array(a, dtype=complex, order="C")
    cdef int n = buf.shape[0]
    cdef cplx r
    if n == 0:
        return 1.0 + 0.0j
    with nogil:
        r = pfaffian_inplace(<cplx *> &buf[0, 0], n)
    return complex(r.real(), r.imag())


def wick_eval(dict terms, sigma):
    """Sum of coeff * Pf(sigma[A, A]) over the terms of an element."""
    cdef vector[u128] m
    cdef vector[cplx] c
    cdef double complex[:, ::1] s
    cdef cplx r
    cdef int g
    if not terms:
        return 0j
    if not load(terms, m, c):
        return _pykernels.wick_eval(terms, sigma)
    s = np.ascontiguousarray(sigma, dtype=complex)
    g = s.shape[0]
    if g == 0:
        return complex(terms.get(0, 0.0))
    with nogil:
        r = wick128(m, c, <cplx *> &s[0, 0], g)
    return complex(r.real(), r.imag())


def wick_eval_product(dict ta, dict tb, sigma):
    """omega(a b) for a, b given as term dicts, without forming a*b."""
    cdef vector[u128] ma, mb
    cdef vector[cplx] ca, cb
    cdef double complex[:, ::1] s
    cdef cplx r
    cdef int g
    if not ta or not tb:
        return 0j
    if not load(ta, ma, ca) or not load(tb, mb, cb):
        return _pykernels.wick_eval_product(ta, tb, sigma)
    s = np.ascontiguousarray(sigma, dtype=complex)
    g = s.shape[0]
    if g == 0:
        return complex(ta.get(0, 0.0) * tb.get(0, 0.0))
    with nogil:
        r = wick_product128(ma, ca, mb, cb, <cplx *> &s[0, 0], g)
    return complex(r.real(), r.imag())
