# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in domcftp._kernels.pure.

Bit-for-bit equivalence with the pure lane is a hard requirement (the
test suite compares both); keep any change mirrored there.
"""

import numpy as np

ctypedef unsigned long long u64
ctypedef long long i64

cdef u64 MASK64 = 0xFFFFFFFFFFFFFFFFULL
cdef u64 GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double U53 = 2.0 ** -53


cdef inline u64 _rotl(u64 x, int k) nogil:
    return (x << k) | (x >> (64 - k))


cdef inline u64 _mix64(u64 z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef struct Xo:
    u64 s0
    u64 s1
    u64 s2
    u64 s3


cdef inline void _seed_stream(Xo* st, u64 seed, u64 index, u64 slot) nogil:
    cdef u64 x = seed
    cdef u64 out
    x = x + GOLDEN
    out = _mix64(x)
    x = out ^ index
    x = x + GOLDEN
    x = x + GOLDEN
    out = _mix64(x)
    x = out ^ slot
    x = x + GOLDEN
    x = x + GOLDEN
    st.s0 = _mix64(x)
    x = x + GOLDEN
    st.s1 = _mix64(x)
    x = x + GOLDEN
    st.s2 = _mix64(x)
    x = x + GOLDEN
    st.s3 = _mix64(x)
    if st.s0 == 0 and st.s1 == 0 and st.s2 == 0 and st.s3 == 0:
        st.s0 = GOLDEN


cdef inline u64 _xo_next(Xo* st) nogil:
    cdef u64 result = _rotl(st.s0 + st.s3, 23) + st.s0
    cdef u64 t = st.s1 << 17
    st.s2 ^= st.s0
    st.s3 ^= st.s1
    st.s1 ^= st.s2
    st.s0 ^= st.s3
    st.s2 ^= t
    st.s3 = _rotl(st.s3, 45)
    return result


cdef inline double _unit(u64 w) nogil:
    return (<double>(w >> 11) + 0.5) * U53


def backend_name():
    return "compiled"


def stream_uniforms(seed, index, slot, count):
    cdef Py_ssize_t n = count
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] view = out
    cdef Xo st
    _seed_stream(&st, <u64>(seed & 0xFFFFFFFFFFFFFFFF),
                 <u64>(index & 0xFFFFFFFFFFFFFFFF),
                 <u64>(slot & 0xFFFFFFFFFFFFFFFF))
    cdef Py_ssize_t i
    for i in range(n):
        view[i] = _unit(_xo_next(&st))
    return out


def slot_u(seed, index, slot):
    cdef Xo st
    _seed_stream(&st, <u64>(seed & 0xFFFFFFFFFFFFFFFF),
                 <u64>(index & 0xFFFFFFFFFFFFFFFF),
                 <u64>(slot & 0xFFFFFFFFFFFFFFFF))
    return _unit(_xo_next(&st))


cdef inline Py_ssize_t _lower_bound(const double* row, Py_ssize_t n, double tail) nogil:
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if row[mid] < tail:
            lo = mid + 1
        else:
            hi = mid
    if lo >= n:
        lo = n - 1
    return lo


def map_rows(const double[:, ::1] cum, const i64[::1] states, double tail):
    cdef Py_ssize_t m = states.shape[0]
    cdef Py_ssize_t n = cum.shape[1]
    out = np.empty(m, dtype=np.int64)
    cdef i64[::1] oview = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(m):
            oview[i] = _lower_bound(&cum[states[i], 0], n, tail)
    return out


def walk_single(const double[:, ::1] cum, start, const double[::1] tails):
    cdef Py_ssize_t n = cum.shape[1]
    cdef Py_ssize_t y = start
    cdef Py_ssize_t i
    with nogil:
        for i in range(tails.shape[0]):
            y = _lower_bound(&cum[y, 0], n, tails[i])
    return y
