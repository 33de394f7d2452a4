# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: 2x2 transfer chains with rescaling and a keyed hash RNG.

Each function has a line-for-line twin in ``_pykernels`` and both must
return identical arrays.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, log
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef double RESCALE = 2.0 ** 256
cdef double INV_RESCALE = 2.0 ** -256
cdef double INV_RESCALE_SQ = 2.0 ** -512
cdef double LOG_RESCALE = 256.0 * log(2.0)


cdef inline double _amax4(double a, double b, double c, double d) nogil:
    cdef double m = fabs(a)
    if fabs(b) > m:
        m = fabs(b)
    if fabs(c) > m:
        m = fabs(c)
    if fabs(d) > m:
        m = fabs(d)
    return m


def discrete_chain(const double[::1] coef, const double[::1] init):
    """Run u(n+2) = coef[n] u(n+1) - u(n) for two columns.

    State row layout per site n is (a(n+1), b(n+1), a(n), b(n)).
    Returns state, log_scale and the scaled Gram sums of (a, b) over sites 1..n.
    """
    cdef Py_ssize_t n_steps = coef.shape[0]
    state_arr = np.empty((n_steps + 1, 4), dtype=np.float64)
    ls_arr = np.zeros(n_steps + 1, dtype=np.float64)
    gram_arr = np.zeros((n_steps + 1, 3), dtype=np.float64)
    cdef double[:, ::1] state = state_arr
    cdef double[::1] ls = ls_arr
    cdef double[:, ::1] gram = gram_arr
    cdef double p0 = init[0], p1 = init[1], q0 = init[2], q1 = init[3]
    cdef double r0, r1, c, cur = 0.0
    cdef double g0 = 0.0, g1 = 0.0, g2 = 0.0
    cdef Py_ssize_t n
    state[0, 0] = p0
    state[0, 1] = p1
    state[0, 2] = q0
    state[0, 3] = q1
    with nogil:
        for n in range(n_steps):
            c = coef[n]
            r0 = c * p0 - q0
            r1 = c * p1 - q1
            q0 = p0
            q1 = p1
            p0 = r0
            p1 = r1
            if _amax4(p0, p1, q0, q1) > RESCALE:
                p0 = p0 * INV_RESCALE
                p1 = p1 * INV_RESCALE
                q0 = q0 * INV_RESCALE
                q1 = q1 * INV_RESCALE
                g0 = g0 * INV_RESCALE_SQ
                g1 = g1 * INV_RESCALE_SQ
                g2 = g2 * INV_RESCALE_SQ
                cur = cur + LOG_RESCALE
            g0 = g0 + q0 * q0
            g1 = g1 + q0 * q1
            g2 = g2 + q1 * q1
            state[n + 1, 0] = p0
            state[n + 1, 1] = p1
            state[n + 1, 2] = q0
            state[n + 1, 3] = q1
            ls[n + 1] = cur
            gram[n + 1, 0] = g0
            gram[n + 1, 1] = g1
            gram[n + 1, 2] = g2
    return state_arr, ls_arr, gram_arr


def matrix_chain(const double[:, ::1] steps, const double[::1] init, double h):
    """Multiply per-step 2x2 matrices (row-major) onto a 2x2 state.

    State row layout is (p_a, p_b, q_a, q_b); the Gram table integrates
    q q^T with the trapezoid rule of step ``h`` (h = 0 disables it).
    """
    cdef Py_ssize_t n_steps = steps.shape[0]
    state_arr = np.empty((n_steps + 1, 4), dtype=np.float64)
    ls_arr = np.zeros(n_steps + 1, dtype=np.float64)
    gram_arr = np.zeros((n_steps + 1, 3), dtype=np.float64)
    cdef double[:, ::1] state = state_arr
    cdef double[::1] ls = ls_arr
    cdef double[:, ::1] gram = gram_arr
    cdef double p0 = init[0], p1 = init[1], q0 = init[2], q1 = init[3]
    cdef double r0, r1, s0, s1, oq0, oq1, cur = 0.0, hh = 0.5 * h
    cdef double g0 = 0.0, g1 = 0.0, g2 = 0.0
    cdef Py_ssize_t n
    state[0, 0] = p0
    state[0, 1] = p1
    state[0, 2] = q0
    state[0, 3] = q1
    with nogil:
        for n in range(n_steps):
            oq0 = q0
            oq1 = q1
            r0 = steps[n, 0] * p0 + steps[n, 1] * q0
            r1 = steps[n, 0] * p1 + steps[n, 1] * q1
            s0 = steps[n, 2] * p0 + steps[n, 3] * q0
            s1 = steps[n, 2] * p1 + steps[n, 3] * q1
            p0 = r0
            p1 = r1
            q0 = s0
            q1 = s1
            if _amax4(p0, p1, q0, q1) > RESCALE:
                p0 = p0 * INV_RESCALE
                p1 = p1 * INV_RESCALE
                q0 = q0 * INV_RESCALE
                q1 = q1 * INV_RESCALE
                oq0 = oq0 * INV_RESCALE
                oq1 = oq1 * INV_RESCALE
                g0 = g0 * INV_RESCALE_SQ
                g1 = g1 * INV_RESCALE_SQ
                g2 = g2 * INV_RESCALE_SQ
                cur = cur + LOG_RESCALE
            g0 = g0 + hh * (oq0 * oq0 + q0 * q0)
            g1 = g1 + hh * (oq0 * oq1 + q0 * q1)
            g2 = g2 + hh * (oq1 * oq1 + q1 * q1)
            state[n + 1, 0] = p0
            state[n + 1, 1] = p1
            state[n + 1, 2] = q0
            state[n + 1, 3] = q1
            ls[n + 1] = cur
            gram[n + 1, 0] = g0
            gram[n + 1, 1] = g1
            gram[n + 1, 2] = g2
    return state_arr, ls_arr, gram_arr


cdef inline uint64_t _mix(uint64_t z) nogil:
    z = z + <uint64_t>0x9E3779B97F4A7C15
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


def hash_uniform(uint64_t seed, int64_t start, Py_ssize_t count):
    """Uniform doubles in [0, 1) keyed on (seed, index) for index in [start, start+count)."""
    out_arr = np.empty(count, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef uint64_t key = _mix(seed)
    cdef uint64_t idx
    cdef Py_ssize_t i
    with nogil:
        for i in range(count):
            idx = <uint64_t>(start + i)
            out[i] = <double>(_mix(key ^ (idx * <uint64_t>0xD1B54A32D192ED03)) >> 11) * (1.0 / 9007199254740992.0)
    return out_arr
