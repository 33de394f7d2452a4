"""Pure-Python twins of the compiled kernels in ``_kernels.pyx``.

The arithmetic order matches the compiled loops so results agree bit for bit.
"""
import math

import numpy as np

RESCALE = 2.0 ** 256
INV_RESCALE = 2.0 ** -256
INV_RESCALE_SQ = 2.0 ** -512
LOG_RESCALE = 256.0 * math.log(2.0)


def discrete_chain(coef, init):
    coef = np.ascontiguousarray(coef, dtype=np.float64)
    n_steps = coef.shape[0]
    state = np.empty((n_steps + 1, 4))
    ls = np.zeros(n_steps + 1)
    gram = np.zeros((n_steps + 1, 3))
    p0, p1, q0, q1 = (float(v) for v in init)
    state[0] = (p0, p1, q0, q1)
    cur = 0.0
    g0 = g1 = g2 = 0.0
    for n, c in enumerate(coef.tolist()):
        r0 = c * p0 - q0
        r1 = c * p1 - q1
        q0, q1 = p0, p1
        p0, p1 = r0, r1
        if max(abs(p0), abs(p1), abs(q0), abs(q1)) > RESCALE:
            p0 *= INV_RESCALE
            p1 *= INV_RESCALE
            q0 *= INV_RESCALE
            q1 *= INV_RESCALE
            g0 *= INV_RESCALE_SQ
            g1 *= INV_RESCALE_SQ
            g2 *= INV_RESCALE_SQ
            cur += LOG_RESCALE
        g0 += q0 * q0
        g1 += q0 * q1
        g2 += q1 * q1
        state[n + 1] = (p0, p1, q0, q1)
        ls[n + 1] = cur
        gram[n + 1] = (g0, g1, g2)
    return state, ls, gram


def matrix_chain(steps, init, h):
    steps = np.ascontiguousarray(steps, dtype=np.float64)
    n_steps = steps.shape[0]
    state = np.empty((n_steps + 1, 4))
    ls = np.zeros(n_steps + 1)
    gram = np.zeros((n_steps + 1, 3))
    p0, p1, q0, q1 = (float(v) for v in init)
    state[0] = (p0, p1, q0, q1)
    cur = 0.0
    hh = 0.5 * h
    g0 = g1 = g2 = 0.0
    for n, (m00, m01, m10, m11) in enumerate(steps.tolist()):
        oq0, oq1 = q0, q1
        r0 = m00 * p0 + m01 * q0
        r1 = m00 * p1 + m01 * q1
        s0 = m10 * p0 + m11 * q0
        s1 = m10 * p1 + m11 * q1
        p0, p1, q0, q1 = r0, r1, s0, s1
        if max(abs(p0), abs(p1), abs(q0), abs(q1)) > RESCALE:
            p0 *= INV_RESCALE
            p1 *= INV_RESCALE
            q0 *= INV_RESCALE
            q1 *= INV_RESCALE
            oq0 *= INV_RESCALE
            oq1 *= INV_RESCALE
            g0 *= INV_RESCALE_SQ
            g1 *= INV_RESCALE_SQ
            g2 *= INV_RESCALE_SQ
            cur += LOG_RESCALE
        g0 += hh * (oq0 * oq0 + q0 * q0)
        g1 += hh * (oq0 * oq1 + q0 * q1)
        g2 += hh * (oq1 * oq1 + q1 * q1)
        state[n + 1] = (p0, p1, q0, q1)
        ls[n + 1] = cur
        gram[n + 1] = (g0, g1, g2)
    return state, ls, gram


_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def _mix(z):
    z = z + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def hash_uniform(seed, start, count):
    with np.errstate(over="ignore"):
        key = _mix(np.array([seed], dtype=np.uint64))[0]
        idx = np.arange(count, dtype=np.uint64) + np.uint64(start)
        z = _mix(key ^ (idx * np.uint64(0xD1B54A32D192ED03)))
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
