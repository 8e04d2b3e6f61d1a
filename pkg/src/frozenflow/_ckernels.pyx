# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_pykernels`` (same signatures)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, tan, sqrt, tanh, sinh, log1p, atanh, fabs, NAN, M_PI
from libc.stdint cimport uint64_t
from scipy.special.cython_special cimport ndtri

cnp.import_array()

NAME = "cython"
GAUSSIAN, THREEPOINT, RADEMACHER = 0, 1, 2

cdef uint64_t _G = 0x9E3779B97F4A7C15ULL
cdef double _INV53 = 1.0 / 9007199254740992.0
cdef double _SQRT3 = sqrt(3.0)


cdef inline uint64_t _mix(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


def mix64(z):
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] a = np.ascontiguousarray(np.atleast_1d(z), dtype=np.uint64).ravel()
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] out = np.empty_like(a)
    cdef Py_ssize_t i
    for i in range(a.shape[0]):
        out[i] = _mix(a[i])
    return out.reshape(np.shape(z))


cdef inline uint64_t _step_key(uint64_t seed, uint64_t traj, uint64_t step) nogil:
    cdef uint64_t k = _mix(seed + _G)
    cdef uint64_t kt = _mix(k + traj * _G)
    return _mix(kt ^ _mix(step + _G))


def step_keys(seed, traj, step):
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] t = np.ascontiguousarray(traj, dtype=np.uint64)
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] out = np.empty_like(t)
    cdef uint64_t s = <uint64_t>(seed & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t st = <uint64_t>step
    cdef Py_ssize_t i
    for i in range(t.shape[0]):
        out[i] = _step_key(s, t[i], st)
    return out


def draw(seed, traj, step, Py_ssize_t n, int kind, offset=0):
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] t = np.ascontiguousarray(traj, dtype=np.uint64)
    cdef Py_ssize_t B = t.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((B, n))
    cdef uint64_t s = <uint64_t>(seed & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t st = <uint64_t>step
    cdef uint64_t off = <uint64_t>offset
    cdef uint64_t ks
    cdef double u
    cdef Py_ssize_t b, c
    if kind < 0 or kind > 2:
        raise ValueError(f"unknown noise kind {kind}")
    with nogil:
        for b in range(B):
            ks = _step_key(s, t[b], st)
            for c in range(n):
                u = (<double>(_mix(ks + (<uint64_t>c + off + 1) * _G) >> 11) + 0.5) * _INV53
                if kind == 0:
                    out[b, c] = ndtri(u)
                elif kind == 1:
                    if u < 1.0 / 6.0:
                        out[b, c] = -_SQRT3
                    elif u >= 5.0 / 6.0:
                        out[b, c] = _SQRT3
                    else:
                        out[b, c] = 0.0
                else:
                    out[b, c] = -1.0 if u < 0.5 else 1.0
    return out


def uniforms(seed, traj, step, Py_ssize_t n, offset=0):
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] t = np.ascontiguousarray(traj, dtype=np.uint64)
    cdef Py_ssize_t B = t.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((B, n))
    cdef uint64_t s = <uint64_t>(seed & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t ks
    cdef Py_ssize_t b, c
    for b in range(B):
        ks = _step_key(s, t[b], <uint64_t>step)
        for c in range(n):
            out[b, c] = (<double>(_mix(ks + (<uint64_t>c + <uint64_t>offset + 1) * _G) >> 11) + 0.5) * _INV53
    return out


def so3_apply(X, c):
    cdef cnp.ndarray[cnp.float64_t, ndim=3] Xa = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] ca = np.ascontiguousarray(c, dtype=np.float64)
    cdef Py_ssize_t n = Xa.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=3] out = np.empty((n, 3, 3))
    cdef double r[3][3]
    cdef double wx, wy, wz, th2, th, A, Bc, hf, d, s = sqrt(0.5)
    cdef Py_ssize_t b, i, j
    with nogil:
        for b in range(n):
            wx = -ca[b, 2] * s
            wy = ca[b, 1] * s
            wz = -ca[b, 0] * s
            th2 = wx * wx + wy * wy + wz * wz
            th = sqrt(th2)
            if th < 1e-6:
                A = 1.0 - th2 / 6.0
                Bc = 0.5 - th2 / 24.0
            else:
                A = sin(th) / th
                hf = sin(0.5 * th) / th
                Bc = 2.0 * hf * hf
            d = 1.0 - Bc * th2
            r[0][0] = d + Bc * wx * wx
            r[1][1] = d + Bc * wy * wy
            r[2][2] = d + Bc * wz * wz
            r[0][1] = Bc * wx * wy - A * wz
            r[1][0] = Bc * wx * wy + A * wz
            r[0][2] = Bc * wx * wz + A * wy
            r[2][0] = Bc * wx * wz - A * wy
            r[1][2] = Bc * wy * wz - A * wx
            r[2][1] = Bc * wy * wz + A * wx
            for i in range(3):
                for j in range(3):
                    out[b, i, j] = r[i][0] * Xa[b, 0, j] + r[i][1] * Xa[b, 1, j] + r[i][2] * Xa[b, 2, j]
    return out


def sphere_flow(theta, phi, c1, c2, double margin=1e-9):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] t0 = np.ascontiguousarray(theta, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] p0 = np.ascontiguousarray(phi, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] a = np.ascontiguousarray(c1, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] bb = np.ascontiguousarray(c2, dtype=np.float64)
    cdef Py_ssize_t n = t0.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] t1 = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] p1 = np.empty(n)
    cdef double lim = 0.5 * M_PI - margin
    cdef double tt, g, sec
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            tt = t0[i] + a[i]
            if not (fabs(tt) < lim):
                t1[i] = NAN
                p1[i] = NAN
                continue
            if fabs(a[i]) < 1e-8:
                sec = 1.0 / cos(t0[i])
                g = sec + 0.5 * a[i] * sec * tan(t0[i])
            else:
                g = atanh(2.0 * cos(t0[i] + 0.5 * a[i]) * sin(0.5 * a[i])
                          / (1.0 - sin(tt) * sin(t0[i]))) / a[i]
            t1[i] = tt
            p1[i] = p0[i] + bb[i] * g
    return t1, p1


def cauchy_flow(r, theta, c1, c2, double r_min=1e-9):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] r0 = np.ascontiguousarray(r, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] t0 = np.ascontiguousarray(theta, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] a = np.ascontiguousarray(c1, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] bb = np.ascontiguousarray(c2, dtype=np.float64)
    cdef Py_ssize_t n = r0.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] r1 = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] t1 = np.empty(n)
    cdef double rr, g, coth, sh
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            rr = r0[i] + a[i]
            if not (rr > r_min):
                r1[i] = NAN
                t1[i] = NAN
                continue
            coth = 1.0 / tanh(r0[i])
            if fabs(a[i]) < 1e-8:
                g = coth + 0.5 * a[i] * (1.0 - coth * coth)
            else:
                sh = sinh(0.5 * a[i])
                g = log1p(2.0 * sh * sh + coth * 2.0 * sh * sqrt(1.0 + sh * sh)) / a[i]
            r1[i] = rr
            t1[i] = t0[i] + bb[i] * g
    return r1, t1
