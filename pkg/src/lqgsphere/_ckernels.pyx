# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, floor

cnp.import_array()


def ar1_filter(innov, rho, x_init):
    cdef double[:, ::1] a = np.ascontiguousarray(innov, dtype=np.float64)
    cdef double[::1] r = np.ascontiguousarray(rho, dtype=np.float64)
    cdef double[::1] x0 = np.ascontiguousarray(x_init, dtype=np.float64)
    cdef Py_ssize_t m = a.shape[0], n = a.shape[1], i, j
    out_arr = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double prev, ri
    with nogil:
        for i in range(m):
            prev = x0[i]
            ri = r[i]
            for j in range(n):
                prev = ri * prev + a[i, j]
                out[i, j] = prev
    return out_arr


def first_passage(x, t, double drift, double level, double dt, normals, uniforms):
    cdef double[::1] xv = np.array(x, dtype=np.float64)
    cdef double[::1] tv = np.array(t, dtype=np.float64)
    cdef double[:, ::1] nz = np.ascontiguousarray(normals, dtype=np.float64)
    cdef double[:, ::1] uz = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef Py_ssize_t n_paths = nz.shape[0], n_steps = nz.shape[1], i, j
    hit_arr = np.full(n_paths, np.nan)
    cdef double[::1] hit = hit_arr
    cdef double sq = sqrt(dt), cur, prev, p, frac
    with nogil:
        for i in range(n_paths):
            cur = xv[i]
            for j in range(n_steps):
                prev = cur
                cur = prev + (drift * dt + sq * nz[i, j])
                if cur >= level:
                    if cur > prev:
                        frac = (level - prev) / (cur - prev)
                    else:
                        frac = (level - prev) / 1.0
                    hit[i] = tv[i] + j * dt + frac * dt
                    break
                p = exp(-2.0 * (level - prev) * (level - cur) / dt)
                if uz[i, j] < p:
                    hit[i] = tv[i] + j * dt + 0.5 * dt
                    break
            if hit[i] == hit[i]:
                xv[i] = level
                tv[i] = hit[i]
            else:
                xv[i] = cur
                tv[i] = tv[i] + n_steps * dt
    return np.asarray(xv), np.asarray(tv), hit_arr


def bilinear(values, r, c, bint periodic_cols):
    cdef double[:, ::1] v = np.ascontiguousarray(values, dtype=np.float64)
    r_arr = np.ascontiguousarray(r, dtype=np.float64)
    c_arr = np.ascontiguousarray(c, dtype=np.float64)
    shape = r_arr.shape
    cdef double[::1] rv = r_arr.reshape(-1)
    cdef double[::1] cv = c_arr.reshape(-1)
    cdef Py_ssize_t n = rv.shape[0], nr = v.shape[0], nc = v.shape[1], k
    cdef Py_ssize_t r0, c0, c1
    cdef double fr, fc
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for k in range(n):
            r0 = <Py_ssize_t> floor(rv[k])
            if r0 < 0:
                r0 = 0
            if r0 > nr - 2:
                r0 = nr - 2
            fr = rv[k] - r0
            c0 = <Py_ssize_t> floor(cv[k])
            fc = cv[k] - c0
            if periodic_cols:
                c0 = c0 % nc
                if c0 < 0:
                    c0 = c0 + nc
                c1 = (c0 + 1) % nc
            else:
                if c0 < 0:
                    c0 = 0
                if c0 > nc - 2:
                    c0 = nc - 2
                fc = cv[k] - c0
                c1 = c0 + 1
            out[k] = ((1 - fr) * ((1 - fc) * v[r0, c0] + fc * v[r0, c1])
                      + fr * ((1 - fc) * v[r0 + 1, c0] + fc * v[r0 + 1, c1]))
    return out_arr.reshape(shape)
