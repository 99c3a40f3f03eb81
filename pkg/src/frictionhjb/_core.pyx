# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; semantics are defined by :mod:`frictionhjb._core_py`."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, fabs, isnan, isfinite, INFINITY, rint

cnp.import_array()

cdef double SNAP = 1e-9
cdef int STOP = -1
cdef int NONE = -2


cdef inline double _snap(double s) noexcept nogil:
    cdef double r = rint(s)
    if fabs(s - r) <= SNAP:
        return r
    return s


cdef inline double _interp1(const double[:] v, const unsigned char[:] inf, Py_ssize_t n,
                            double x0, double dx, double p, double mm) noexcept nogil:
    cdef double s, f
    cdef Py_ssize_t i
    if not isfinite(p):
        return INFINITY
    s = _snap((p - x0) / dx)
    if s < 0 or s > n - 1:
        return INFINITY
    i = <Py_ssize_t>floor(s)
    if i > n - 1:
        i = n - 1
    f = s - i
    if f > 0:
        if inf[i] and inf[i + 1]:
            return INFINITY
        if inf[i]:
            if 1 - f > mm + SNAP:
                return INFINITY
            return v[i + 1]
        if inf[i + 1]:
            if f > mm + SNAP:
                return INFINITY
            return v[i]
        return (1 - f) * v[i] + f * v[i + 1]
    if inf[i]:
        return INFINITY
    return v[i]


cdef inline double _interp2(const double[:, :] v, const unsigned char[:, :] inf,
                            Py_ssize_t n0, Py_ssize_t n1, double a0, double a1,
                            double d0, double d1, double p0, double p1, double mm) noexcept nogil:
    cdef double s0, s1, f0, f1, w, acc = 0.0, wfin = 0.0, masked = 0.0
    cdef Py_ssize_t i0, i1, a, b, ia, ib
    if not (isfinite(p0) and isfinite(p1)):
        return INFINITY
    s0 = _snap((p0 - a0) / d0)
    s1 = _snap((p1 - a1) / d1)
    if s0 < 0 or s0 > n0 - 1 or s1 < 0 or s1 > n1 - 1:
        return INFINITY
    i0 = <Py_ssize_t>floor(s0)
    i1 = <Py_ssize_t>floor(s1)
    if i0 > n0 - 1:
        i0 = n0 - 1
    if i1 > n1 - 1:
        i1 = n1 - 1
    f0 = s0 - i0
    f1 = s1 - i1
    for a in range(2):
        for b in range(2):
            w = (f0 if a else 1 - f0) * (f1 if b else 1 - f1)
            if w > 0:
                ia = i0 + a
                ib = i1 + b
                if ia > n0 - 1:
                    ia = n0 - 1
                if ib > n1 - 1:
                    ib = n1 - 1
                if inf[ia, ib]:
                    masked = masked + w
                else:
                    acc = acc + w * v[ia, ib]
                    wfin = wfin + w
    if masked > mm + SNAP:
        return INFINITY
    if masked > 0:
        return acc / (wfin if wfin > 0 else 1.0)
    return acc


def interp_1d(values, inf, double x0, double dx, points, double max_masked=0.0):
    cdef const double[:] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef const unsigned char[:] m = np.ascontiguousarray(inf, dtype=np.uint8)
    pts = np.asarray(points, dtype=np.float64)
    shape = pts.shape
    cdef const double[:] p = np.ascontiguousarray(pts.ravel())
    out = np.empty(p.shape[0], dtype=np.float64)
    cdef double[:] o = out
    cdef Py_ssize_t k, n = v.shape[0]
    for k in range(p.shape[0]):
        o[k] = _interp1(v, m, n, x0, dx, p[k], max_masked)
    out = out.reshape(shape)
    return out, ~np.isfinite(out)


def interp_2d(values, inf, x0, dx, points, double max_masked=0.0):
    cdef const double[:, :] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef const unsigned char[:, :] m = np.ascontiguousarray(inf, dtype=np.uint8)
    pts = np.asarray(points, dtype=np.float64)
    shape = pts.shape[:-1]
    cdef const double[:, :] p = np.ascontiguousarray(pts.reshape(-1, 2))
    out = np.empty(p.shape[0], dtype=np.float64)
    cdef double[:] o = out
    cdef Py_ssize_t k
    cdef double a0 = x0[0], a1 = x0[1], d0 = dx[0], d1 = dx[1]
    for k in range(p.shape[0]):
        o[k] = _interp2(v, m, v.shape[0], v.shape[1], a0, a1, d0, d1, p[k, 0], p[k, 1], max_masked)
    out = out.reshape(shape)
    return out, ~np.isfinite(out)


def sl_min_1d(v_next, inf_next, double x0, double dx, cand, double h, obst, obst_inf,
              double max_masked=0.0):
    cdef const double[:] v = np.ascontiguousarray(v_next, dtype=np.float64)
    cdef const unsigned char[:] m = np.ascontiguousarray(inf_next, dtype=np.uint8)
    cdef const double[:, :] c = np.ascontiguousarray(cand, dtype=np.float64)
    cdef const double[:] ob = np.ascontiguousarray(obst, dtype=np.float64)
    cdef const unsigned char[:] obi = np.ascontiguousarray(obst_inf, dtype=np.uint8)
    cdef Py_ssize_t n = v.shape[0], kc = c.shape[1], i, j
    values = np.empty(n, dtype=np.float64)
    is_inf = np.empty(n, dtype=np.bool_)
    choice = np.empty(n, dtype=np.int32)
    cdef double[:] vo = values
    cdef cnp.npy_bool[:] io = is_inf
    cdef int[:] co = choice
    cdef double xi, best, val
    cdef int bj
    with nogil:
        for i in range(n):
            xi = x0 + dx * i
            best = INFINITY
            bj = NONE
            for j in range(kc):
                if isnan(c[i, j]):
                    continue
                val = _interp1(v, m, n, x0, dx, xi + h * c[i, j], max_masked)
                if val < best:
                    best = val
                    bj = <int>j
            if not obi[i] and ob[i] <= best:
                vo[i] = ob[i]
                io[i] = False
                co[i] = STOP
            elif bj == NONE:
                vo[i] = INFINITY
                io[i] = True
                co[i] = NONE
            else:
                vo[i] = best
                io[i] = False
                co[i] = bj
    return values, is_inf, choice


def sl_min_2d(v_next, inf_next, x0, dx, cand, double h, obst, obst_inf,
              double max_masked=0.0):
    cdef const double[:, :] v = np.ascontiguousarray(v_next, dtype=np.float64)
    cdef const unsigned char[:, :] m = np.ascontiguousarray(inf_next, dtype=np.uint8)
    cdef const double[:, :, :, :] c = np.ascontiguousarray(cand, dtype=np.float64)
    cdef const double[:, :] ob = np.ascontiguousarray(obst, dtype=np.float64)
    cdef const unsigned char[:, :] obi = np.ascontiguousarray(obst_inf, dtype=np.uint8)
    cdef Py_ssize_t n0 = v.shape[0], n1 = v.shape[1], kc = c.shape[2], i, k, j
    cdef double a0 = x0[0], a1 = x0[1], d0 = dx[0], d1 = dx[1]
    values = np.empty((n0, n1), dtype=np.float64)
    is_inf = np.empty((n0, n1), dtype=np.bool_)
    choice = np.empty((n0, n1), dtype=np.int32)
    cdef double[:, :] vo = values
    cdef cnp.npy_bool[:, :] io = is_inf
    cdef int[:, :] co = choice
    cdef double best, val
    cdef int bj
    with nogil:
        for i in range(n0):
            for k in range(n1):
                best = INFINITY
                bj = NONE
                for j in range(kc):
                    if isnan(c[i, k, j, 0]) or isnan(c[i, k, j, 1]):
                        continue
                    val = _interp2(v, m, n0, n1, a0, a1, d0, d1,
                                   a0 + d0 * i + h * c[i, k, j, 0],
                                   a1 + d1 * k + h * c[i, k, j, 1], max_masked)
                    if val < best:
                        best = val
                        bj = <int>j
                if not obi[i, k] and ob[i, k] <= best:
                    vo[i, k] = ob[i, k]
                    io[i, k] = False
                    co[i, k] = STOP
                elif bj == NONE:
                    vo[i, k] = INFINITY
                    io[i, k] = True
                    co[i, k] = NONE
                else:
                    vo[i, k] = best
                    io[i, k] = False
                    co[i, k] = bj
    return values, is_inf, choice


def prox_pwl(y, slopes, breakpoints, quad):
    cdef const double[:] yy = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[:, :] s = np.ascontiguousarray(slopes, dtype=np.float64)
    cdef const double[:] b = np.ascontiguousarray(breakpoints, dtype=np.float64)
    cdef const double[:] q = np.ascontiguousarray(quad, dtype=np.float64)
    cdef Py_ssize_t n = yy.shape[0], mb = b.shape[0], r, lo, hi, mid
    out = np.empty(n, dtype=np.float64)
    cdef double[:] o = out
    cdef double a
    with nogil:
        for r in range(n):
            a = 1.0 + 2.0 * q[r]
            # count of breakpoints with a*b_j + s_j <= y (strictly increasing in j)
            lo = 0
            hi = mb
            while lo < hi:
                mid = (lo + hi) // 2
                if a * b[mid] + s[r, mid] <= yy[r]:
                    lo = mid + 1
                else:
                    hi = mid
            if lo >= 1 and yy[r] <= a * b[lo - 1] + s[r, lo]:
                o[r] = b[lo - 1]
            else:
                o[r] = (yy[r] - s[r, lo]) / a
    return out
