# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled scheduling kernels (drop-in for tlpricing._kernels_py).

Same CSR conventions and the same numerical semantics as the numpy backend:
per-origin midpoint bisection with exactly ceil(log2(width/eps)) halvings and
early exit on a hit root, followed by a safeguarded Newton clean-up.
"""

import numpy as np

from libc.math cimport ceil, fabs, isnan, log2, sqrt

BACKEND = "compiled"

cdef double DENOM_FLOOR = 1e-12
cdef int POLISH_STEPS = 40
cdef double POLISH_RTOL = 1e-13


cdef inline double _g_raw_one(double k, double x0, double[::1] p, double[::1] disc,
                              double[::1] w, Py_ssize_t a, Py_ssize_t b, double lam) noexcept:
    cdef Py_ssize_t j
    cdef double denom, z, total = 0.0
    for j in range(a, b):
        denom = p[j] + lam
        if denom < DENOM_FLOOR:
            denom = DENOM_FLOOR
        z = k * disc[j] / denom - 1.0
        if z > 0.0:
            total += w[j] * z
    return total - x0


cdef inline double _slope_raw_one(double k, double[::1] p, double[::1] disc,
                                  double[::1] w, Py_ssize_t a, Py_ssize_t b, double lam) noexcept:
    cdef Py_ssize_t j
    cdef double denom, z, total = 0.0
    for j in range(a, b):
        denom = p[j] + lam
        if denom < DENOM_FLOOR:
            denom = DENOM_FLOOR
        z = k * disc[j] / denom - 1.0
        if z > 0.0:
            total -= w[j] * k * disc[j] / (denom * denom)
    return total


cdef inline double _g_smooth_one(double k, double x0, double[::1] p, double[::1] disc,
                                 double[::1] w, Py_ssize_t a, Py_ssize_t b,
                                 double lam, double mu) noexcept:
    cdef Py_ssize_t j
    cdef double denom, z, total = 0.0
    for j in range(a, b):
        denom = p[j] + lam
        if denom < DENOM_FLOOR:
            denom = DENOM_FLOOR
        z = k * disc[j] / denom - 1.0
        total += w[j] * 0.5 * (z + sqrt(z * z + mu))
    return total - x0


cdef inline double _slope_smooth_one(double k, double[::1] p, double[::1] disc,
                                     double[::1] w, Py_ssize_t a, Py_ssize_t b,
                                     double lam, double mu) noexcept:
    cdef Py_ssize_t j
    cdef double denom, z, total = 0.0
    for j in range(a, b):
        denom = p[j] + lam
        if denom < DENOM_FLOOR:
            denom = DENOM_FLOOR
        z = k * disc[j] / denom - 1.0
        total -= w[j] * 0.5 * (1.0 + z / sqrt(z * z + mu)) * k * disc[j] / (denom * denom)
    return total


def bisect_iterations(double width, double eps):
    if width <= eps:
        return 0
    return int(ceil(log2(width / eps)))


def solve_log_lambda(double k, x0, p_cells, disc, w, ptr, double eps=1e-6, bint polish=True):
    cdef double[::1] x0v = np.ascontiguousarray(x0, dtype=np.float64)
    cdef double[::1] pv = np.ascontiguousarray(p_cells, dtype=np.float64)
    cdef double[::1] dv = np.ascontiguousarray(disc, dtype=np.float64)
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef long long[::1] pt = np.ascontiguousarray(ptr, dtype=np.int64)
    cdef Py_ssize_t n = x0v.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] lam = out
    cdef Py_ssize_t i, a, b, it, n_iter, step
    cdef double lo, hi, mid, g, width, slope, newton, atol, cur
    for i in range(n):
        a = pt[i]
        b = pt[i + 1]
        lo = k / (x0v[i] + 1.0) - pv[a]
        hi = k if k > lo else lo
        width = hi - lo
        n_iter = 0
        if width > eps:
            n_iter = <Py_ssize_t> ceil(log2(width / eps))
        for it in range(n_iter):
            mid = 0.5 * (lo + hi)
            g = _g_raw_one(k, x0v[i], pv, dv, wv, a, b, mid)
            if g == 0.0:
                lo = mid
                hi = mid
                break
            if g > 0.0:
                lo = mid
            else:
                hi = mid
        cur = 0.5 * (lo + hi)
        if polish:
            atol = POLISH_RTOL * (1.0 if x0v[i] < 1.0 else x0v[i])
            for step in range(POLISH_STEPS):
                g = _g_raw_one(k, x0v[i], pv, dv, wv, a, b, cur)
                if fabs(g) <= atol:
                    break
                if g > 0.0:
                    lo = cur
                elif g < 0.0:
                    hi = cur
                slope = _slope_raw_one(k, pv, dv, wv, a, b, cur)
                if slope < 0.0:
                    newton = cur - g / slope
                    if newton > lo and newton < hi:
                        cur = newton
                        continue
                cur = 0.5 * (lo + hi)
        lam[i] = cur
    return out


def log_amounts(double k, p_cells, disc, ptr, lam):
    cdef double[::1] pv = np.ascontiguousarray(p_cells, dtype=np.float64)
    cdef double[::1] dv = np.ascontiguousarray(disc, dtype=np.float64)
    cdef long long[::1] pt = np.ascontiguousarray(ptr, dtype=np.int64)
    cdef double[::1] lv = np.ascontiguousarray(lam, dtype=np.float64)
    out = np.empty(pv.shape[0], dtype=np.float64)
    cdef double[::1] xv = out
    cdef Py_ssize_t i, j
    cdef double denom, z
    for i in range(lv.shape[0]):
        for j in range(pt[i], pt[i + 1]):
            denom = pv[j] + lv[i]
            if denom < DENOM_FLOOR:
                denom = DENOM_FLOOR
            z = k * dv[j] / denom - 1.0
            xv[j] = z if z > 0.0 else 0.0
    return out


def solve_smoothed_lambda(double k, x0, p_cells, disc, w, ptr, double mu,
                          double eps=1e-9, int max_expand=60):
    cdef double[::1] x0v = np.ascontiguousarray(x0, dtype=np.float64)
    cdef double[::1] pv = np.ascontiguousarray(p_cells, dtype=np.float64)
    cdef double[::1] dv = np.ascontiguousarray(disc, dtype=np.float64)
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef long long[::1] pt = np.ascontiguousarray(ptr, dtype=np.int64)
    cdef Py_ssize_t n = x0v.shape[0]
    out = np.empty(n, dtype=np.float64)
    ok_arr = np.ones(n, dtype=bool)
    cdef double[::1] lam = out
    cdef unsigned char[::1] okv = ok_arr.view(np.uint8)
    cdef Py_ssize_t i, a, b, it, n_iter, step, ex
    cdef double lo, hi, mid, g, width, slope, newton, atol, cur, g_hi
    for i in range(n):
        a = pt[i]
        b = pt[i + 1]
        lo = k / (x0v[i] + 1.0) - pv[a]
        hi = k if k > lo else lo
        g_hi = _g_smooth_one(k, x0v[i], pv, dv, wv, a, b, hi, mu)
        for ex in range(max_expand):
            if g_hi <= 0.0:
                break
            width = hi - lo
            if width < 1.0:
                width = 1.0
            hi = hi + width
            g_hi = _g_smooth_one(k, x0v[i], pv, dv, wv, a, b, hi, mu)
        if g_hi > 0.0:
            lam[i] = float("nan")
            okv[i] = 0
            continue
        width = hi - lo
        n_iter = 0
        if width > eps:
            n_iter = <Py_ssize_t> ceil(log2(width / eps))
        for it in range(n_iter):
            mid = 0.5 * (lo + hi)
            g = _g_smooth_one(k, x0v[i], pv, dv, wv, a, b, mid, mu)
            if g == 0.0:
                lo = mid
                hi = mid
                break
            if g > 0.0:
                lo = mid
            else:
                hi = mid
        cur = 0.5 * (lo + hi)
        atol = POLISH_RTOL * (1.0 if x0v[i] < 1.0 else x0v[i])
        for step in range(POLISH_STEPS):
            g = _g_smooth_one(k, x0v[i], pv, dv, wv, a, b, cur, mu)
            if fabs(g) <= atol:
                break
            if g > 0.0:
                lo = cur
            elif g < 0.0:
                hi = cur
            slope = _slope_smooth_one(k, pv, dv, wv, a, b, cur, mu)
            if slope < 0.0:
                newton = cur - g / slope
                if newton > lo and newton < hi:
                    cur = newton
                    continue
            cur = 0.5 * (lo + hi)
        lam[i] = cur
    return out, ok_arr


def smoothed_amounts(double k, p_cells, disc, ptr, lam, double mu):
    cdef double[::1] pv = np.ascontiguousarray(p_cells, dtype=np.float64)
    cdef double[::1] dv = np.ascontiguousarray(disc, dtype=np.float64)
    cdef long long[::1] pt = np.ascontiguousarray(ptr, dtype=np.int64)
    cdef double[::1] lv = np.ascontiguousarray(lam, dtype=np.float64)
    out = np.empty(pv.shape[0], dtype=np.float64)
    cdef double[::1] xv = out
    cdef Py_ssize_t i, j
    cdef double denom, z
    for i in range(lv.shape[0]):
        for j in range(pt[i], pt[i + 1]):
            denom = pv[j] + lv[i]
            if denom < DENOM_FLOOR:
                denom = DENOM_FLOOR
            z = k * dv[j] / denom - 1.0
            xv[j] = 0.5 * (z + sqrt(z * z + mu))
    return out


def smoothed_slopes(double k, p_cells, disc, ptr, lam, double mu):
    cdef double[::1] pv = np.ascontiguousarray(p_cells, dtype=np.float64)
    cdef double[::1] dv = np.ascontiguousarray(disc, dtype=np.float64)
    cdef long long[::1] pt = np.ascontiguousarray(ptr, dtype=np.int64)
    cdef double[::1] lv = np.ascontiguousarray(lam, dtype=np.float64)
    out = np.empty(pv.shape[0], dtype=np.float64)
    cdef double[::1] xv = out
    cdef Py_ssize_t i, j
    cdef double denom, z
    for i in range(lv.shape[0]):
        for j in range(pt[i], pt[i + 1]):
            denom = pv[j] + lv[i]
            if denom < DENOM_FLOOR:
                denom = DENOM_FLOOR
            z = k * dv[j] / denom - 1.0
            xv[j] = 0.5 * (1.0 + z / sqrt(z * z + mu)) * k * dv[j] / (denom * denom)
    return out
