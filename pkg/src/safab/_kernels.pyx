# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: predictive-recursion sweeps and batched set inversion.

Mirrors ``_kernels_py`` exactly; see that module for the contracts.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, ceil, log2, INFINITY
from scipy.special.cython_special cimport ndtr, ndtri

from .errors import NumericalUnderflowError

cnp.import_array()

cdef double INV_SQRT2PI = 0.3989422804014327


def pr_sweeps(const double[::1] theta, double[::1] mass, double atom,
              const double[::1] ys, const cnp.intp_t[::1] order,
              const double[::1] gammas, double sigma,
              const double[::1] node_weight, double atom_weight):
    cdef Py_ssize_t n = theta.shape[0], k, j
    cdef Py_ssize_t steps = order.shape[0]
    cdef double inv_s = 1.0 / sigma
    cdef double c0 = INV_SQRT2PI * inv_s
    cdef double y, g, z, fm, f0, total, scale
    cdef double[::1] f = np.empty(n)
    for k in range(steps):
        y = ys[order[k]]
        g = gammas[k]
        fm = 0.0
        for j in range(n):
            z = (y - theta[j]) * inv_s
            f[j] = exp(-0.5 * z * z) * c0 * node_weight[j]
            fm += f[j] * mass[j]
        z = y * inv_s
        f0 = exp(-0.5 * z * z) * c0 * atom_weight
        fm += f0 * atom
        if not fm >= 1e-300:
            raise NumericalUnderflowError(
                f"predictive recursion: marginal density {fm:.3g} at y={y:.6g}")
        scale = g / fm
        total = 0.0
        for j in range(n):
            mass[j] *= (1.0 - g) + scale * f[j]
            total += mass[j]
        atom *= (1.0 - g) + scale * f0
        total += atom
        for j in range(n):
            mass[j] /= total
        atom /= total
    return atom


cdef inline double _clip01(double x) nogil:
    if x < 0.0:
        return 0.0
    if x > 1.0:
        return 1.0
    return x


cdef inline double _tq(double theta, double p, double sigma, double t,
                       double lo_m, double c, double mid) nogil:
    cdef double q0, r, y
    if p <= 0.0:
        return -INFINITY
    if p >= 1.0:
        return INFINITY
    q0 = lo_m / c
    if p < q0:
        y = theta + sigma * ndtri(_clip01(c * p))
        return y if y < -t else -t
    if p == q0:
        return -t
    r = c * (1.0 - p)
    if r <= 0.5:
        y = theta - sigma * ndtri(_clip01(r))
    else:
        y = theta + sigma * ndtri(_clip01(c * p + mid))
    return y if y > t else t


cdef inline bint _member(double theta, double w, double y, double sigma,
                         double t, double alpha) nogil:
    cdef double lo_m = ndtr((-t - theta) / sigma)
    cdef double up_m = ndtr((theta - t) / sigma)
    cdef double c = lo_m + up_m
    cdef double mid = ndtr((t - theta) / sigma) - lo_m
    cdef double lq = _tq(theta, alpha * w, sigma, t, lo_m, c, mid)
    if y < lq:
        return False
    return y <= _tq(theta, alpha * w + 1.0 - alpha, sigma, t, lo_m, c, mid)


cdef double _bisect(const double[::1] theta, const double[::1] w, double y,
                    Py_ssize_t k_out, Py_ssize_t k_in, double sigma, double t,
                    double alpha, double tol) nogil:
    cdef Py_ssize_t ka = k_out if k_out < k_in else k_in
    cdef double a = theta[k_out], b = theta[k_in], m, wm
    cdef double x0 = theta[ka], x1 = theta[ka + 1]
    cdef double w0 = w[ka], w1 = w[ka + 1]
    cdef int it, iters
    cdef double width = fabs(b - a)
    if width < tol:
        width = tol
    iters = <int>ceil(log2(width / tol)) + 1
    if iters < 1:
        iters = 1
    for it in range(iters):
        m = 0.5 * (a + b)
        wm = w0 + (w1 - w0) * (m - x0) / (x1 - x0)
        if _member(m, wm, y, sigma, t, alpha):
            b = m
        else:
            a = m
    return 0.5 * (a + b)


def acceptance_bounds(theta, w, double sigma, double t, double alpha):
    th_b, w_b = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(w, dtype=float))
    shape = th_b.shape
    cdef double[::1] th = np.ascontiguousarray(th_b).ravel()
    cdef double[::1] ww = np.ascontiguousarray(w_b).ravel()
    cdef Py_ssize_t n = th.shape[0], i
    lo_a = np.empty(n)
    hi_a = np.empty(n)
    cdef double[::1] lo = lo_a, hi = hi_a
    cdef double x, lo_m, up_m, c, mid
    with nogil:
        for i in range(n):
            x = th[i]
            lo_m = ndtr((-t - x) / sigma)
            up_m = ndtr((x - t) / sigma)
            c = lo_m + up_m
            mid = ndtr((t - x) / sigma) - lo_m
            lo[i] = _tq(x, alpha * ww[i], sigma, t, lo_m, c, mid)
            hi[i] = _tq(x, alpha * ww[i] + 1.0 - alpha, sigma, t, lo_m, c, mid)
    return lo_a.reshape(shape), hi_a.reshape(shape)


def invert_on_grid(const double[::1] theta, const double[::1] w,
                   const double[::1] lower, const double[::1] upper,
                   const double[::1] ys, double sigma, double t, double alpha,
                   double tol, Py_ssize_t chunk=0):
    cdef Py_ssize_t n = theta.shape[0], m = ys.shape[0]
    cdef Py_ssize_t i, j, j0, cap = 4 * m + 16, cnt = 0
    cdef double y
    cdef bint inside, prev
    rows_a = np.empty(cap, dtype=np.intp)
    lo_a = np.empty(cap)
    hi_a = np.empty(cap)
    edge_a = np.empty(cap, dtype=np.uint8)
    cdef cnp.intp_t[::1] rows = rows_a
    cdef double[::1] los = lo_a, his = hi_a
    cdef unsigned char[::1] edges = edge_a
    for i in range(m):
        y = ys[i]
        prev = False
        j0 = 0
        for j in range(n + 1):
            if j < n:
                inside = lower[j] <= y and y <= upper[j]
            else:
                inside = False
            if inside and not prev:
                j0 = j
            elif prev and not inside:
                if cnt == cap:
                    cap *= 2
                    rows_a = np.resize(rows_a, cap); rows = rows_a
                    lo_a = np.resize(lo_a, cap); los = lo_a
                    hi_a = np.resize(hi_a, cap); his = hi_a
                    edge_a = np.resize(edge_a, cap); edges = edge_a
                rows[cnt] = i
                if j0 > 0:
                    los[cnt] = _bisect(theta, w, y, j0 - 1, j0, sigma, t, alpha, tol)
                else:
                    los[cnt] = theta[0]
                if j - 1 < n - 1:
                    his[cnt] = _bisect(theta, w, y, j, j - 1, sigma, t, alpha, tol)
                else:
                    his[cnt] = theta[n - 1]
                edges[cnt] = (j0 == 0) or (j - 1 == n - 1)
                cnt += 1
            prev = inside
    return (rows_a[:cnt].copy(), lo_a[:cnt].copy(), hi_a[:cnt].copy(),
            edge_a[:cnt].astype(bool))
