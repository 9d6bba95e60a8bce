# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: fused row softmax, layer norm, GELU, and chamfer loops.

Semantics match mapprior.kernels.numpy_backend exactly; see that module for
the reference definitions. All kernels take C-contiguous float64 arrays with
rows along the last axis.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt, tanh

cnp.import_array()

NAME = "cython"

cdef double GELU_C = 0.7978845608028654  # sqrt(2/pi)
cdef double GELU_A = 0.044715


def softmax_forward(cnp.ndarray[double, ndim=2, mode="c"] z,
                    additive=None, binary=None):
    cdef Py_ssize_t R = z.shape[0], C = z.shape[1]
    cdef cnp.ndarray[double, ndim=2, mode="c"] out = np.empty((R, C))
    cdef cnp.ndarray[double, ndim=2, mode="c"] add_arr, bin_arr
    cdef cnp.ndarray[cnp.uint8_t, ndim=1, mode="c"] dead_arr
    cdef double[:, ::1] zv = z, ov = out, av, bv
    cdef cnp.uint8_t[::1] dv
    cdef Py_ssize_t i, j
    cdef double m, s, v
    cdef bint masked = binary is not None
    if masked:
        add_arr = additive
        bin_arr = binary
        av = add_arr
        bv = bin_arr
        dead_arr = np.zeros(R, dtype=np.uint8)
        dv = dead_arr
    for i in range(R):
        if masked:
            m = zv[i, 0] + av[i, 0]
            for j in range(C):
                v = zv[i, j] + av[i, j]
                ov[i, j] = v
                if v > m:
                    m = v
            s = 0.0
            for j in range(C):
                v = exp(ov[i, j] - m) * bv[i, j]
                ov[i, j] = v
                s += v
            if s == 0.0:
                dv[i] = 1
                v = 1.0 / C
                for j in range(C):
                    ov[i, j] = v
            else:
                s = 1.0 / s
                for j in range(C):
                    ov[i, j] *= s
        else:
            m = zv[i, 0]
            for j in range(1, C):
                if zv[i, j] > m:
                    m = zv[i, j]
            s = 0.0
            for j in range(C):
                v = exp(zv[i, j] - m)
                ov[i, j] = v
                s += v
            s = 1.0 / s
            for j in range(C):
                ov[i, j] *= s
    if masked:
        return out, dead_arr.view(bool)
    return out, None


def softmax_backward(cnp.ndarray[double, ndim=2, mode="c"] g,
                     cnp.ndarray[double, ndim=2, mode="c"] probs, dead):
    cdef Py_ssize_t R = g.shape[0], C = g.shape[1]
    cdef cnp.ndarray[double, ndim=2, mode="c"] gx = np.empty((R, C))
    cdef double[:, ::1] gv = g, pv = probs, xv = gx
    cdef cnp.uint8_t[::1] dv
    cdef bint has_dead = dead is not None
    cdef Py_ssize_t i, j
    cdef double s
    if has_dead:
        dv = dead.view(np.uint8)
    for i in range(R):
        if has_dead and dv[i]:
            for j in range(C):
                xv[i, j] = 0.0
            continue
        s = 0.0
        for j in range(C):
            s += gv[i, j] * pv[i, j]
        for j in range(C):
            xv[i, j] = pv[i, j] * (gv[i, j] - s)
    return gx


def layer_norm_forward(cnp.ndarray[double, ndim=2, mode="c"] x,
                       cnp.ndarray[double, ndim=1, mode="c"] gamma,
                       cnp.ndarray[double, ndim=1, mode="c"] beta,
                       double eps):
    cdef Py_ssize_t R = x.shape[0], D = x.shape[1]
    cdef cnp.ndarray[double, ndim=2, mode="c"] out = np.empty((R, D))
    cdef cnp.ndarray[double, ndim=2, mode="c"] xhat = np.empty((R, D))
    cdef cnp.ndarray[double, ndim=1, mode="c"] inv_std = np.empty(R)
    cdef double[:, ::1] xv = x, ov = out, hv = xhat
    cdef double[::1] gv = gamma, bv = beta, sv = inv_std
    cdef Py_ssize_t i, j
    cdef double mu, var, d, inv
    for i in range(R):
        mu = 0.0
        for j in range(D):
            mu += xv[i, j]
        mu /= D
        var = 0.0
        for j in range(D):
            d = xv[i, j] - mu
            var += d * d
        var /= D
        inv = 1.0 / sqrt(var + eps)
        sv[i] = inv
        for j in range(D):
            d = (xv[i, j] - mu) * inv
            hv[i, j] = d
            ov[i, j] = d * gv[j] + bv[j]
    return out, xhat, inv_std


def layer_norm_backward(cnp.ndarray[double, ndim=2, mode="c"] g,
                        cnp.ndarray[double, ndim=2, mode="c"] xhat,
                        cnp.ndarray[double, ndim=1, mode="c"] inv_std,
                        cnp.ndarray[double, ndim=1, mode="c"] gamma):
    cdef Py_ssize_t R = g.shape[0], D = g.shape[1]
    cdef cnp.ndarray[double, ndim=2, mode="c"] gx = np.empty((R, D))
    cdef cnp.ndarray[double, ndim=1, mode="c"] dgamma = np.zeros(D)
    cdef cnp.ndarray[double, ndim=1, mode="c"] dbeta = np.zeros(D)
    cdef double[:, ::1] gv = g, hv = xhat, xv = gx
    cdef double[::1] sv = inv_std, gav = gamma, dgv = dgamma, dbv = dbeta
    cdef Py_ssize_t i, j
    cdef double m1, m2, dh
    for i in range(R):
        m1 = 0.0
        m2 = 0.0
        for j in range(D):
            dh = gv[i, j] * gav[j]
            m1 += dh
            m2 += dh * hv[i, j]
            dgv[j] += gv[i, j] * hv[i, j]
            dbv[j] += gv[i, j]
        m1 /= D
        m2 /= D
        for j in range(D):
            xv[i, j] = (gv[i, j] * gav[j] - m1 - hv[i, j] * m2) * sv[i]
    return gx, dgamma, dbeta


def gelu_forward(cnp.ndarray[double, ndim=1, mode="c"] x):
    cdef Py_ssize_t N = x.shape[0]
    cdef cnp.ndarray[double, ndim=1, mode="c"] out = np.empty(N)
    cdef cnp.ndarray[double, ndim=1, mode="c"] t = np.empty(N)
    cdef double[::1] xv = x, ov = out, tv = t
    cdef Py_ssize_t i
    cdef double u, th
    for i in range(N):
        u = xv[i]
        th = tanh(GELU_C * (u + GELU_A * u * u * u))
        tv[i] = th
        ov[i] = 0.5 * u * (1.0 + th)
    return out, t


def gelu_backward(cnp.ndarray[double, ndim=1, mode="c"] g,
                  cnp.ndarray[double, ndim=1, mode="c"] x,
                  cnp.ndarray[double, ndim=1, mode="c"] t):
    cdef Py_ssize_t N = g.shape[0]
    cdef cnp.ndarray[double, ndim=1, mode="c"] gx = np.empty(N)
    cdef double[::1] gv = g, xv = x, tv = t, ov = gx
    cdef Py_ssize_t i
    cdef double u, th, du
    for i in range(N):
        u = xv[i]
        th = tv[i]
        du = GELU_C * (1.0 + 3.0 * GELU_A * u * u)
        ov[i] = 0.5 * ((1.0 + th) + u * (1.0 - th * th) * du) * gv[i]
    return gx


def chamfer_directed(cnp.ndarray[double, ndim=2, mode="c"] a,
                     cnp.ndarray[double, ndim=2, mode="c"] b):
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0]
    cdef double[:, ::1] av = a, bv = b
    cdef Py_ssize_t i, j
    cdef double best, dx, dy, d2, acc
    acc = 0.0
    for i in range(n):
        dx = av[i, 0] - bv[0, 0]
        dy = av[i, 1] - bv[0, 1]
        best = dx * dx + dy * dy
        for j in range(1, m):
            dx = av[i, 0] - bv[j, 0]
            dy = av[i, 1] - bv[j, 1]
            d2 = dx * dx + dy * dy
            if d2 < best:
                best = d2
        acc += sqrt(best)
    return acc / n
