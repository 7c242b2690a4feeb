# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled batched kernels. Same contract as ``_kernels_py``."""

import numpy as np
from libc.math cimport tanh, exp

BACKEND_NAME = "cython"

cdef enum:
    VANILLA = 0
    GRU = 1
    LSTM = 2


cdef inline double _sig(double x) nogil:
    return 0.5 * (tanh(0.5 * x) + 1.0)


def encode_forward(int kind, const double[:, :, ::1] X, const double[:, ::1] Wx,
                   const double[:, ::1] Wh, const double[::1] b):
    cdef Py_ssize_t B = X.shape[0], n = X.shape[1], k = X.shape[2]
    cdef Py_ssize_t r = Wh.shape[0], G = Wx.shape[1]
    H_arr = np.zeros((B, n + 1, r))
    C_arr = np.zeros((B, n + 1, r))
    gates_arr = np.empty((B, n, G))
    cdef double[:, :, ::1] H = H_arr
    cdef double[:, :, ::1] C = C_arr
    cdef double[:, :, ::1] gt = gates_arr
    pre_arr = np.empty(G)
    rh_arr = np.empty(r)
    cdef double[::1] pre = pre_arr
    cdef double[::1] rh = rh_arr
    cdef Py_ssize_t bi, t, j, q
    cdef double acc, z, rr, cand, c
    with nogil:
        for bi in range(B):
            for t in range(n):
                # input projection for all gates
                for j in range(G):
                    acc = b[j]
                    for q in range(k):
                        acc = acc + X[bi, t, q] * Wx[q, j]
                    pre[j] = acc
                if kind == VANILLA:
                    for j in range(r):
                        acc = pre[j]
                        for q in range(r):
                            acc = acc + H[bi, t, q] * Wh[q, j]
                        acc = tanh(acc)
                        gt[bi, t, j] = acc
                        H[bi, t + 1, j] = acc
                elif kind == GRU:
                    for j in range(2 * r):
                        acc = pre[j]
                        for q in range(r):
                            acc = acc + H[bi, t, q] * Wh[q, j]
                        gt[bi, t, j] = _sig(acc)
                    for q in range(r):
                        rh[q] = gt[bi, t, r + q] * H[bi, t, q]
                    for j in range(r):
                        acc = pre[2 * r + j]
                        for q in range(r):
                            acc = acc + rh[q] * Wh[q, 2 * r + j]
                        cand = tanh(acc)
                        gt[bi, t, 2 * r + j] = cand
                        z = gt[bi, t, j]
                        H[bi, t + 1, j] = z * H[bi, t, j] + (1.0 - z) * cand
                else:
                    for j in range(4 * r):
                        acc = pre[j]
                        for q in range(r):
                            acc = acc + H[bi, t, q] * Wh[q, j]
                        if j < 3 * r:
                            gt[bi, t, j] = _sig(acc)
                        else:
                            gt[bi, t, j] = tanh(acc)
                    for j in range(r):
                        c = gt[bi, t, r + j] * C[bi, t, j] + gt[bi, t, j] * gt[bi, t, 3 * r + j]
                        C[bi, t + 1, j] = c
                        H[bi, t + 1, j] = gt[bi, t, 2 * r + j] * tanh(c)
    return H_arr, C_arr, gates_arr


def encode_backward(int kind, const double[:, :, ::1] X, const double[:, ::1] Wh,
                    const double[:, :, ::1] H, const double[:, :, ::1] C,
                    const double[:, :, ::1] gt, const double[:, :, ::1] dH,
                    double[:, ::1] dWx, double[:, ::1] dWh, double[::1] db):
    cdef Py_ssize_t B = X.shape[0], n = X.shape[1], k = X.shape[2]
    cdef Py_ssize_t r = Wh.shape[0], G = gt.shape[2]
    da_arr = np.empty(G)
    dh_arr = np.empty(r)
    dhn_arr = np.empty(r)
    dcn_arr = np.empty(r)
    drh_arr = np.empty(r)
    cdef double[::1] da = da_arr
    cdef double[::1] dh = dh_arr
    cdef double[::1] dhn = dhn_arr
    cdef double[::1] dcn = dcn_arr
    cdef double[::1] drh = drh_arr
    cdef Py_ssize_t bi, t, j, q
    cdef double acc, z, rr, cand, h, ig, fg, og, gg, tc, dc
    with nogil:
        for bi in range(B):
            for j in range(r):
                dhn[j] = 0.0
                dcn[j] = 0.0
            for t in range(n - 1, -1, -1):
                for j in range(r):
                    dh[j] = dH[bi, t, j] + dhn[j]
                if kind == VANILLA:
                    for j in range(r):
                        h = gt[bi, t, j]
                        da[j] = dh[j] * (1.0 - h * h)
                elif kind == GRU:
                    for j in range(r):
                        z = gt[bi, t, j]
                        cand = gt[bi, t, 2 * r + j]
                        da[j] = dh[j] * (H[bi, t, j] - cand) * z * (1.0 - z)
                        da[2 * r + j] = dh[j] * (1.0 - z) * (1.0 - cand * cand)
                    for q in range(r):
                        acc = 0.0
                        for j in range(r):
                            acc = acc + da[2 * r + j] * Wh[q, 2 * r + j]
                        drh[q] = acc
                        rr = gt[bi, t, r + q]
                        da[r + q] = acc * H[bi, t, q] * rr * (1.0 - rr)
                    for q in range(r):
                        rr = gt[bi, t, r + q]
                        for j in range(r):
                            dWh[q, 2 * r + j] += rr * H[bi, t, q] * da[2 * r + j]
                else:
                    for j in range(r):
                        ig = gt[bi, t, j]
                        fg = gt[bi, t, r + j]
                        og = gt[bi, t, 2 * r + j]
                        gg = gt[bi, t, 3 * r + j]
                        tc = tanh(C[bi, t + 1, j])
                        dc = dcn[j] + dh[j] * og * (1.0 - tc * tc)
                        da[j] = dc * gg * ig * (1.0 - ig)
                        da[r + j] = dc * C[bi, t, j] * fg * (1.0 - fg)
                        da[2 * r + j] = dh[j] * tc * og * (1.0 - og)
                        da[3 * r + j] = dc * ig * (1.0 - gg * gg)
                        dcn[j] = dc * fg
                # parameter gradients
                for j in range(G):
                    db[j] += da[j]
                    for q in range(k):
                        dWx[q, j] += X[bi, t, q] * da[j]
                if kind == GRU:
                    for q in range(r):
                        for j in range(2 * r):
                            dWh[q, j] += H[bi, t, q] * da[j]
                    for q in range(r):
                        acc = dh[q] * gt[bi, t, q] + drh[q] * gt[bi, t, r + q]
                        for j in range(2 * r):
                            acc = acc + da[j] * Wh[q, j]
                        dhn[q] = acc
                else:
                    for q in range(r):
                        acc = 0.0
                        for j in range(G):
                            dWh[q, j] += H[bi, t, q] * da[j]
                            acc = acc + da[j] * Wh[q, j]
                        dhn[q] = acc


def attention_forward(const double[:, :, ::1] H, const double[:, ::1] W):
    cdef Py_ssize_t B = H.shape[0], n = H.shape[1], r = H.shape[2]
    alpha_arr = np.empty((B, n))
    ctx_arr = np.zeros((B, r))
    cdef double[:, ::1] alpha = alpha_arr
    cdef double[:, ::1] ctx = ctx_arr
    u_arr = np.empty(r)
    cdef double[::1] u = u_arr
    cdef Py_ssize_t bi, i, j, q
    cdef double acc, m, s
    with nogil:
        for bi in range(B):
            for j in range(r):
                acc = 0.0
                for q in range(r):
                    acc = acc + H[bi, n - 1, q] * W[q, j]
                u[j] = acc
            m = -1e308
            for i in range(n):
                acc = 0.0
                for j in range(r):
                    acc = acc + H[bi, i, j] * u[j]
                alpha[bi, i] = acc
                if acc > m:
                    m = acc
            s = 0.0
            for i in range(n):
                alpha[bi, i] = exp(alpha[bi, i] - m)
                s = s + alpha[bi, i]
            for i in range(n):
                alpha[bi, i] = alpha[bi, i] / s
                for j in range(r):
                    ctx[bi, j] += alpha[bi, i] * H[bi, i, j]
    return alpha_arr, ctx_arr


def attention_backward(const double[:, :, ::1] H, const double[:, ::1] W,
                       const double[:, ::1] alpha, const double[:, ::1] dctx,
                       dH_obj, double[:, ::1] dW):
    cdef Py_ssize_t B = H.shape[0], n = H.shape[1], r = H.shape[2]
    cdef bint want_dh = dH_obj is not None
    cdef double[:, :, ::1] dH
    if want_dh:
        dH = dH_obj
    u_arr = np.empty(r)
    du_arr = np.empty(r)
    de_arr = np.empty(n)
    cdef double[::1] u = u_arr
    cdef double[::1] du = du_arr
    cdef double[::1] de = de_arr
    cdef Py_ssize_t bi, i, j, q
    cdef double acc, s
    with nogil:
        for bi in range(B):
            for j in range(r):
                acc = 0.0
                for q in range(r):
                    acc = acc + H[bi, n - 1, q] * W[q, j]
                u[j] = acc
                du[j] = 0.0
            s = 0.0
            for i in range(n):
                acc = 0.0
                for j in range(r):
                    acc = acc + H[bi, i, j] * dctx[bi, j]
                de[i] = acc
                s = s + alpha[bi, i] * acc
            for i in range(n):
                de[i] = alpha[bi, i] * (de[i] - s)
                for j in range(r):
                    du[j] += de[i] * H[bi, i, j]
                    if want_dh:
                        dH[bi, i, j] += alpha[bi, i] * dctx[bi, j] + de[i] * u[j]
            for q in range(r):
                acc = 0.0
                for j in range(r):
                    dW[q, j] += H[bi, n - 1, q] * du[j]
                    acc = acc + du[j] * W[q, j]
                if want_dh:
                    dH[bi, n - 1, q] += acc


def head_forward(const double[:, ::1] Z, const double[:, ::1] W1, const double[::1] b1,
                 const double[:, ::1] W2, const double[::1] b2):
    cdef Py_ssize_t B = Z.shape[0], d = Z.shape[1], r = W1.shape[1], c = W2.shape[1]
    A_arr = np.empty((B, r))
    L_arr = np.empty((B, c))
    cdef double[:, ::1] A = A_arr
    cdef double[:, ::1] L = L_arr
    cdef Py_ssize_t bi, j, q
    cdef double acc
    with nogil:
        for bi in range(B):
            for j in range(r):
                acc = b1[j]
                for q in range(d):
                    acc = acc + Z[bi, q] * W1[q, j]
                A[bi, j] = tanh(acc)
            for j in range(c):
                acc = b2[j]
                for q in range(r):
                    acc = acc + A[bi, q] * W2[q, j]
                L[bi, j] = acc
    return A_arr, L_arr


def head_backward(const double[:, ::1] Z, const double[:, ::1] W1, const double[:, ::1] W2,
                  const double[:, ::1] A, const double[:, ::1] dlogits,
                  double[:, ::1] dW1, double[::1] db1, double[:, ::1] dW2, double[::1] db2,
                  bint want_dz=True):
    cdef Py_ssize_t B = Z.shape[0], d = Z.shape[1], r = W1.shape[1], c = W2.shape[1]
    dz_obj = np.zeros((B, d)) if want_dz else None
    cdef double[:, ::1] dZ
    if want_dz:
        dZ = dz_obj
    da_arr = np.empty(r)
    cdef double[::1] da = da_arr
    cdef Py_ssize_t bi, j, q
    cdef double acc
    with nogil:
        for bi in range(B):
            for j in range(c):
                db2[j] += dlogits[bi, j]
                for q in range(r):
                    dW2[q, j] += A[bi, q] * dlogits[bi, j]
            for q in range(r):
                acc = 0.0
                for j in range(c):
                    acc = acc + dlogits[bi, j] * W2[q, j]
                da[q] = acc * (1.0 - A[bi, q] * A[bi, q])
                db1[q] += da[q]
            for q in range(d):
                acc = 0.0
                for j in range(r):
                    dW1[q, j] += Z[bi, q] * da[j]
                    acc = acc + da[j] * W1[q, j]
                if want_dz:
                    dZ[bi, q] = acc
    return dz_obj
