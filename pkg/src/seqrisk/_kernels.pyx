# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled sequence kernels.

Signature-compatible with seqrisk._kernels_py for the ops defined here; the
cache tuples are backend-private, so forward and backward of one op must
always come from the same backend.  temporal_attention_* is intentionally
absent: it is cheap, and the dispatcher falls through to the numpy version.

Gate recurrences and score/normalize passes run as C loops; the single large
matrix exp and the GEMM-shaped products go through numpy, which is faster for
those than a scalar loop here.
"""
from libc.math cimport exp, tanh

import numpy as np

BACKEND_NAME = "compiled"


cdef inline double _sig(double v) noexcept nogil:
    cdef double e
    if v >= 0.0:
        return 1.0 / (1.0 + exp(-v))
    e = exp(v)
    return e / (1.0 + e)


cdef inline object _c2(object a):
    return np.ascontiguousarray(a, dtype=np.float64)


# ---------------------------------------------------------------------------
# full-sequence LSTM


def lstm_seq_forward(x, mask, w, u, b):
    x = _c2(x)
    w = _c2(w)
    u = _c2(u)
    b = _c2(b)
    mask_b = np.ascontiguousarray(mask, dtype=np.bool_)
    cdef Py_ssize_t T = x.shape[0]
    cdef Py_ssize_t H = w.shape[0] // 4
    XW = _c2(x @ w.T + b)  # (T, 4H): input contribution plus bias, hoisted
    I = np.zeros((T, H))
    F = np.zeros((T, H))
    G = np.zeros((T, H))
    O = np.zeros((T, H))
    C = np.zeros((T, H))
    out = np.zeros((T, H))
    prev = np.full(T, -1, dtype=np.int64)
    h_arr = np.zeros(H)
    c_arr = np.zeros(H)
    z_arr = np.zeros(4 * H)

    cdef double[:, ::1] xw = XW
    cdef double[:, ::1] uv = u
    cdef double[:, ::1] Iv = I, Fv = F, Gv = G, Ov = O, Cv = C, hs = out
    cdef const unsigned char[::1] mv = mask_b.view(np.uint8)
    cdef long long[::1] pv = prev
    cdef double[::1] h = h_arr, c = c_arr, z = z_arr
    cdef Py_ssize_t t, j, k
    cdef long long last = -1
    cdef double acc, ig, fg, gg, og

    with nogil:
        for t in range(T):
            if not mv[t]:
                continue
            for j in range(4 * H):
                acc = xw[t, j]
                for k in range(H):
                    acc += uv[j, k] * h[k]
                z[j] = acc
            for j in range(H):
                ig = _sig(z[j])
                fg = _sig(z[H + j])
                gg = tanh(z[2 * H + j])
                og = _sig(z[3 * H + j])
                c[j] = fg * c[j] + ig * gg
                h[j] = og * tanh(c[j])
                Iv[t, j] = ig
                Fv[t, j] = fg
                Gv[t, j] = gg
                Ov[t, j] = og
                Cv[t, j] = c[j]
                hs[t, j] = h[j]
            pv[t] = last
            last = t
    cache = (x, mask_b, w, u, I, F, G, O, C, out, prev)
    return out, cache


def lstm_seq_backward(d_out, cache, need_dx=True):
    x, mask_b, w, u, I, F, G, O, C, hs, prev = cache
    d_out = _c2(d_out)
    cdef Py_ssize_t T = x.shape[0]
    cdef Py_ssize_t D = x.shape[1]
    cdef Py_ssize_t H = w.shape[0] // 4
    cdef bint want_dx = bool(need_dx)
    dw = np.zeros_like(w)
    du = np.zeros_like(u)
    db = np.zeros(4 * H)
    dx = np.zeros_like(x) if want_dx else None
    dh_arr = np.zeros(H)
    dc_arr = np.zeros(H)
    dz_arr = np.zeros(4 * H)

    cdef double[:, ::1] xv = x
    cdef double[:, ::1] wv_ = w
    cdef double[:, ::1] uv = u
    cdef double[:, ::1] Iv = I, Fv = F, Gv = G, Ov = O, Cv = C, hv = hs
    cdef double[:, ::1] dov = d_out
    cdef double[:, ::1] dwv = dw
    cdef double[:, ::1] duv = du
    cdef double[::1] dbv = db
    cdef double[:, ::1] dxv = dx if want_dx else dw  # placeholder view, unused
    cdef const unsigned char[::1] mv = mask_b.view(np.uint8)
    cdef long long[::1] pv = prev
    cdef double[::1] dh = dh_arr, dc = dc_arr, dz = dz_arr
    cdef Py_ssize_t t, j, k
    cdef long long p
    cdef double tc, dh_t, do_, dct, cprev, hprev, dzj

    with nogil:
        for t in range(T - 1, -1, -1):
            if not mv[t]:
                continue
            p = pv[t]
            for j in range(H):
                dh_t = dov[t, j] + dh[j]
                tc = tanh(Cv[t, j])
                do_ = dh_t * tc
                dct = dc[j] + dh_t * Ov[t, j] * (1.0 - tc * tc)
                cprev = Cv[p, j] if p >= 0 else 0.0
                dz[j] = (dct * Gv[t, j]) * Iv[t, j] * (1.0 - Iv[t, j])
                dz[H + j] = (dct * cprev) * Fv[t, j] * (1.0 - Fv[t, j])
                dz[2 * H + j] = (dct * Iv[t, j]) * (1.0 - Gv[t, j] * Gv[t, j])
                dz[3 * H + j] = do_ * Ov[t, j] * (1.0 - Ov[t, j])
                dc[j] = dct * Fv[t, j]
            for j in range(4 * H):
                dzj = dz[j]
                dbv[j] += dzj
                for k in range(D):
                    dwv[j, k] += dzj * xv[t, k]
                for k in range(H):
                    hprev = hv[p, k] if p >= 0 else 0.0
                    duv[j, k] += dzj * hprev
            for k in range(H):
                dh[k] = 0.0
                for j in range(4 * H):
                    dh[k] += uv[j, k] * dz[j]
            if want_dx:
                for k in range(D):
                    dxv[t, k] = 0.0
                    for j in range(4 * H):
                        dxv[t, k] += wv_[j, k] * dz[j]
    return dx, dw, du, db


# ---------------------------------------------------------------------------
# windowed LSTM


def local_lstm_forward(x, mask, w, u, b, window):
    if window < 1:
        raise ValueError(f"local_lstm: window must be >= 1, got {window}")
    x = _c2(x)
    w = _c2(w)
    u = _c2(u)
    b = _c2(b)
    mask_b = np.ascontiguousarray(mask, dtype=np.bool_)
    cdef Py_ssize_t T = x.shape[0]
    cdef Py_ssize_t H = w.shape[0] // 4
    cdef Py_ssize_t W = window
    XW = _c2(x @ w.T + b)
    I = np.zeros((T, W, H))
    F = np.zeros((T, W, H))
    G = np.zeros((T, W, H))
    O = np.zeros((T, W, H))
    C = np.zeros((T, W, H))
    Hs = np.zeros((T, W, H))
    out = np.zeros((T, H))
    qs = np.zeros((T, W), dtype=np.int64)  # unmasked source rows per window
    nk = np.zeros(T, dtype=np.int64)
    h_arr = np.zeros(H)
    c_arr = np.zeros(H)
    z_arr = np.zeros(4 * H)

    cdef double[:, ::1] xw = XW
    cdef double[:, ::1] uv = u
    cdef double[:, :, ::1] Iv = I, Fv = F, Gv = G, Ov = O, Cv = C, Hv = Hs
    cdef double[:, ::1] ov = out
    cdef const unsigned char[::1] mv = mask_b.view(np.uint8)
    cdef long long[:, ::1] qv = qs
    cdef long long[::1] nv = nk
    cdef double[::1] h = h_arr, c = c_arr, z = z_arr
    cdef Py_ssize_t p, q, lo, k, j, m
    cdef double acc, ig, fg, gg, og

    with nogil:
        for p in range(T):
            if not mv[p]:
                continue
            lo = p - W + 1
            if lo < 0:
                lo = 0
            for j in range(H):
                h[j] = 0.0
                c[j] = 0.0
            k = 0
            for q in range(lo, p + 1):
                if not mv[q]:
                    continue
                for j in range(4 * H):
                    acc = xw[q, j]
                    for m in range(H):
                        acc += uv[j, m] * h[m]
                    z[j] = acc
                for j in range(H):
                    ig = _sig(z[j])
                    fg = _sig(z[H + j])
                    gg = tanh(z[2 * H + j])
                    og = _sig(z[3 * H + j])
                    c[j] = fg * c[j] + ig * gg
                    h[j] = og * tanh(c[j])
                    Iv[p, k, j] = ig
                    Fv[p, k, j] = fg
                    Gv[p, k, j] = gg
                    Ov[p, k, j] = og
                    Cv[p, k, j] = c[j]
                    Hv[p, k, j] = h[j]
                qv[p, k] = q
                k += 1
            nv[p] = k
            for j in range(H):
                ov[p, j] = h[j]
    cache = (x, mask_b, w, u, I, F, G, O, C, Hs, qs, nk)
    return out, cache


def local_lstm_backward(d_out, cache, need_dx=True):
    x, mask_b, w, u, I, F, G, O, C, Hs, qs, nk = cache
    d_out = _c2(d_out)
    cdef Py_ssize_t T = x.shape[0]
    cdef Py_ssize_t D = x.shape[1]
    cdef Py_ssize_t H = w.shape[0] // 4
    cdef bint want_dx = bool(need_dx)
    dw = np.zeros_like(w)
    du = np.zeros_like(u)
    db = np.zeros(4 * H)
    dx = np.zeros_like(x) if want_dx else None
    dh_arr = np.zeros(H)
    dc_arr = np.zeros(H)
    dz_arr = np.zeros(4 * H)

    cdef double[:, ::1] xv = x
    cdef double[:, ::1] wv_ = w
    cdef double[:, ::1] uv = u
    cdef double[:, :, ::1] Iv = I, Fv = F, Gv = G, Ov = O, Cv = C, Hv = Hs
    cdef double[:, ::1] dov = d_out
    cdef double[:, ::1] dwv = dw
    cdef double[:, ::1] duv = du
    cdef double[::1] dbv = db
    cdef double[:, ::1] dxv = dx if want_dx else dw  # placeholder view, unused
    cdef const unsigned char[::1] mv = mask_b.view(np.uint8)
    cdef long long[:, ::1] qv = qs
    cdef long long[::1] nv = nk
    cdef double[::1] dh = dh_arr, dc = dc_arr, dz = dz_arr
    cdef Py_ssize_t p, k, j, m, q
    cdef double tc, do_, dct, cprev, hprev, dzj, acc

    with nogil:
        for p in range(T):
            if not mv[p]:
                continue
            for j in range(H):
                dh[j] = dov[p, j]
                dc[j] = 0.0
            for k in range(nv[p] - 1, -1, -1):
                q = qv[p, k]
                for j in range(H):
                    tc = tanh(Cv[p, k, j])
                    do_ = dh[j] * tc
                    dct = dc[j] + dh[j] * Ov[p, k, j] * (1.0 - tc * tc)
                    cprev = Cv[p, k - 1, j] if k > 0 else 0.0
                    dz[j] = (dct * Gv[p, k, j]) * Iv[p, k, j] * (1.0 - Iv[p, k, j])
                    dz[H + j] = (dct * cprev) * Fv[p, k, j] * (1.0 - Fv[p, k, j])
                    dz[2 * H + j] = (dct * Iv[p, k, j]) * (1.0 - Gv[p, k, j] * Gv[p, k, j])
                    dz[3 * H + j] = do_ * Ov[p, k, j] * (1.0 - Ov[p, k, j])
                    dc[j] = dct * Fv[p, k, j]
                for j in range(4 * H):
                    dzj = dz[j]
                    dbv[j] += dzj
                    for m in range(D):
                        dwv[j, m] += dzj * xv[q, m]
                    for m in range(H):
                        hprev = Hv[p, k - 1, m] if k > 0 else 0.0
                        duv[j, m] += dzj * hprev
                for m in range(H):
                    dh[m] = 0.0
                    for j in range(4 * H):
                        dh[m] += uv[j, m] * dz[j]
                if want_dx:
                    for m in range(D):
                        acc = 0.0
                        for j in range(4 * H):
                            acc += wv_[j, m] * dz[j]
                        dxv[q, m] += acc
    return dx, dw, du, db


# ---------------------------------------------------------------------------
# joint attention over (time, feature) cells; same cache layout as the numpy
# backend so the two backwards stay line-for-line comparable


def joint_attention_forward(f, mask, wq, wk, wv, gamma):
    f = _c2(f)
    mask_b = np.ascontiguousarray(mask, dtype=np.bool_)
    idx = np.flatnonzero(mask_b)
    cdef Py_ssize_t Tu = idx.shape[0]
    cdef Py_ssize_t H = f.shape[1]
    out = np.zeros_like(f)
    if Tu == 0:
        return out, (f.shape, idx, None, None, None, None, None, None, wq, wk, wv, gamma)
    fu = _c2(f[idx])
    V = _c2(fu @ wv)
    G = _c2(np.asarray(wq) @ np.asarray(wk).T)
    cdef Py_ssize_t M = Tu * H
    K = np.empty((H, M))
    S = np.empty((M, M))

    cdef double[:, ::1] fv = fu
    cdef double[:, ::1] Gv = G
    cdef double[:, ::1] Kv = K
    cdef double[:, ::1] Sv = S
    cdef Py_ssize_t cq, t, cc, a, j
    cdef double fa, mx, tot

    with nogil:
        for cq in range(H):
            for t in range(Tu):
                for cc in range(H):
                    Kv[cq, t * H + cc] = Gv[cq, cc] * fv[t, cc]
        for a in range(M):
            fa = fv[a // H, a % H]
            cq = a % H
            mx = fa * Kv[cq, 0]
            for j in range(M):
                Sv[a, j] = fa * Kv[cq, j]
                if Sv[a, j] > mx:
                    mx = Sv[a, j]
            for j in range(M):
                Sv[a, j] -= mx
    P = np.exp(S, out=S)  # one large vectorized exp beats a scalar loop here
    cdef double[:, ::1] Pv = P
    with nogil:
        for a in range(M):
            tot = 0.0
            for j in range(M):
                tot += Pv[a, j]
            for j in range(M):
                Pv[a, j] /= tot
    A = (P @ V.reshape(M)).reshape(Tu, H)
    out[idx] = fu + float(gamma) * A
    cache = (f.shape, idx, fu, V, G, K, P, A, wq, wk, wv, gamma)
    return out, cache


def joint_attention_backward(d_out, cache):
    fshape, idx, fu, V, G, K, P, A, wq, wk, wv, gamma = cache
    df = np.zeros(fshape)
    if idx.shape[0] == 0:
        return df, np.zeros_like(wq), np.zeros_like(wk), np.zeros_like(wv), np.zeros(())
    d_out = _c2(d_out)
    cdef Py_ssize_t Tu = fu.shape[0]
    cdef Py_ssize_t H = fu.shape[1]
    cdef Py_ssize_t M = Tu * H
    dout_u = _c2(d_out[idx])
    dgamma = np.asarray(np.sum(dout_u * A))
    dA = _c2((float(gamma) * dout_u).reshape(M))
    Vf = _c2(V.reshape(M))
    Af = _c2(A.reshape(M))
    dVf = np.zeros(M)
    dFq = np.zeros(M)
    dK = np.zeros((H, M))
    dG = np.zeros((H, H))
    dFs = np.zeros((Tu, H))

    cdef double[:, ::1] fv = fu
    cdef double[:, ::1] Pv = P
    cdef double[:, ::1] Kv = K
    cdef double[:, ::1] Gv = G
    cdef double[::1] dAv = dA
    cdef double[::1] Vfv = Vf
    cdef double[::1] Afv = Af
    cdef double[::1] dVv = dVf
    cdef double[::1] dFqv = dFq
    cdef double[:, ::1] dKv = dK
    cdef double[:, ::1] dGv = dG
    cdef double[:, ::1] dFsv = dFs
    cdef Py_ssize_t a, j, cq, t, d
    cdef double da, Aa, fa, dsj, pj, acc_q, dkj

    with nogil:
        for a in range(M):
            da = dAv[a]
            Aa = Afv[a]
            cq = a % H
            fa = fv[a // H, cq]
            acc_q = 0.0
            for j in range(M):
                pj = Pv[a, j]
                dVv[j] += pj * da
                dsj = pj * da * (Vfv[j] - Aa)
                acc_q += dsj * Kv[cq, j]
                dKv[cq, j] += dsj * fa
            dFqv[a] = acc_q
        for cq in range(H):
            for t in range(Tu):
                for d in range(H):
                    dkj = dKv[cq, t * H + d]
                    dGv[cq, d] += dkj * fv[t, d]
                    dFsv[t, d] += dkj * Gv[cq, d]
    dfu = dout_u + dFq.reshape(Tu, H) + dFs + dVf.reshape(Tu, H) @ np.asarray(wv).T
    dwv = fu.T @ dVf.reshape(Tu, H)
    dwq = dG @ np.asarray(wk)
    dwk = dG.T @ np.asarray(wq)
    df[idx] = dfu
    return df, dwq, dwk, dwv, dgamma
