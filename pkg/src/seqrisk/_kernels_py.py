"""Pure-numpy implementations of the sequence kernels.

This is the fallback backend; seqrisk._kernels (Cython) implements the same
functions with identical signatures and semantics.  Every forward returns
(out, cache) with the cache holding exactly what its backward needs, so the
softmax probabilities and gate activations are never recomputed.

Shared conventions:
  x      (T, D)  input rows, one per visit
  mask   (T,)    bool; masked steps propagate LSTM state unchanged and emit
                 zero output rows, and are excluded from attention entirely
  w      (4H, D) input weights, gate order (input, forget, candidate, output)
  u      (4H, H) recurrent weights, same gate order
  b      (4H,)   bias, same gate order
"""
from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# full-sequence LSTM


def lstm_seq_forward(x, mask, w, u, b):
    T = x.shape[0]
    H = w.shape[0] // 4
    out = np.zeros((T, H))
    I = np.zeros((T, H))
    F = np.zeros((T, H))
    G = np.zeros((T, H))
    O = np.zeros((T, H))
    C = np.zeros((T, H))
    prev = np.full(T, -1, dtype=np.int64)  # previous unmasked step, -1 for none
    h = np.zeros(H)
    c = np.zeros(H)
    last = -1
    for t in range(T):
        if not mask[t]:
            continue
        z = w @ x[t] + u @ h + b
        i = _sigmoid(z[:H])
        f = _sigmoid(z[H:2 * H])
        g = np.tanh(z[2 * H:3 * H])
        o = _sigmoid(z[3 * H:])
        c = f * c + i * g
        h = o * np.tanh(c)
        I[t], F[t], G[t], O[t], C[t] = i, f, g, o, c
        out[t] = h
        prev[t] = last
        last = t
    cache = (x, np.asarray(mask, dtype=bool), w, u, I, F, G, O, C, out, prev)
    return out, cache


def lstm_seq_backward(d_out, cache, need_dx=True):
    x, mask, w, u, I, F, G, O, C, hs, prev = cache
    T, H = hs.shape
    zeros_h = np.zeros(H)
    dw = np.zeros_like(w)
    du = np.zeros_like(u)
    db = np.zeros(4 * H)
    dx = np.zeros_like(x) if need_dx else None
    dh = np.zeros(H)
    dc = np.zeros(H)
    for t in range(T - 1, -1, -1):
        if not mask[t]:
            continue
        dh_t = d_out[t] + dh
        tc = np.tanh(C[t])
        do = dh_t * tc
        dct = dc + dh_t * O[t] * (1.0 - tc * tc)
        p = prev[t]
        cprev = C[p] if p >= 0 else zeros_h
        hprev = hs[p] if p >= 0 else zeros_h
        df = dct * cprev
        di = dct * G[t]
        dg = dct * I[t]
        dc = dct * F[t]
        dz = np.concatenate([
            di * I[t] * (1.0 - I[t]),
            df * F[t] * (1.0 - F[t]),
            dg * (1.0 - G[t] * G[t]),
            do * O[t] * (1.0 - O[t]),
        ])
        dw += np.outer(dz, x[t])
        du += np.outer(dz, hprev)
        db += dz
        dh = u.T @ dz
        if need_dx:
            dx[t] = w.T @ dz
    return dx, dw, du, db


# ---------------------------------------------------------------------------
# windowed LSTM: output row p is the final hidden state of a fresh
# zero-initialized pass over rows max(0, p - window + 1) .. p


def local_lstm_forward(x, mask, w, u, b, window):
    if window < 1:
        raise ValueError(f"local_lstm: window must be >= 1, got {window}")
    T = x.shape[0]
    H = w.shape[0] // 4
    mask = np.asarray(mask, dtype=bool)
    out = np.zeros((T, H))
    I = np.zeros((T, window, H))
    F = np.zeros((T, window, H))
    G = np.zeros((T, window, H))
    O = np.zeros((T, window, H))
    C = np.zeros((T, window, H))
    Hs = np.zeros((T, window, H))
    steps: list[list[int]] = [[] for _ in range(T)]
    for p in range(T):
        if not mask[p]:
            continue
        lo = max(0, p - window + 1)
        h = np.zeros(H)
        c = np.zeros(H)
        k = 0
        for q in range(lo, p + 1):
            if not mask[q]:
                continue
            z = w @ x[q] + u @ h + b
            i = _sigmoid(z[:H])
            f = _sigmoid(z[H:2 * H])
            g = np.tanh(z[2 * H:3 * H])
            o = _sigmoid(z[3 * H:])
            c = f * c + i * g
            h = o * np.tanh(c)
            I[p, k], F[p, k], G[p, k], O[p, k], C[p, k] = i, f, g, o, c
            Hs[p, k] = h
            steps[p].append(q)
            k += 1
        out[p] = h
    cache = (x, mask, w, u, I, F, G, O, C, Hs, steps)
    return out, cache


def local_lstm_backward(d_out, cache, need_dx=True):
    x, mask, w, u, I, F, G, O, C, Hs, steps = cache
    T = x.shape[0]
    H = w.shape[0] // 4
    zeros_h = np.zeros(H)
    dw = np.zeros_like(w)
    du = np.zeros_like(u)
    db = np.zeros(4 * H)
    dx = np.zeros_like(x) if need_dx else None
    for p in range(T):
        if not mask[p]:
            continue
        ks = steps[p]
        dh = d_out[p].copy()
        dc = np.zeros(H)
        for k in range(len(ks) - 1, -1, -1):
            q = ks[k]
            tc = np.tanh(C[p, k])
            do = dh * tc
            dct = dc + dh * O[p, k] * (1.0 - tc * tc)
            cprev = C[p, k - 1] if k > 0 else zeros_h
            hprev = Hs[p, k - 1] if k > 0 else zeros_h
            df = dct * cprev
            di = dct * G[p, k]
            dg = dct * I[p, k]
            dc = dct * F[p, k]
            dz = np.concatenate([
                di * I[p, k] * (1.0 - I[p, k]),
                df * F[p, k] * (1.0 - F[p, k]),
                dg * (1.0 - G[p, k] * G[p, k]),
                do * O[p, k] * (1.0 - O[p, k]),
            ])
            dw += np.outer(dz, x[q])
            du += np.outer(dz, hprev)
            db += dz
            dh = u.T @ dz
            if need_dx:
                dx[q] += w.T @ dz
    return dx, dw, du, db


# ---------------------------------------------------------------------------
# joint attention over all (time, feature) cells of an encoded map
#
# For output cell (p, c) and source cell (p', c') the raw score is
# f[p,c] * f[p',c'] * G[c,c'] with G = wq @ wk.T (per-feature query/key
# embedding rows); weights are a softmax over every unmasked source cell;
# the value of source (p', c') is (f @ wv)[p', c']; the attended map enters
# through the gated residual out = f + gamma * attended.


def joint_attention_forward(f, mask, wq, wk, wv, gamma):
    T, H = f.shape
    idx = np.flatnonzero(np.asarray(mask, dtype=bool))
    Tu = idx.size
    out = np.zeros_like(f)
    if Tu == 0:
        return out, (f.shape, idx, None, None, None, None, None, None, wq, wk, wv, gamma)
    fu = f[idx]
    V = fu @ wv
    G = wq @ wk.T
    M = Tu * H
    Ff = fu.reshape(M)
    # K[c] holds the per-source factors f[p',c'] * G[c,c'] for query feature c
    K = (G[:, None, :] * fu[None, :, :]).reshape(H, M)
    ci = np.tile(np.arange(H), Tu)  # feature index of each flat cell
    S = Ff[:, None] * K[ci]
    S -= S.max(axis=1, keepdims=True)
    P = np.exp(S)
    P /= P.sum(axis=1, keepdims=True)
    A = (P @ V.reshape(M)).reshape(Tu, H)
    out[idx] = fu + gamma * A
    cache = (f.shape, idx, fu, V, G, K, P, A, wq, wk, wv, gamma)
    return out, cache


def joint_attention_backward(d_out, cache):
    fshape, idx, fu, V, G, K, P, A, wq, wk, wv, gamma = cache
    df = np.zeros(fshape)
    if idx.size == 0:
        return df, np.zeros_like(wq), np.zeros_like(wk), np.zeros_like(wv), np.zeros(())
    Tu, H = fu.shape
    M = Tu * H
    ci = np.tile(np.arange(H), Tu)
    dout_u = d_out[idx]
    dgamma = np.asarray(np.sum(dout_u * A))
    dA = (gamma * dout_u).reshape(M)
    Vf = V.reshape(M)
    dVf = P.T @ dA
    Af = A.reshape(M)
    # softmax-weighted-sum backward: ds[q,j] = P[q,j] * dA[q] * (Vf[j] - A[q])
    ds = P * (dA[:, None] * (Vf[None, :] - Af[:, None]))
    dF_query = (ds * K[ci]).sum(axis=1)
    dK = np.einsum("tcm,tc->cm", ds.reshape(Tu, H, M), fu)
    dK3 = dK.reshape(H, Tu, H)
    dG = np.einsum("ctd,td->cd", dK3, fu)
    dF_source = np.einsum("ctd,cd->td", dK3, G)
    dfu = dout_u + dF_query.reshape(Tu, H) + dF_source + dVf.reshape(Tu, H) @ wv.T
    dwv = fu.T @ dVf.reshape(Tu, H)
    dwq = dG @ wk
    dwk = dG.T @ wq
    df[idx] = dfu
    return df, dwq, dwk, dwv, dgamma


# ---------------------------------------------------------------------------
# temporal attention: one softmax weight per unmasked step, rescaled by the
# unmasked count so that uniform attention is the identity


def temporal_attention_forward(f, mask, w, b):
    idx = np.flatnonzero(np.asarray(mask, dtype=bool))
    Tu = idx.size
    out = np.zeros_like(f)
    if Tu == 0:
        return out, (f.shape, idx, None, w, None, None)
    fu = f[idx]
    s = fu @ w + float(b)
    s = s - s.max()
    e = np.exp(s)
    alpha = e / e.sum()
    coeff = Tu * alpha
    out[idx] = coeff[:, None] * fu
    cache = (f.shape, idx, fu, w, alpha, coeff)
    return out, cache


def temporal_attention_backward(d_out, cache):
    fshape, idx, fu, w, alpha, coeff = cache
    df = np.zeros(fshape)
    if idx.size == 0:
        return df, np.zeros_like(w), np.zeros(())
    Tu = idx.size
    dout_u = d_out[idx]
    dcoeff = (dout_u * fu).sum(axis=1)
    dfu = coeff[:, None] * dout_u
    dalpha = Tu * dcoeff
    ds = alpha * (dalpha - float(np.dot(dalpha, alpha)))
    dw = fu.T @ ds
    db = np.asarray(ds.sum())
    dfu += np.outer(ds, w)
    df[idx] = dfu
    return df, dw, db
