"""Pure-numpy batched kernels (fallback when the compiled extension is absent).

All functions take C-contiguous float64 arrays. Gradient outputs are
accumulated (``+=``) into caller-provided buffers so callers can point them at
views of one flat gradient vector.

Layout conventions shared with ``_kernels.pyx``:
  X: (B, n, k) inputs; Wx: (k, G*r); Wh: (r, G*r); b: (G*r,)
  gate blocks: vanilla [a]; gru [z, r, n]; lstm [i, f, o, g]
  H, C: (B, n+1, r) with the zero initial state in slot 0
  gates: (B, n, G*r) post-activation gate values
"""

import numpy as np

BACKEND_NAME = "python"

VANILLA, GRU, LSTM = 0, 1, 2


def _sig(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def encode_forward(kind, X, Wx, Wh, b):
    B, n, _ = X.shape
    r = Wh.shape[0]
    H = np.zeros((B, n + 1, r))
    C = np.zeros((B, n + 1, r))
    gates = np.empty((B, n, Wx.shape[1]))
    XW = X @ Wx + b
    for t in range(n):
        h = H[:, t]
        if kind == VANILLA:
            hn = np.tanh(XW[:, t] + h @ Wh)
            gates[:, t] = hn
            H[:, t + 1] = hn
        elif kind == GRU:
            hw = h @ Wh[:, : 2 * r]
            z = _sig(XW[:, t, :r] + hw[:, :r])
            rr = _sig(XW[:, t, r : 2 * r] + hw[:, r:])
            cand = np.tanh(XW[:, t, 2 * r :] + (rr * h) @ Wh[:, 2 * r :])
            gates[:, t, :r] = z
            gates[:, t, r : 2 * r] = rr
            gates[:, t, 2 * r :] = cand
            H[:, t + 1] = z * h + (1.0 - z) * cand
        else:
            a = XW[:, t] + h @ Wh
            i = _sig(a[:, :r])
            f = _sig(a[:, r : 2 * r])
            o = _sig(a[:, 2 * r : 3 * r])
            g = np.tanh(a[:, 3 * r :])
            c = f * C[:, t] + i * g
            C[:, t + 1] = c
            H[:, t + 1] = o * np.tanh(c)
            gates[:, t] = np.concatenate([i, f, o, g], axis=1)
    return H, C, gates


def encode_backward(kind, X, Wh, H, C, gates, dH, dWx, dWh, db):
    """BPTT. ``dH[:, t]`` is the external gradient on the state after step t."""
    B, n, _ = X.shape
    r = Wh.shape[0]
    dA = np.empty_like(gates)
    dh_next = np.zeros((B, r))
    dc_next = np.zeros((B, r))
    for t in range(n - 1, -1, -1):
        dh = dH[:, t] + dh_next
        h = H[:, t]
        if kind == VANILLA:
            hn = gates[:, t]
            da = dh * (1.0 - hn * hn)
            dA[:, t] = da
            dh_next = da @ Wh.T
        elif kind == GRU:
            z = gates[:, t, :r]
            rr = gates[:, t, r : 2 * r]
            cand = gates[:, t, 2 * r :]
            daz = dh * (h - cand) * z * (1.0 - z)
            dan = dh * (1.0 - z) * (1.0 - cand * cand)
            drh = dan @ Wh[:, 2 * r :].T
            dar = drh * h * rr * (1.0 - rr)
            dWh[:, 2 * r :] += (rr * h).T @ dan
            dA[:, t, :r] = daz
            dA[:, t, r : 2 * r] = dar
            dA[:, t, 2 * r :] = dan
            dh_next = dh * z + drh * rr + dA[:, t, : 2 * r] @ Wh[:, : 2 * r].T
        else:
            i = gates[:, t, :r]
            f = gates[:, t, r : 2 * r]
            o = gates[:, t, 2 * r : 3 * r]
            g = gates[:, t, 3 * r :]
            tc = np.tanh(C[:, t + 1])
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dA[:, t, :r] = dc * g * i * (1.0 - i)
            dA[:, t, r : 2 * r] = dc * C[:, t] * f * (1.0 - f)
            dA[:, t, 2 * r : 3 * r] = dh * tc * o * (1.0 - o)
            dA[:, t, 3 * r :] = dc * i * (1.0 - g * g)
            dc_next = dc * f
            dh_next = dA[:, t] @ Wh.T
    dWx += np.einsum("bnk,bng->kg", X, dA)
    db += dA.sum(axis=(0, 1))
    if kind == GRU:
        dWh[:, : 2 * r] += np.einsum("bnr,bng->rg", H[:, :-1], dA[:, :, : 2 * r])
    else:
        dWh += np.einsum("bnr,bng->rg", H[:, :-1], dA)


def attention_forward(H, W):
    """Final-state-keyed bilinear attention over states ``H`` (B, n, r)."""
    u = H[:, -1] @ W
    e = np.einsum("bnr,br->bn", H, u)
    e -= e.max(axis=1, keepdims=True)
    alpha = np.exp(e)
    alpha /= alpha.sum(axis=1, keepdims=True)
    ctx = np.einsum("bn,bnr->br", alpha, H)
    return alpha, ctx


def attention_backward(H, W, alpha, dctx, dH, dW):
    u = H[:, -1] @ W
    dalpha = np.einsum("bnr,br->bn", H, dctx)
    de = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
    du = np.einsum("bn,bnr->br", de, H)
    if dH is not None:
        dH += alpha[:, :, None] * dctx[:, None, :] + de[:, :, None] * u[:, None, :]
        dH[:, -1] += du @ W.T
    dW += H[:, -1].T @ du


def head_forward(Z, W1, b1, W2, b2):
    A = np.tanh(Z @ W1 + b1)
    return A, A @ W2 + b2


def head_backward(Z, W1, W2, A, dlogits, dW1, db1, dW2, db2, want_dz=True):
    dW2 += A.T @ dlogits
    db2 += dlogits.sum(axis=0)
    da = (dlogits @ W2.T) * (1.0 - A * A)
    dW1 += Z.T @ da
    db1 += da.sum(axis=0)
    return da @ W1.T if want_dz else None
