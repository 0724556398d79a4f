"""Compiled time loops for the Conv-LSTM layer.

Small batches (the layer is usually trained one window at a time) are
dominated by per-call numpy overhead, so the recurrence over time steps
runs here.  The input-to-state convolution is done by the caller in numpy.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _sig(v):
    if v >= 0:
        return 1.0 / (1.0 + np.exp(-v))
    e = np.exp(v)
    return e / (1.0 + e)


@njit(cache=True)
def convlstm_sequence_forward(zx, Wh, b):
    """Unroll the cell over ``T`` steps.

    ``zx [B, T, S, 4F]`` is the input-to-state convolution, ``Wh [k, F, 4F]``.
    Returns hidden states ``hs [B, T+1, S, F]`` (``hs[:, 0]`` is zero), cell
    states ``cs`` of the same shape, sigmoid gates ``sg [B, T, S, 3F]``,
    candidates ``gg [B, T, S, F]`` and ``tc = tanh(c_t)`` ``[B, T, S, F]``.
    """
    B, T, S, F4 = zx.shape
    F = F4 // 4
    k = Wh.shape[0]
    lo = (k - 1) // 2
    hs = np.zeros((B, T + 1, S, F))
    cs = np.zeros((B, T + 1, S, F))
    sg = np.empty((B, T, S, 3 * F))
    gg = np.empty((B, T, S, F))
    tc = np.empty((B, T, S, F))
    z = np.empty(F4)
    for bi in range(B):
        for t in range(T):
            for s in range(S):
                for q in range(F4):
                    z[q] = zx[bi, t, s, q] + b[q]
                for j in range(k):
                    sp = s + j - lo
                    if sp < 0 or sp >= S:
                        continue
                    for fp in range(F):
                        hv = hs[bi, t, sp, fp]
                        if hv == 0.0:
                            continue
                        for q in range(F4):
                            z[q] += hv * Wh[j, fp, q]
                for q in range(3 * F):
                    sg[bi, t, s, q] = _sig(z[q])
                for fi in range(F):
                    g = np.tanh(z[3 * F + fi])
                    gg[bi, t, s, fi] = g
                    c = sg[bi, t, s, F + fi] * cs[bi, t, s, fi] + sg[bi, t, s, fi] * g
                    cs[bi, t + 1, s, fi] = c
                    th = np.tanh(c)
                    tc[bi, t, s, fi] = th
                    hs[bi, t + 1, s, fi] = sg[bi, t, s, 2 * F + fi] * th
    return hs, cs, sg, gg, tc


@njit(cache=True)
def convlstm_sequence_backward(dy, hs, cs, sg, gg, tc, Wh):
    """Backpropagate ``dy = dL/dh_T`` through time.

    Returns ``dz [B, T, S, 4F]`` (gradient at the gate pre-activations) and
    ``dWh``.  The caller turns ``dz`` into input and ``Wx``/bias gradients.
    """
    B, T1, S, F = hs.shape
    T = T1 - 1
    F4 = 4 * F
    k = Wh.shape[0]
    lo = (k - 1) // 2
    dz = np.empty((B, T, S, F4))
    dWh = np.zeros(Wh.shape)
    dh = np.empty((S, F))
    dc = np.empty((S, F))
    dh_prev = np.empty((S, F))
    for bi in range(B):
        for s in range(S):
            for fi in range(F):
                dh[s, fi] = dy[bi, s, fi]
                dc[s, fi] = 0.0
        for t in range(T - 1, -1, -1):
            for s in range(S):
                for fi in range(F):
                    i = sg[bi, t, s, fi]
                    f = sg[bi, t, s, F + fi]
                    o = sg[bi, t, s, 2 * F + fi]
                    g = gg[bi, t, s, fi]
                    th = tc[bi, t, s, fi]
                    dcc = dc[s, fi] + dh[s, fi] * o * (1.0 - th * th)
                    dz[bi, t, s, fi] = dcc * g * i * (1.0 - i)
                    dz[bi, t, s, F + fi] = dcc * cs[bi, t, s, fi] * f * (1.0 - f)
                    dz[bi, t, s, 2 * F + fi] = dh[s, fi] * th * o * (1.0 - o)
                    dz[bi, t, s, 3 * F + fi] = dcc * i * (1.0 - g * g)
                    dc[s, fi] = dcc * f
            for s in range(S):
                for fi in range(F):
                    dh_prev[s, fi] = 0.0
            for s in range(S):
                for j in range(k):
                    sp = s + j - lo
                    if sp < 0 or sp >= S:
                        continue
                    for fp in range(F):
                        hv = hs[bi, t, sp, fp]
                        acc = 0.0
                        for q in range(F4):
                            d = dz[bi, t, s, q]
                            dWh[j, fp, q] += hv * d
                            acc += Wh[j, fp, q] * d
                        dh_prev[sp, fp] += acc
            for s in range(S):
                for fi in range(F):
                    dh[s, fi] = dh_prev[s, fi]
    return dz, dWh
